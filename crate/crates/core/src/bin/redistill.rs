use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use redistill::adapter::{adapt, AdaptConfig, AdapterCheckpoint};
use redistill::distill::{distill, retrieve_aligned};
use redistill::eval::{demo_config, run_experiment_config, write_run_artifacts, ExperimentConfig, Variant};
use redistill::retrieval::{load_db, save_db, tokenize, RetrievalConfig};
use redistill::synthetic::{prompt_target, SyntheticWorld, WorldConfig};
use redistill::{Error, Result};

const SEED_VAR: &str = "REDISTILL_SEED";

#[derive(Parser)]
#[command(name = "redistill", version, about = "Retrieval-augmented score distillation on a toy renderer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic asset database.
    BuildDb {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Two-stage retrieval plus orientation alignment.
    Retrieve {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long = "n-prime", default_value_t = 10)]
        n_prime: usize,
        /// Print to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the prior adapter on the retrieved assets and save a checkpoint.
    Adapt {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config supplying the target, retrieval and adapter settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// One distillation run; writes the run log, final scenes and plots.
    Distill {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment config and write its reports.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's variants with the τ=0 / no-adapter / full ablation.
        #[arg(long)]
        ablation: bool,
    },
    /// End-to-end run on the synthetic database.
    Demo {
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_VAR).ok()
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_seed_override(env_seed().as_deref())?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDb { out, seed } => {
            let mut world = WorldConfig::default();
            if let Some(s) = seed {
                world.seed = s;
            }
            let index = SyntheticWorld::build(&world)?.index;
            save_db(&index, &out)?;
            println!("wrote {} records to {}", index.len(), out.display());
        }
        Command::Retrieve { db, prompt, n, n_prime, out } => {
            let index = load_db(&db)?;
            let cfg = RetrievalConfig { n, n_prime, ..Default::default() };
            let tokens = tokenize(&prompt);
            let r = retrieve_aligned(&tokens, &index, &cfg, &Default::default())?;
            let results: Vec<_> = r
                .uids
                .iter()
                .zip(&r.result.scores)
                .zip(&r.alignments)
                .map(
                    |((uid, score), a)| json!({"uid": uid, "score": score, "rotation": a.rotation, "status": a.status}),
                )
                .collect();
            let doc = json!({"prompt": tokens, "short": r.result.short, "results": results});
            let text = serde_json::to_string_pretty(&doc)?;
            match out {
                Some(p) => write_text(&p, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Adapt { db, prompt, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let index = load_db(&db)?;
            let tokens = tokenize(&prompt);
            let render_cfg = cfg.distill.render;
            let target = prompt_target(cfg.target.clone(), cfg.target_cov, render_cfg)(&tokens)?;
            let r = retrieve_aligned(&tokens, &index, &cfg.distill.retrieval, &render_cfg)?;
            let assets: Vec<_> = r.scenes().into_iter().zip(r.caption_embeddings.iter().cloned()).collect();
            let acfg = AdaptConfig { seed: cfg.seeds[0], ..cfg.adapt.clone() };
            let fit = adapt(&assets, &target, &acfg, &render_cfg)?;
            AdapterCheckpoint::new(&fit.params, &fit.prefixes, fit.stopped_step).save(&out)?;
            println!(
                "stopped at step {} (best {}), held-out loss {:?} -> {:?}",
                fit.stopped_step, fit.best_step, fit.initial_holdout_loss, fit.best_holdout_loss
            );
        }
        Command::Distill { db, prompt, out, config, seed } => {
            let cfg = load_config(config.as_deref())?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let index = load_db(&db)?;
            let tokens = tokenize(&prompt);
            let builder = prompt_target(cfg.target.clone(), cfg.target_cov, cfg.distill.render);
            let result = distill(&cfg.run_config(seed, Variant::Full), &tokens, &index, &builder)?;
            write_run_artifacts(&out, &result)?;
            println!("wrote run artifacts to {}", out.display());
        }
        Command::Eval { config, ablation } => {
            let mut cfg = load_config(Some(&config))?;
            if ablation {
                cfg = cfg.ablation();
            }
            let out = run_experiment_config(&cfg)?;
            for r in &out.reports {
                println!("{}: {} rows", r.variant.name(), r.rows.len());
            }
        }
        Command::Demo { out, seed } => {
            let mut cfg = demo_config(&out, seed);
            cfg.apply_seed_override(env_seed().as_deref())?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let world = SyntheticWorld::build(&cfg.world)?;
            let db_path = out.join("db.jsonl");
            save_db(&world.index, &db_path)?;
            cfg.db = Some(db_path);
            write_text(&out.join("config.json"), &serde_json::to_string_pretty(&cfg)?)?;
            let res = run_experiment_config(&cfg)?;
            for r in &res.reports {
                println!("{}: {} rows -> {}", r.variant.name(), r.rows.len(), out.join(r.variant.name()).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
