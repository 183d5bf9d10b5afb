use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapter::AdaptConfig;
use crate::distill::{distill, DistillConfig, DistillOutput};
use crate::error::{Error, Result};
use crate::render::{pose_grid, render, write_scene_json, CameraPose};
use crate::retrieval::{load_db, tokenize, EmbeddingIndex};
use crate::synthetic::{prompt_target, SyntheticWorld, TargetSpec, WorldConfig};

use super::metrics::{adjacent_view_inconsistency, kl_estimate, nearest_component, prompt_alignment_score};
use super::plot::{trajectory_svg, velocity_svg};

/// Method variants compared by ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// No warm-up (τ = 0); adapter and delta denoising kept.
    Tau0,
    NoAdapter,
    Tau0NoAdapter,
    /// Plain distillation from the prior: no assets at all.
    NoRetrieval,
}

impl Variant {
    pub const ABLATION: [Variant; 3] = [Variant::Tau0, Variant::NoAdapter, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Tau0 => "tau0",
            Variant::NoAdapter => "no_adapter",
            Variant::Tau0NoAdapter => "tau0_no_adapter",
            Variant::NoRetrieval => "no_retrieval",
        }
    }

    pub fn apply(self, cfg: &mut DistillConfig) {
        match self {
            Variant::Full => {}
            Variant::Tau0 => cfg.warmup.tau = 0,
            Variant::NoAdapter => cfg.use_adapter = false,
            Variant::Tau0NoAdapter => {
                cfg.warmup.tau = 0;
                cfg.use_adapter = false;
            }
            Variant::NoRetrieval => {
                cfg.use_retrieval = false;
                cfg.use_adapter = false;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Whitespace-separated prompts, e.g. `"a chair"`.
    pub prompts: Vec<String>,
    pub seeds: Vec<u64>,
    pub distill: DistillConfig,
    /// Replaces `distill.adapt`.
    pub adapt: AdaptConfig,
    /// Azimuths of the metric grid.
    pub metric_poses: usize,
    pub output_dir: PathBuf,
    pub target: TargetSpec,
    pub target_cov: f64,
    /// Asset DB file. When absent the synthetic world is built from `world`.
    pub db: Option<PathBuf>,
    pub world: WorldConfig,
    pub variants: Vec<Variant>,
    /// Write per-run logs, scenes and plots next to the reports.
    pub artifacts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            prompts: vec!["a chair".into()],
            seeds: vec![0],
            distill: DistillConfig::default(),
            adapt: AdaptConfig::default(),
            metric_poses: 24,
            output_dir: PathBuf::from("out"),
            target: TargetSpec::default(),
            target_cov: 0.05,
            db: None,
            world: WorldConfig::default(),
            variants: vec![Variant::Full],
            artifacts: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts.is_empty() {
            return Err(Error::Config("prompts must not be empty".into()));
        }
        if let Some(p) = self.prompts.iter().find(|p| tokenize(p).is_empty()) {
            return Err(Error::Config(format!("prompts: {p:?} has no tokens")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.metric_poses < 8 {
            return Err(Error::Config(format!("metric_poses must be at least 8, got {}", self.metric_poses)));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must not be empty".into()));
        }
        if !(self.target_cov > 0.0 && self.target_cov.is_finite()) {
            return Err(Error::Config("target_cov must be positive".into()));
        }
        self.target.bias()?;
        self.adapt.validate()?;
        self.run_config(0, Variant::Full).validate()
    }

    /// Replaces the seed list with a single seed when `value` is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("REDISTILL_SEED must be an unsigned integer, got {v:?}")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    /// Only the ablation variants (τ=0, no adapter, full).
    pub fn ablation(mut self) -> Self {
        self.variants = Variant::ABLATION.to_vec();
        self
    }

    pub fn run_config(&self, seed: u64, variant: Variant) -> DistillConfig {
        let mut cfg = DistillConfig { seed, adapt: self.adapt.clone(), ..self.distill.clone() };
        variant.apply(&mut cfg);
        cfg
    }

    pub fn metric_grid(&self) -> Vec<CameraPose> {
        pose_grid(self.metric_poses, std::f64::consts::PI / self.metric_poses as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub prompt: String,
    pub seed: u64,
    pub particle: usize,
    pub adjacent_inconsistency: f64,
    pub alignment_score: f64,
    pub kl_estimate: f64,
    /// Index of the target component nearest to the front render.
    pub mode_label: String,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub variant: Variant,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub const HEADER: &'static str =
        "prompt,seed,particle,adjacent_inconsistency,alignment_score,kl_estimate,mode_label,flagged";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.prompt,
                r.seed,
                r.particle,
                r.adjacent_inconsistency,
                r.alignment_score,
                r.kl_estimate,
                r.mode_label,
                r.flagged as u8
            );
        }
        out
    }

    pub fn column(&self, f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
        self.rows.iter().filter(|r| !r.flagged).map(f).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub variant: Variant,
    pub prompt: String,
    pub seed: u64,
    pub output: Option<DistillOutput>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub reports: Vec<MetricsReport>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentOutput {
    pub fn report(&self, variant: Variant) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.variant == variant)
    }
}

fn slug(prompt: &str) -> String {
    tokenize(prompt).join("_")
}

pub fn run_experiment(config_path: &Path) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_experiment_config(&cfg)
}

/// Runs every (variant, prompt, seed) combination, writes the reports and
/// artifacts under `output_dir`, and returns them. Runs that hit a
/// non-finite value are flagged instead of aborting the experiment.
pub fn run_experiment_config(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let db: EmbeddingIndex = match &cfg.db {
        Some(p) => load_db(p)?,
        None => SyntheticWorld::build(&cfg.world)?.index,
    };
    let render_cfg = cfg.distill.render;
    let builder = prompt_target(cfg.target.clone(), cfg.target_cov, render_cfg);
    let grid = cfg.metric_grid();
    mkdir(&cfg.output_dir)?;

    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for &variant in &cfg.variants {
        let vdir = cfg.output_dir.join(variant.name());
        mkdir(&vdir)?;
        let mut rows = Vec::new();
        for prompt in &cfg.prompts {
            let tokens = tokenize(prompt);
            for &seed in &cfg.seeds {
                let dcfg = cfg.run_config(seed, variant);
                let out = match distill(&dcfg, &tokens, &db, &builder) {
                    Ok(o) => Some(o),
                    Err(Error::NonFinite { .. }) => None,
                    Err(e) => return Err(e),
                };
                let name = tokens.join(" ");
                match &out {
                    Some(o) => {
                        for (i, p) in o.particles.particles.iter().enumerate() {
                            let renders: Vec<Vec<f64>> =
                                grid.iter().map(|&q| render(p, q, &render_cfg).into_vec()).collect();
                            let adj = adjacent_view_inconsistency(p, &grid, &render_cfg)?;
                            let align = prompt_alignment_score(p, &tokens, &grid, &render_cfg)?;
                            let kl = renders
                                .iter()
                                .map(|r| kl_estimate(std::slice::from_ref(r), &o.target))
                                .sum::<Result<f64>>()?
                                / renders.len() as f64;
                            let front = render(p, CameraPose::new(0.0), &render_cfg).into_vec();
                            let label = format!("c{}", nearest_component(&front, &o.target)?);
                            let flagged = !(adj.is_finite() && align.is_finite() && kl.is_finite());
                            rows.push(MetricsRow {
                                prompt: name.clone(),
                                seed,
                                particle: i,
                                adjacent_inconsistency: adj,
                                alignment_score: align,
                                kl_estimate: kl,
                                mode_label: label,
                                flagged,
                            });
                        }
                        if cfg.artifacts {
                            write_run_artifacts(&vdir.join(format!("{}_s{seed}", slug(prompt))), o)?;
                        }
                    }
                    None => {
                        for i in 0..dcfg.particles {
                            rows.push(MetricsRow {
                                prompt: name.clone(),
                                seed,
                                particle: i,
                                adjacent_inconsistency: f64::NAN,
                                alignment_score: f64::NAN,
                                kl_estimate: f64::NAN,
                                mode_label: "none".into(),
                                flagged: true,
                            });
                        }
                    }
                }
                runs.push(RunRecord { variant, prompt: name, seed, output: out });
            }
        }
        let report = MetricsReport { variant, rows };
        write(&vdir.join("report.csv"), report.to_csv())?;
        reports.push(report);
    }
    Ok(ExperimentOutput { reports, runs })
}

/// Run log, final scenes and plots of one run under `dir`.
pub fn write_run_artifacts(dir: &Path, out: &DistillOutput) -> Result<()> {
    mkdir(dir)?;
    write(&dir.join("runlog.csv"), out.log.to_csv())?;
    for (i, p) in out.particles.particles.iter().enumerate() {
        write_scene_json(p, &dir.join(format!("particle_{i}.json")))?;
    }
    write(&dir.join("trajectory.svg"), trajectory_svg("render trajectories", &out.trajectory))?;
    write(&dir.join("velocity.svg"), velocity_svg("velocity norms", &out.log))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: String) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Small end-to-end configuration on the synthetic world.
pub fn demo_config(output_dir: impl Into<PathBuf>, seed: u64) -> ExperimentConfig {
    let mut distill = DistillConfig { particles: 2, iterations: 400, ..Default::default() };
    distill.warmup.tau = 60;
    ExperimentConfig {
        prompts: vec!["a chair".into(), "a lamp".into()],
        seeds: vec![seed],
        distill,
        adapt: AdaptConfig { steps: 300, batch: 64, ..Default::default() },
        output_dir: output_dir.into(),
        variants: Variant::ABLATION.to_vec(),
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_fields_are_named() {
        let cfg = ExperimentConfig { metric_poses: 4, ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("metric_poses"));
        let cfg = ExperimentConfig { seeds: vec![], ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("seeds"));
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"promts": []}"#).unwrap_err();
        assert!(err.to_string().contains("promts"));
    }

    #[test]
    fn seed_override() {
        let mut cfg = ExperimentConfig { seeds: vec![1, 2, 3], ..Default::default() };
        cfg.apply_seed_override(None).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        cfg.apply_seed_override(Some("42")).unwrap();
        assert_eq!(cfg.seeds, vec![42]);
        assert!(cfg.apply_seed_override(Some("x")).is_err());
    }

    #[test]
    fn variants_apply() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.run_config(0, Variant::Tau0).warmup.tau, 0);
        assert!(!cfg.run_config(0, Variant::NoAdapter).use_adapter);
        let nr = cfg.run_config(0, Variant::NoRetrieval);
        assert!(!nr.use_retrieval && !nr.use_adapter);
        assert_eq!(cfg.run_config(7, Variant::Full).seed, 7);
    }
}
