//! Fixtures, oracles and the criterion checks shared by the integration
//! suites and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use redistill::adapter::{
    adapt, adaptation_loss_and_grad, adapted_epsilon, init_prefixes, AdaptConfig, AdaptSample, AdapterParams,
    PrefixMode, ViewPrefixTokens,
};
use redistill::diffusion::{
    ddim_sample_eps, geometric::geometric_identity_sides, oracle_epsilon, oracle_score, perturb, schedule_coeffs,
    GaussianMixtureTarget, MixtureComponent,
};
use redistill::distill::{
    distill, dsm_step_zeta, kernel_velocity_exact, v_asset, variational_epsilon, DistillConfig, EstimatorConfig,
    VariationalEstimator, WarmupConfig,
};
use redistill::eval::{median, mode_distance, run_experiment_config, ExperimentConfig, Variant};
use redistill::linalg::{cosine, dot, log_sum_exp, norm, sq_dist, Matrix};
use redistill::render::{
    pose_grid, render, render_vjp, rotate_point, view_l2_grad, CameraPose, Point, RenderConfig, Scene,
};
use redistill::retrieval::{
    align_orientation, embed_text, retrieve, AlignConfig, AssetRecord, EmbeddingIndex, IndexMode, PrefixEmbeddings,
    RetrievalConfig, ViewEmbedding, EMBED_DIM,
};
use redistill::rng::{standard_normal_vec, stream, substream, Rng, Stream};
use redistill::synthetic::{
    exemplar, jitter, make_instance, prompt_tokens, SyntheticWorld, TargetSpec, WorldConfig, SUITE,
};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

pub fn rng(index: u64) -> Rng {
    substream(2024, Stream::Fixture, index)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        sq_dist(a, b).sqrt() / scale
    }
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let up = f(&p);
            p[i] = x0 - h;
            let down = f(&p);
            p[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_scene(rng: &mut Rng, points: usize, reach: f64) -> Scene {
    let pts = (0..points)
        .map(|_| {
            Point::new(
                rng.random_range(-reach..reach),
                rng.random_range(-reach..reach),
                rng.random_range(-reach..reach),
                rng.random_range(0.3..1.5),
            )
        })
        .collect();
    Scene::new(None, pts).unwrap()
}

/// True when some pixel centre lies within `margin` of a splat's truncation
/// circle at one of `poses`, where the render is not differentiable.
pub fn near_cutoff(scene: &Scene, poses: &[CameraPose], cfg: &RenderConfig, margin: f64) -> bool {
    let r = cfg.cutoff();
    for pose in poses {
        for p in &scene.points {
            let q = rotate_point(p.position, pose.azimuth());
            for row in 0..cfg.resolution {
                for col in 0..cfg.resolution {
                    let d = ((q[0] - cfg.coord(col)).powi(2) + (q[1] - cfg.coord(row)).powi(2)).sqrt();
                    if (d - r).abs() < margin {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Random scene avoiding the truncation boundary at `poses`.
pub fn smooth_scene(rng: &mut Rng, points: usize, poses: &[CameraPose], cfg: &RenderConfig) -> Scene {
    loop {
        let s = random_scene(rng, points, 0.9);
        if !near_cutoff(&s, poses, cfg, 1e-3) {
            return s;
        }
    }
}

const FD_H: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-5;
pub const GRAD_FIXTURES: usize = 20;

/// Worst relative error of `render_vjp` against central differences.
pub fn render_vjp_worst() -> f64 {
    let cfg = RenderConfig::default();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_FIXTURES {
        let pose = CameraPose::new(r.random_range(0.0..TAU));
        let n = r.random_range(1..6);
        let s = smooth_scene(&mut r, n, &[pose], &cfg);
        let cot = standard_normal_vec(&mut r, cfg.dim());
        let analytic = render_vjp(&s, pose, &cfg, &cot).unwrap();
        let f = |p: &[f64]| dot(&cot, render(&Scene::from_params(None, p).unwrap(), pose, &cfg).as_slice());
        worst = worst.max(rel_err(&analytic.0, &central_diff(f, &s.to_params(), FD_H)));
    }
    worst
}

pub fn view_l2_worst() -> f64 {
    let cfg = RenderConfig::default();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_FIXTURES {
        let poses: Vec<CameraPose> = (0..3).map(|_| CameraPose::new(r.random_range(0.0..TAU))).collect();
        let n = r.random_range(1..5);
        let a = smooth_scene(&mut r, n, &poses, &cfg);
        let m = r.random_range(1..5);
        let b = random_scene(&mut r, m, 0.9);
        let (_, g) = view_l2_grad(&a, &b, &poses, &cfg).unwrap();
        let f = |p: &[f64]| view_l2_grad(&Scene::from_params(None, p).unwrap(), &b, &poses, &cfg).unwrap().0;
        worst = worst.max(rel_err(&g.0, &central_diff(f, &a.to_params(), FD_H)));
    }
    worst
}

pub fn v_asset_worst() -> f64 {
    let cfg = RenderConfig::default();
    let warm = WarmupConfig::default();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_FIXTURES {
        let poses: Vec<CameraPose> = (0..warm.pose_batch).map(|_| CameraPose::new(r.random_range(0.0..TAU))).collect();
        let n = r.random_range(1..5);
        let a = smooth_scene(&mut r, n, &poses, &cfg);
        let b = random_scene(&mut r, n, 0.9);
        let v = v_asset(&a, &b, &poses, &warm, 1, &cfg).unwrap();
        let f = |p: &[f64]| {
            view_l2_grad(&Scene::from_params(None, p).unwrap(), &b, &poses, &cfg).unwrap().0 / warm.kernel_sigma2
        };
        worst = worst.max(rel_err(&v.0, &central_diff(f, &a.to_params(), FD_H)));
    }
    worst
}

pub struct AdapterFixture {
    pub target: GaussianMixtureTarget,
    pub params: AdapterParams,
    pub prefixes: ViewPrefixTokens,
    pub samples: Vec<AdaptSample>,
}

/// Four-pixel adapter problem with every parameter block nonzero.
pub fn adapter_fixture(r: &mut Rng) -> AdapterFixture {
    let dim = 4;
    let comps = (0..2)
        .map(|_| MixtureComponent {
            mean: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
            cov_scale: r.random_range(0.1..0.5),
            weight: 0.5,
        })
        .collect();
    let target = GaussianMixtureTarget::new("toy", comps).unwrap();
    let mut params = AdapterParams::zeros(dim, 2, 4, 0.02, 0.98);
    let mut fill = |m: &mut Matrix, scale: f64| {
        for v in m.data.iter_mut() {
            *v = scale * r.random_range(-1.0..1.0);
        }
    };
    fill(&mut params.a, 0.5);
    fill(&mut params.b, 0.5);
    fill(&mut params.w, 0.1);
    for g in params.t_gains.iter_mut() {
        *g = r.random_range(0.5..1.5);
    }
    let mut prefixes = init_prefixes();
    for v in [&mut prefixes.front, &mut prefixes.side, &mut prefixes.back] {
        for x in v.iter_mut() {
            *x += 0.1 * r.random_range(-1.0..1.0);
        }
    }
    let samples = [0.1, 1.6, 3.0, 4.5, 6.0]
        .iter()
        .map(|&az| {
            let mut e = standard_normal_vec(r, EMBED_DIM);
            let n = norm(&e);
            e.iter_mut().for_each(|v| *v /= n);
            AdaptSample {
                render: (0..dim).map(|_| r.random_range(0.0..1.0)).collect(),
                pose: CameraPose::new(az),
                prompt_embedding: e,
                t: r.random_range(0.05..0.95),
                epsilon: standard_normal_vec(r, dim),
            }
        })
        .collect();
    AdapterFixture { target, params, prefixes, samples }
}

/// Worst relative error over the A, B, W, gain and prefix blocks.
pub fn adapter_grad_worst() -> f64 {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_FIXTURES {
        let fx = adapter_fixture(&mut r);
        let (_, g) = adaptation_loss_and_grad(&fx.target, &fx.params, &fx.prefixes, &fx.samples).unwrap();
        let loss = |p: &AdapterParams, pre: &ViewPrefixTokens| {
            adaptation_loss_and_grad(&fx.target, p, pre, &fx.samples).unwrap().0
        };
        let h = 1e-6;
        let blocks: [(&[f64], Vec<f64>); 4] = [
            (&g.a.data, {
                let f = |x: &[f64]| {
                    loss(
                        &AdapterParams { a: Matrix { data: x.to_vec(), ..fx.params.a.clone() }, ..fx.params.clone() },
                        &fx.prefixes,
                    )
                };
                central_diff(f, &fx.params.a.data, h)
            }),
            (&g.b.data, {
                let f = |x: &[f64]| {
                    loss(
                        &AdapterParams { b: Matrix { data: x.to_vec(), ..fx.params.b.clone() }, ..fx.params.clone() },
                        &fx.prefixes,
                    )
                };
                central_diff(f, &fx.params.b.data, h)
            }),
            (&g.w.data, {
                let f = |x: &[f64]| {
                    loss(
                        &AdapterParams { w: Matrix { data: x.to_vec(), ..fx.params.w.clone() }, ..fx.params.clone() },
                        &fx.prefixes,
                    )
                };
                central_diff(f, &fx.params.w.data, h)
            }),
            (&g.t_gains, {
                let f = |x: &[f64]| loss(&AdapterParams { t_gains: x.to_vec(), ..fx.params.clone() }, &fx.prefixes);
                central_diff(f, &fx.params.t_gains, h)
            }),
        ];
        for (a, n) in &blocks {
            worst = worst.max(rel_err(a, n));
        }
        for which in 0..3 {
            let base = [&fx.prefixes.front, &fx.prefixes.side, &fx.prefixes.back][which].clone();
            let f = |x: &[f64]| {
                let mut pre = fx.prefixes.clone();
                *[&mut pre.front, &mut pre.side, &mut pre.back][which] = x.to_vec();
                loss(&fx.params, &pre)
            };
            let analytic = [&g.prefixes.front, &g.prefixes.side, &g.prefixes.back][which];
            worst = worst.max(rel_err(analytic, &central_diff(f, &base, h)));
        }
    }
    worst
}

pub fn criterion_gradients() -> Outcome {
    let errs = [
        ("render_vjp", render_vjp_worst()),
        ("view_l2_grad", view_l2_worst()),
        ("v_asset", v_asset_worst()),
        ("adaptation loss", adapter_grad_worst()),
    ];
    let pass = errs.iter().all(|(_, e)| *e < GRAD_TOL);
    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    Outcome::new(pass, format!("worst rel. err over {GRAD_FIXTURES} fixtures each: {detail}"))
}

pub fn random_mixture(r: &mut Rng, dim: usize, k: usize) -> GaussianMixtureTarget {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| MixtureComponent {
            mean: (0..dim).map(|_| r.random_range(-1.0..1.0)).collect(),
            cov_scale: r.random_range(0.05..1.0),
            weight: w / total,
        })
        .collect();
    GaussianMixtureTarget::new("mix", comps).unwrap()
}

pub fn score_worst() -> f64 {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let dim = r.random_range(1..9);
        let k = r.random_range(1..5);
        let target = random_mixture(&mut r, dim, k);
        let t = r.random_range(0.02..0.98);
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-1.5..1.5)).collect();
        let s = oracle_score(&x, t, &target).unwrap();
        let f = |p: &[f64]| target.log_density(p, t).unwrap();
        worst = worst.max(rel_err(&s, &central_diff(f, &x, 1e-5)));
    }
    worst
}

pub fn geometric_worst() -> f64 {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    let simplex = |r: &mut Rng, n: usize| {
        let v: Vec<f64> = (0..n).map(|_| r.random_range(0.01..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    for _ in 0..50 {
        let n = r.random_range(2..20);
        let views: Vec<Vec<f64>> = (0..r.random_range(1..7)).map(|_| simplex(&mut r, n)).collect();
        let q = simplex(&mut r, n);
        let (lhs, rhs) = geometric_identity_sides(&q, &views).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

pub fn criterion_score() -> Outcome {
    let (s, g) = (score_worst(), geometric_worst());
    Outcome::new(
        s < 1e-6 && g < 1e-10,
        format!("score rel. err {s:.1e} (tol 1e-6), geometric identity gap {g:.1e} (tol 1e-10)"),
    )
}

/// Equal-weight points on separate height bands, so no two splats overlap in
/// any view, displaced in position only.
pub fn commensurate_pair(r: &mut Rng) -> (Scene, Scene) {
    let m = r.random_range(1..4);
    let pts: Vec<Point> = (0..m)
        .map(|k| {
            Point::new(
                r.random_range(-0.7..0.7),
                -0.7 + 0.7 * k as f64 + r.random_range(-0.05..0.05),
                r.random_range(-0.7..0.7),
                1.0,
            )
        })
        .collect();
    let asset = Scene::new(None, pts).unwrap();
    let mut particle = asset.clone();
    for p in particle.points.iter_mut() {
        for c in p.position.iter_mut() {
            *c += r.random_range(-0.02..0.02);
        }
    }
    (particle, asset)
}

pub fn kernel_min_cosine() -> f64 {
    let cfg = RenderConfig::default();
    let warm = WarmupConfig::default();
    let poses = pose_grid(16, 0.0);
    let mut r = rng(7);
    let mut worst: f64 = 1.0;
    for _ in 0..25 {
        let (p, a) = commensurate_pair(&mut r);
        let va = v_asset(&p, &a, &poses, &warm, 1, &cfg).unwrap();
        let ke = kernel_velocity_exact(&p, std::slice::from_ref(&a), warm.kernel_sigma2).unwrap();
        worst = worst.min(cosine(&va.0, &ke.0));
    }
    worst
}

pub fn midpoint_worst() -> f64 {
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let n = r.random_range(1..6);
        let a = random_scene(&mut r, n, 0.9);
        let b = random_scene(&mut r, n, 0.9);
        let mid: Vec<f64> = a.to_params().iter().zip(b.to_params()).map(|(x, y)| 0.5 * (x + y)).collect();
        let m = Scene::from_params(None, &mid).unwrap();
        let v = kernel_velocity_exact(&m, &[a, b], 0.05).unwrap();
        worst = worst.max(norm(&v.0));
    }
    worst
}

pub fn criterion_kernel() -> Outcome {
    let (c, m) = (kernel_min_cosine(), midpoint_worst());
    Outcome::new(c >= 0.9 && m < 1e-10, format!("min cosine {c:.3} (need 0.9), midpoint velocity norm {m:.1e}"))
}

/// Exact ε-posterior mean of `x_t` when the clean renders at this pose are
/// drawn uniformly from `renders`.
pub fn discrete_epsilon(renders: &[&Vec<f64>], x_t: &[f64], t: f64) -> Vec<f64> {
    let (a, s) = schedule_coeffs(t).unwrap();
    let logs: Vec<f64> = renders
        .iter()
        .map(|r| -x_t.iter().zip(r.iter()).map(|(x, m)| (x - a * m).powi(2)).sum::<f64>() / (2.0 * s * s))
        .collect();
    let l = log_sum_exp(&logs);
    let mut out = vec![0.0; x_t.len()];
    for (r, lg) in renders.iter().zip(&logs) {
        let w = (lg - l).exp();
        for (o, (x, m)) in out.iter_mut().zip(x_t.iter().zip(r.iter())) {
            *o += w * (x - a * m) / s;
        }
    }
    out
}

/// Mean per-pixel squared error of the trained ζ model against the exact ε
/// of a frozen three-particle render distribution.
pub fn zeta_heldout_error(steps: usize) -> (f64, f64) {
    let cfg = RenderConfig::default();
    let base = exemplar("chair");
    let mut r = stream(1, Stream::Fixture);
    let particles: Vec<Scene> = (0..3).map(|_| jitter(&base, 0.02, &mut r)).collect();
    let poses = pose_grid(8, 0.0);
    let renders: Vec<(CameraPose, Vec<f64>)> =
        particles.iter().flat_map(|p| poses.iter().map(move |&q| (q, render(p, q, &cfg).into_vec()))).collect();
    let d = cfg.dim();
    let mut mean = vec![0.0; d];
    for (_, x) in &renders {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / renders.len() as f64);
    }
    let target = GaussianMixtureTarget::single("frozen", mean, 1e-3).unwrap();
    let ecfg = EstimatorConfig { pose_buckets: poses.len(), ..Default::default() };
    let mut zr = stream(1, Stream::Zeta);
    let mut est = VariationalEstimator::new(d, &ecfg, 0.02, 0.98, &mut zr);
    let mut hr = stream(1, Stream::Holdout);
    let held: Vec<(usize, f64, Vec<f64>)> = (0..400)
        .map(|_| (hr.random_range(0..renders.len()), hr.random_range(0.02..0.98), standard_normal_vec(&mut hr, d)))
        .collect();
    let eval = |est: &VariationalEstimator| {
        let mut e = 0.0;
        for (i, t, eps) in &held {
            let (pose, x) = &renders[*i];
            let xt = perturb(x, *t, eps).unwrap().x_t;
            let same: Vec<&Vec<f64>> = renders.iter().filter(|(q, _)| q == pose).map(|(_, x)| x).collect();
            let star = discrete_epsilon(&same, &xt, *t);
            let pred = variational_epsilon(est, &target, &xt, *t, *pose).unwrap();
            e += sq_dist(&pred, &star) / d as f64;
        }
        e / held.len() as f64
    };
    let before = eval(&est);
    for _ in 0..steps {
        dsm_step_zeta(&mut est, &renders, |x, t| oracle_epsilon(x, t, &target), &mut zr).unwrap();
    }
    (before, eval(&est))
}

pub fn criterion_zeta() -> Outcome {
    let (before, after) = zeta_heldout_error(2000);
    Outcome::new(after <= 0.05, format!("held-out ε error {before:.4} -> {after:.4} after 2000 steps (need <= 0.05)"))
}

/// Brute-force two-stage ranking: sort everything, no heap.
pub fn brute_force(query: &[f64], records: &[AssetRecord], n_prime: usize, n: usize) -> (Vec<usize>, Vec<f64>) {
    let rank = |mut v: Vec<(f64, usize)>, k: usize| {
        v.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| records[a.1].uid.cmp(&records[b.1].uid)));
        v.truncate(k);
        v
    };
    let text: Vec<(f64, usize)> = records.iter().enumerate().map(|(i, r)| (dot(query, &r.text_embedding), i)).collect();
    let stage1 = rank(text, n_prime);
    let view: Vec<(f64, usize)> = stage1
        .iter()
        .map(|&(_, i)| {
            let v = &records[i].view_embeddings;
            let s: f64 = v.iter().map(|e| dot(query, &e.embedding)).sum();
            (s / v.len() as f64, i)
        })
        .collect();
    let stage2 = rank(view, n);
    (stage2.iter().map(|x| x.1).collect(), stage2.iter().map(|x| x.0).collect())
}

fn unit(r: &mut Rng) -> Vec<f64> {
    let mut v = standard_normal_vec(r, EMBED_DIM);
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Random DB whose captions and view sets repeat, so both stages see ties.
/// Every record shares the same four view azimuths.
pub fn random_db(r: &mut Rng, size: usize) -> Vec<AssetRecord> {
    const WORDS: [&str; 6] = ["red", "chair", "lamp", "tall", "mug", "blue"];
    let pool: Vec<Vec<f64>> = (0..6).map(|_| unit(r)).collect();
    let view_sets: Vec<Vec<usize>> = (0..8).map(|_| (0..4).map(|_| r.random_range(0..6)).collect()).collect();
    let refs = PrefixEmbeddings { front: pool[0].clone(), side: pool[1].clone(), back: pool[2].clone() };
    let scene = Scene::new(None, vec![Point::new(0.0, 0.0, 0.0, 1.0)]).unwrap();
    let mut ids: Vec<usize> = (0..size).collect();
    ids.shuffle(r);
    ids.iter()
        .map(|&id| {
            let caption: Vec<String> =
                (0..r.random_range(1..3)).map(|_| WORDS[r.random_range(0..WORDS.len())].to_string()).collect();
            let set = &view_sets[r.random_range(0..view_sets.len())];
            AssetRecord {
                uid: format!("asset-{id:04}"),
                text_embedding: embed_text(&caption).unwrap(),
                caption_tokens: caption,
                scene: scene.clone(),
                view_embeddings: set
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| ViewEmbedding { azimuth: k as f64, embedding: pool[j].clone() })
                    .collect(),
                prefix_reference_embeddings: refs.clone(),
            }
        })
        .collect()
}

/// Number of the 100 random DBs (sizes up to 1000) where retrieval equals
/// brute force exactly.
pub fn retrieval_matches() -> (usize, usize) {
    let mut r = rng(9);
    let mut ok = 0;
    let total = 100;
    for k in 0..total {
        let size = if k == 0 { 1000 } else { r.random_range(1..=1000) };
        let records = random_db(&mut r, size);
        let index = EmbeddingIndex::build(records.clone(), IndexMode::Exact).unwrap();
        let n = r.random_range(1..6);
        let cfg = RetrievalConfig { n, n_prime: r.random_range(n..=20), ..Default::default() };
        let query: Vec<&str> = ["red", "chair", "lamp", "blue"][..r.random_range(1..=4)].to_vec();
        let got = retrieve(&query, &index, &cfg).unwrap();
        let (idx, scores) = brute_force(&embed_text(&query).unwrap(), index.records(), cfg.n_prime, cfg.n);
        if got.indices == idx && got.scores == scores {
            ok += 1;
        }
    }
    (ok, total)
}

pub fn criterion_retrieval() -> Outcome {
    let (ok, total) = retrieval_matches();
    Outcome::new(ok == total, format!("{ok}/{total} random DBs match brute force exactly"))
}

/// Signed angle in `(−π, π]` between the recovered and true orientation.
pub fn alignment_errors() -> Vec<f64> {
    let cfg = WorldConfig::default();
    let views = pose_grid(cfg.view_poses, 0.0);
    let mut r = substream(11, Stream::Fixture, 3);
    (0..40)
        .map(|k| {
            let (rec, truth) = make_instance(SUITE[k % SUITE.len()], k, &cfg, &views, &mut r).unwrap();
            let a =
                align_orientation(&rec.scene, &rec.prefix_reference_embeddings, &AlignConfig::default(), &cfg.render)
                    .unwrap();
            (truth.rotation + a.rotation + PI).rem_euclid(TAU) - PI
        })
        .collect()
}

pub fn criterion_alignment() -> Outcome {
    let errs = alignment_errors();
    let ok = errs.iter().filter(|e| e.abs() <= FRAC_PI_4).count();
    Outcome::new(ok * 100 >= 85 * errs.len(), format!("{ok}/{} within ±45° (need 85%)", errs.len()))
}

/// Two-mode prior for `category`: its exemplar's renders and a rock's, half
/// the weight each, on an 8-pose grid.
pub fn bimodal_target(
    category: &str,
    cfg: &RenderConfig,
) -> (GaussianMixtureTarget, GaussianMixtureTarget, GaussianMixtureTarget) {
    let layout = TargetSpec::Uniform { poses: 8 };
    let a = layout.build(category, 0.05, cfg).unwrap();
    let b = layout.build("rock", 0.05, cfg).unwrap();
    let both = GaussianMixtureTarget::combine("bimodal", &[(&a, 0.5), (&b, 0.5)]).unwrap();
    (a, b, both)
}

/// Runs over `seeds` ending nearer the retrieved category's mode, for the
/// full method and the τ=0 / no-adapter baseline.
pub fn mode_selection(seeds: u64) -> (usize, usize) {
    let world = SyntheticWorld::build(&WorldConfig::default()).unwrap();
    let base = DistillConfig { particles: 1, trajectory_every: 250, ..Default::default() };
    let (a, b, both) = bimodal_target("chair", &base.render);
    let grid = pose_grid(24, 0.0);
    let mut hits = [0usize; 2];
    for (slot, variant) in [Variant::Full, Variant::Tau0NoAdapter].into_iter().enumerate() {
        for seed in 0..seeds {
            let mut cfg = DistillConfig { seed, ..base.clone() };
            variant.apply(&mut cfg);
            let t = both.clone();
            let out = distill(&cfg, &prompt_tokens("chair"), &world.index, &move |_| Ok(t.clone())).unwrap();
            let p = &out.particles.particles[0];
            if mode_distance(p, &a, &grid, &cfg.render).unwrap() < mode_distance(p, &b, &grid, &cfg.render).unwrap() {
                hits[slot] += 1;
            }
        }
    }
    (hits[0], hits[1])
}

pub fn criterion_mode_selection() -> Outcome {
    let (full, base) = mode_selection(20);
    Outcome::new(
        full >= 18 && base <= 12,
        format!("asset mode reached: full {full}/20 (need >= 18), tau=0/no-adapter {base}/20 (need <= 12)"),
    )
}

/// Back-prefix DDIM draws nearer the back render than the front render,
/// before and after adaptation, on the declared chair fixture.
pub fn debias_counts(draws: usize, prefix_mode: PrefixMode) -> (usize, usize) {
    let cfg = RenderConfig::default();
    let ex = exemplar("chair");
    let target = TargetSpec::FrontSideBack { front: 0.7, side: 0.2, back: 0.1 }.build("chair", 0.05, &cfg).unwrap();
    let mut r = stream(5, Stream::Fixture);
    let assets: Vec<(Scene, Vec<f64>)> =
        (0..3).map(|_| (jitter(&ex, 0.03, &mut r), embed_text(&["red", "chair"]).unwrap())).collect();
    let fit = adapt(&assets, &target, &AdaptConfig { prefix_mode, ..Default::default() }, &cfg).unwrap();
    let front = render(&ex, CameraPose::new(0.0), &cfg).into_vec();
    let back = render(&ex, CameraPose::new(PI), &cfg).into_vec();
    let prompt = embed_text(&prompt_tokens("chair")).unwrap();
    let identity = AdapterParams::zeros(cfg.dim(), fit.params.rank, fit.params.t_gains.len(), 0.02, 0.98);
    let plain = init_prefixes();
    let mut dr = stream(5, Stream::Probe);
    let (mut before, mut after) = (0, 0);
    for _ in 0..draws {
        let x0 = standard_normal_vec(&mut dr, cfg.dim());
        for (params, prefixes, count) in [(&identity, &plain, &mut before), (&fit.params, &fit.prefixes, &mut after)] {
            let x = ddim_sample_eps(50, &x0, 0.98, |x, t| {
                adapted_epsilon(&target, params, prefixes, x, t, CameraPose::new(PI), &prompt)
            })
            .unwrap();
            if sq_dist(&x, &back) < sq_dist(&x, &front) {
                *count += 1;
            }
        }
    }
    (before, after)
}

pub fn criterion_debias() -> Outcome {
    let (before, after) = debias_counts(200, PrefixMode::Learned);
    Outcome::new(
        after * 100 >= 80 * 200 && before * 100 <= 40 * 200,
        format!("back-mode draws: before {before}/200 (need <= 80), after {after}/200 (need >= 160)"),
    )
}

/// Median adjacent-view inconsistency of the full method and the
/// no-retrieval baseline over the ten-prompt suite.
pub fn suite_medians(out_dir: &Path) -> (f64, f64) {
    let cfg = ExperimentConfig {
        prompts: SUITE.iter().map(|c| format!("a {c}")).collect(),
        variants: vec![Variant::Full, Variant::NoRetrieval],
        artifacts: false,
        output_dir: out_dir.to_path_buf(),
        ..Default::default()
    };
    let out = run_experiment_config(&cfg).unwrap();
    let m = |v| median(&out.report(v).unwrap().column(|r| r.adjacent_inconsistency)).unwrap();
    (m(Variant::Full), m(Variant::NoRetrieval))
}

pub fn criterion_view_consistency(out_dir: &Path) -> Outcome {
    let (full, base) = suite_medians(out_dir);
    Outcome::new(full < base, format!("median adjacent inconsistency: full {full:.4}, no-retrieval {base:.4}"))
}

/// Every CSV under `dir`, relative path and contents, sorted by path.
pub fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn criterion_determinism(bin: &Path, scratch: &Path) -> Outcome {
    let run = |name: &str| {
        let dir = scratch.join(name);
        let status = std::process::Command::new(bin)
            .args(["demo", "--seed", "3", "--out"])
            .arg(&dir)
            .env_remove("REDISTILL_SEED")
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "demo exited with {status}");
        csv_files(&dir)
    };
    let (a, b) = (run("first"), run("second"));
    let same = !a.is_empty() && a == b;
    Outcome::new(same, format!("{} CSV files, byte-identical: {same}", a.len()))
}
