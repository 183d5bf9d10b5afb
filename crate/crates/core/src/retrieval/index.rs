use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::embed::{embed_image, embed_text, ViewPrefix};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::render::{render, CameraPose, RenderConfig, Scene};

pub(crate) const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEmbedding {
    pub azimuth: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixEmbeddings {
    pub front: Vec<f64>,
    pub side: Vec<f64>,
    pub back: Vec<f64>,
}

impl PrefixEmbeddings {
    pub fn get(&self, prefix: ViewPrefix) -> &[f64] {
        match prefix {
            ViewPrefix::Front => &self.front,
            ViewPrefix::Side => &self.side,
            ViewPrefix::Back => &self.back,
        }
    }

    /// Image embeddings of the front, side and back renders of a canonically
    /// oriented exemplar.
    pub fn from_exemplar(exemplar: &Scene, cfg: &RenderConfig) -> Self {
        let e = |p: ViewPrefix| embed_image(&render(exemplar, p.canonical_pose(), cfg)).vector;
        Self { front: e(ViewPrefix::Front), side: e(ViewPrefix::Side), back: e(ViewPrefix::Back) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub uid: String,
    pub caption_tokens: Vec<String>,
    pub scene: Scene,
    pub text_embedding: Vec<f64>,
    pub view_embeddings: Vec<ViewEmbedding>,
    pub prefix_reference_embeddings: PrefixEmbeddings,
}

impl AssetRecord {
    /// Builds a record, embedding the caption and the renders over `view_poses`.
    pub fn from_scene(
        uid: impl Into<String>,
        caption_tokens: Vec<String>,
        scene: Scene,
        view_poses: &[CameraPose],
        render_cfg: &RenderConfig,
        prefix_reference_embeddings: PrefixEmbeddings,
    ) -> Result<Self> {
        let text_embedding = embed_text(&caption_tokens)?;
        let view_embeddings = view_poses
            .iter()
            .map(|&pose| ViewEmbedding {
                azimuth: pose.azimuth(),
                embedding: embed_image(&render(&scene, pose, render_cfg)).vector,
            })
            .collect();
        let record = Self {
            uid: uid.into(),
            caption_tokens,
            scene,
            text_embedding,
            view_embeddings,
            prefix_reference_embeddings,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        let err =
            |field: &str, message: String| Error::Record { uid: self.uid.clone(), field: field.to_string(), message };
        let check_unit = |field: &str, v: &[f64]| -> Result<()> {
            let n = norm(v);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(err(field, format!("embedding norm {n} is not 1")));
            }
            Ok(())
        };
        if self.uid.is_empty() {
            return Err(err("uid", "empty uid".into()));
        }
        self.scene.validate().map_err(|e| err("scene", e.to_string()))?;
        check_unit("text_embedding", &self.text_embedding)?;
        if self.view_embeddings.is_empty() {
            return Err(err("view_embeddings", "no view embeddings".into()));
        }
        for v in &self.view_embeddings {
            check_unit("view_embeddings", &v.embedding)?;
            if v.embedding.len() != self.text_embedding.len() {
                return Err(err("view_embeddings", "dimension differs from text_embedding".into()));
            }
        }
        let refs = &self.prefix_reference_embeddings;
        for (name, v) in [("front", &refs.front), ("side", &refs.side), ("back", &refs.back)] {
            check_unit(&format!("prefix_reference_embeddings.{name}"), v)?;
        }
        Ok(())
    }

    pub fn view_azimuths(&self) -> Vec<f64> {
        self.view_embeddings.iter().map(|v| v.azimuth).collect()
    }

    /// Mean cosine between `query` and the stored view embeddings.
    pub fn mean_view_score(&self, query: &[f64]) -> f64 {
        let total: f64 = self.view_embeddings.iter().map(|v| dot(query, &v.embedding)).sum();
        total / self.view_embeddings.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    #[default]
    Exact,
    CoarseQuantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Text-stage pool size.
    pub n_prime: usize,
    /// Final number of assets.
    pub n: usize,
    pub alignment_grid: usize,
    pub symmetry_spread_threshold: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { n_prime: 10, n: 3, alignment_grid: 8, symmetry_spread_threshold: 0.02 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("retrieval n must be >= 1".into()));
        }
        if self.n > self.n_prime {
            return Err(Error::Config(format!("retrieval n ({}) must not exceed n_prime ({})", self.n, self.n_prime)));
        }
        if self.alignment_grid < 4 {
            return Err(Error::Config("alignment_grid must be >= 4".into()));
        }
        Ok(())
    }
}

/// Spherical k-means cells over the text embeddings.
#[derive(Debug, Clone, PartialEq)]
struct CoarseQuantizer {
    centroids: Vec<Vec<f64>>,
    lists: Vec<Vec<usize>>,
    probes: usize,
}

impl CoarseQuantizer {
    const ITERATIONS: usize = 12;

    fn build(records: &[AssetRecord]) -> Self {
        let n = records.len();
        let cells = ((n as f64).sqrt().ceil() as usize).max(1);
        let mut centroids: Vec<Vec<f64>> = (0..cells).map(|c| records[c * n / cells].text_embedding.clone()).collect();
        let mut assign = vec![0usize; n];
        for _ in 0..Self::ITERATIONS {
            for (i, r) in records.iter().enumerate() {
                assign[i] = nearest_centroid(&centroids, &r.text_embedding);
            }
            let dim = centroids[0].len();
            let mut sums = vec![vec![0.0; dim]; cells];
            for (i, r) in records.iter().enumerate() {
                crate::linalg::axpy(1.0, &r.text_embedding, &mut sums[assign[i]]);
            }
            for (c, s) in centroids.iter_mut().zip(sums.iter_mut()) {
                if crate::linalg::normalize(s) > 0.0 {
                    *c = s.clone();
                }
            }
        }
        let mut lists = vec![Vec::new(); cells];
        for (i, r) in records.iter().enumerate() {
            lists[nearest_centroid(&centroids, &r.text_embedding)].push(i);
        }
        let probes = cells.div_ceil(3).max(1);
        Self { centroids, lists, probes }
    }

    fn candidates(&self, query: &[f64]) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self.centroids.iter().enumerate().map(|(c, v)| (dot(query, v), c)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<usize> =
            order.iter().take(self.probes).flat_map(|&(_, c)| self.lists[c].iter().copied()).collect();
        out.sort_unstable();
        out
    }
}

fn nearest_centroid(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (c, cv) in centroids.iter().enumerate() {
        let s = dot(v, cv);
        if s > best.0 {
            best = (s, c);
        }
    }
    best.1
}

/// Immutable embedding database.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    records: Vec<AssetRecord>,
    mode: IndexMode,
    coarse: Option<CoarseQuantizer>,
}

impl EmbeddingIndex {
    pub fn build(records: Vec<AssetRecord>, mode: IndexMode) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut grid: Option<Vec<f64>> = None;
        for r in &records {
            r.validate()?;
            if !seen.insert(r.uid.clone()) {
                return Err(Error::Record { uid: r.uid.clone(), field: "uid".into(), message: "duplicate uid".into() });
            }
            let az = r.view_azimuths();
            match &grid {
                None => grid = Some(az),
                Some(g) if *g != az => {
                    return Err(Error::Record {
                        uid: r.uid.clone(),
                        field: "view_embeddings".into(),
                        message: "view poses differ from the rest of the database".into(),
                    })
                }
                Some(_) => {}
            }
        }
        let coarse = match mode {
            IndexMode::CoarseQuantized if !records.is_empty() => Some(CoarseQuantizer::build(&records)),
            _ => None,
        };
        Ok(Self { records, mode, coarse })
    }

    pub fn records(&self) -> &[AssetRecord] {
        &self.records
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, uid: &str) -> Option<&AssetRecord> {
        self.records.iter().find(|r| r.uid == uid)
    }

    /// Same records, different search mode.
    pub fn with_mode(&self, mode: IndexMode) -> Result<Self> {
        Self::build(self.records.clone(), mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Record indices, best first.
    pub indices: Vec<usize>,
    /// Stage-two scores matching `indices`.
    pub scores: Vec<f64>,
    /// Fewer than `n` records were available.
    pub short: bool,
}

impl RetrievalResult {
    pub fn records<'a>(&self, index: &'a EmbeddingIndex) -> Vec<&'a AssetRecord> {
        self.indices.iter().map(|&i| &index.records[i]).collect()
    }
}

#[derive(Debug)]
struct Ranked<'a> {
    score: f64,
    uid: &'a str,
    idx: usize,
}

impl Ranked<'_> {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.uid.cmp(other.uid))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked<'_> {}
impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked<'_> {
    // The heap's maximum is the worst-ranked candidate.
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

fn top_k<'a>(items: impl Iterator<Item = Ranked<'a>>, k: usize) -> Vec<Ranked<'a>> {
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for item in items {
        if heap.len() < k {
            heap.push(item);
        } else if let Some(worst) = heap.peek() {
            if item.rank_cmp(worst) == Ordering::Less {
                heap.pop();
                heap.push(item);
            }
        }
    }
    let mut out = heap.into_vec();
    out.sort_by(|a, b| a.rank_cmp(b));
    out
}

/// Two-stage retrieval: the `n_prime` best records by caption similarity,
/// re-ranked by mean view-embedding similarity down to `n`. Ties go to the
/// smaller uid.
pub fn retrieve<S: AsRef<str>>(
    query_tokens: &[S],
    index: &EmbeddingIndex,
    cfg: &RetrievalConfig,
) -> Result<RetrievalResult> {
    if index.is_empty() {
        return Err(Error::Retrieval("database is empty".into()));
    }
    if cfg.n == 0 || cfg.n > cfg.n_prime {
        return Err(Error::Config(format!(
            "retrieval needs 1 <= n <= n_prime, got n={} n_prime={}",
            cfg.n, cfg.n_prime
        )));
    }
    let query = embed_text(query_tokens)?;
    let records = &index.records;
    let candidates: Vec<usize> = match (&index.mode, &index.coarse) {
        (IndexMode::CoarseQuantized, Some(q)) => q.candidates(&query),
        _ => (0..records.len()).collect(),
    };
    let stage1 = top_k(
        candidates.iter().map(|&i| Ranked {
            score: dot(&query, &records[i].text_embedding),
            uid: &records[i].uid,
            idx: i,
        }),
        cfg.n_prime,
    );
    let stage2 = top_k(
        stage1.iter().map(|c| Ranked { score: records[c.idx].mean_view_score(&query), uid: c.uid, idx: c.idx }),
        cfg.n,
    );
    Ok(RetrievalResult {
        indices: stage2.iter().map(|c| c.idx).collect(),
        scores: stage2.iter().map(|c| c.score).collect(),
        short: cfg.n > records.len(),
    })
}
