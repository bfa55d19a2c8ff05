//! Side-information feature providers and similarity blending.
//!
//! A [`FeatureProvider`] maps a user or item label (plus optional side text)
//! to a fixed-dimension vector. Feature similarity is the cosine of two such
//! vectors, and is linearly blended with the collaborative weight before
//! neighbour selection.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::Catalog;
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

pub trait FeatureProvider: Send + Sync {
    fn dimension(&self) -> usize;

    /// Must be deterministic and return exactly `dimension()` finite values.
    fn features(&self, label: &str, side_text: &str) -> Result<Vec<f64>>;
}

/// Hash-seeded unit vector standing in for a learned text encoder.
pub fn stub_features(label: &str, side_text: &str, d: usize, seed: u64) -> Result<Vec<f64>> {
    if label.is_empty() {
        return Err(Error::Features("empty label".into()));
    }
    if d == 0 {
        return Err(Error::Features("dimension must be at least 1".into()));
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(side_text.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);

    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return Ok(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StubProvider {
    pub dimension: usize,
    pub seed: u64,
}

impl FeatureProvider for StubProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn features(&self, label: &str, side_text: &str) -> Result<Vec<f64>> {
        stub_features(label, side_text, self.dimension, self.seed)
    }
}

/// Precomputed vectors read from a `label,v1,...,vd` CSV. Side text is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct FileProvider {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut dimension = None;
        let mut vectors = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let mut fields = line.split(',');
            let label = fields.next().unwrap_or_default().trim();
            if label.is_empty() {
                return Err(parse_err("empty label".into()));
            }
            let values = fields
                .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| parse_err("invalid feature value".into()))?;
            if values.is_empty() {
                return Err(parse_err("no feature values".into()));
            }
            match dimension {
                None => dimension = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(parse_err(format!("expected {d} values, found {}", values.len())))
                }
                _ => {}
            }
            if vectors.insert(label.to_string(), values).is_some() {
                return Err(parse_err(format!("duplicate label {label}")));
            }
        }
        let dimension = dimension.ok_or_else(|| Error::Features("feature file is empty".into()))?;
        Ok(FileProvider { dimension, vectors })
    }
}

impl FeatureProvider for FileProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn features(&self, label: &str, _side_text: &str) -> Result<Vec<f64>> {
        self.vectors
            .get(label)
            .cloned()
            .ok_or_else(|| Error::Features(format!("no vector for label {label}")))
    }
}

/// Parsed form of `--features`: `stub:<d>:<seed>` or a file path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Stub { dimension: usize, seed: u64 },
    File(String),
}

impl FeatureSource {
    pub fn open(&self) -> Result<Box<dyn FeatureProvider>> {
        Ok(match self {
            FeatureSource::Stub { dimension, seed } => Box::new(StubProvider {
                dimension: *dimension,
                seed: *seed,
            }),
            FeatureSource::File(path) => Box::new(FileProvider::open(path)?),
        })
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("stub:") {
            let bad = || Error::Config(format!("invalid stub features `{s}` (expected stub:<d>:<seed>)"));
            let (d, seed) = rest.split_once(':').ok_or_else(bad)?;
            let dimension: usize = d.parse().map_err(|_| bad())?;
            let seed: u64 = seed.parse().map_err(|_| bad())?;
            if dimension == 0 {
                return Err(bad());
            }
            Ok(FeatureSource::Stub { dimension, seed })
        } else if s.is_empty() {
            Err(Error::Config("empty features source".into()))
        } else {
            Ok(FeatureSource::File(s.to_string()))
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSource::Stub { dimension, seed } => write!(f, "stub:{dimension}:{seed}"),
            FeatureSource::File(path) => f.write_str(path),
        }
    }
}

/// Weight on the collaborative similarity; `1 - alpha` goes to features.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BlendConfig {
    alpha: f64,
}

impl BlendConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {alpha}")));
        }
        Ok(BlendConfig { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig { alpha: 0.7 }
    }
}

/// `alpha * cf + (1 - alpha) * feat`. A pair without a collaborative weight
/// takes the feature similarity alone, except at `alpha = 1` where the
/// feature term has no weight and the pair stays undefined.
pub fn blended_similarity(cf: Option<f64>, feat: f64, cfg: BlendConfig) -> Option<f64> {
    let alpha = cfg.alpha;
    if alpha == 1.0 {
        return cf;
    }
    match cf {
        _ if alpha == 0.0 => Some(feat),
        Some(cf) => Some(alpha * cf + (1.0 - alpha) * feat),
        None => Some(feat),
    }
}

/// Cosine of two feature vectors; `None` on zero norm.
pub fn feature_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}

/// Feature vectors for every label of a catalog, in handle order.
pub fn catalog_features(provider: &dyn FeatureProvider, labels: &Catalog) -> Result<Vec<Vec<f64>>> {
    let d = provider.dimension();
    labels
        .labels()
        .iter()
        .map(|label| {
            let v = provider.features(label, "")?;
            if v.len() != d || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Features(format!(
                    "provider returned an invalid vector for {label}"
                )));
            }
            Ok(v)
        })
        .collect()
}

/// Blends every pair on the matrix's axis. `labels` must be the catalog of
/// that axis.
pub fn blend_matrix(
    cf: &SimilarityMatrix,
    labels: &Catalog,
    provider: &dyn FeatureProvider,
    cfg: BlendConfig,
) -> Result<SimilarityMatrix> {
    if labels.len() != cf.size() {
        return Err(Error::Config(format!(
            "catalog has {} labels, similarity matrix covers {}",
            labels.len(),
            cf.size()
        )));
    }
    let features = catalog_features(provider, labels)?;
    let n = cf.size() as u32;
    let pairs: Vec<(u32, u32, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let features = &features;
            (a + 1..n).filter_map(move |b| {
                let cfw = cf.get(a, b);
                let w = match feature_similarity(&features[a as usize], &features[b as usize]) {
                    Some(feat) => blended_similarity(cfw, feat, cfg),
                    None => cfw,
                };
                w.map(|w| (a, b, w))
            })
        })
        .collect();
    SimilarityMatrix::from_pairs(cf.axis(), cf.kernel(), cf.min_overlap(), cf.size(), pairs)
}
