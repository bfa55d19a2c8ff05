//! Flag parsing, config files and the resolved run configuration.
//!
//! Values come from three layers: built-in defaults, an optional
//! `--config` file of `key=value` lines, and command-line flags. Flags win.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cfrec_core::enhancer::FeatureSource;
use cfrec_core::{Algorithm, Axis, DuplicatePolicy, Kernel, NeighborPool, Optimizer, Scale};
use clap::{Args, Parser, Subcommand};

use crate::CliError;

/// Comma-separated list flag, e.g. `--k-values 5,10,15`.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|part| part.trim().parse::<T>().map_err(|e| format!("`{part}`: {e}")))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "cfrec", version, about = "Collaborative filtering recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a ratings CSV and print its summary.
    Ingest,
    /// Similarity triples for the whole matrix, or one target's K nearest.
    Similar {
        #[arg(long)]
        target: Option<String>,
    },
    /// Predict ratings for one user.
    Predict {
        #[arg(long)]
        user: String,
        /// Item labels, comma-separated.
        #[arg(long)]
        item: List<String>,
        /// Factor model written by `factorize`; replaces the neighbourhood model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Top-N recommendations for one user.
    Recommend {
        #[arg(long)]
        user: String,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Hold out ratings and report MAE, precision, recall and coverage at one K.
    Evaluate,
    /// Evaluate several algorithms over a list of K values on one split.
    SweepK,
    /// Train a latent factor model on all ratings and write it as JSON.
    Factorize,
}

/// Shared flags. Every field is optional so that config-file values can
/// fill in whatever was not given on the command line.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// key=value file; command-line flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ratings CSV with header user_id,item_id,rating.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Rating scale as min,max.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub scale: Option<Scale>,
    /// last-wins or strict.
    #[arg(long, global = true)]
    pub duplicates: Option<DuplicatePolicy>,
    /// cosine, pearson or adjcos.
    #[arg(long, global = true)]
    pub kernel: Option<Kernel>,
    /// user or item.
    #[arg(long, global = true)]
    pub axis: Option<Axis>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub min_overlap: Option<usize>,
    /// global or raters.
    #[arg(long, global = true)]
    pub neighbor_pool: Option<NeighborPool>,
    /// Fraction of ratings held out for testing.
    #[arg(long, global = true)]
    pub holdout: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Weight on collaborative similarity in the feature blend.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Blend feature similarity into `similar`, `predict` and `recommend`.
    #[arg(long, global = true)]
    pub blend: Option<bool>,
    /// stub:<d>:<seed> or a CSV of label,v1,...,vd.
    #[arg(long, global = true)]
    pub features: Option<FeatureSource>,
    #[arg(long, global = true)]
    pub algorithms: Option<List<Algorithm>>,
    #[arg(long, global = true)]
    pub k_values: Option<List<usize>>,
    /// Latent dimension for factorization.
    #[arg(long, global = true)]
    pub factors: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub l2: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// sgd or full-batch.
    #[arg(long, global = true)]
    pub optimizer: Option<Optimizer>,
    /// Add the global mean to factor scores.
    #[arg(long, global = true)]
    pub bias: Option<bool>,
    /// Output file for the machine-readable result; stdout if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress human-readable tables.
    #[arg(long, global = true)]
    pub quiet: bool,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
}

impl Flags {
    /// Fills unset fields from `key=value` text. Blank lines and `#` comments
    /// are skipped; unknown keys are an error.
    pub fn merge_config(&mut self, text: &str) -> Result<(), CliError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            // an empty value leaves the setting at its default
            macro_rules! set {
                ($field:ident) => {{
                    if !value.is_empty() {
                        let v = parse(key, value)?;
                        self.$field.get_or_insert(v);
                    }
                }};
            }
            match key.replace('_', "-").as_str() {
                "data" => set!(data),
                "scale" => set!(scale),
                "duplicates" => set!(duplicates),
                "kernel" => set!(kernel),
                "axis" => set!(axis),
                "k" => set!(k),
                "n" => set!(n),
                "threshold" => set!(threshold),
                "min-overlap" => {
                    // `default` keeps the kernel's own minimum
                    if value != "default" {
                        set!(min_overlap)
                    }
                }
                "neighbor-pool" => set!(neighbor_pool),
                "holdout" => set!(holdout),
                "seed" => set!(seed),
                "alpha" => set!(alpha),
                "blend" => set!(blend),
                "features" => set!(features),
                "algorithms" => set!(algorithms),
                "k-values" => set!(k_values),
                "factors" => set!(factors),
                "lr" => set!(lr),
                "l2" => set!(l2),
                "epochs" => set!(epochs),
                "optimizer" => set!(optimizer),
                "bias" => set!(bias),
                "out" => set!(out),
                "jobs" => set!(jobs),
                "quiet" => {
                    let q: bool = parse(key, value)?;
                    self.quiet |= q;
                }
                other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn resolve(self) -> RunConfig {
        let seed = self.seed.unwrap_or(42);
        RunConfig {
            data: self.data,
            scale: self.scale.unwrap_or_default(),
            duplicates: self.duplicates.unwrap_or_default(),
            kernel: self.kernel.unwrap_or(Kernel::Cosine),
            axis: self.axis.unwrap_or(Axis::User),
            k: self.k.unwrap_or(10),
            n: self.n.unwrap_or(10),
            threshold: self.threshold.unwrap_or(6.0),
            min_overlap: self.min_overlap,
            neighbor_pool: self.neighbor_pool.unwrap_or_default(),
            holdout: self.holdout.unwrap_or(0.2),
            seed,
            alpha: self.alpha.unwrap_or(0.7),
            blend: self.blend.unwrap_or(false),
            features: self.features.unwrap_or(FeatureSource::Stub { dimension: 16, seed }),
            algorithms: self.algorithms.map(|l| l.0).unwrap_or_else(|| {
                vec![
                    Algorithm::UserCf,
                    Algorithm::UserCfFeat,
                    Algorithm::ItemCf,
                    Algorithm::ItemCfFeat,
                ]
            }),
            k_values: self
                .k_values
                .map(|l| l.0)
                .unwrap_or_else(|| vec![5, 10, 15, 20, 25, 30]),
            factors: self.factors.unwrap_or(8),
            lr: self.lr.unwrap_or(0.005),
            l2: self.l2.unwrap_or(0.02),
            epochs: self.epochs.unwrap_or(200),
            optimizer: self.optimizer.unwrap_or_default(),
            bias: self.bias.unwrap_or(true),
            out: self.out,
            jobs: self.jobs.unwrap_or(0),
            quiet: self.quiet,
        }
    }
}

/// Every setting a run depends on. `Display` writes it in config-file
/// syntax, so a printed configuration can be fed back with `--config`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub scale: Scale,
    pub duplicates: DuplicatePolicy,
    pub kernel: Kernel,
    pub axis: Axis,
    pub k: usize,
    pub n: usize,
    pub threshold: f64,
    pub min_overlap: Option<usize>,
    pub neighbor_pool: NeighborPool,
    pub holdout: f64,
    pub seed: u64,
    pub alpha: f64,
    pub blend: bool,
    /// Defaults to a 16-dimensional stub seeded from `seed`.
    pub features: FeatureSource,
    pub algorithms: Vec<Algorithm>,
    pub k_values: Vec<usize>,
    pub factors: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub bias: bool,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub quiet: bool,
}

impl RunConfig {
    pub fn min_overlap_for(&self, kernel: Kernel) -> usize {
        self.min_overlap.unwrap_or(kernel.default_min_overlap())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        writeln!(f, "data={data}")?;
        writeln!(f, "scale={}", self.scale)?;
        writeln!(f, "duplicates={}", self.duplicates)?;
        writeln!(f, "kernel={}", self.kernel)?;
        writeln!(f, "axis={}", self.axis)?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "threshold={}", self.threshold)?;
        match self.min_overlap {
            Some(v) => writeln!(f, "min-overlap={v}")?,
            None => writeln!(f, "min-overlap=default")?,
        }
        writeln!(f, "neighbor-pool={}", self.neighbor_pool)?;
        writeln!(f, "holdout={}", self.holdout)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "alpha={}", self.alpha)?;
        writeln!(f, "blend={}", self.blend)?;
        writeln!(f, "features={}", self.features)?;
        writeln!(f, "algorithms={}", List(self.algorithms.clone()))?;
        writeln!(f, "k-values={}", List(self.k_values.clone()))?;
        writeln!(f, "factors={}", self.factors)?;
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "l2={}", self.l2)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "optimizer={}", self.optimizer)?;
        writeln!(f, "bias={}", self.bias)?;
        if let Some(out) = &self.out {
            writeln!(f, "out={}", out.display())?;
        }
        writeln!(f, "jobs={}", self.jobs)?;
        write!(f, "quiet={}", self.quiet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_config_file() {
        let mut flags = Flags {
            k: Some(3),
            ..Flags::default()
        };
        flags.merge_config("k=7\nn = 4\n# comment\n\nseed=9").unwrap();
        let cfg = flags.resolve();
        assert_eq!((cfg.k, cfg.n, cfg.seed), (3, 4, 9));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut flags = Flags::default();
        assert!(matches!(flags.merge_config("colour=blue"), Err(CliError::Usage(_))));
        assert!(matches!(flags.merge_config("k=lots"), Err(CliError::Usage(_))));
        assert!(matches!(flags.merge_config("just a line"), Err(CliError::Usage(_))));
    }

    #[test]
    fn printed_config_round_trips() {
        let flags = Flags {
            kernel: Some(Kernel::AdjustedCosine),
            axis: Some(Axis::Item),
            min_overlap: Some(3),
            alpha: Some(1.0),
            k_values: Some(List(vec![2, 4])),
            ..Flags::default()
        };
        let cfg = flags.resolve();
        let mut again = Flags::default();
        again.merge_config(&cfg.to_string()).unwrap();
        assert_eq!(again.resolve(), cfg);
    }

    #[test]
    fn defaults() {
        let cfg = Flags::default().resolve();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.threshold, 6.0);
        assert_eq!(cfg.features.to_string(), "stub:16:42");
        assert_eq!(cfg.min_overlap_for(Kernel::Pearson), 2);
    }
}
