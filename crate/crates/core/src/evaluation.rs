//! Holdout splitting, accuracy and ranking metrics, and the neighbour-count
//! sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{ItemId, RatingMatrix, UserId};
use crate::enhancer::{blend_matrix, BlendConfig, FeatureProvider};
use crate::error::{Error, Result};
use crate::factorization::{predict_mf, recommend_top_n_mf, train, FactorModel, TrainConfig};
use crate::prediction::{predict, recommend_top_n, Fallback, NeighborPool, Prediction, RecommendationList};
use crate::similarity::{Axis, Kernel, SimilarityMatrix};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TestRating {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: RatingMatrix,
    /// Held-out ratings sorted by (user, item).
    pub test: Vec<TestRating>,
    pub seed: u64,
    pub holdout_fraction: f64,
}

/// Holds out `floor(n * fraction)` ratings chosen uniformly at random.
///
/// Ratings are drawn in a seeded shuffle order; a draw that would leave its
/// user with no training rating is skipped and stays in train. Users and items
/// keep their handles in `train`.
pub fn split(m: &RatingMatrix, holdout_fraction: f64, seed: u64) -> Result<Split> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must be in (0, 1), got {holdout_fraction}"
        )));
    }
    let entries: Vec<(UserId, ItemId, f64)> = m.triples().collect();
    let wanted = (entries.len() as f64 * holdout_fraction).floor() as usize;
    if wanted == 0 {
        return Err(Error::Split(format!(
            "{} ratings with fraction {holdout_fraction} leaves an empty test set",
            entries.len()
        )));
    }

    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut remaining: Vec<usize> = (0..m.num_users())
        .map(|u| m.user_entries(UserId(u as u32)).len())
        .collect();
    let mut held = vec![false; entries.len()];
    let mut taken = 0;
    for idx in order {
        if taken == wanted {
            break;
        }
        let u = entries[idx].0.index();
        if remaining[u] > 1 {
            remaining[u] -= 1;
            held[idx] = true;
            taken += 1;
        }
    }
    if taken < wanted {
        return Err(Error::Split(format!(
            "only {taken} of {wanted} ratings can be held out without emptying a user"
        )));
    }

    let mut train_entries = Vec::with_capacity(entries.len() - taken);
    let mut test = Vec::with_capacity(taken);
    for (idx, &(user, item, rating)) in entries.iter().enumerate() {
        if held[idx] {
            test.push(TestRating { user, item, rating });
        } else {
            train_entries.push((user, item, rating));
        }
    }
    let train = RatingMatrix::from_parts(m.users().clone(), m.items().clone(), m.scale(), train_entries)?;
    Ok(Split {
        train,
        test,
        seed,
        holdout_fraction,
    })
}

/// Mean absolute error over `(predicted, actual)` pairs, summed in input order.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("MAE of an empty prediction list"));
    }
    let total: f64 = pairs.iter().map(|(p, a)| (p - a).abs()).sum();
    Ok(total / pairs.len() as f64)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PrecisionRecall {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Percent; `None` when nothing was recommended.
    pub precision: Option<f64>,
    /// Percent; `None` when nothing is relevant.
    pub recall: Option<f64>,
}

impl PrecisionRecall {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        PrecisionRecall {
            tp,
            fp,
            fn_,
            precision: pct(tp, tp + fp),
            recall: pct(tp, tp + fn_),
        }
    }
}

pub fn precision_recall(recommended: &BTreeSet<ItemId>, relevant: &BTreeSet<ItemId>) -> PrecisionRecall {
    let tp = recommended.intersection(relevant).count();
    PrecisionRecall::from_counts(tp, recommended.len() - tp, relevant.len() - tp)
}

/// Percent of the catalog recommended to at least one user.
pub fn coverage(recommended: &BTreeSet<ItemId>, catalog_size: usize) -> Result<f64> {
    if catalog_size == 0 {
        return Err(Error::Empty("coverage over an empty catalog"));
    }
    Ok(100.0 * recommended.len() as f64 / catalog_size as f64)
}

/// Coverage over categories: `categories` maps each item to its category.
/// Items without an entry count as their own category.
pub fn category_coverage(
    recommended: &BTreeSet<ItemId>,
    categories: &BTreeMap<ItemId, String>,
    catalog: &[ItemId],
) -> Result<f64> {
    let category = |i: &ItemId| categories.get(i).cloned().unwrap_or_else(|| format!("\u{0}{}", i.0));
    let all: BTreeSet<String> = catalog.iter().map(category).collect();
    if all.is_empty() {
        return Err(Error::Empty("coverage over an empty catalog"));
    }
    let hit: BTreeSet<String> = recommended.iter().map(category).collect();
    Ok(100.0 * hit.len() as f64 / all.len() as f64)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    UserCf,
    UserCfFeat,
    ItemCf,
    ItemCfFeat,
    Factorization,
}

impl Algorithm {
    pub fn uses_features(self) -> bool {
        matches!(self, Algorithm::UserCfFeat | Algorithm::ItemCfFeat)
    }

    pub fn axis(self) -> Option<Axis> {
        match self {
            Algorithm::UserCf | Algorithm::UserCfFeat => Some(Axis::User),
            Algorithm::ItemCf | Algorithm::ItemCfFeat => Some(Axis::Item),
            Algorithm::Factorization => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::UserCf => "usercf",
            Algorithm::UserCfFeat => "usercf+feat",
            Algorithm::ItemCf => "itemcf",
            Algorithm::ItemCfFeat => "itemcf+feat",
            Algorithm::Factorization => "mf",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "usercf" => Ok(Algorithm::UserCf),
            "usercf+feat" => Ok(Algorithm::UserCfFeat),
            "itemcf" => Ok(Algorithm::ItemCf),
            "itemcf+feat" => Ok(Algorithm::ItemCfFeat),
            "mf" => Ok(Algorithm::Factorization),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected usercf|usercf+feat|itemcf|itemcf+feat|mf)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub user_kernel: Kernel,
    pub item_kernel: Kernel,
    /// `None` uses each kernel's default.
    pub min_overlap: Option<usize>,
    pub pool: NeighborPool,
    /// Relevance and recommendation threshold.
    pub threshold: f64,
    /// Recommendation list length.
    pub n: usize,
    pub blend: BlendConfig,
    pub train: TrainConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            user_kernel: Kernel::Cosine,
            item_kernel: Kernel::Cosine,
            min_overlap: None,
            pool: NeighborPool::Global,
            threshold: 6.0,
            n: 10,
            blend: BlendConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub algorithm: String,
    pub k: usize,
    pub n: usize,
    pub threshold: f64,
    pub mae: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub coverage: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub n_test: usize,
    pub n_fallback: usize,
}

/// A trained neighbourhood or factor model, reused across K values.
#[derive(Clone, Debug)]
pub enum Prepared {
    Neighborhood(SimilarityMatrix),
    Factors(FactorModel),
}

pub struct Evaluator<'a> {
    split: &'a Split,
    config: &'a EvalConfig,
    provider: Option<&'a dyn FeatureProvider>,
}

impl<'a> Evaluator<'a> {
    pub fn new(split: &'a Split, config: &'a EvalConfig, provider: Option<&'a dyn FeatureProvider>) -> Result<Self> {
        if config.n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if config.user_kernel == Kernel::AdjustedCosine {
            return Err(Error::Config("adjcos is only defined on the item axis".into()));
        }
        if split.test.is_empty() {
            return Err(Error::Empty("split has no test ratings"));
        }
        Ok(Evaluator {
            split,
            config,
            provider,
        })
    }

    pub fn prepare(&self, algorithm: Algorithm) -> Result<Prepared> {
        let train_m = &self.split.train;
        let Some(axis) = algorithm.axis() else {
            return Ok(Prepared::Factors(train(train_m, &self.config.train)?.model));
        };
        let kernel = match axis {
            Axis::User => self.config.user_kernel,
            Axis::Item => self.config.item_kernel,
        };
        let min_overlap = self.config.min_overlap.unwrap_or(kernel.default_min_overlap());
        let cf = SimilarityMatrix::build(train_m, axis, kernel, min_overlap)?;
        if !algorithm.uses_features() {
            return Ok(Prepared::Neighborhood(cf));
        }
        let provider = self
            .provider
            .ok_or_else(|| Error::Config(format!("{algorithm} needs a feature provider")))?;
        let labels = match axis {
            Axis::User => train_m.users(),
            Axis::Item => train_m.items(),
        };
        Ok(Prepared::Neighborhood(blend_matrix(
            &cf,
            labels,
            provider,
            self.config.blend,
        )?))
    }

    fn predict_one(&self, prepared: &Prepared, t: &TestRating, k: usize) -> Result<Prediction> {
        match prepared {
            Prepared::Neighborhood(s) => predict(&self.split.train, s, t.user, t.item, k, self.config.pool),
            Prepared::Factors(model) => predict_mf(model, t.user, t.item),
        }
    }

    fn recommend(&self, prepared: &Prepared, user: UserId, k: usize) -> Result<RecommendationList> {
        match prepared {
            Prepared::Neighborhood(s) => {
                recommend_top_n(&self.split.train, s, user, k, self.config.n, self.config.pool)
            }
            Prepared::Factors(model) => recommend_top_n_mf(model, &self.split.train, user, self.config.n),
        }
    }

    pub fn evaluate(&self, algorithm: Algorithm, prepared: &Prepared, k: usize) -> Result<EvaluationReport> {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let test = &self.split.test;
        // Collected in test order so the sums below are independent of worker count.
        let predictions: Vec<Prediction> = test
            .par_iter()
            .map(|t| self.predict_one(prepared, t, k))
            .collect::<Result<_>>()?;
        let pairs: Vec<(f64, f64)> = predictions.iter().zip(test).map(|(p, t)| (p.value, t.rating)).collect();
        let n_fallback = predictions.iter().filter(|p| p.fallback != Fallback::None).count();

        let mut relevant: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
        for t in test {
            let entry = relevant.entry(t.user).or_default();
            if t.rating > self.config.threshold {
                entry.insert(t.item);
            }
        }
        let users: Vec<UserId> = relevant.keys().copied().collect();
        let lists: Vec<RecommendationList> = users
            .par_iter()
            .map(|&u| self.recommend(prepared, u, k))
            .collect::<Result<_>>()?;

        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut recommended_anywhere = BTreeSet::new();
        for list in &lists {
            let recommended: BTreeSet<ItemId> = list.items().collect();
            let pr = precision_recall(&recommended, &relevant[&list.user]);
            tp += pr.tp;
            fp += pr.fp;
            fn_ += pr.fn_;
            recommended_anywhere.extend(recommended);
        }
        let pr = PrecisionRecall::from_counts(tp, fp, fn_);

        Ok(EvaluationReport {
            algorithm: algorithm.to_string(),
            k,
            n: self.config.n,
            threshold: self.config.threshold,
            mae: mae(&pairs)?,
            precision: pr.precision,
            recall: pr.recall,
            coverage: coverage(&recommended_anywhere, self.split.train.num_items())?,
            tp,
            fp,
            fn_,
            n_test: test.len(),
            n_fallback,
        })
    }
}

/// One report per (K, algorithm) on a single split, K-major.
pub fn sweep_k(
    split: &Split,
    algorithms: &[Algorithm],
    k_values: &[usize],
    config: &EvalConfig,
    provider: Option<&dyn FeatureProvider>,
) -> Result<Vec<EvaluationReport>> {
    if k_values.is_empty() {
        return Err(Error::Config("K values must be nonempty".into()));
    }
    if k_values.windows(2).any(|w| w[0] >= w[1]) || k_values[0] == 0 {
        return Err(Error::Config(
            "K values must be positive and strictly increasing".into(),
        ));
    }
    if algorithms.is_empty() {
        return Err(Error::Config("no algorithms to evaluate".into()));
    }
    let evaluator = Evaluator::new(split, config, provider)?;
    let prepared = algorithms
        .iter()
        .map(|&a| evaluator.prepare(a))
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(k_values.len() * algorithms.len());
    for &k in k_values {
        for (&algorithm, model) in algorithms.iter().zip(&prepared) {
            reports.push(evaluator.evaluate(algorithm, model, k)?);
        }
    }
    Ok(reports)
}

/// Aligned text table: a K column and one MAE column per algorithm, in the
/// order algorithms first appear in `reports`.
pub fn render_mae_table(reports: &[EvaluationReport]) -> String {
    let mut algorithms: Vec<&str> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    let mut cells: BTreeMap<(usize, &str), f64> = BTreeMap::new();
    for r in reports {
        if !algorithms.contains(&r.algorithm.as_str()) {
            algorithms.push(&r.algorithm);
        }
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
        cells.insert((r.k, &r.algorithm), r.mae);
    }
    let first = "K";
    let widths: Vec<usize> = algorithms.iter().map(|a| a.len().max(8)).collect();
    let mut out = String::new();
    out.push_str(&format!("{first:>4}"));
    for (a, w) in algorithms.iter().zip(&widths) {
        out.push_str(&format!("  {a:>w$}"));
    }
    out.push('\n');
    out.push_str(&format!("{:>4}", ""));
    for w in &widths {
        out.push_str(&format!("  {:>w$}", "MAE"));
    }
    out.push('\n');
    for k in ks {
        out.push_str(&format!("{k:>4}"));
        for (a, w) in algorithms.iter().zip(&widths) {
            match cells.get(&(k, *a)) {
                Some(v) => out.push_str(&format!("  {v:>w$.4}")),
                None => out.push_str(&format!("  {:>w$}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

pub const REPORT_CSV_HEADER: &str = "K,algorithm,mae,precision,recall,coverage,n_test,n_fallback";

/// Machine-readable reports; undefined precision or recall is an empty field.
pub fn write_reports_csv<W: Write>(reports: &[EvaluationReport], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in reports {
        writeln!(
            out,
            "{},{},{:.6},{},{},{:.6},{},{}",
            r.k,
            r.algorithm,
            r.mae,
            opt(r.precision),
            opt(r.recall),
            r.coverage,
            r.n_test,
            r.n_fallback
        )?;
    }
    Ok(())
}
