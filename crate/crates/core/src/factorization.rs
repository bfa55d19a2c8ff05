//! Latent-factor model trained by gradient descent on observed ratings.
//!
//! The objective is
//! `L = sum_{(u,i) observed} (r_ui - b - p_u . q_i)^2 + l2 * (sum |p_u|^2 + sum |q_i|^2)`
//! where `b` is the global mean when the bias term is on and zero otherwise.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingMatrix, Scale, UserId};
use crate::error::{Error, Result};
use crate::prediction::{top_n, Basis, Fallback, Prediction, RecommendationList};

/// Loss growth (relative to the initial loss) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// One update per observed rating, visited in a seeded shuffle each epoch.
    #[default]
    Stochastic,
    /// One update per epoch along the full gradient.
    FullBatch,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Stochastic),
            "full-batch" => Ok(Optimizer::FullBatch),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd|full-batch)"
            ))),
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Stochastic => "sgd",
            Optimizer::FullBatch => "full-batch",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_stddev: f64,
    pub use_global_mean_bias: bool,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 8,
            learning_rate: 0.005,
            l2: 0.02,
            epochs: 200,
            seed: 42,
            init_stddev: 0.1,
            use_global_mean_bias: true,
            optimizer: Optimizer::Stochastic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("latent dimension k must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.init_stddev >= 0.0 && self.init_stddev.is_finite()) {
            return Err(Error::Config(format!(
                "init stddev must be >= 0, got {}",
                self.init_stddev
            )));
        }
        Ok(())
    }
}

/// Serialized as `{k, scale, global_mean, bias, user_labels, item_labels,
/// user_factors, item_factors}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub k: usize,
    pub scale: Scale,
    pub global_mean: f64,
    #[serde(default = "default_bias")]
    pub bias: bool,
    pub user_labels: Vec<String>,
    pub item_labels: Vec<String>,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
}

fn default_bias() -> bool {
    true
}

impl FactorModel {
    pub fn zeros(m: &RatingMatrix, k: usize, bias: bool) -> Self {
        FactorModel {
            k,
            scale: m.scale(),
            global_mean: m.global_mean().unwrap_or(m.scale().midpoint()),
            bias,
            user_labels: m.users().labels().to_vec(),
            item_labels: m.items().labels().to_vec(),
            user_factors: vec![vec![0.0; k]; m.num_users()],
            item_factors: vec![vec![0.0; k]; m.num_items()],
        }
    }

    fn gaussian(m: &RatingMatrix, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut model = Self::zeros(m, cfg.k, cfg.use_global_mean_bias);
        let normal = Normal::new(0.0, cfg.init_stddev).map_err(|e| Error::Config(e.to_string()))?;
        for row in model.user_factors.iter_mut().chain(model.item_factors.iter_mut()) {
            for x in row.iter_mut() {
                *x = normal.sample(rng);
            }
        }
        Ok(model)
    }

    pub fn num_users(&self) -> usize {
        self.user_factors.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_factors.len()
    }

    fn offset(&self) -> f64 {
        if self.bias {
            self.global_mean
        } else {
            0.0
        }
    }

    /// Unclamped score.
    pub fn score(&self, u: UserId, i: ItemId) -> f64 {
        dot(&self.user_factors[u.index()], &self.item_factors[i.index()]) + self.offset()
    }

    pub fn user_handle(&self, label: &str) -> Result<UserId> {
        self.user_labels
            .iter()
            .position(|l| l == label)
            .map(|p| UserId(p as u32))
            .ok_or_else(|| Error::UnknownUser(label.to_string()))
    }

    pub fn item_handle(&self, label: &str) -> Result<ItemId> {
        self.item_labels
            .iter()
            .position(|l| l == label)
            .map(|p| ItemId(p as u32))
            .ok_or_else(|| Error::UnknownItem(label.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let ok = self.k >= 1
            && self.user_labels.len() == self.user_factors.len()
            && self.item_labels.len() == self.item_factors.len()
            && self
                .user_factors
                .iter()
                .chain(&self.item_factors)
                .all(|row| row.len() == self.k && row.iter().all(|x| x.is_finite()));
        if ok {
            Scale::new(self.scale.min, self.scale.max)?;
            Ok(())
        } else {
            Err(Error::Config("malformed factor model".into()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .flatten()
            .all(|x| x.is_finite())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let model: FactorModel = serde_json::from_reader(input)?;
        model.validate()?;
        Ok(model)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub user: Vec<Vec<f64>>,
    pub item: Vec<Vec<f64>>,
}

fn check_shape(model: &FactorModel, m: &RatingMatrix) -> Result<()> {
    if model.num_users() != m.num_users() || model.num_items() != m.num_items() {
        return Err(Error::Config(format!(
            "model is {}x{}, ratings are {}x{}",
            model.num_users(),
            model.num_items(),
            m.num_users(),
            m.num_items()
        )));
    }
    Ok(())
}

/// Objective value over observed entries.
pub fn loss(model: &FactorModel, m: &RatingMatrix, l2: f64) -> f64 {
    let data: f64 = m
        .triples()
        .map(|(u, i, r)| {
            let e = r - model.score(u, i);
            e * e
        })
        .sum();
    let reg: f64 = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .map(|row| dot(row, row))
        .sum();
    data + l2 * reg
}

/// Objective and its analytic gradient:
/// `dL/dp_u = sum_i -2 e_ui q_i + 2 l2 p_u`, symmetrically for `q_i`.
pub fn loss_and_gradient(model: &FactorModel, m: &RatingMatrix, l2: f64) -> Result<(f64, Gradients)> {
    check_shape(model, m)?;
    let mut user: Vec<Vec<f64>> = model
        .user_factors
        .iter()
        .map(|p| p.iter().map(|x| 2.0 * l2 * x).collect())
        .collect();
    let mut item: Vec<Vec<f64>> = model
        .item_factors
        .iter()
        .map(|q| q.iter().map(|x| 2.0 * l2 * x).collect())
        .collect();
    for (u, i, r) in m.triples() {
        let e = r - model.score(u, i);
        let (p, q) = (&model.user_factors[u.index()], &model.item_factors[i.index()]);
        for f in 0..model.k {
            user[u.index()][f] -= 2.0 * e * q[f];
            item[i.index()][f] -= 2.0 * e * p[f];
        }
    }
    Ok((loss(model, m, l2), Gradients { user, item }))
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: FactorModel,
    /// Objective after each epoch.
    pub loss_trace: Vec<f64>,
    pub initial_loss: f64,
}

impl TrainOutput {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(self.initial_loss)
    }
}

pub fn train(m: &RatingMatrix, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if m.num_entries() == 0 {
        return Err(Error::Empty("cannot factorize an empty rating matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = FactorModel::gaussian(m, cfg, &mut rng)?;
    let initial_loss = loss(&model, m, cfg.l2);
    let limit = DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE);

    let mut order: Vec<(UserId, ItemId, f64)> = m.triples().collect();
    // Per-visit share of the regularizer, so one epoch of SGD sums to the full gradient.
    let visits_u: Vec<f64> = (0..m.num_users())
        .map(|u| m.user_entries(UserId(u as u32)).len() as f64)
        .collect();
    let visits_i: Vec<f64> = (0..m.num_items())
        .map(|i| m.item_entries(ItemId(i as u32)).len() as f64)
        .collect();

    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        match cfg.optimizer {
            Optimizer::Stochastic => {
                order.shuffle(&mut rng);
                for &(u, i, r) in &order {
                    let e = r - model.score(u, i);
                    let (ru, ri) = (cfg.l2 / visits_u[u.index()], cfg.l2 / visits_i[i.index()]);
                    for f in 0..cfg.k {
                        let p = model.user_factors[u.index()][f];
                        let q = model.item_factors[i.index()][f];
                        model.user_factors[u.index()][f] -= cfg.learning_rate * (-2.0 * e * q + 2.0 * ru * p);
                        model.item_factors[i.index()][f] -= cfg.learning_rate * (-2.0 * e * p + 2.0 * ri * q);
                    }
                }
            }
            Optimizer::FullBatch => {
                let (_, grad) = loss_and_gradient(&model, m, cfg.l2)?;
                for (row, g) in model
                    .user_factors
                    .iter_mut()
                    .chain(model.item_factors.iter_mut())
                    .zip(grad.user.iter().chain(&grad.item))
                {
                    for (x, g) in row.iter_mut().zip(g) {
                        *x -= cfg.learning_rate * g;
                    }
                }
            }
        }
        let l = loss(&model, m, cfg.l2);
        if !l.is_finite() || l > limit || !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: cfg.learning_rate,
            });
        }
        loss_trace.push(l);
    }
    Ok(TrainOutput {
        model,
        loss_trace,
        initial_loss,
    })
}

/// Root mean squared error of unclamped scores over observed entries.
pub fn rmse(model: &FactorModel, m: &RatingMatrix) -> f64 {
    if m.num_entries() == 0 {
        return 0.0;
    }
    let sse: f64 = m
        .triples()
        .map(|(u, i, r)| {
            let e = r - model.score(u, i);
            e * e
        })
        .sum();
    (sse / m.num_entries() as f64).sqrt()
}

pub fn predict_mf(model: &FactorModel, u: UserId, i: ItemId) -> Result<Prediction> {
    if u.index() >= model.num_users() {
        return Err(Error::UnknownUser(u.to_string()));
    }
    if i.index() >= model.num_items() {
        return Err(Error::UnknownItem(i.to_string()));
    }
    let raw = model.score(u, i);
    Ok(Prediction {
        user: u,
        item: i,
        value: model.scale.clamp(raw),
        raw_value: raw,
        basis: Basis::Factorization,
        neighbors_used: 0,
        fallback: Fallback::None,
        already_rated: false,
    })
}

/// Scores every item `a` has not rated in `m`.
pub fn recommend_top_n_mf(model: &FactorModel, m: &RatingMatrix, a: UserId, n: usize) -> Result<RecommendationList> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    check_shape(model, m)?;
    m.check_user(a)?;
    let scored = (0..m.num_items() as u32)
        .map(ItemId)
        .filter(|&i| m.rating(a, i).is_none())
        .map(|i| predict_mf(model, a, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecommendationList {
        user: a,
        entries: top_n(scored, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::table1;
    use crate::data::{Catalog, DuplicatePolicy, Triple};

    fn random_model(m: &RatingMatrix, k: usize, seed: u64, bias: bool) -> FactorModel {
        let cfg = TrainConfig {
            k,
            init_stddev: 0.5,
            use_global_mean_bias: bias,
            seed,
            ..TrainConfig::default()
        };
        FactorModel::gaussian(m, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                k: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                l2: -1.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
            assert!(train(&table1(), &bad).is_err());
        }
    }

    #[test]
    fn zero_model_loss_and_gradient() {
        let m = table1();
        let model = FactorModel::zeros(&m, 3, false);
        let (l, g) = loss_and_gradient(&model, &m, 0.0).unwrap();
        let expected: f64 = m.triples().map(|(_, _, r)| r * r).sum();
        assert_eq!(l, expected);
        assert!(g.user.iter().chain(&g.item).flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn pure_regularizer_gradient() {
        let users = Catalog::from_labels(["a", "b"]).unwrap();
        let items = Catalog::from_labels(["x"]).unwrap();
        let m = RatingMatrix::from_parts(users, items, Scale::default(), Vec::new()).unwrap();
        let model = random_model(&m, 4, 9, false);
        let (_, g) = loss_and_gradient(&model, &m, 0.3).unwrap();
        for (row, grow) in model
            .user_factors
            .iter()
            .chain(&model.item_factors)
            .zip(g.user.iter().chain(&g.item))
        {
            for (x, gx) in row.iter().zip(grow) {
                assert_eq!(*gx, 2.0 * 0.3 * x);
            }
        }
    }

    #[test]
    fn zero_model_predicts_global_mean() {
        let m = table1();
        let model = FactorModel::zeros(&m, 4, true);
        let mean = m.global_mean().unwrap();
        for u in 0..4 {
            for i in 0..5 {
                assert_eq!(predict_mf(&model, UserId(u), ItemId(i)).unwrap().value, mean);
            }
        }
        assert!(predict_mf(&model, UserId(4), ItemId(0)).is_err());
        assert!(predict_mf(&model, UserId(0), ItemId(5)).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let m = table1();
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let a = train(&m, &cfg).unwrap();
        let b = train(&m, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_trace, b.loss_trace);
        let c = train(&m, &TrainConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn table1_full_rank_fit() {
        let m = table1();
        let cfg = TrainConfig {
            k: 4,
            learning_rate: 0.01,
            l2: 0.0,
            epochs: 2000,
            ..TrainConfig::default()
        };
        let out = train(&m, &cfg).unwrap();
        let err = rmse(&out.model, &m);
        assert!(err < 1e-2, "rmse {err}");
        for (u, i, r) in m.triples() {
            assert!((predict_mf(&out.model, u, i).unwrap().value - r).abs() < 0.05);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let m = table1();
        let cfg = TrainConfig {
            learning_rate: 5.0,
            use_global_mean_bias: false,
            epochs: 50,
            ..TrainConfig::default()
        };
        match train(&m, &cfg) {
            Err(Error::Diverged { learning_rate, .. }) => assert_eq!(learning_rate, 5.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = RatingMatrix::from_triples(Vec::<Triple>::new(), Scale::default(), DuplicatePolicy::Strict).unwrap();
        assert!(matches!(train(&m, &TrainConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = table1();
        let model = random_model(&m, 2, 5, true);
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let back = FactorModel::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in [
            "k",
            "scale",
            "global_mean",
            "user_labels",
            "item_labels",
            "user_factors",
            "item_factors",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(FactorModel::read_json(r#"{"k":2,"scale":{"min":0,"max":5},"global_mean":1,"user_labels":["a"],"item_labels":[],"user_factors":[[1]],"item_factors":[]}"#.as_bytes()).is_err());
    }

    #[test]
    fn unobserved_cells_do_not_matter() {
        // Same observed cells, different catalogs-only difference: adding an
        // unobserved user/item leaves the data term and observed gradients alone.
        let m = table1();
        let model = random_model(&m, 3, 11, true);
        let (l, g) = loss_and_gradient(&model, &m, 0.0).unwrap();

        let mut users = m.users().clone();
        users.intern("ghost");
        let bigger = RatingMatrix::from_parts(users, m.items().clone(), m.scale(), m.triples().collect()).unwrap();
        let mut model2 = model.clone();
        model2.user_labels.push("ghost".into());
        model2.user_factors.push(vec![100.0, -50.0, 7.0]);
        let (l2, g2) = loss_and_gradient(&model2, &bigger, 0.0).unwrap();
        assert_eq!(l, l2);
        assert_eq!(g.item, g2.item);
        assert_eq!(g.user[..], g2.user[..4]);
        assert!(g2.user[4].iter().all(|&x| x == 0.0));
    }
}
