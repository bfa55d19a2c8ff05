//! Rating prediction from neighbourhoods and top-N lists.
//!
//! User-based prediction is the mean-centred weighted average
//! `p = mean(a) + sum((r_ui - mean(u)) * w_au) / sum(w_au)` over neighbours
//! that rated `i` with positive weight. Item-based prediction is
//! `p = sum(r_aj * w_ij) / sum(|w_ij|)` over the items `a` rated that are most
//! similar to `i`; negative weights are kept there.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::similarity::{rank_order, Axis, SimilarityMatrix};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    UserBased,
    ItemBased,
    Factorization,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::UserBased => "user_based",
            Basis::ItemBased => "item_based",
            Basis::Factorization => "factorization",
        })
    }
}

/// Where a prediction came from when no neighbour could contribute.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    UserMean,
    GlobalMean,
    ScaleMidpoint,
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::None => "none",
            Fallback::UserMean => "user_mean",
            Fallback::GlobalMean => "global_mean",
            Fallback::ScaleMidpoint => "scale_midpoint",
        })
    }
}

/// How user-based neighbours are chosen. Item-based prediction always ranks
/// the items the target user has rated.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborPool {
    /// Take the K nearest users overall, then keep those who rated the item.
    #[default]
    Global,
    /// Take the K nearest among the item's raters.
    Raters,
}

impl fmt::Display for NeighborPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborPool::Global => "global",
            NeighborPool::Raters => "raters",
        })
    }
}

impl FromStr for NeighborPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(NeighborPool::Global),
            "raters" => Ok(NeighborPool::Raters),
            other => Err(Error::Config(format!(
                "unknown neighbor pool `{other}` (expected global|raters)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub user: UserId,
    pub item: ItemId,
    /// Clamped to the rating scale.
    pub value: f64,
    /// Value before clamping.
    pub raw_value: f64,
    pub basis: Basis,
    pub neighbors_used: usize,
    pub fallback: Fallback,
    /// The user already rated the item; `value` is that rating.
    pub already_rated: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Recommend,
    DoNotRecommend,
    AlreadyRated,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Recommend => "recommend",
            Decision::DoNotRecommend => "do_not_recommend",
            Decision::AlreadyRated => "already_rated",
        })
    }
}

/// Recommend strictly above the threshold, never for items already rated.
pub fn decide(p: &Prediction, already_rated: bool, threshold: f64) -> Decision {
    if already_rated {
        Decision::AlreadyRated
    } else if p.value > threshold {
        Decision::Recommend
    } else {
        Decision::DoNotRecommend
    }
}

/// Top-N items for one user, best first, ties by ascending item id.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationList {
    pub user: UserId,
    pub entries: Vec<Prediction>,
}

impl RecommendationList {
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|p| p.item)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn finish(m: &RatingMatrix, user: UserId, item: ItemId, raw: f64, basis: Basis, used: usize) -> Prediction {
    Prediction {
        user,
        item,
        value: m.scale().clamp(raw),
        raw_value: raw,
        basis,
        neighbors_used: used,
        fallback: Fallback::None,
        already_rated: false,
    }
}

pub(crate) fn already_rated(user: UserId, item: ItemId, rating: f64, basis: Basis) -> Prediction {
    Prediction {
        user,
        item,
        value: rating,
        raw_value: rating,
        basis,
        neighbors_used: 0,
        fallback: Fallback::None,
        already_rated: true,
    }
}

/// User mean, then global mean, then scale midpoint.
pub(crate) fn fallback(m: &RatingMatrix, user: UserId, item: ItemId, basis: Basis) -> Prediction {
    let (raw, fallback) = match (m.cached_user_mean(user.0), m.global_mean()) {
        (Some(mean), _) => (mean, Fallback::UserMean),
        (None, Some(global)) => (global, Fallback::GlobalMean),
        (None, None) => (m.scale().midpoint(), Fallback::ScaleMidpoint),
    };
    Prediction {
        user,
        item,
        value: m.scale().clamp(raw),
        raw_value: raw,
        basis,
        neighbors_used: 0,
        fallback,
        already_rated: false,
    }
}

fn check_axis(m: &RatingMatrix, s: &SimilarityMatrix, axis: Axis) -> Result<()> {
    if s.axis() != axis {
        return Err(Error::Config(format!(
            "expected a {axis}-axis similarity matrix, got {}",
            s.axis()
        )));
    }
    let expected = match axis {
        Axis::User => m.num_users(),
        Axis::Item => m.num_items(),
    };
    if s.size() != expected {
        return Err(Error::Config(format!(
            "similarity matrix covers {} entities, rating matrix has {expected}",
            s.size()
        )));
    }
    Ok(())
}

/// Neighbours of `a` that rated `i` and carry positive weight, with their
/// rating of `i`.
fn user_contributors(
    m: &RatingMatrix,
    s: &SimilarityMatrix,
    a: UserId,
    i: ItemId,
    k: usize,
    pool: NeighborPool,
) -> Result<Vec<(u32, f64, f64)>> {
    let with_rating = |&(u, w): &(u32, f64)| m.rating(UserId(u), i).map(|r| (u, w, r));
    let chosen: Vec<(u32, f64, f64)> = match pool {
        NeighborPool::Global => s
            .k_nearest(a.0, k)?
            .members
            .iter()
            .filter_map(|n| with_rating(&(n.id, n.weight)))
            .collect(),
        NeighborPool::Raters => {
            if k == 0 {
                return Err(Error::Config("K must be at least 1".into()));
            }
            s.ranked_row(a.0).iter().filter_map(with_rating).take(k).collect()
        }
    };
    Ok(chosen.into_iter().filter(|&(_, w, _)| w > 0.0).collect())
}

/// Weights are divided by this before use: the ratio is unchanged, and a
/// lone neighbour then carries weight exactly 1.
fn max_abs_weight(contributors: &[(u32, f64, f64)]) -> f64 {
    contributors.iter().map(|c| c.1.abs()).fold(0.0, f64::max)
}

pub fn predict_user_based(
    m: &RatingMatrix,
    s: &SimilarityMatrix,
    a: UserId,
    i: ItemId,
    k: usize,
    pool: NeighborPool,
) -> Result<Prediction> {
    check_axis(m, s, Axis::User)?;
    m.check_user(a)?;
    m.check_item(i)?;
    if let Some(r) = m.rating(a, i) {
        return Ok(already_rated(a, i, r, Basis::UserBased));
    }
    let contributors = user_contributors(m, s, a, i, k, pool)?;
    if contributors.is_empty() {
        return Ok(fallback(m, a, i, Basis::UserBased));
    }
    let top = max_abs_weight(&contributors);
    let (mut num, mut den) = (0.0, 0.0);
    for &(u, w, r) in &contributors {
        let w = w / top;
        let mean_u = m.cached_user_mean(u).unwrap_or(r);
        num += (r - mean_u) * w;
        den += w;
    }
    // A user with no ratings can still have neighbours in a blended matrix.
    let base = m
        .cached_user_mean(a.0)
        .or(m.global_mean())
        .unwrap_or(m.scale().midpoint());
    Ok(finish(m, a, i, base + num / den, Basis::UserBased, contributors.len()))
}

/// The K items rated by `a` that are most similar to `i`.
fn item_contributors(
    m: &RatingMatrix,
    s: &SimilarityMatrix,
    a: UserId,
    i: ItemId,
    k: usize,
) -> Result<Vec<(u32, f64, f64)>> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut rated: Vec<(u32, f64, f64)> = m
        .user_entries(a)
        .iter()
        .filter(|&&(j, _)| j != i.0)
        .filter_map(|&(j, r)| s.get(i.0, j).map(|w| (j, w, r)))
        .collect();
    rated.sort_by(|x, y| rank_order(&(x.0, x.1), &(y.0, y.1)));
    rated.truncate(k);
    Ok(rated)
}

pub fn predict_item_based(
    m: &RatingMatrix,
    s: &SimilarityMatrix,
    a: UserId,
    i: ItemId,
    k: usize,
) -> Result<Prediction> {
    check_axis(m, s, Axis::Item)?;
    m.check_user(a)?;
    m.check_item(i)?;
    if let Some(r) = m.rating(a, i) {
        return Ok(already_rated(a, i, r, Basis::ItemBased));
    }
    let contributors = item_contributors(m, s, a, i, k)?;
    let top = max_abs_weight(&contributors);
    if top <= 0.0 {
        return Ok(fallback(m, a, i, Basis::ItemBased));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(_, w, r) in &contributors {
        let w = w / top;
        num += r * w;
        den += w.abs();
    }
    Ok(finish(m, a, i, num / den, Basis::ItemBased, contributors.len()))
}

/// Dispatches on the similarity matrix's axis.
pub fn predict(
    m: &RatingMatrix,
    s: &SimilarityMatrix,
    a: UserId,
    i: ItemId,
    k: usize,
    pool: NeighborPool,
) -> Result<Prediction> {
    match s.axis() {
        Axis::User => predict_user_based(m, s, a, i, k, pool),
        Axis::Item => predict_item_based(m, s, a, i, k),
    }
}

/// Candidates are items rated by `a`'s K neighbours (user axis) or the K
/// nearest items of each item `a` rated (item axis), minus what `a` rated.
/// Candidates that only receive a fallback prediction are dropped.
pub fn recommend_top_n(
    m: &RatingMatrix,
    s: &SimilarityMatrix,
    a: UserId,
    k: usize,
    n: usize,
    pool: NeighborPool,
) -> Result<RecommendationList> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    check_axis(m, s, s.axis())?;
    m.check_user(a)?;
    let mut candidates = BTreeSet::new();
    match s.axis() {
        Axis::User => {
            for nb in s.k_nearest(a.0, k)?.iter() {
                candidates.extend(m.user_entries(UserId(nb.id)).iter().map(|&(i, _)| i));
            }
        }
        Axis::Item => {
            for &(j, _) in m.user_entries(a) {
                candidates.extend(s.k_nearest(j, k)?.iter().map(|nb| nb.id));
            }
        }
    }
    let mut scored = Vec::new();
    for i in candidates {
        let i = ItemId(i);
        if m.rating(a, i).is_some() {
            continue;
        }
        let p = predict(m, s, a, i, k, pool)?;
        if p.fallback == Fallback::None {
            scored.push(p);
        }
    }
    Ok(RecommendationList {
        user: a,
        entries: top_n(scored, n),
    })
}

/// Values are compared on a 1e-9 grid, so predictions equal up to rounding
/// noise tie and fall back to ascending item id.
pub(crate) fn top_n(mut scored: Vec<Prediction>, n: usize) -> Vec<Prediction> {
    let key = |p: &Prediction| (p.value * 1e9).round();
    scored.sort_by(|x, y| {
        key(y)
            .partial_cmp(&key(x))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.item.cmp(&y.item))
    });
    scored.truncate(n);
    scored
}
