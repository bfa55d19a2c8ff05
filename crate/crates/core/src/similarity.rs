//! User-user and item-item similarity.
//!
//! Kernel conventions:
//! - `Cosine` is the full-vector form: unrated positions count as zero in the
//!   dot product, norms run over each vector's whole support.
//! - `Pearson` uses co-rated positions only, with means over that subset.
//! - `AdjustedCosine` (items only) subtracts each co-rating user's mean over
//!   all of that user's ratings, then takes the cosine over co-raters.
//!
//! A pair whose similarity is undefined (zero norm, constant sub-vector, too
//! little overlap) is absent from the matrix. It is never stored as `0.0`.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Catalog, ItemId, RatingMatrix, RatingVector, UserId};
use crate::error::{Error, Result};

/// Squared norms at or below this are treated as zero.
pub const DEGENERATE_NORM_SQ: f64 = 1e-24;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    User,
    Item,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::User => "user",
            Axis::Item => "item",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Axis::User),
            "item" => Ok(Axis::Item),
            other => Err(Error::Config(format!("unknown axis `{other}` (expected user|item)"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kernel {
    #[serde(rename = "cosine")]
    Cosine,
    #[serde(rename = "pearson")]
    Pearson,
    #[serde(rename = "adjcos")]
    AdjustedCosine,
}

impl Kernel {
    pub fn default_min_overlap(self) -> usize {
        match self {
            Kernel::Cosine => 1,
            Kernel::Pearson | Kernel::AdjustedCosine => 2,
        }
    }

    pub fn supports(self, axis: Axis) -> bool {
        !(self == Kernel::AdjustedCosine && axis == Axis::User)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Cosine => "cosine",
            Kernel::Pearson => "pearson",
            Kernel::AdjustedCosine => "adjcos",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Kernel::Cosine),
            "pearson" => Ok(Kernel::Pearson),
            "adjcos" => Ok(Kernel::AdjustedCosine),
            other => Err(Error::Config(format!(
                "unknown kernel `{other}` (expected cosine|pearson|adjcos)"
            ))),
        }
    }
}

/// Two-pointer walk over the common support of two sorted sparse vectors.
#[derive(Clone)]
struct CoRated<'a> {
    a: &'a [(u32, f64)],
    b: &'a [(u32, f64)],
}

impl Iterator for CoRated<'_> {
    type Item = (u32, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while let (Some(&(ia, va)), Some(&(ib, vb))) = (self.a.first(), self.b.first()) {
            match ia.cmp(&ib) {
                Ordering::Less => self.a = &self.a[1..],
                Ordering::Greater => self.b = &self.b[1..],
                Ordering::Equal => {
                    self.a = &self.a[1..];
                    self.b = &self.b[1..];
                    return Some((ia, va, vb));
                }
            }
        }
        None
    }
}

fn co_rated<'a>(a: &'a [(u32, f64)], b: &'a [(u32, f64)]) -> CoRated<'a> {
    CoRated { a, b }
}

fn norm_sq(v: &[(u32, f64)]) -> f64 {
    v.iter().map(|&(_, x)| x * x).sum()
}

fn bounded(w: f64) -> f64 {
    w.clamp(-1.0, 1.0)
}

fn cosine_with_norms(a: &[(u32, f64)], b: &[(u32, f64)], na_sq: f64, nb_sq: f64) -> Option<f64> {
    if na_sq <= DEGENERATE_NORM_SQ || nb_sq <= DEGENERATE_NORM_SQ {
        return None;
    }
    let dot: f64 = co_rated(a, b).map(|(_, x, y)| x * y).sum();
    Some(bounded(dot / (na_sq.sqrt() * nb_sq.sqrt())))
}

fn pearson_entries(a: &[(u32, f64)], b: &[(u32, f64)]) -> Option<f64> {
    let pairs = co_rated(a, b);
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (_, x, y) in pairs.clone() {
        n += 1;
        sx += x;
        sy += y;
    }
    if n == 0 {
        return None;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (_, x, y) in pairs {
        let (ex, ey) = (x - mx, y - my);
        num += ex * ey;
        dx += ex * ex;
        dy += ey * ey;
    }
    if dx <= DEGENERATE_NORM_SQ || dy <= DEGENERATE_NORM_SQ {
        return None;
    }
    Some(bounded(num / (dx.sqrt() * dy.sqrt())))
}

/// `a` and `b` are item columns `(user, rating)`; `means` maps users to their
/// overall mean rating.
fn adjusted_cosine_entries(a: &[(u32, f64)], b: &[(u32, f64)], means: impl Fn(u32) -> f64) -> Option<f64> {
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (u, x, y) in co_rated(a, b) {
        let mu = means(u);
        let (ex, ey) = (x - mu, y - mu);
        num += ex * ey;
        dx += ex * ex;
        dy += ey * ey;
    }
    if dx <= DEGENERATE_NORM_SQ || dy <= DEGENERATE_NORM_SQ {
        return None;
    }
    Some(bounded(num / (dx.sqrt() * dy.sqrt())))
}

/// Full-vector cosine. `None` when either vector has zero norm.
pub fn cosine(a: &RatingVector, b: &RatingVector) -> Option<f64> {
    let (a, b) = (a.entries(), b.entries());
    cosine_with_norms(a, b, norm_sq(a), norm_sq(b))
}

/// Pearson correlation over co-rated indices. `None` if there are none or
/// either side is constant on them.
pub fn pearson(a: &RatingVector, b: &RatingVector) -> Option<f64> {
    pearson_entries(a.entries(), b.entries())
}

/// Number of shared indices.
pub fn overlap(a: &RatingVector, b: &RatingVector) -> usize {
    co_rated(a.entries(), b.entries()).count()
}

/// Adjusted cosine between two items of `m`, `None` below `min_overlap`
/// co-raters or on zero adjusted norm.
pub fn adjusted_cosine(m: &RatingMatrix, i: ItemId, j: ItemId, min_overlap: usize) -> Result<Option<f64>> {
    m.check_item(i)?;
    m.check_item(j)?;
    let (a, b) = (m.item_entries(i), m.item_entries(j));
    if co_rated(a, b).count() < min_overlap.max(1) {
        return Ok(None);
    }
    Ok(adjusted_cosine_entries(a, b, |u| m.cached_user_mean(u).unwrap_or(0.0)))
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub weight: f64,
}

/// Most similar entities to `target`, weight descending, ties by ascending id.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborSet {
    pub target: u32,
    pub members: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Neighbor> {
        self.members.iter()
    }
}

/// Weight descending, then id ascending. Weights are compared at single
/// precision so that values differing only by rounding noise tie.
pub(crate) fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    (b.1 as f32)
        .partial_cmp(&(a.1 as f32))
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Symmetric sparse weight matrix over one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    axis: Axis,
    kernel: Kernel,
    min_overlap: usize,
    /// Neighbours of each id, ascending by id.
    rows: Vec<Vec<(u32, f64)>>,
    /// Same neighbours in rank order.
    ranked: Vec<Vec<(u32, f64)>>,
}

impl SimilarityMatrix {
    /// Computes every defined pairwise weight. Candidate pairs come from the
    /// inverted index, so pairs with no co-rated element are never visited.
    pub fn build(m: &RatingMatrix, axis: Axis, kernel: Kernel, min_overlap: usize) -> Result<Self> {
        if !kernel.supports(axis) {
            return Err(Error::Config(format!(
                "kernel {kernel} is only defined on the item axis"
            )));
        }
        let n = match axis {
            Axis::User => m.num_users(),
            Axis::Item => m.num_items(),
        };
        let primary = |x: u32| match axis {
            Axis::User => m.user_entries(UserId(x)),
            Axis::Item => m.item_entries(ItemId(x)),
        };
        let inverted = |y: u32| match axis {
            Axis::User => m.item_entries(ItemId(y)),
            Axis::Item => m.user_entries(UserId(y)),
        };
        let norms: Vec<f64> = match kernel {
            Kernel::Cosine => (0..n as u32).map(|x| norm_sq(primary(x))).collect(),
            _ => Vec::new(),
        };
        let threshold = min_overlap.max(1);

        let upper: Vec<Vec<(u32, f64)>> = (0..n as u32)
            .into_par_iter()
            .map_init(
                || (vec![0u32; n], Vec::<u32>::new()),
                |(counts, touched), a| {
                    for &(y, _) in primary(a) {
                        for &(b, _) in inverted(y) {
                            if b > a {
                                if counts[b as usize] == 0 {
                                    touched.push(b);
                                }
                                counts[b as usize] += 1;
                            }
                        }
                    }
                    touched.sort_unstable();
                    let mut out = Vec::new();
                    for &b in touched.iter() {
                        let shared = counts[b as usize] as usize;
                        counts[b as usize] = 0;
                        if shared < threshold {
                            continue;
                        }
                        let (x, y) = (primary(a), primary(b));
                        let w = match kernel {
                            Kernel::Cosine => cosine_with_norms(x, y, norms[a as usize], norms[b as usize]),
                            Kernel::Pearson => pearson_entries(x, y),
                            Kernel::AdjustedCosine => {
                                adjusted_cosine_entries(x, y, |u| m.cached_user_mean(u).unwrap_or(0.0))
                            }
                        };
                        if let Some(w) = w {
                            out.push((b, w));
                        }
                    }
                    touched.clear();
                    out
                },
            )
            .collect();

        let pairs = upper
            .into_iter()
            .enumerate()
            .flat_map(|(a, row)| row.into_iter().map(move |(b, w)| (a as u32, b, w)));
        Ok(Self::assemble(axis, kernel, min_overlap, n, pairs))
    }

    /// Builds a matrix from explicit unordered pairs, mirroring each one.
    /// Later duplicates of a pair overwrite earlier ones; self pairs are dropped.
    pub fn from_pairs<I>(axis: Axis, kernel: Kernel, min_overlap: usize, size: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut seen = std::collections::HashMap::new();
        for (a, b, w) in pairs {
            if a as usize >= size || b as usize >= size {
                return Err(Error::Config(format!("pair ({a}, {b}) outside matrix of size {size}")));
            }
            if !w.is_finite() {
                return Err(Error::Config(format!("non-finite weight for pair ({a}, {b})")));
            }
            if a != b {
                seen.insert((a.min(b), a.max(b)), w);
            }
        }
        let mut pairs: Vec<_> = seen.into_iter().map(|((a, b), w)| (a, b, w)).collect();
        pairs.sort_by_key(|&(a, b, _)| (a, b));
        Ok(Self::assemble(axis, kernel, min_overlap, size, pairs))
    }

    fn assemble<I>(axis: Axis, kernel: Kernel, min_overlap: usize, n: usize, pairs: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut rows = vec![Vec::new(); n];
        for (a, b, w) in pairs {
            rows[a as usize].push((b, w));
            rows[b as usize].push((a, w));
        }
        for row in rows.iter_mut() {
            row.sort_by_key(|&(id, _)| id);
        }
        let ranked = rows
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.sort_by(rank_order);
                r
            })
            .collect();
        SimilarityMatrix {
            axis,
            kernel,
            min_overlap,
            rows,
            ranked,
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn min_overlap(&self) -> usize {
        self.min_overlap
    }

    /// Number of entities on the axis.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn get(&self, a: u32, b: u32) -> Option<f64> {
        self.rows.get(a as usize).and_then(|row| crate::data::lookup(row, b))
    }

    /// All defined neighbours of `a`, ascending by id.
    pub fn row(&self, a: u32) -> &[(u32, f64)] {
        self.rows.get(a as usize).map_or(&[], Vec::as_slice)
    }

    /// All defined neighbours of `a` in rank order.
    pub fn ranked_row(&self, a: u32) -> &[(u32, f64)] {
        self.ranked.get(a as usize).map_or(&[], Vec::as_slice)
    }

    /// Unordered pairs `(a, b, w)` with `a < b`, sorted.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(a, row)| {
            row.iter()
                .filter(move |&&(b, _)| b > a as u32)
                .map(move |&(b, w)| (a as u32, b, w))
        })
    }

    pub fn k_nearest(&self, target: u32, k: usize) -> Result<NeighborSet> {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if target as usize >= self.size() {
            return Err(match self.axis {
                Axis::User => Error::UnknownUser(UserId(target).to_string()),
                Axis::Item => Error::UnknownItem(ItemId(target).to_string()),
            });
        }
        let members = self.ranked[target as usize]
            .iter()
            .take(k)
            .map(|&(id, weight)| Neighbor { id, weight })
            .collect();
        Ok(NeighborSet { target, members })
    }

    /// Copy with every weight multiplied by `c`. The result is a plain weight
    /// matrix and may leave `[-1, 1]`.
    pub fn scaled(&self, c: f64) -> Self {
        let pairs: Vec<_> = self.pairs().map(|(a, b, w)| (a, b, w * c)).collect();
        Self::assemble(self.axis, self.kernel, self.min_overlap, self.size(), pairs)
    }

    /// Writes `axis,kernel,id_a,id_b,weight` lines (header first), `a < b`,
    /// sorted by handle; ids are printed as labels from `labels`.
    pub fn write_triples<W: Write>(&self, labels: &Catalog, mut out: W) -> Result<()> {
        writeln!(out, "axis,kernel,id_a,id_b,weight")?;
        for (a, b, w) in self.pairs() {
            self.write_line(labels, &mut out, a, b, w)?;
        }
        Ok(())
    }

    /// Same format restricted to one target's neighbour set.
    pub fn write_neighbors<W: Write>(&self, labels: &Catalog, set: &NeighborSet, mut out: W) -> Result<()> {
        writeln!(out, "axis,kernel,id_a,id_b,weight")?;
        for n in &set.members {
            self.write_line(labels, &mut out, set.target, n.id, n.weight)?;
        }
        Ok(())
    }

    fn write_line<W: Write>(&self, labels: &Catalog, out: &mut W, a: u32, b: u32, w: f64) -> Result<()> {
        writeln!(
            out,
            "{},{},{},{},{}",
            self.axis,
            self.kernel,
            labels.label(a).unwrap_or("?"),
            labels.label(b).unwrap_or("?"),
            w
        )?;
        Ok(())
    }
}

pub fn build_similarity(m: &RatingMatrix, axis: Axis, kernel: Kernel, min_overlap: usize) -> Result<SimilarityMatrix> {
    SimilarityMatrix::build(m, axis, kernel, min_overlap)
}
