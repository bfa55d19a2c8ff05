//! Naive dense reference implementations. Everything here works on a plain
//! `Vec<Vec<Option<f64>>>` grid and never calls into the library's similarity
//! or prediction code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cfrec_core::{Catalog, DuplicatePolicy, ItemId, RatingMatrix, Scale, Triple, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Same degenerate-norm cutoff the library documents.
pub const ZERO_NORM_SQ: f64 = 1e-24;

pub type Grid = Vec<Vec<Option<f64>>>;

pub fn table1_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/table1.csv")
}

pub fn load_table1() -> RatingMatrix {
    let file = std::fs::File::open(table1_path()).unwrap();
    let triples = cfrec_core::io::read_ratings(std::io::BufReader::new(file)).unwrap();
    RatingMatrix::from_triples(triples, Scale::new(0.0, 5.0).unwrap(), DuplicatePolicy::Strict).unwrap()
}

pub fn grid_of(m: &RatingMatrix) -> Grid {
    let mut g = vec![vec![None; m.num_items()]; m.num_users()];
    for (u, i, r) in m.triples() {
        g[u.index()][i.index()] = Some(r);
    }
    g
}

pub fn transpose(g: &Grid) -> Grid {
    let cols = g.first().map_or(0, Vec::len);
    (0..cols).map(|j| g.iter().map(|row| row[j]).collect()).collect()
}

pub fn matrix_of(g: &Grid, scale: Scale) -> RatingMatrix {
    let users = Catalog::from_labels((0..g.len()).map(|u| format!("u{u}"))).unwrap();
    let items = Catalog::from_labels((0..g.first().map_or(0, Vec::len)).map(|i| format!("i{i}"))).unwrap();
    let mut entries = Vec::new();
    for (u, row) in g.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if let Some(v) = v {
                entries.push((UserId(u as u32), ItemId(i as u32), *v));
            }
        }
    }
    RatingMatrix::from_parts(users, items, scale, entries).unwrap()
}

/// Random sparse grid with half-point ratings on [0.5, 10]. Some rows are
/// made constant to exercise degenerate kernels.
pub fn random_grid(rng: &mut ChaCha8Rng, max_users: usize, max_items: usize) -> Grid {
    let users = rng.random_range(1..=max_users);
    let items = rng.random_range(1..=max_items);
    let density: f64 = rng.random_range(0.05..0.7);
    (0..users)
        .map(|_| {
            let constant = rng.random_bool(0.1).then(|| rng.random_range(1..=20) as f64 * 0.5);
            (0..items)
                .map(|_| {
                    rng.random_bool(density)
                        .then(|| constant.unwrap_or_else(|| rng.random_range(1..=20) as f64 * 0.5))
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn triples_of(g: &Grid) -> Vec<Triple> {
    let mut out = Vec::new();
    for (u, row) in g.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if let Some(v) = v {
                out.push(Triple::new(format!("u{u}"), format!("i{i}"), *v));
            }
        }
    }
    out
}

fn overlap(a: &[Option<f64>], b: &[Option<f64>]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x.is_some() && y.is_some()).count()
}

/// Eq-style cosine over dense rows with zeros filled in.
pub fn dense_cosine(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let a: Vec<f64> = a.iter().map(|v| v.unwrap_or(0.0)).collect();
    let b: Vec<f64> = b.iter().map(|v| v.unwrap_or(0.0)).collect();
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na <= ZERO_NORM_SQ || nb <= ZERO_NORM_SQ {
        return None;
    }
    Some(dot / (na.sqrt() * nb.sqrt()))
}

pub fn dense_pearson(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let dx: f64 = pairs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let dy: f64 = pairs.iter().map(|(_, y)| (y - my).powi(2)).sum();
    if dx <= ZERO_NORM_SQ || dy <= ZERO_NORM_SQ {
        return None;
    }
    Some(num / (dx.sqrt() * dy.sqrt()))
}

pub fn user_mean(row: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = row.iter().flatten().copied().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Adjusted cosine between item columns `i` and `j` of a user-major grid.
pub fn dense_adjcos(g: &Grid, i: usize, j: usize) -> Option<f64> {
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for row in g {
        if let (Some(x), Some(y)) = (row[i], row[j]) {
            let mu = user_mean(row).unwrap();
            num += (x - mu) * (y - mu);
            dx += (x - mu).powi(2);
            dy += (y - mu).powi(2);
        }
    }
    if dx <= ZERO_NORM_SQ || dy <= ZERO_NORM_SQ {
        return None;
    }
    Some(num / (dx.sqrt() * dy.sqrt()))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum NaiveKernel {
    Cosine,
    Pearson,
    AdjCos,
}

/// All defined pairs `(a, b) -> w` with `a < b`, brute force over the grid.
pub fn naive_similarity(
    g: &Grid,
    item_axis: bool,
    kernel: NaiveKernel,
    min_overlap: usize,
) -> BTreeMap<(usize, usize), f64> {
    let rows = if item_axis { transpose(g) } else { g.clone() };
    let mut out = BTreeMap::new();
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let shared = overlap(&rows[a], &rows[b]);
            if shared == 0 || shared < min_overlap {
                continue;
            }
            let w = match kernel {
                NaiveKernel::Cosine => dense_cosine(&rows[a], &rows[b]),
                NaiveKernel::Pearson => dense_pearson(&rows[a], &rows[b]),
                NaiveKernel::AdjCos => dense_adjcos(g, a, b),
            };
            if let Some(w) = w {
                out.insert((a, b), w.clamp(-1.0, 1.0));
            }
        }
    }
    out
}

pub fn weight(w: &BTreeMap<(usize, usize), f64>, a: usize, b: usize) -> Option<f64> {
    w.get(&(a.min(b), a.max(b))).copied()
}

/// Weight descending at single precision, then id ascending.
fn rank(x: &(usize, f64), y: &(usize, f64)) -> std::cmp::Ordering {
    (y.1 as f32).partial_cmp(&(x.1 as f32)).unwrap().then(x.0.cmp(&y.0))
}

/// Full sort of every defined neighbour, then truncation.
pub fn naive_neighbors(w: &BTreeMap<(usize, usize), f64>, n: usize, target: usize, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..n)
        .filter(|&b| b != target)
        .filter_map(|b| weight(w, target, b).map(|x| (b, x)))
        .collect();
    all.sort_by(rank);
    all.truncate(k);
    all
}

fn fallback_value(g: &Grid, a: usize) -> f64 {
    if let Some(mu) = user_mean(&g[a]) {
        return mu;
    }
    let all: Vec<f64> = g.iter().flatten().flatten().copied().collect();
    if all.is_empty() {
        5.0
    } else {
        all.iter().sum::<f64>() / all.len() as f64
    }
}

/// Direct mean-centred user-based prediction, `None` meaning "fallback used".
pub fn naive_user_based(g: &Grid, w: &BTreeMap<(usize, usize), f64>, a: usize, i: usize, k: usize) -> (f64, bool) {
    if let Some(r) = g[a][i] {
        return (r, false);
    }
    let neigh: Vec<(usize, f64)> = naive_neighbors(w, g.len(), a, k)
        .into_iter()
        .filter(|&(u, x)| g[u][i].is_some() && x > 0.0)
        .collect();
    if neigh.is_empty() {
        return (fallback_value(g, a).clamp(0.0, 10.0), true);
    }
    let num: f64 = neigh
        .iter()
        .map(|&(u, x)| (g[u][i].unwrap() - user_mean(&g[u]).unwrap()) * x)
        .sum();
    let den: f64 = neigh.iter().map(|&(_, x)| x).sum();
    ((user_mean(&g[a]).unwrap() + num / den).clamp(0.0, 10.0), false)
}

/// Direct item-based weighted average over the K items `a` rated that are
/// most similar to `i`.
pub fn naive_item_based(g: &Grid, w: &BTreeMap<(usize, usize), f64>, a: usize, i: usize, k: usize) -> (f64, bool) {
    if let Some(r) = g[a][i] {
        return (r, false);
    }
    let mut rated: Vec<(usize, f64)> = (0..g[a].len())
        .filter(|&j| j != i && g[a][j].is_some())
        .filter_map(|j| weight(w, i, j).map(|x| (j, x)))
        .collect();
    rated.sort_by(rank);
    rated.truncate(k);
    let num: f64 = rated.iter().map(|&(j, x)| g[a][j].unwrap() * x).sum();
    let den: f64 = rated.iter().map(|&(_, x)| x.abs()).sum();
    if den <= 0.0 {
        return (fallback_value(g, a).clamp(0.0, 10.0), true);
    }
    ((num / den).clamp(0.0, 10.0), false)
}
