//! Seeded synthetic rating data with latent structure.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Scale, Triple};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    /// Expected fraction of observed cells.
    pub density: f64,
    pub latent_dim: usize,
    pub noise: f64,
    pub seed: u64,
    pub scale: Scale,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 500,
            items: 200,
            density: 0.05,
            latent_dim: 4,
            noise: 0.6,
            seed: 42,
            scale: Scale::default(),
        }
    }
}

/// Ratings are `6 + b_u + b_i + 1.5 * p_u.q_i / sqrt(d) + noise`, rounded to
/// half points and clamped to the scale. Each user rates at least 3 items,
/// sampled uniformly without replacement. Output is user-major with items
/// ascending.
pub fn generate(cfg: &SyntheticConfig) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("noise stddev");
    let d = cfg.latent_dim.max(1);

    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| unit.sample(rng)).collect() };
    let user_factors: Vec<Vec<f64>> = (0..cfg.users).map(|_| draw(d, &mut rng)).collect();
    let item_factors: Vec<Vec<f64>> = (0..cfg.items).map(|_| draw(d, &mut rng)).collect();
    let user_bias = draw(cfg.users, &mut rng);
    let item_bias: Vec<f64> = draw(cfg.items, &mut rng).into_iter().map(|b| 0.8 * b).collect();

    let expected = cfg.density * cfg.items as f64;
    let mut triples = Vec::new();
    for u in 0..cfg.users {
        let jitter: f64 = rng.random_range(0.5..1.5);
        let count = ((expected * jitter).round() as usize).clamp(3.min(cfg.items), cfg.items);
        let mut chosen: Vec<usize> = sample(&mut rng, cfg.items, count).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let affinity: f64 = user_factors[u].iter().zip(&item_factors[i]).map(|(a, b)| a * b).sum();
            let raw = 6.0 + user_bias[u] + item_bias[i] + 1.5 * affinity / (d as f64).sqrt() + noise.sample(&mut rng);
            // `+ 0.0` folds -0.0 into 0.0
            let rating = cfg.scale.clamp((raw * 2.0).round() / 2.0) + 0.0;
            triples.push(Triple::new(format!("u{u:04}"), format!("i{i:04}"), rating));
        }
    }
    triples
}
