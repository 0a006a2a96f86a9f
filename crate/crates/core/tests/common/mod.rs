#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use viralfeed::model::{ModelParams, Signal, Strategy};

/// A random mixed strategy on the feasible supports.
pub fn random_strategy(feed_size: usize, capacity: usize, rng: &mut ChaCha8Rng) -> Strategy {
    Strategy::from_fn(feed_size, capacity, |_, k| {
        let lo = capacity.saturating_sub(feed_size - k);
        let hi = capacity.min(k);
        let mut w = vec![0.0; capacity + 1];
        for p in &mut w[lo..=hi] {
            *p = rng.random::<f64>() + 1e-3;
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|p| p / s).collect()
    })
    .unwrap()
}

/// Inflow by enumerating every ordered feed of `K` slots.
pub fn brute_force_inflow(sigma: &Strategy, p: &ModelParams, x: f64, z: f64, iota: f64) -> f64 {
    let (kk, cc) = (p.feed_size, p.capacity);
    let y = p.lambda * x + (1.0 - p.lambda) * z;
    let mean_share = |s: Signal, k: usize| -> f64 {
        sigma
            .dist(s, k)
            .iter()
            .enumerate()
            .map(|(z, w)| z as f64 * w)
            .sum()
    };
    let mut total = 0.0;
    for mask in 0u32..(1 << kk) {
        let k = mask.count_ones() as usize;
        let prob: f64 = (0..kk)
            .map(|i| if mask >> i & 1 == 1 { y } else { 1.0 - y })
            .product();
        total += prob
            * (p.q * (1.0 + mean_share(Signal::Pos, k)) + (1.0 - p.q) * mean_share(Signal::Neg, k));
    }
    (1.0 - iota) * total / (1 + cc) as f64
}
