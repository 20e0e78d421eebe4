//! Synthetic action distributions and oracles for benchmarking the flow
//! engine without a robot corpus: a unit-circle point manifold, arc-shaped
//! chunk trajectories for long-horizon comparisons, and a hard-wired
//! constant predictor for exactness checks.

use crate::aml::{AmlModel, ChunkExample};
use crate::rng;

/// Unit-circle dataset: `n` points `(cos θ, sin θ)` at counter-seeded
/// uniform angles. One-row chunks (H = 1, D = 2), no state, context 0.
pub fn circle_points(n: usize, seed: u64) -> Vec<ChunkExample> {
    (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * rng::unit_f64_at(seed, rng::STREAM_GEN_BASE, i as u64);
            ChunkExample {
                a: vec![theta.cos(), theta.sin()],
                ctx: 0,
                state: vec![],
            }
        })
        .collect()
}

/// Arc dataset for long horizons: each chunk's `h` rows walk the unit
/// circle from a random start angle with a fixed angular step, so rows are
/// strongly correlated (D = 2 per row).
pub fn arc_chunks(n: usize, h: usize, angle_step: f64, seed: u64) -> Vec<ChunkExample> {
    (0..n)
        .map(|i| {
            let theta0 =
                2.0 * std::f64::consts::PI * rng::unit_f64_at(seed, rng::STREAM_GEN_BASE + 1, i as u64);
            let mut a = Vec::with_capacity(2 * h);
            for k in 0..h {
                let theta = theta0 + k as f64 * angle_step;
                a.push(theta.cos());
                a.push(theta.sin());
            }
            ChunkExample {
                a,
                ctx: 0,
                state: vec![],
            }
        })
        .collect()
}

/// Mean over all rows of `| ‖(x, y)‖ − 1 |` for flattened 2-D-row chunks:
/// the distance of generated rows from the unit-circle manifold.
pub fn mean_radial_error(samples: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0.0;
    for s in samples {
        for row in s.chunks(2) {
            acc += ((row[0] * row[0] + row[1] * row[1]).sqrt() - 1.0).abs();
            count += 1.0;
        }
    }
    if count > 0.0 {
        acc / count
    } else {
        0.0
    }
}

/// Zeroes every weight and hard-wires the final bias, turning the network
/// into a constant predictor — the exactness oracle for the ODE sampler.
pub fn constant_model(mut m: AmlModel, output: &[f64]) -> AmlModel {
    for l in &mut m.layers {
        for w in &mut l.w {
            *w = 0.0;
        }
        for b in &mut l.b {
            *b = 0.0;
        }
    }
    let last = m.layers.last_mut().expect("model has layers");
    assert_eq!(last.b.len(), output.len(), "output width mismatch");
    last.b.copy_from_slice(output);
    m
}
