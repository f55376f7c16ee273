//! Exploration schedule and ε-greedy selection shared by both agent kinds.

use rand::Rng;

/// Exploration probability at iteration `t` (1-based): `max(0.99^(t-1), 0.1)`.
pub fn epsilon(t: u64) -> f64 {
    // past 230 steps the floor always wins, so the exponent can be capped
    let exponent = t.saturating_sub(1).min(10_000) as i32;
    let decayed = 0.99f64.powi(exponent);
    if decayed > 0.1 {
        decayed
    } else {
        0.1
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniformly random action with probability `eps`, greedy otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], eps: f64, rng: &mut R) -> usize {
    let x: f64 = rng.random();
    if x < eps {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}
