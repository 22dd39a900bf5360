#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reject_svm::lp::{LinearProgram, Relation, VarBound};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random feasible program with a bounded feasible region: at most six
/// variables and eight rows, one of which caps the sum of the variables.
pub fn random_bounded_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let nvars = rng.random_range(1..=6);
    let nrows = rng.random_range(1..=8);
    let free = if nvars >= 2 { rng.random_range(0..=1) } else { 0 };
    let objective: Vec<f64> = (0..nvars).map(|_| rng.random_range(-5.0..5.0_f64).round()).collect();
    let mut lp = LinearProgram::new(objective);
    let point: Vec<f64> = (0..nvars).map(|_| rng.random_range(0.0..3.0)).collect();
    for j in 0..free {
        lp.set_bound(j, VarBound::new(Some(-4.0), Some(4.0)));
    }
    // keep the region bounded: |x_j| <= 4 for boxed ones, sum cap otherwise
    lp.add_constraint(vec![1.0; nvars], Relation::Le, 10.0 + point.iter().sum::<f64>());
    for _ in 1..nrows {
        let row: Vec<f64> = (0..nvars)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(-4.0..4.0_f64).round()
                }
            })
            .collect();
        let lhs: f64 = row.iter().zip(&point).map(|(a, x)| a * x).sum();
        let relation = match rng.random_range(0..6) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = match relation {
            Relation::Eq => lhs,
            Relation::Le => lhs + rng.random_range(0.0..2.0),
            Relation::Ge => lhs - rng.random_range(0.0..2.0),
        };
        lp.add_constraint(row, relation, rhs);
    }
    lp
}

/// `max(0, 1 - z, 1 - a z)`, written out independently of the library.
pub fn hinge(z: f64, a: f64) -> f64 {
    0.0_f64.max(1.0 - z).max(1.0 - a * z)
}

/// Exact minimization of `mean_i hinge(y_i f_i t) + r |t|` over scalar `t`.
///
/// The objective is convex and piecewise linear with kinks where some
/// margin is 0 or 1, so its minimum sits on a kink. Returns the minimum
/// and the smallest and largest kinks attaining it.
pub fn one_d_oracle(features: &[f64], labels: &[f64], a: f64, r: f64) -> (f64, f64, f64) {
    let value = |t: f64| {
        features
            .iter()
            .zip(labels)
            .map(|(f, y)| hinge(y * f * t, a))
            .sum::<f64>()
            / features.len() as f64
            + r * t.abs()
    };
    let mut kinks = vec![0.0];
    for (f, y) in features.iter().zip(labels) {
        if *f != 0.0 {
            kinks.push(1.0 / (y * f));
        }
    }
    let best = kinks.iter().map(|&t| value(t)).fold(f64::INFINITY, f64::min);
    let attaining: Vec<f64> = kinks.into_iter().filter(|&t| value(t) <= best + 1e-12).collect();
    let lo = attaining.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = attaining.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (best, lo, hi)
}

/// The training problem as a small nonnegative LP in `(lambda+, lambda-, xi)`,
/// built from scratch for the vertex-enumeration oracle.
pub fn compact_training_lp(rows: &[Vec<f64>], labels: &[f64], a: f64, r: f64) -> LinearProgram {
    let n = rows.len();
    let m = rows[0].len();
    let mut objective = vec![r; 2 * m];
    objective.extend(std::iter::repeat(1.0 / n as f64).take(n));
    let mut lp = LinearProgram::new(objective);
    for (i, (row, y)) in rows.iter().zip(labels).enumerate() {
        for slope in [1.0, a] {
            let mut coeffs = vec![0.0; 2 * m + n];
            for j in 0..m {
                coeffs[j] = slope * y * row[j];
                coeffs[m + j] = -slope * y * row[j];
            }
            coeffs[2 * m + i] = 1.0;
            lp.add_constraint(coeffs, Relation::Ge, 1.0);
        }
    }
    lp
}

/// A random labelled design with entries in `[-2, 2]`.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let labels = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    (rows, labels)
}
