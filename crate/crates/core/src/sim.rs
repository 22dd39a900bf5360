//! Synthetic experiments with known conditional probabilities.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::dictionary::{dot, DictError, Dictionary, DEFAULT_BETA};
use crate::evaluate::{bounds_from_margins, default_gamma_grid, EvalError};
use crate::losses::{hinge_with_slope, CostParams, Decision, LossError};
use crate::train::{cross_validate, fit_coefficients, l1, log_grid, TrainError, DEFAULT_FOLDS};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dictionary(#[from] DictError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    TwoGaussian,
    Mixture,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::TwoGaussian => "two_gaussian",
            Scenario::Mixture => "mixture",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "two_gaussian" => Ok(Scenario::TwoGaussian),
            "mixture" => Ok(Scenario::Mixture),
            other => Err(SimError::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    /// Number of Gaussian coordinates; ignored by the mixture scenario.
    pub m: usize,
    pub d: f64,
    pub tau: f64,
    pub r_grid: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    pub folds: usize,
    /// Lattice points per axis of the RBF dictionary.
    pub lattice: usize,
    pub beta: f64,
    /// Cells per axis of the decision-map grid.
    pub grid_cells: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::TwoGaussian,
            n_train: 100,
            n_test: 100_000,
            m: 200,
            d: 0.25,
            tau: 0.5,
            r_grid: log_grid(1e-3, 1.0, 13),
            repetitions: 50,
            seed: 0,
            folds: DEFAULT_FOLDS,
            lattice: 10,
            beta: DEFAULT_BETA,
            grid_cells: 60,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<CostParams, SimError> {
        let bad = |msg: &str| Err(SimError::Config(msg.into()));
        if self.n_train < 2 || self.n_train % 2 != 0 {
            return bad("n_train must be even and at least 2");
        }
        if self.n_test == 0 || self.repetitions == 0 {
            return bad("n_test and repetitions must be positive");
        }
        if self.scenario == Scenario::TwoGaussian && self.m < 2 {
            return bad("the two-Gaussian scenario needs m >= 2");
        }
        if self.r_grid.is_empty() || self.r_grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad("r_grid must be non-empty and positive");
        }
        if self.lattice == 0 || self.grid_cells < 2 {
            return bad("lattice must be positive and grid_cells at least 2");
        }
        Ok(CostParams::new(self.d, self.tau)?)
    }
}

/// Points with labels and the true `eta` at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Per-repetition seed from a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 finalizer
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `eta(x) = 1 / (1 + exp(-2 mu'x))` with `mu = (1/sqrt 2, 1/sqrt 2, 0, ...)`.
pub fn two_gaussian_eta(x: &[f64]) -> f64 {
    let s = FRAC_1_SQRT_2 * (x[0] + x[1]);
    1.0 / (1.0 + (-2.0 * s).exp())
}

fn two_gaussian_point<R: Rng>(rng: &mut R, y: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let z: f64 = rng.sample(StandardNormal);
            if j < 2 { z + y * FRAC_1_SQRT_2 } else { z }
        })
        .collect()
}

/// `n_per_class` draws from `N(mu, I)` labelled `+1`, then `n_per_class`
/// from `N(-mu, I)` labelled `-1`.
pub fn gen_two_gaussian(n_per_class: usize, m: usize, seed: u64) -> Result<LabeledData, SimError> {
    if m < 2 {
        return Err(SimError::Config("the two-Gaussian scenario needs m >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = LabeledData {
        x: Vec::with_capacity(2 * n_per_class),
        y: Vec::with_capacity(2 * n_per_class),
        eta: Vec::with_capacity(2 * n_per_class),
    };
    for y in [1.0, -1.0] {
        for _ in 0..n_per_class {
            let x = two_gaussian_point(&mut rng, y, m);
            data.eta.push(two_gaussian_eta(&x));
            data.x.push(x);
            data.y.push(y);
        }
    }
    Ok(data)
}

/// Component centres of the positive class.
pub const MIXTURE_POSITIVE: [[f64; 2]; 4] = [[-1.0, 1.2], [0.2, 1.6], [1.2, 0.9], [2.2, 1.5]];
/// Component centres of the negative class.
pub const MIXTURE_NEGATIVE: [[f64; 2]; 4] = [[-1.2, -0.2], [0.0, 0.2], [1.4, -0.6], [2.4, 0.2]];
/// Common component variance.
pub const MIXTURE_VARIANCE: f64 = 0.25;

fn mixture_density(x: &[f64], centres: &[[f64; 2]; 4]) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * MIXTURE_VARIANCE);
    centres
        .iter()
        .map(|c| {
            let sq = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            0.25 * norm * (-sq / (2.0 * MIXTURE_VARIANCE)).exp()
        })
        .sum()
}

/// Marginal density of `X` (equal class priors).
pub fn mixture_marginal(x: &[f64]) -> f64 {
    0.5 * (mixture_density(x, &MIXTURE_POSITIVE) + mixture_density(x, &MIXTURE_NEGATIVE))
}

pub fn mixture_eta(x: &[f64]) -> f64 {
    let p = mixture_density(x, &MIXTURE_POSITIVE);
    let q = mixture_density(x, &MIXTURE_NEGATIVE);
    if p + q == 0.0 { 0.5 } else { p / (p + q) }
}

/// `n` draws with labels from a fair coin, then a uniformly chosen
/// component of that class.
pub fn gen_mixture(n: usize, seed: u64) -> LabeledData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = MIXTURE_VARIANCE.sqrt();
    let mut data = LabeledData {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let positive = rng.random_bool(0.5);
        let centres = if positive { &MIXTURE_POSITIVE } else { &MIXTURE_NEGATIVE };
        let c = centres[rng.random_range(0..4)];
        let x: Vec<f64> = c
            .iter()
            .map(|&m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        data.eta.push(mixture_eta(&x));
        data.x.push(x);
        data.y.push(if positive { 1.0 } else { -1.0 });
    }
    data
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Reject,
    Plain,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Reject => "reject",
            Arm::Plain => "plain",
        })
    }
}

/// One row of the results table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub repetition: usize,
    pub r: f64,
    pub arm: Arm,
    pub phi_risk: f64,
    pub ell_risk: f64,
    pub misclass: f64,
    pub reject: f64,
    pub excess_ell: f64,
    pub bayes_risk_mc: f64,
    pub bayes_risk_se: f64,
}

pub const RESULTS_HEADER: &str =
    "scenario,repetition,r,arm,phi_risk,ell_risk,misclass,reject,excess_ell,bayes_risk_mc,bayes_risk_se";

pub fn write_results<W: Write + ?Sized>(rows: &[ResultRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.scenario,
            r.repetition,
            r.r,
            r.arm,
            r.phi_risk,
            r.ell_risk,
            r.misclass,
            r.reject,
            r.excess_ell,
            r.bayes_risk_mc,
            r.bayes_risk_se
        )?;
    }
    Ok(())
}

/// Running conditional-expectation risks of one classifier on test points.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    phi: f64,
    misclass: f64,
    reject: f64,
}

impl Tally {
    /// Adds `E[loss | X = x]` for margin `f` at a point with `eta`.
    fn add(&mut self, f: f64, eta: f64, arm: Arm, cp: &CostParams, a: f64) {
        self.phi += eta * hinge_with_slope(f, a) + (1.0 - eta) * hinge_with_slope(-f, a);
        match arm {
            Arm::Reject => {
                let tau = cp.tau();
                if f.abs() <= tau {
                    self.reject += 1.0;
                } else if f < -tau {
                    self.misclass += eta;
                } else {
                    self.misclass += 1.0 - eta;
                }
            }
            // sign decisions, ties to +1
            Arm::Plain => {
                if f < 0.0 {
                    self.misclass += eta;
                } else {
                    self.misclass += 1.0 - eta;
                }
            }
        }
    }
}

/// `E[min(eta, 1 - eta, d)]` on test points: mean and standard error.
fn bayes_mc(etas: &[f64], d: f64) -> (f64, f64) {
    let k = etas.len() as f64;
    let vals = etas.iter().map(|&e| e.min(1.0 - e).min(d));
    let (mut s, mut s2) = (0.0, 0.0);
    for v in vals {
        s += v;
        s2 += v * v;
    }
    let mean = s / k;
    let var = (s2 / k - mean * mean).max(0.0) * k / (k - 1.0).max(1.0);
    (mean, (var / k).sqrt())
}

/// Test points for the two-Gaussian scenario are generated in chunks so
/// that memory stays at `chunk * m` regardless of `n_test`.
const TEST_CHUNK: usize = 2048;

/// Evaluates coefficient vectors on fresh two-Gaussian test draws.
/// Returns, per model, the tallies summed over `n_test` points, and the
/// etas of the test points.
fn two_gaussian_test(models: &[(Vec<f64>, Arm, f64)], m: usize, n_test: usize, cp: &CostParams, seed: u64) -> (Vec<Tally>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tallies = vec![Tally::default(); models.len()];
    let mut etas = Vec::with_capacity(n_test);
    let mut done = 0;
    while done < n_test {
        let k = TEST_CHUNK.min(n_test - done);
        for _ in 0..k {
            let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let x = two_gaussian_point(&mut rng, y, m);
            let eta = two_gaussian_eta(&x);
            etas.push(eta);
            for ((lambda, arm, a), t) in models.iter().zip(tallies.iter_mut()) {
                t.add(dot(&x, lambda), eta, *arm, cp, *a);
            }
        }
        done += k;
    }
    (tallies, etas)
}

/// Trains both arms over the grid in each repetition and scores them on a
/// large test sample with known `eta`.
pub fn run_reject_vs_plain(config: &ExperimentConfig) -> Result<Vec<ResultRow>, SimError> {
    let cp = config.validate()?;
    if config.scenario != Scenario::TwoGaussian {
        return Err(SimError::Config("reject-vs-plain runs on the two_gaussian scenario".into()));
    }
    let plain = CostParams::new(0.5, 0.5)?;
    let dict = Dictionary::linear(config.m)?;
    let reps: Vec<Result<Vec<ResultRow>, SimError>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(config.seed, rep as u64);
            let data = gen_two_gaussian(config.n_train / 2, config.m, seed)?;
            let phi = dict.evaluate(&data.x, Some(&data.y))?;
            let mut models = Vec::with_capacity(2 * config.r_grid.len());
            for &r in &config.r_grid {
                models.push((fit_coefficients(&phi, &cp, r)?.lambda, Arm::Reject, cp.a()));
                models.push((fit_coefficients(&phi, &plain, r)?.lambda, Arm::Plain, plain.a()));
            }
            let (tallies, etas) = two_gaussian_test(&models, config.m, config.n_test, &cp, derive_seed(seed, 1 << 32));
            let (bayes, se) = bayes_mc(&etas, cp.d());
            let k = config.n_test as f64;
            Ok(tallies
                .iter()
                .zip(&models)
                .enumerate()
                .map(|(idx, (t, (_, arm, _)))| {
                    let misclass = t.misclass / k;
                    let reject = t.reject / k;
                    let ell = misclass + cp.d() * reject;
                    ResultRow {
                        scenario: Scenario::TwoGaussian,
                        repetition: rep,
                        r: config.r_grid[idx / 2],
                        arm: *arm,
                        phi_risk: t.phi / k,
                        ell_risk: ell,
                        misclass,
                        reject,
                        excess_ell: ell - bayes,
                        bayes_risk_mc: bayes,
                        bayes_risk_se: se,
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for rep in reps {
        rows.extend(rep?);
    }
    Ok(rows)
}

/// Best excess risk over the grid for each repetition and arm.
pub fn best_over_grid(rows: &[ResultRow], arm: Arm) -> Vec<f64> {
    let reps = rows.iter().map(|r| r.repetition + 1).max().unwrap_or(0);
    let mut best = vec![f64::INFINITY; reps];
    for r in rows.iter().filter(|r| r.arm == arm) {
        best[r.repetition] = best[r.repetition].min(r.excess_ell);
    }
    best
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// One repetition of the bound-coverage experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRow {
    pub repetition: usize,
    pub l1_norm: f64,
    pub empirical_misclass: f64,
    pub bound_misclass: f64,
    pub true_misclass: f64,
    pub bound_reject: f64,
    pub true_reject: f64,
}

impl CoverageRow {
    pub fn covered(&self) -> bool {
        self.true_misclass <= self.bound_misclass
    }
}

/// Trains the reject arm at weight `r` in each repetition, computes the
/// data-driven bounds on the training sample and compares them with
/// Monte Carlo truth.
pub fn run_bound_coverage(config: &ExperimentConfig, r: f64, delta: f64, p: f64) -> Result<Vec<CoverageRow>, SimError> {
    let cp = config.validate()?;
    let dict = Dictionary::linear(config.m)?;
    let grid = default_gamma_grid();
    (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(config.seed, rep as u64);
            let data = gen_two_gaussian(config.n_train / 2, config.m, seed)?;
            let phi = dict.evaluate(&data.x, Some(&data.y))?;
            let c_f = phi.max_abs();
            let lambda = fit_coefficients(&phi, &cp, r)?.lambda;
            let margins = phi.margins(&lambda)?;
            let rep_bounds = bounds_from_margins(&margins, &data.y, l1(&lambda), config.m, c_f, cp.tau(), &grid, delta, p)?;
            let empirical = margins
                .iter()
                .zip(&data.y)
                .filter(|(f, y)| *y * **f < -cp.tau())
                .count() as f64
                / margins.len() as f64;
            let (tally, _) = two_gaussian_test(&[(lambda.clone(), Arm::Reject, cp.a())], config.m, config.n_test, &cp, derive_seed(seed, 1 << 32));
            let k = config.n_test as f64;
            Ok(CoverageRow {
                repetition: rep,
                l1_norm: l1(&lambda),
                empirical_misclass: empirical,
                bound_misclass: rep_bounds.misclass.bound,
                true_misclass: tally[0].misclass / k,
                bound_reject: rep_bounds.reject.bound,
                true_reject: tally[0].reject / k,
            })
        })
        .collect()
}

/// One cell of the decision map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub x1: f64,
    pub x2: f64,
    pub margin: f64,
    pub decision: Decision,
    pub eta: f64,
    pub optimal: Decision,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    pub r: f64,
    pub cv_table: Vec<crate::train::CvRow>,
    pub lambda: Vec<f64>,
    pub cells: Vec<Cell>,
}

impl BoundaryMap {
    /// Fraction of cells with density above the median where the fitted
    /// and optimal decisions agree.
    pub fn high_density_agreement(&self) -> f64 {
        let dens: Vec<f64> = self.cells.iter().map(|c| c.density).collect();
        let med = median(&dens);
        let high: Vec<&Cell> = self.cells.iter().filter(|c| c.density > med).collect();
        high.iter().filter(|c| c.decision == c.optimal).count() as f64 / high.len() as f64
    }

    pub fn reject_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.decision == Decision::Reject).count()
    }
}

pub const BOUNDARY_HEADER: &str = "x1,x2,margin,decision,eta,optimal,density";

pub fn write_boundary<W: Write + ?Sized>(map: &BoundaryMap, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{BOUNDARY_HEADER}")?;
    for c in &map.cells {
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{},{:.17e},{},{:.17e}",
            c.x1, c.x2, c.margin, c.decision, c.eta, c.optimal, c.density
        )?;
    }
    Ok(())
}

/// Fits an RBF-lattice model on mixture data with the weight chosen by
/// cross-validation, then maps fitted and optimal decisions on a grid over
/// the training bounding box.
pub fn run_mixture_boundaries(config: &ExperimentConfig) -> Result<BoundaryMap, SimError> {
    let cp = config.validate()?;
    let data = gen_mixture(config.n_train, config.seed);
    let (lower, upper) = bounding_box(&data.x);
    let dict = Dictionary::rbf_lattice(&[config.lattice; 2], &lower, &upper, config.beta)?;
    let phi = dict.evaluate(&data.x, Some(&data.y))?;
    let cv = cross_validate(&phi, &cp, &config.r_grid, config.folds, derive_seed(config.seed, 7))?;
    let lambda = fit_coefficients(&phi, &cp, cv.best_r)?.lambda;
    let k = config.grid_cells;
    let mut cells = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let x = [
                lower[0] + (upper[0] - lower[0]) * (i as f64 + 0.5) / k as f64,
                lower[1] + (upper[1] - lower[1]) * (j as f64 + 0.5) / k as f64,
            ];
            let margin = dot(&dict.eval(&x)?, &lambda);
            let eta = mixture_eta(&x);
            cells.push(Cell {
                x1: x[0],
                x2: x[1],
                margin,
                decision: Decision::from_margin(margin, cp.tau()),
                eta,
                optimal: crate::losses::bayes_rule(eta, &cp),
                density: mixture_marginal(&x),
            });
        }
    }
    Ok(BoundaryMap {
        r: cv.best_r,
        cv_table: cv.table,
        lambda,
        cells,
    })
}

/// Per-axis minimum and maximum.
pub fn bounding_box(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = x.first().map_or(0, Vec::len);
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in x {
        for (k, &v) in row.iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    (lo, hi)
}
