//! Penalized hinge-risk minimization by linear programming.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dictionary::{DesignMatrix, DictError, Dictionary};
use crate::losses::{hinge_with_slope, reject_loss, CostParams, DiscreteDistribution, LossError};
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, Relation, VarBound};

/// Coefficients below this magnitude do not count towards the support.
pub const SUPPORT_EPS: f64 = 1e-8;

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("regularization weight must be finite and non-negative, got {0}")]
    Weight(f64),
    #[error("design matrix has no labels")]
    Unlabeled,
    #[error("design matrix is empty ({rows} rows, {cols} columns)")]
    Empty { rows: usize, cols: usize },
    #[error("LP solver returned {0:?} for a bounded feasible training problem")]
    Status(LpStatus),
    #[error("training LP failed: {0}")]
    Lp(#[from] LpError),
    #[error("{folds} folds requested for {n} rows")]
    Folds { folds: usize, n: usize },
    #[error("regularization grid is empty or has a non-positive entry")]
    Grid,
    #[error("confidence level delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("exponent p must be at least 1, got {0}")]
    Exponent(f64),
    #[error("sample size and dictionary size must be positive")]
    Size,
    #[error(transparent)]
    Dictionary(#[from] DictError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Bookkeeping from the solve that produced a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainMeta {
    pub n: usize,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub lambda: Vec<f64>,
    pub dict: Dictionary,
    pub cp: CostParams,
    pub r: f64,
    pub meta: TrainMeta,
}

impl Model {
    pub fn l1_norm(&self) -> f64 {
        l1(&self.lambda)
    }

    pub fn support_size(&self) -> usize {
        self.lambda.iter().filter(|v| v.abs() > SUPPORT_EPS).count()
    }
}

/// A solved coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn labeled(phi: &DesignMatrix) -> Result<&[f64], TrainError> {
    if phi.rows() == 0 || phi.cols() == 0 {
        return Err(TrainError::Empty {
            rows: phi.rows(),
            cols: phi.cols(),
        });
    }
    phi.labels().ok_or(TrainError::Unlabeled)
}

fn check_weight(r: f64) -> Result<(), TrainError> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Weight(r))
    }
}

/// The training LP in its textbook form.
///
/// Variables are `lambda_1..lambda_M` (free), `xi_1..xi_n >= 0` and
/// `xi_{n+1}..xi_{n+M} >= 0`. The objective is
/// `(1/n) sum_i xi_i + r sum_j xi_{n+j}`, subject to
/// `xi_i >= 1 - y_i h_i`, `xi_i >= 1 - a y_i h_i` and `xi_{n+j} >= |lambda_j|`.
pub fn assemble_lp(phi: &DesignMatrix, cp: &CostParams, r: f64) -> Result<LinearProgram, TrainError> {
    let y = labeled(phi)?;
    check_weight(r)?;
    let (n, m) = (phi.rows(), phi.cols());
    let nv = m + n + m;
    let mut objective = vec![0.0; nv];
    objective[m..m + n].fill(1.0 / n as f64);
    objective[m + n..].fill(r);
    let mut lp = LinearProgram::new(objective);
    for j in 0..m {
        lp.set_bound(j, VarBound::FREE);
    }
    for i in 0..n {
        for scale in [1.0, cp.a()] {
            let mut row = vec![0.0; nv];
            for (dst, &v) in row[..m].iter_mut().zip(phi.row(i)) {
                *dst = scale * y[i] * v;
            }
            row[m + i] = 1.0;
            lp.add_constraint(row, Relation::Ge, 1.0);
        }
    }
    for j in 0..m {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; nv];
            row[m + n + j] = 1.0;
            row[j] = -sign;
            lp.add_constraint(row, Relation::Ge, 0.0);
        }
    }
    Ok(lp)
}

/// The same problem with `lambda = lambda_plus - lambda_minus`.
///
/// Variables are `lambda_plus` (M), `lambda_minus` (M) and one slack per
/// weighted margin. Every cost is non-negative and every row is `>= 1`, which
/// is the shape the dual simplex handles from the slack basis.
fn split_lp(margins: &[(Vec<f64>, f64, f64)], m: usize, a: f64, r: f64) -> LinearProgram {
    let k = margins.len();
    let nv = 2 * m + k;
    let mut objective = vec![r; nv];
    for (t, (_, _, w)) in margins.iter().enumerate() {
        objective[2 * m + t] = *w;
    }
    let mut lp = LinearProgram::new(objective);
    for (t, (features, sign, _)) in margins.iter().enumerate() {
        for scale in [1.0, a] {
            let mut row = vec![0.0; nv];
            for (j, &v) in features.iter().enumerate() {
                row[j] = scale * sign * v;
                row[m + j] = -scale * sign * v;
            }
            row[2 * m + t] = 1.0;
            lp.add_constraint(row, Relation::Ge, 1.0);
        }
    }
    lp
}

/// Equivalent split form of [`assemble_lp`]; this is what [`fit`] solves.
pub fn assemble_split_lp(phi: &DesignMatrix, cp: &CostParams, r: f64) -> Result<LinearProgram, TrainError> {
    let y = labeled(phi)?;
    check_weight(r)?;
    let w = 1.0 / phi.rows() as f64;
    let margins: Vec<_> = (0..phi.rows()).map(|i| (phi.row(i).to_vec(), y[i], w)).collect();
    Ok(split_lp(&margins, phi.cols(), cp.a(), r))
}

fn solve_split(lp: &LinearProgram, m: usize) -> Result<Fit, TrainError> {
    let sol = solve_lp(lp)?;
    let (Some(z), Some(objective)) = (sol.primal, sol.objective_value) else {
        return Err(TrainError::Status(sol.status));
    };
    let lambda = (0..m).map(|j| z[j] - z[m + j]).collect();
    Ok(Fit {
        lambda,
        objective,
        iterations: sol.iterations,
    })
}

/// Minimizes `(1/n) sum_i phi(y_i f(x_i)) + r |lambda|_1`.
pub fn fit_coefficients(phi: &DesignMatrix, cp: &CostParams, r: f64) -> Result<Fit, TrainError> {
    let lp = assemble_split_lp(phi, cp, r)?;
    solve_split(&lp, phi.cols())
}

/// Trains a model; `phi` must come from `dict`.
pub fn fit(dict: &Dictionary, phi: &DesignMatrix, cp: &CostParams, r: f64) -> Result<Model, TrainError> {
    if phi.cols() != dict.len() {
        return Err(DictError::Coefficients(phi.cols(), dict.len()).into());
    }
    let fit = fit_coefficients(phi, cp, r)?;
    Ok(Model {
        lambda: fit.lambda,
        dict: dict.clone(),
        cp: *cp,
        r,
        meta: TrainMeta {
            n: phi.rows(),
            objective: fit.objective,
            iterations: fit.iterations,
        },
    })
}

/// `(1/n) sum_i phi(y_i f(x_i)) + r |lambda|_1` evaluated directly.
pub fn penalized_objective(phi: &DesignMatrix, cp: &CostParams, r: f64, lambda: &[f64]) -> Result<f64, TrainError> {
    let y = labeled(phi)?;
    let f = phi.margins(lambda)?;
    let risk = f
        .iter()
        .zip(y)
        .map(|(fi, yi)| hinge_with_slope(yi * fi, cp.a()))
        .sum::<f64>()
        / phi.rows() as f64;
    Ok(risk + r * l1(lambda))
}

fn population_margins(dist: &DiscreteDistribution, dict: &Dictionary) -> Result<Vec<(Vec<f64>, f64, f64)>, TrainError> {
    let mut margins = Vec::with_capacity(2 * dist.len());
    for atom in dist.atoms() {
        let features = dict.eval(&atom.x)?;
        // atoms with zero weight on one label contribute no rows for it
        for (sign, w) in [(1.0, atom.p * atom.eta), (-1.0, atom.p * (1.0 - atom.eta))] {
            if w > 0.0 {
                margins.push((features.clone(), sign, w));
            }
        }
    }
    Ok(margins)
}

/// Exact minimizer of `R_phi(f_lambda) + r |lambda|_1` under a finite law.
///
/// At `r = 0` the risk minimizer need not be unique; the one with the
/// smallest l1 norm is returned.
pub fn fit_population(
    dist: &DiscreteDistribution,
    dict: &Dictionary,
    cp: &CostParams,
    r: f64,
) -> Result<Fit, TrainError> {
    check_weight(r)?;
    let m = dict.len();
    let margins = population_margins(dist, dict)?;
    let lp = split_lp(&margins, m, cp.a(), r);
    let first = solve_split(&lp, m)?;
    if r > 0.0 {
        return Ok(first);
    }

    // second stage: smallest l1 norm among risk minimizers
    let risk_star = first.objective;
    let mut objective = lp.objective.clone();
    let mut budget = vec![0.0; objective.len()];
    for (t, slot) in objective[2 * m..].iter_mut().enumerate() {
        budget[2 * m + t] = *slot;
        *slot = 0.0;
    }
    objective[..2 * m].fill(1.0);
    let mut second = LinearProgram::new(objective);
    second.constraints = lp.constraints;
    second.add_constraint(budget, Relation::Le, risk_star * (1.0 + 1e-9) + 1e-12);
    let mut refined = solve_split(&second, m)?;
    refined.iterations += first.iterations;
    refined.objective = risk_star;
    Ok(refined)
}

/// One row of a cross-validation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvRow {
    pub r: f64,
    pub mean_risk: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_r: f64,
    pub table: Vec<CvRow>,
}

/// k-fold cross-validation of the held-out reject-loss risk.
///
/// Rows are shuffled with `seed` and row `i` of the shuffle goes to fold
/// `i mod folds`. Ties in mean risk go to the larger `r`.
pub fn cross_validate(
    phi: &DesignMatrix,
    cp: &CostParams,
    r_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult, TrainError> {
    let y = labeled(phi)?;
    let n = phi.rows();
    if folds < 2 || folds > n {
        return Err(TrainError::Folds { folds, n });
    }
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(TrainError::Grid);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    // losses[fold][grid index], computed per fold and merged by index
    let per_fold: Vec<Result<Vec<f64>, TrainError>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
            let sub = phi.select(&train);
            r_grid
                .iter()
                .map(|&r| {
                    let fit = fit_coefficients(&sub, cp, r)?;
                    let held: f64 = test
                        .iter()
                        .map(|&i| reject_loss(y[i] * crate::dictionary::dot(phi.row(i), &fit.lambda), cp))
                        .sum();
                    Ok(held / test.len() as f64)
                })
                .collect()
        })
        .collect();
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>, _>>()?;

    let table: Vec<CvRow> = r_grid
        .iter()
        .enumerate()
        .map(|(g, &r)| {
            let vals: Vec<f64> = per_fold.iter().map(|f| f[g]).collect();
            let mean = vals.iter().sum::<f64>() / folds as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (folds - 1) as f64;
            CvRow {
                r,
                mean_risk: mean,
                std_error: (var / folds as f64).sqrt(),
            }
        })
        .collect();
    let mut best = table[0];
    for row in &table[1..] {
        let tie = (row.mean_risk - best.mean_risk).abs() <= 1e-12;
        if row.mean_risk < best.mean_risk - 1e-12 || (tie && row.r > best.r) {
            best = *row;
        }
    }
    Ok(CvResult {
        best_r: best.r,
        table,
    })
}

/// `count` log-spaced points from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// 30 log-spaced weights from `1e-4` to `a C_F`.
pub fn default_r_grid(cp: &CostParams, c_f: f64) -> Vec<f64> {
    log_grid(1e-4, cp.a() * c_f, 30)
}

pub(crate) fn check_confidence(n: usize, m: usize, delta: f64, p: f64) -> Result<(), TrainError> {
    if n == 0 || m == 0 {
        return Err(TrainError::Size);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TrainError::Delta(delta));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(TrainError::Exponent(p));
    }
    Ok(())
}

/// The complexity terms shared by the regularization thresholds:
/// `9 sqrt(2 log(2 (M v n)) / n) + 2 p log2(n) / sqrt(2 (M v n)) + sqrt(2 log(1/delta) / n)`.
pub(crate) fn complexity_terms(n: usize, m: usize, delta: f64, p: f64) -> f64 {
    let nf = n as f64;
    let big = n.max(m) as f64;
    9.0 * (2.0 * (2.0 * big).ln() / nf).sqrt()
        + 2.0 * p * nf.log2() / (2.0 * big).sqrt()
        + (2.0 * (1.0 / delta).ln() / nf).sqrt()
}

/// Smallest weight for which the sparsity oracle inequality holds with
/// probability `1 - delta`: `(1 - d)/d * C_F * terms(n, M, delta, p)`.
pub fn theoretical_r(n: usize, m: usize, c_f: f64, cp: &CostParams, delta: f64, p: f64) -> Result<f64, TrainError> {
    check_confidence(n, m, delta, p)?;
    Ok(cp.a() * c_f * complexity_terms(n, m, delta, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictSpec;
    use crate::losses::Atom;

    fn cp(d: f64) -> CostParams {
        CostParams::with_default_tau(d).unwrap()
    }

    fn ones(n: usize, labels: Vec<f64>) -> DesignMatrix {
        DesignMatrix::from_rows(vec![vec![1.0]; n], Some(labels)).unwrap()
    }

    #[test]
    fn single_point_small_weight() {
        let phi = ones(1, vec![1.0]);
        let fit = fit_coefficients(&phi, &cp(0.25), 0.5).unwrap();
        assert!((fit.lambda[0] - 1.0).abs() < 1e-9);
        assert!((fit.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_point_large_weight() {
        let phi = ones(1, vec![1.0]);
        let fit = fit_coefficients(&phi, &cp(0.25), 1.5).unwrap();
        assert!(fit.lambda[0].abs() < 1e-9);
        assert!((fit.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_pair_without_penalty() {
        let phi = DesignMatrix::from_rows(vec![vec![-1.0], vec![2.0]], Some(vec![-1.0, 1.0])).unwrap();
        let fit = fit_coefficients(&phi, &cp(0.25), 0.0).unwrap();
        assert!(fit.objective.abs() < 1e-12);
    }

    #[test]
    fn literal_and_split_forms_agree() {
        let phi = DesignMatrix::from_rows(
            vec![vec![1.0, 0.3], vec![0.2, -1.0], vec![-0.7, 0.4], vec![0.1, 0.1]],
            Some(vec![1.0, -1.0, -1.0, 1.0]),
        )
        .unwrap();
        for r in [0.0, 0.05, 0.3, 2.0] {
            let literal = solve_lp(&assemble_lp(&phi, &cp(0.25), r).unwrap()).unwrap();
            let fit = fit_coefficients(&phi, &cp(0.25), r).unwrap();
            assert!((literal.objective_value.unwrap() - fit.objective).abs() < 1e-9);
            let direct = penalized_objective(&phi, &cp(0.25), r, &fit.lambda).unwrap();
            assert!((direct - fit.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn weight_and_label_errors() {
        let phi = ones(1, vec![1.0]);
        assert!(matches!(fit_coefficients(&phi, &cp(0.25), -1.0), Err(TrainError::Weight(_))));
        let unlabeled = DesignMatrix::from_rows(vec![vec![1.0]], None).unwrap();
        assert!(matches!(assemble_lp(&unlabeled, &cp(0.25), 0.1), Err(TrainError::Unlabeled)));
    }

    #[test]
    fn population_single_atom() {
        let dist = DiscreteDistribution::new(vec![Atom { x: vec![0.0], p: 1.0, eta: 1.0 }]).unwrap();
        let dict = Dictionary::new(DictSpec::Constant { dim: 1 }).unwrap();
        let fit = fit_population(&dist, &dict, &cp(0.25), 0.1).unwrap();
        assert!((fit.lambda[0] - 1.0).abs() < 1e-9);
        assert!((fit.objective - 0.1).abs() < 1e-9);
    }

    #[test]
    fn minimum_norm_unpenalized_minimizer() {
        // f_2 duplicates f_1, so only the l1 norm of the sum is pinned down
        let dist = DiscreteDistribution::new(vec![Atom { x: vec![0.0], p: 1.0, eta: 1.0 }]).unwrap();
        let dict = Dictionary::new(DictSpec::Custom { centers: vec![vec![0.0], vec![0.0]], beta: 1.0 }).unwrap();
        let fit = fit_population(&dist, &dict, &cp(0.25), 0.0).unwrap();
        assert!(fit.objective.abs() < 1e-12);
        assert!((l1(&fit.lambda) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cv_fold_checks() {
        let phi = ones(3, vec![1.0, 1.0, 1.0]);
        assert!(matches!(cross_validate(&phi, &cp(0.25), &[0.1], 4, 0), Err(TrainError::Folds { .. })));
        assert!(matches!(cross_validate(&phi, &cp(0.25), &[], 2, 0), Err(TrainError::Grid)));
        assert!(matches!(cross_validate(&phi, &cp(0.25), &[0.0], 2, 0), Err(TrainError::Grid)));
    }

    #[test]
    fn cv_on_constant_labels_prefers_larger_r_on_ties() {
        let phi = ones(20, vec![1.0; 20]);
        let grid = [0.01, 0.1, 0.5];
        let cv = cross_validate(&phi, &cp(0.25), &grid, 10, 3).unwrap();
        // every weight below 1 gives lambda = 1 and zero held-out risk
        assert!(cv.table.iter().all(|row| row.mean_risk == 0.0));
        assert_eq!(cv.best_r, 0.5);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-4, 3.0, 30);
        assert_eq!(g.len(), 30);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[29] - 3.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn threshold_scaling_and_errors() {
        let c = cp(0.25);
        let base = theoretical_r(100, 200, 1.0, &c, 0.1, 1.0).unwrap();
        let double = theoretical_r(100, 200, 2.0, &c, 0.1, 1.0).unwrap();
        assert!((double - 2.0 * base).abs() < 1e-12);
        let half = theoretical_r(100, 200, 1.0, &cp(0.5), 0.1, 1.0).unwrap();
        assert!((3.0 * half - base).abs() < 1e-12);
        assert!(matches!(theoretical_r(100, 200, 1.0, &c, 1.0, 1.0), Err(TrainError::Delta(_))));
        assert!(matches!(theoretical_r(100, 200, 1.0, &c, 0.1, 0.5), Err(TrainError::Exponent(_))));
    }
}
