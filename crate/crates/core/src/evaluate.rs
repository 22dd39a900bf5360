//! Reject-aware prediction, risk reports and data-driven rate bounds.

use thiserror::Error;

use crate::dictionary::{dot, DesignMatrix, DictError};
use crate::losses::{hinge_with_slope, reject_loss, CostParams, Decision, Ramp};
use crate::train::{check_confidence, complexity_terms, log_grid, Model, TrainError};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_P: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no rows to evaluate")]
    Empty,
    #[error("evaluation data has no labels")]
    Unlabeled,
    #[error("{margins} margins for {labels} labels")]
    Length { margins: usize, labels: usize },
    #[error("non-finite margin at row {0}")]
    NonFinite(usize),
    #[error("ramp width must be positive, got {0}")]
    Gamma(f64),
    #[error("ramp-width grid is empty")]
    EmptyGrid,
    #[error("the model's dictionary has no sup-norm bound C_F")]
    MissingBound,
    #[error(transparent)]
    Dictionary(#[from] DictError),
    #[error(transparent)]
    Parameter(#[from] TrainError),
}

/// Margin and decision for one point.
pub fn predict(model: &Model, x: &[f64]) -> Result<(f64, Decision), EvalError> {
    let f = dot(&model.dict.eval(x)?, &model.lambda);
    Ok((f, Decision::from_margin(f, model.cp.tau())))
}

/// Margins and decisions for a design matrix built from the model's dictionary.
pub fn predict_matrix(model: &Model, phi: &DesignMatrix) -> Result<Vec<(f64, Decision)>, EvalError> {
    let tau = model.cp.tau();
    Ok(phi
        .margins(&model.lambda)?
        .into_iter()
        .map(|f| (f, Decision::from_margin(f, tau)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub phi_risk: f64,
    pub ell_risk: f64,
    /// Fraction with `y f < -tau`.
    pub misclass_rate: f64,
    /// Fraction with `|f| <= tau`.
    pub reject_rate: f64,
    pub excess_ell: Option<f64>,
    pub n_eval: usize,
}

impl RiskReport {
    /// Attaches `ell_risk - bayes`.
    pub fn with_bayes(mut self, bayes: f64) -> Self {
        self.excess_ell = Some(self.ell_risk - bayes);
        self
    }
}

/// Empirical risks of margins `f` against labels `y`.
pub fn risk_from_margins(margins: &[f64], labels: &[f64], cp: &CostParams) -> Result<RiskReport, EvalError> {
    if margins.len() != labels.len() {
        return Err(EvalError::Length {
            margins: margins.len(),
            labels: labels.len(),
        });
    }
    if margins.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut phi, mut mis, mut rej) = (0.0, 0usize, 0usize);
    for (i, (&f, &y)) in margins.iter().zip(labels).enumerate() {
        if !f.is_finite() {
            return Err(EvalError::NonFinite(i));
        }
        let z = y * f;
        phi += hinge_with_slope(z, cp.a());
        if z < -cp.tau() {
            mis += 1;
        } else if f.abs() <= cp.tau() {
            rej += 1;
        }
        debug_assert_eq!(
            reject_loss(z, cp),
            if z < -cp.tau() { 1.0 } else if f.abs() <= cp.tau() { cp.d() } else { 0.0 }
        );
    }
    let n = margins.len() as f64;
    let misclass_rate = mis as f64 / n;
    let reject_rate = rej as f64 / n;
    Ok(RiskReport {
        phi_risk: phi / n,
        ell_risk: misclass_rate + cp.d() * reject_rate,
        misclass_rate,
        reject_rate,
        excess_ell: None,
        n_eval: margins.len(),
    })
}

pub fn risk_report(model: &Model, phi: &DesignMatrix) -> Result<RiskReport, EvalError> {
    let labels = phi.labels().ok_or(EvalError::Unlabeled)?;
    risk_from_margins(&phi.margins(&model.lambda)?, labels, &model.cp)
}

/// `r(gamma) = C_F / gamma * terms(n, M, delta, p)`, taken with equality.
pub fn rate_r(gamma: f64, n: usize, m: usize, c_f: f64, delta: f64, p: f64) -> Result<f64, EvalError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(EvalError::Gamma(gamma));
    }
    check_confidence(n, m, delta, p)?;
    Ok(c_f / gamma * complexity_terms(n, m, delta, p))
}

/// 25 log-spaced ramp widths from 0.02 to 2.
pub fn default_gamma_grid() -> Vec<f64> {
    log_grid(0.02, 2.0, 25)
}

/// Terms of one bound at its minimizing width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSide {
    pub gamma: f64,
    pub empirical: f64,
    /// `r(gamma) |lambda|_1`.
    pub complexity: f64,
    /// `n^{-p}`.
    pub tail: f64,
    pub bound: f64,
}

/// The per-width quantities behind both bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub gamma: f64,
    pub empirical_misclass: f64,
    pub empirical_reject: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub misclass: BoundSide,
    pub reject: BoundSide,
    pub delta: f64,
    pub p: f64,
    pub l1_norm: f64,
    pub grid: Vec<BoundRow>,
}

/// Upper bounds on the misclassification and rejection probabilities,
/// valid simultaneously with probability at least `1 - delta`.
pub fn bounds_from_margins(
    margins: &[f64],
    labels: &[f64],
    l1_norm: f64,
    m: usize,
    c_f: f64,
    tau: f64,
    gamma_grid: &[f64],
    delta: f64,
    p: f64,
) -> Result<BoundReport, EvalError> {
    if margins.len() != labels.len() {
        return Err(EvalError::Length {
            margins: margins.len(),
            labels: labels.len(),
        });
    }
    if margins.is_empty() {
        return Err(EvalError::Empty);
    }
    if gamma_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let n = margins.len();
    let tail = (n as f64).powf(-p);
    let mut grid = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        let rate = rate_r(gamma, n, m, c_f, delta, p)?;
        let (mut mis, mut rej) = (0usize, 0usize);
        for (&f, &y) in margins.iter().zip(labels) {
            if y * f <= -tau + gamma {
                mis += 1;
            }
            if f.abs() <= tau + gamma {
                rej += 1;
            }
        }
        grid.push(BoundRow {
            gamma,
            empirical_misclass: mis as f64 / n as f64,
            empirical_reject: rej as f64 / n as f64,
            rate,
        });
    }
    let side = |pick: fn(&BoundRow) -> f64| {
        let mut best: Option<BoundSide> = None;
        for row in &grid {
            let complexity = row.rate * l1_norm;
            let bound = pick(row) + complexity + tail;
            if best.map_or(true, |b| bound < b.bound) {
                best = Some(BoundSide {
                    gamma: row.gamma,
                    empirical: pick(row),
                    complexity,
                    tail,
                    bound,
                });
            }
        }
        best.expect("grid is non-empty")
    };
    Ok(BoundReport {
        misclass: side(|r| r.empirical_misclass),
        reject: side(|r| r.empirical_reject),
        delta,
        p,
        l1_norm,
        grid,
    })
}

pub fn bounds(
    model: &Model,
    phi: &DesignMatrix,
    gamma_grid: &[f64],
    delta: f64,
    p: f64,
) -> Result<BoundReport, EvalError> {
    let labels = phi.labels().ok_or(EvalError::Unlabeled)?;
    let c_f = model.dict.sup_bound().ok_or(EvalError::MissingBound)?.value;
    bounds_from_margins(
        &phi.margins(&model.lambda)?,
        labels,
        model.l1_norm(),
        model.dict.len(),
        c_f,
        model.cp.tau(),
        gamma_grid,
        delta,
        p,
    )
}

/// Empirical ramp-loss averages, the quantities sandwiched in the bounds.
pub fn ramp_rates(margins: &[f64], labels: &[f64], tau: f64, gamma: f64) -> Result<(f64, f64), EvalError> {
    let ramp = Ramp::new(tau, gamma).map_err(|_| EvalError::Gamma(gamma))?;
    if margins.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = margins.len() as f64;
    let upper = margins.iter().zip(labels).map(|(f, y)| ramp.upper(y * f)).sum::<f64>() / n;
    let reject = margins.iter().map(|&f| ramp.reject(f)).sum::<f64>() / n;
    Ok((upper, reject))
}
