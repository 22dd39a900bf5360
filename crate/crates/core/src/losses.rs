//! Losses, decision rules and exact risks under finite-support laws.

use std::fmt;

use thiserror::Error;

use crate::dictionary::{DictError, Dictionary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("rejection cost d = {0} must lie in (0, 1/2]")]
    Cost(f64),
    #[error("threshold tau = {tau} must lie in [d, 1 - d] = [{d}, {upper}]", upper = 1.0 - d)]
    Threshold { tau: f64, d: f64 },
    #[error("slope a = {a} does not match (1 - d)/d for d = {d}")]
    Slope { a: f64, d: f64 },
    #[error("ramp width must be positive, got {0}")]
    RampWidth(f64),
    #[error("non-finite margin")]
    NonFinite,
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("{0} function values for {1} atoms")]
    Length(usize, usize),
    #[error(transparent)]
    Dictionary(#[from] DictError),
}

/// The cost triple: rejection cost `d`, hinge slope `a = (1 - d)/d` and
/// rejection threshold `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    d: f64,
    a: f64,
    tau: f64,
}

impl CostParams {
    pub fn new(d: f64, tau: f64) -> Result<Self, LossError> {
        if !(d > 0.0 && d <= 0.5) {
            return Err(LossError::Cost(d));
        }
        if !(tau >= d && tau <= 1.0 - d) {
            return Err(LossError::Threshold { tau, d });
        }
        Ok(Self {
            d,
            a: (1.0 - d) / d,
            tau,
        })
    }

    /// `tau = 1/2`, the midpoint of `[d, 1 - d]`.
    pub fn with_default_tau(d: f64) -> Result<Self, LossError> {
        if !(d > 0.0 && d <= 0.5) {
            return Err(LossError::Cost(d));
        }
        Self::new(d, 0.5_f64.clamp(d, 1.0 - d))
    }

    /// Rebuilds from stored values, checking that `a` matches `d`.
    pub fn from_parts(d: f64, a: f64, tau: f64) -> Result<Self, LossError> {
        let cp = Self::new(d, tau)?;
        if !((a - cp.a).abs() <= 1e-12 * cp.a) {
            return Err(LossError::Slope { a, d });
        }
        Ok(cp)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Generalized hinge loss: `1 - a z` below zero, `1 - z` on `[0, 1)`, zero
/// from one on.
pub fn gen_hinge(z: f64, cp: &CostParams) -> f64 {
    hinge_with_slope(z, cp.a)
}

pub(crate) fn hinge_with_slope(z: f64, a: f64) -> f64 {
    if z < 0.0 {
        1.0 - a * z
    } else if z < 1.0 {
        1.0 - z
    } else {
        0.0
    }
}

/// The discontinuous loss: 1 below `-tau`, `d` on `[-tau, tau]`, 0 above.
pub fn reject_loss(z: f64, cp: &CostParams) -> f64 {
    if z < -cp.tau {
        1.0
    } else if z <= cp.tau {
        cp.d
    } else {
        0.0
    }
}

/// Lipschitz surrogates of the misclassification and rejection indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    tau: f64,
    gamma: f64,
}

impl Ramp {
    pub fn new(tau: f64, gamma: f64) -> Result<Self, LossError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(LossError::RampWidth(gamma));
        }
        Ok(Self { tau, gamma })
    }

    /// 1 below `-tau`, linear down to 0 at `-tau + gamma`.
    pub fn upper(&self, z: f64) -> f64 {
        let (tau, gamma) = (self.tau, self.gamma);
        if z < -tau {
            1.0
        } else if z <= -tau + gamma {
            (gamma - tau - z) / gamma
        } else {
            0.0
        }
    }

    /// 1 inside `(-tau, tau)`, linear ramps of width `gamma` on both sides.
    pub fn reject(&self, z: f64) -> f64 {
        let (tau, gamma) = (self.tau, self.gamma);
        if z.abs() < tau {
            1.0
        } else if z.abs() >= tau + gamma {
            0.0
        } else if z < 0.0 {
            (z + gamma + tau) / gamma
        } else {
            -(z - gamma - tau) / gamma
        }
    }
}

pub fn ramp_upper(z: f64, tau: f64, gamma: f64) -> Result<f64, LossError> {
    Ok(Ramp::new(tau, gamma)?.upper(z))
}

pub fn ramp_reject(z: f64, tau: f64, gamma: f64) -> Result<f64, LossError> {
    Ok(Ramp::new(tau, gamma)?.reject(z))
}

/// A three-way decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decision {
    Negative,
    Reject,
    Positive,
}

impl Decision {
    pub fn as_i8(self) -> i8 {
        match self {
            Decision::Negative => -1,
            Decision::Reject => 0,
            Decision::Positive => 1,
        }
    }

    /// Decision taken on margin `f` with threshold `tau`.
    pub fn from_margin(f: f64, tau: f64) -> Self {
        if f.abs() <= tau {
            Decision::Reject
        } else if f > 0.0 {
            Decision::Positive
        } else {
            Decision::Negative
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// The optimal rule: `-1` when `eta < d`, `+1` when `eta > 1 - d`, reject
/// otherwise.
pub fn bayes_rule(eta: f64, cp: &CostParams) -> Decision {
    if eta < cp.d {
        Decision::Negative
    } else if eta > 1.0 - cp.d {
        Decision::Positive
    } else {
        Decision::Reject
    }
}

/// Value of the optimal discriminant: the decision read as a number.
pub fn bayes_discriminant(eta: f64, cp: &CostParams) -> f64 {
    f64::from(bayes_rule(eta, cp).as_i8())
}

/// Losses that can be averaged over a law of `(X, Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Hinge,
    Reject,
    RampUpper { gamma: f64 },
    RampReject { gamma: f64 },
}

impl LossKind {
    pub fn eval(&self, z: f64, cp: &CostParams) -> Result<f64, LossError> {
        Ok(match *self {
            LossKind::Hinge => gen_hinge(z, cp),
            LossKind::Reject => reject_loss(z, cp),
            LossKind::RampUpper { gamma } => ramp_upper(z, cp.tau, gamma)?,
            LossKind::RampReject { gamma } => ramp_reject(z, cp.tau, gamma)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub x: Vec<f64>,
    pub p: f64,
    pub eta: f64,
}

impl Atom {
    /// `omega = eta (1 - eta)`.
    pub fn omega(&self) -> f64 {
        self.eta * (1.0 - self.eta)
    }
}

/// A law of `X` on finitely many points with `eta(x) = P(Y = 1 | X = x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, LossError> {
        let Some(first) = atoms.first() else {
            return Err(LossError::Distribution("no atoms".into()));
        };
        let dim = first.x.len();
        let mut total = 0.0;
        for (i, atom) in atoms.iter().enumerate() {
            if atom.x.len() != dim {
                return Err(LossError::Distribution(format!(
                    "atom {i} has {} features, expected {dim}",
                    atom.x.len()
                )));
            }
            if atom.x.iter().any(|v| !v.is_finite()) {
                return Err(LossError::Distribution(format!("atom {i} has a non-finite feature")));
            }
            if !(atom.p > 0.0 && atom.p.is_finite()) {
                return Err(LossError::Distribution(format!(
                    "atom {i} has probability {}",
                    atom.p
                )));
            }
            if !(0.0..=1.0).contains(&atom.eta) {
                return Err(LossError::Distribution(format!("atom {i} has eta {}", atom.eta)));
            }
            total += atom.p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LossError::Distribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    /// Equal weights on `points`.
    pub fn uniform(points: Vec<(Vec<f64>, f64)>) -> Result<Self, LossError> {
        let k = points.len();
        let atoms = points
            .into_iter()
            .map(|(x, eta)| Atom {
                x,
                p: 1.0 / k as f64,
                eta,
            })
            .collect::<Vec<_>>();
        // repair the last weight so the sum is 1 up to a single rounding
        let mut atoms = atoms;
        if let Some(last) = atoms.last_mut() {
            last.p = 1.0 - (k - 1) as f64 * (1.0 / k as f64);
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].x.len()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.atoms.iter().map(|a| a.x.clone()).collect()
    }
}

/// `E[loss(Y f(X))]` given the values of `f` on the atoms, in atom order.
pub fn risk_on_atoms(
    dist: &DiscreteDistribution,
    values: &[f64],
    loss: LossKind,
    cp: &CostParams,
) -> Result<f64, LossError> {
    if values.len() != dist.len() {
        return Err(LossError::Length(values.len(), dist.len()));
    }
    let mut risk = 0.0;
    for (atom, &f) in dist.atoms.iter().zip(values) {
        if !f.is_finite() {
            return Err(LossError::NonFinite);
        }
        risk += atom.p * (atom.eta * loss.eval(f, cp)? + (1.0 - atom.eta) * loss.eval(-f, cp)?);
    }
    Ok(risk)
}

/// Exact population risk of `f = sum_j coeffs[j] f_j`.
pub fn population_risk(
    dist: &DiscreteDistribution,
    dict: &Dictionary,
    coeffs: &[f64],
    loss: LossKind,
    cp: &CostParams,
) -> Result<f64, LossError> {
    let values = dict.combine(&dist.points(), coeffs)?;
    risk_on_atoms(dist, &values, loss, cp)
}

/// `E[min(eta, 1 - eta, d)]`, the smallest achievable reject-loss risk.
pub fn bayes_risk(dist: &DiscreteDistribution, cp: &CostParams) -> f64 {
    dist.atoms
        .iter()
        .map(|a| a.p * a.eta.min(1.0 - a.eta).min(cp.d))
        .sum()
}

/// Values of the optimal discriminant on the atoms.
pub fn bayes_values(dist: &DiscreteDistribution, cp: &CostParams) -> Vec<f64> {
    dist.atoms
        .iter()
        .map(|a| bayes_discriminant(a.eta, cp))
        .collect()
}
