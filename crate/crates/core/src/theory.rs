//! Population-level objects on finite-support laws.
//!
//! Every quantity here is an exact atom sum except `kappa_estimate`, which
//! searches a non-convex cone and only ever reports an upper estimate.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dictionary::{dot, Dictionary};
use crate::losses::{
    bayes_values, risk_on_atoms, CostParams, DiscreteDistribution, LossError, LossKind,
};
use crate::train::{fit_population, l1, log_grid, TrainError};

/// Relative slack allowed when comparing two exact atom sums.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("theta is identically zero, the cone is empty")]
    ZeroTheta,
    #[error("theta has {0} entries, Psi is {1} x {1}")]
    Length(usize, usize),
    #[error("cone constant must be at least 1, got {0}")]
    ConeConstant(f64),
    #[error("grid must be non-empty with entries in (0, 1]")]
    Grid,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// A law, a dictionary and the quantities derived from both.
#[derive(Debug, Clone)]
pub struct TheoryContext {
    pub dist: DiscreteDistribution,
    pub dict: Dictionary,
    pub cp: CostParams,
    /// `features[k][j] = f_j(x_k)`.
    pub features: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub f0: Vec<f64>,
}

impl TheoryContext {
    pub fn new(dist: DiscreteDistribution, dict: Dictionary, cp: CostParams) -> Result<Self, TheoryError> {
        let features = dist
            .atoms()
            .iter()
            .map(|a| dict.eval(&a.x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(LossError::from)?;
        let psi = psi_from_features(&dist, &features, dict.len());
        let f0 = bayes_values(&dist, &cp);
        Ok(Self {
            dist,
            dict,
            cp,
            features,
            psi,
            f0,
        })
    }

    /// `f_lambda` on the atoms.
    pub fn values(&self, lambda: &[f64]) -> Vec<f64> {
        self.features.iter().map(|row| dot(row, lambda)).collect()
    }

    pub fn phi_risk(&self, values: &[f64]) -> Result<f64, TheoryError> {
        Ok(risk_on_atoms(&self.dist, values, LossKind::Hinge, &self.cp)?)
    }

    pub fn ell_risk(&self, values: &[f64]) -> Result<f64, TheoryError> {
        Ok(risk_on_atoms(&self.dist, values, LossKind::Reject, &self.cp)?)
    }

    /// `E^{1/2}[g(X)^2 omega(X)]`.
    pub fn weighted_norm(&self, g: &[f64]) -> f64 {
        self.dist
            .atoms()
            .iter()
            .zip(g)
            .map(|(a, v)| a.p * v * v * a.omega())
            .sum::<f64>()
            .sqrt()
    }
}

fn psi_from_features(dist: &DiscreteDistribution, features: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let mut psi = vec![vec![0.0; m]; m];
    for (atom, f) in dist.atoms().iter().zip(features) {
        let w = 4.0 * atom.p * atom.omega();
        if w == 0.0 {
            continue;
        }
        for i in 0..m {
            for j in i..m {
                psi[i][j] += w * f[i] * f[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            psi[i][j] = psi[j][i];
        }
    }
    psi
}

/// `Psi_ij = 4 E[f_i(X) f_j(X) omega(X)]`.
pub fn gram_psi(dist: &DiscreteDistribution, dict: &Dictionary) -> Result<Vec<Vec<f64>>, TheoryError> {
    let features = dist
        .atoms()
        .iter()
        .map(|a| dict.eval(&a.x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(LossError::from)?;
    Ok(psi_from_features(dist, &features, dict.len()))
}

/// Budget and seed for the cone search.
#[derive(Debug, Clone)]
pub struct KappaSearch {
    pub samples: usize,
    pub refine_steps: usize,
    pub seed: u64,
    /// Extra starting directions, e.g. certificates from a smaller cone.
    pub warm_starts: Vec<Vec<f64>>,
}

impl Default for KappaSearch {
    fn default() -> Self {
        Self {
            samples: 2000,
            refine_steps: 400,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

/// Smallest ratio found and the direction attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaEstimate {
    /// Upper estimate of `kappa^2(theta, c)`.
    pub kappa_sq_upper: f64,
    pub certificate: Vec<f64>,
}

struct Cone<'a> {
    psi: &'a [Vec<f64>],
    support: Vec<bool>,
    c: f64,
}

impl Cone<'_> {
    fn split_norms(&self, delta: &[f64]) -> (f64, f64) {
        let (mut l2_in, mut l1_out) = (0.0, 0.0);
        for (v, &inside) in delta.iter().zip(&self.support) {
            if inside {
                l2_in += v * v;
            } else {
                l1_out += v.abs();
            }
        }
        (l2_in, l1_out)
    }

    /// Shrinks the off-support part onto the cone and rescales so that
    /// `|delta_I|_2 = 1`. `None` when `delta_I` vanishes.
    fn project(&self, delta: &mut [f64]) -> Option<()> {
        let (l2_in, l1_out) = self.split_norms(delta);
        if !(l2_in > 0.0) {
            return None;
        }
        let l1_in: f64 = delta
            .iter()
            .zip(&self.support)
            .filter(|(_, &s)| s)
            .map(|(v, _)| v.abs())
            .sum();
        if l1_out > self.c * l1_in {
            let shrink = self.c * l1_in / l1_out;
            for (v, &inside) in delta.iter_mut().zip(&self.support) {
                if !inside {
                    *v *= shrink;
                }
            }
        }
        let scale = 1.0 / l2_in.sqrt();
        delta.iter_mut().for_each(|v| *v *= scale);
        Some(())
    }

    fn ratio(&self, delta: &[f64]) -> f64 {
        let (l2_in, _) = self.split_norms(delta);
        let quad: f64 = self
            .psi
            .iter()
            .zip(delta)
            .map(|(row, di)| di * dot(row, delta))
            .sum();
        quad.max(0.0) / (4.0 * l2_in)
    }
}

fn smallest_eigenvector(psi: &[Vec<f64>], index: &[usize]) -> Vec<f64> {
    let k = index.len();
    let sub = DMatrix::from_fn(k, k, |i, j| psi[index[i]][index[j]]);
    let eig = SymmetricEigen::new(sub);
    let (pos, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    eig.eigenvectors.column(pos).iter().copied().collect()
}

/// Upper estimate of `kappa^2(theta, c)`, the infimum of
/// `delta' Psi delta / (4 |delta_I|_2^2)` over
/// `|delta_{I^c}|_1 <= c |delta_I|_1`, `I = supp(theta)`.
pub fn kappa_estimate(
    psi: &[Vec<f64>],
    theta: &[f64],
    c: f64,
    search: &KappaSearch,
) -> Result<KappaEstimate, TheoryError> {
    let m = psi.len();
    if theta.len() != m {
        return Err(TheoryError::Length(theta.len(), m));
    }
    if !(c >= 1.0) {
        return Err(TheoryError::ConeConstant(c));
    }
    let support: Vec<bool> = theta.iter().map(|&t| t != 0.0).collect();
    if !support.iter().any(|&s| s) {
        return Err(TheoryError::ZeroTheta);
    }
    let cone = Cone { psi, support, c };
    let inside: Vec<usize> = (0..m).filter(|&j| cone.support[j]).collect();
    let outside: Vec<usize> = (0..m).filter(|&j| !cone.support[j]).collect();

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    // restricted to I the infimum is the smallest eigenvalue of Psi_II / 4
    let mut on_support = vec![0.0; m];
    for (&j, v) in inside.iter().zip(smallest_eigenvector(psi, &inside)) {
        on_support[j] = v;
    }
    candidates.push(on_support);
    let all: Vec<usize> = (0..m).collect();
    candidates.push(smallest_eigenvector(psi, &all));
    candidates.extend(search.warm_starts.iter().filter(|w| w.len() == m).cloned());

    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    for _ in 0..search.samples {
        let mut delta = vec![0.0_f64; m];
        for &j in &inside {
            delta[j] = rng.sample(StandardNormal);
        }
        if !outside.is_empty() {
            let l1_in: f64 = inside.iter().map(|&j| delta[j].abs()).sum();
            let mut out: Vec<f64> = outside.iter().map(|_| rng.sample(StandardNormal)).collect();
            // sparse off-support directions reach the cone's corners
            if rng.random_bool(0.5) {
                let keep = rng.random_range(0..outside.len());
                out.iter_mut().enumerate().for_each(|(t, v)| {
                    if t != keep {
                        *v = 0.0;
                    }
                });
            }
            let l1_out: f64 = out.iter().map(|v| v.abs()).sum();
            if l1_out > 0.0 {
                let u: f64 = rng.random::<f64>().sqrt();
                let scale = u * c * l1_in / l1_out;
                for (&j, v) in outside.iter().zip(out) {
                    delta[j] = v * scale;
                }
            }
        }
        candidates.push(delta);
    }

    let mut scored: Vec<(f64, Vec<f64>)> = candidates
        .into_iter()
        .filter_map(|mut d| {
            cone.project(&mut d)?;
            Some((cone.ratio(&d), d))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(5);

    let mut best = scored[0].clone();
    for (mut value, mut delta) in scored {
        let mut step = 0.5;
        let mut failures = 0;
        for _ in 0..search.refine_steps {
            if step < 1e-9 {
                break;
            }
            let mut trial: Vec<f64> = delta
                .iter()
                .map(|v| v + step * rng.sample::<f64, _>(StandardNormal) / (m as f64).sqrt())
                .collect();
            if cone.project(&mut trial).is_none() {
                continue;
            }
            let r = cone.ratio(&trial);
            if r < value {
                value = r;
                delta = trial;
                failures = 0;
            } else {
                failures += 1;
                if failures == 20 {
                    step *= 0.5;
                    failures = 0;
                }
            }
        }
        if value < best.0 {
            best = (value, delta);
        }
    }
    Ok(KappaEstimate {
        kappa_sq_upper: best.0,
        certificate: best.1,
    })
}

/// Fitted margin-condition exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Complexity {
    /// `P{|eta - d| <= t} <= a t^alpha` (and likewise at `1 - d`) for all `t > 0`.
    Finite { alpha: f64, a: f64 },
    /// No atom within the smallest grid distance of `d` or `1 - d`; `gap` is
    /// the smallest such distance.
    Infinite { gap: f64 },
}

/// `t` grid used when none is given.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(0.005, 0.2, 20)
}

/// `G(t) = max(P{|eta - d| <= t}, P{|eta - (1 - d)| <= t})`, by binary search
/// in two sorted distance tables.
struct MarginMass {
    tables: [Vec<(f64, f64)>; 2],
}

impl MarginMass {
    fn new(dist: &DiscreteDistribution, d: f64) -> Self {
        let table = |centre: f64| {
            let mut v: Vec<(f64, f64)> = dist.atoms().iter().map(|a| ((a.eta - centre).abs(), a.p)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            v.into_iter()
                .map(|(t, p)| {
                    acc += p;
                    (t, acc)
                })
                .collect()
        };
        Self {
            tables: [table(d), table(1.0 - d)],
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.tables
            .iter()
            .map(|tab| {
                let k = tab.partition_point(|&(dist, _)| dist <= t);
                if k == 0 { 0.0 } else { tab[k - 1].1 }
            })
            .fold(0.0, f64::max)
    }

    fn jumps(&self) -> impl Iterator<Item = f64> + '_ {
        self.tables.iter().flat_map(|tab| tab.iter().map(|&(t, _)| t))
    }

    fn gap(&self) -> f64 {
        self.tables.iter().map(|tab| tab[0].0).fold(f64::INFINITY, f64::min)
    }
}

/// The smallest `A >= 1` with `G(t) <= A t^alpha` for every `t > 0`.
///
/// `G` is a right-continuous step function, so the supremum of
/// `G(t) / t^alpha` is attained at a jump.
pub fn exact_constant(dist: &DiscreteDistribution, d: f64, alpha: f64) -> f64 {
    let mass = MarginMass::new(dist, d);
    mass.jumps()
        .map(|t| {
            let g = mass.at(t);
            if t == 0.0 {
                if alpha == 0.0 { g } else { f64::INFINITY }
            } else {
                g / t.powf(alpha)
            }
        })
        .fold(1.0, f64::max)
}

/// Whether `G(t) <= A t^alpha` at every grid point.
pub fn margin_condition_holds(dist: &DiscreteDistribution, d: f64, alpha: f64, a: f64, t_grid: &[f64]) -> bool {
    let mass = MarginMass::new(dist, d);
    t_grid.iter().all(|&t| mass.at(t) <= a * t.powf(alpha) * (1.0 + ROUNDING))
}

/// Fits `alpha` as the log-log slope of `G` over `t_grid`, floored at 0,
/// and returns the exact matching `A`.
pub fn complexity_estimate(dist: &DiscreteDistribution, d: f64, t_grid: &[f64]) -> Result<Complexity, TheoryError> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(TheoryError::Grid);
    }
    let mass = MarginMass::new(dist, d);
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if mass.at(t_min) == 0.0 {
        return Ok(Complexity::Infinite { gap: mass.gap() });
    }
    if mass.gap() == 0.0 {
        // an atom sits exactly on a threshold
        return Ok(Complexity::Finite { alpha: 0.0, a: 1.0 });
    }
    let points: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| (t.ln(), mass.at(t)))
        .filter(|&(_, g)| g > 0.0)
        .map(|(lt, g)| (lt, g.ln()))
        .collect();
    let alpha = if points.len() < 2 {
        0.0
    } else {
        let k = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
        let my = points.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 }
    };
    Ok(Complexity::Finite {
        alpha,
        a: exact_constant(dist, d, alpha),
    })
}

/// One evaluated instance of the weighted-norm inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBoundCase {
    pub lambda: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormBoundReport {
    Checked {
        alpha: f64,
        a: f64,
        cases: usize,
        violations: Vec<NormBoundCase>,
        /// Smallest `rhs - lhs` seen, with its case.
        tightest: NormBoundCase,
    },
    /// `alpha` is infinite, the inequality is not binding.
    Skipped { gap: f64 },
}

/// `|f - f0|^{2+2a} <= 4 A (2d)^a |f - f0|_inf^{2+a} (Delta R_phi(f))^a`
/// for each `f = f_lambda`, with `|g| = E^{1/2}[g^2 omega]`.
pub fn check_weighted_norm_bound(
    ctx: &TheoryContext,
    complexity: Complexity,
    lambdas: &[Vec<f64>],
) -> Result<NormBoundReport, TheoryError> {
    let (alpha, a) = match complexity {
        Complexity::Finite { alpha, a } => (alpha, a),
        Complexity::Infinite { gap } => return Ok(NormBoundReport::Skipped { gap }),
    };
    let base = ctx.phi_risk(&ctx.f0)?;
    let d = ctx.cp.d();
    let mut violations = Vec::new();
    let mut tightest: Option<NormBoundCase> = None;
    for lambda in lambdas {
        let f = ctx.values(lambda);
        let diff: Vec<f64> = f.iter().zip(&ctx.f0).map(|(x, y)| x - y).collect();
        let norm = ctx.weighted_norm(&diff);
        let sup = diff.iter().fold(0.0, |s: f64, v| s.max(v.abs()));
        let excess = (ctx.phi_risk(&f)? - base).max(0.0);
        let lhs = norm.powf(2.0 + 2.0 * alpha);
        let rhs = 4.0 * a * (2.0 * d).powf(alpha) * sup.powf(2.0 + alpha) * excess.powf(alpha);
        let case = NormBoundCase {
            lambda: lambda.clone(),
            lhs,
            rhs,
        };
        if lhs > rhs * (1.0 + 1e-9) + 1e-15 {
            violations.push(case.clone());
        }
        if tightest.as_ref().map_or(true, |t| rhs - lhs < t.rhs - t.lhs) {
            tightest = Some(case);
        }
    }
    Ok(NormBoundReport::Checked {
        alpha,
        a,
        cases: lambdas.len(),
        violations,
        tightest: tightest.unwrap_or(NormBoundCase {
            lambda: Vec::new(),
            lhs: 0.0,
            rhs: 0.0,
        }),
    })
}

/// One grid point of the regularization path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub r: f64,
    pub lambda: Vec<f64>,
    pub l1_norm: f64,
    /// `sum_{j not in I0} |lambda_j(r) - lambda_j(0)|`.
    pub off_support: f64,
    /// `sum_{j in I0} |lambda_j(r) - lambda_j(0)|`.
    pub on_support: f64,
    /// `R_phi(f_lambda(r)) - R_phi(f_lambda(0))`.
    pub risk_gap: f64,
    pub norm_ok: bool,
    pub cone_ok: bool,
}

impl PathPoint {
    /// `|lambda(r) - lambda(0)|_1`.
    pub fn distance(&self) -> f64 {
        self.off_support + self.on_support
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub lambda0: Vec<f64>,
    pub support0: Vec<usize>,
    pub risk0: f64,
    pub path: Vec<PathPoint>,
    /// Largest grid `r` such that `lambda(s) = lambda(0)` for every grid
    /// `s <= r`, to the plateau tolerance.
    pub plateau_end: Option<f64>,
    pub convergence_ok: bool,
}

/// Tolerance on LP outputs.
pub const LP_TOLERANCE: f64 = 1e-7;
/// Tolerance for declaring `lambda(r) = lambda(0)`.
pub const PLATEAU_TOLERANCE: f64 = 1e-6;

/// Norm monotonicity, the support cone and convergence of the risk along
/// the population regularization path.
pub fn check_regularization_path(ctx: &TheoryContext, r_grid: &[f64]) -> Result<PathReport, TheoryError> {
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(TheoryError::Grid);
    }
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let lambda0 = fit_population(&ctx.dist, &ctx.dict, &ctx.cp, 0.0)?.lambda;
    let support0: Vec<usize> = (0..lambda0.len()).filter(|&j| lambda0[j].abs() > 1e-9).collect();
    let risk0 = ctx.phi_risk(&ctx.values(&lambda0))?;
    let norm0 = l1(&lambda0);
    let mut path = Vec::with_capacity(grid.len());
    for &r in &grid {
        let lambda = fit_population(&ctx.dist, &ctx.dict, &ctx.cp, r)?.lambda;
        let (mut off, mut on) = (0.0, 0.0);
        for (j, (x, y)) in lambda.iter().zip(&lambda0).enumerate() {
            if support0.contains(&j) {
                on += (x - y).abs();
            } else {
                off += (x - y).abs();
            }
        }
        let l1_norm = l1(&lambda);
        let risk_gap = ctx.phi_risk(&ctx.values(&lambda))? - risk0;
        path.push(PathPoint {
            r,
            l1_norm,
            off_support: off,
            on_support: on,
            risk_gap,
            norm_ok: l1_norm <= norm0 + LP_TOLERANCE,
            cone_ok: off <= on + LP_TOLERANCE,
            lambda,
        });
    }
    let mut plateau_end = None;
    for p in &path {
        if p.distance() <= PLATEAU_TOLERANCE && p.risk_gap.abs() <= PLATEAU_TOLERANCE {
            plateau_end = Some(p.r);
        } else {
            break;
        }
    }
    let first = &path[0];
    let last = &path[path.len() - 1];
    let convergence_ok = (first.risk_gap <= last.risk_gap)
        && (norm0 > 10.0 || first.risk_gap < 1e-3);
    Ok(PathReport {
        lambda0,
        support0,
        risk0,
        path,
        plateau_end,
        convergence_ok,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub cases: usize,
    pub violations: usize,
    /// Smallest `Delta R_phi - Delta R_ell` seen.
    pub min_slack: f64,
    pub witness: Vec<f64>,
}

/// `Delta R_ell(f) <= Delta R_phi(f)` for each `f`, given by its atom values.
pub fn check_excess_domination(ctx: &TheoryContext, functions: &[Vec<f64>]) -> Result<DominationReport, TheoryError> {
    let ell0 = ctx.ell_risk(&ctx.f0)?;
    let phi0 = ctx.phi_risk(&ctx.f0)?;
    let mut report = DominationReport {
        cases: functions.len(),
        violations: 0,
        min_slack: f64::INFINITY,
        witness: Vec::new(),
    };
    for f in functions {
        let d_ell = ctx.ell_risk(f)? - ell0;
        let d_phi = ctx.phi_risk(f)? - phi0;
        let slack = d_phi - d_ell;
        if slack < -ROUNDING * (1.0 + d_phi.abs()) {
            report.violations += 1;
        }
        if slack < report.min_slack {
            report.min_slack = slack;
            report.witness = f.clone();
        }
    }
    Ok(report)
}

/// Outcome of a named check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
        })
    }
}

/// A row of the diagnostics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub status: CheckStatus,
    pub slack: f64,
    pub witness: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(";")
}

fn status(ok: bool) -> CheckStatus {
    if ok { CheckStatus::Pass } else { CheckStatus::Fail }
}

/// Which diagnostics to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Psi,
    Kappa,
    Complexity,
    NormBound,
    Path,
    Domination,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::Psi,
        Check::Kappa,
        Check::Complexity,
        Check::NormBound,
        Check::Path,
        Check::Domination,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "psi" => Check::Psi,
            "kappa" => Check::Kappa,
            "complexity" => Check::Complexity,
            "norm_bound" => Check::NormBound,
            "path" => Check::Path,
            "domination" => Check::Domination,
            _ => return None,
        })
    }
}

/// Settings shared by the diagnostics.
#[derive(Debug, Clone)]
pub struct DiagnoseConfig {
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub random_cases: usize,
    pub seed: u64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            r_grid: log_grid(1e-4, 1.0, 20),
            t_grid: default_t_grid(),
            random_cases: 500,
            seed: 0,
        }
    }
}

/// Random coefficient vectors with entries in `[-scale, scale]`.
pub fn random_lambdas(m: usize, count: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..m).map(|_| rng.random_range(-scale..=scale)).collect())
        .collect()
}

/// Random atom values, piecewise constant on the atoms.
pub fn random_functions(atoms: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..atoms)
                .map(|_| {
                    // mix wide values with values near the loss kinks
                    if rng.random_bool(0.3) {
                        [-1.0, -0.5, 0.0, 0.5, 1.0][rng.random_range(0..5)]
                    } else {
                        rng.random_range(-3.0..=3.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Runs the requested checks and returns one CSV row each.
pub fn diagnose(ctx: &TheoryContext, checks: &[Check], cfg: &DiagnoseConfig) -> Result<Vec<CheckRow>, TheoryError> {
    let mut rows = Vec::new();
    let m = ctx.dict.len();
    for check in checks {
        match check {
            Check::Psi => {
                let mat = DMatrix::from_fn(m, m, |i, j| ctx.psi[i][j]);
                let min_eig = SymmetricEigen::new(mat).eigenvalues.min();
                let asym = (0..m)
                    .flat_map(|i| (0..m).map(move |j| (i, j)))
                    .map(|(i, j)| (ctx.psi[i][j] - ctx.psi[j][i]).abs())
                    .fold(0.0, f64::max);
                rows.push(CheckRow {
                    name: "psi_psd".into(),
                    status: status(min_eig >= -1e-9 && asym <= 1e-12),
                    slack: min_eig,
                    witness: format!("min_eigenvalue={min_eig:.17e}"),
                });
            }
            Check::Kappa => {
                let lambda0 = fit_population(&ctx.dist, &ctx.dict, &ctx.cp, 0.0)?.lambda;
                let theta: Vec<f64> = lambda0.iter().map(|&v| if v.abs() > 1e-9 { v } else { 0.0 }).collect();
                let row = match kappa_estimate(&ctx.psi, &theta, 1.0, &KappaSearch { seed: cfg.seed, ..KappaSearch::default() }) {
                    Ok(est) => CheckRow {
                        name: "kappa_upper".into(),
                        status: CheckStatus::Pass,
                        slack: est.kappa_sq_upper,
                        witness: join(&est.certificate),
                    },
                    Err(TheoryError::ZeroTheta) => CheckRow {
                        name: "kappa_upper".into(),
                        status: CheckStatus::Skipped,
                        slack: 0.0,
                        witness: "lambda(0)=0".into(),
                    },
                    Err(e) => return Err(e),
                };
                rows.push(row);
            }
            Check::Complexity => {
                let row = match complexity_estimate(&ctx.dist, ctx.cp.d(), &cfg.t_grid)? {
                    Complexity::Finite { alpha, a } => CheckRow {
                        name: "complexity".into(),
                        status: status(margin_condition_holds(&ctx.dist, ctx.cp.d(), alpha, a, &cfg.t_grid)),
                        slack: alpha,
                        witness: format!("alpha={alpha:.17e};A={a:.17e}"),
                    },
                    Complexity::Infinite { gap } => CheckRow {
                        name: "complexity".into(),
                        status: CheckStatus::Pass,
                        slack: f64::INFINITY,
                        witness: format!("alpha=inf;gap={gap:.17e}"),
                    },
                };
                rows.push(row);
            }
            Check::NormBound => {
                let complexity = complexity_estimate(&ctx.dist, ctx.cp.d(), &cfg.t_grid)?;
                let lambdas = random_lambdas(m, cfg.random_cases, 2.0, cfg.seed);
                let row = match check_weighted_norm_bound(ctx, complexity, &lambdas)? {
                    NormBoundReport::Checked { violations, tightest, .. } => CheckRow {
                        name: "norm_bound".into(),
                        status: status(violations.is_empty()),
                        slack: tightest.rhs - tightest.lhs,
                        witness: join(&violations.first().unwrap_or(&tightest).lambda),
                    },
                    NormBoundReport::Skipped { gap } => CheckRow {
                        name: "norm_bound".into(),
                        status: CheckStatus::Skipped,
                        slack: f64::INFINITY,
                        witness: format!("alpha=inf;gap={gap:.17e}"),
                    },
                };
                rows.push(row);
            }
            Check::Path => {
                let rep = check_regularization_path(ctx, &cfg.r_grid)?;
                let worst_norm = rep
                    .path
                    .iter()
                    .min_by(|a, b| (l1(&rep.lambda0) - a.l1_norm).total_cmp(&(l1(&rep.lambda0) - b.l1_norm)))
                    .expect("grid is non-empty");
                rows.push(CheckRow {
                    name: "path_norm".into(),
                    status: status(rep.path.iter().all(|p| p.norm_ok)),
                    slack: l1(&rep.lambda0) - worst_norm.l1_norm,
                    witness: format!("r={:.17e}", worst_norm.r),
                });
                let worst_cone = rep
                    .path
                    .iter()
                    .min_by(|a, b| (a.on_support - a.off_support).total_cmp(&(b.on_support - b.off_support)))
                    .expect("grid is non-empty");
                rows.push(CheckRow {
                    name: "path_cone".into(),
                    status: status(rep.path.iter().all(|p| p.cone_ok)),
                    slack: worst_cone.on_support - worst_cone.off_support,
                    witness: format!("r={:.17e}", worst_cone.r),
                });
                let first = &rep.path[0];
                rows.push(CheckRow {
                    name: "path_convergence".into(),
                    status: status(rep.convergence_ok),
                    slack: first.risk_gap,
                    witness: format!("r={:.17e}", first.r),
                });
                rows.push(match rep.plateau_end {
                    Some(r) => CheckRow {
                        name: "plateau verified".into(),
                        status: CheckStatus::Pass,
                        slack: r,
                        witness: format!("lambda0={}", join(&rep.lambda0)),
                    },
                    None => CheckRow {
                        name: "plateau".into(),
                        status: CheckStatus::Skipped,
                        slack: first.distance(),
                        witness: format!("r={:.17e}", first.r),
                    },
                });
            }
            Check::Domination => {
                let functions = random_functions(ctx.dist.len(), cfg.random_cases, cfg.seed);
                let rep = check_excess_domination(ctx, &functions)?;
                rows.push(CheckRow {
                    name: "excess_domination".into(),
                    status: status(rep.violations == 0),
                    slack: rep.min_slack,
                    witness: join(&rep.witness),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictSpec;

    fn identity(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect()).collect()
    }

    #[test]
    fn kappa_identity_is_a_quarter() {
        let psi = identity(4);
        for c in [1.0, 3.0] {
            let est = kappa_estimate(&psi, &[1.0, 0.0, -2.0, 0.0], c, &KappaSearch::default()).unwrap();
            assert!((est.kappa_sq_upper - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_zero_matrix_and_errors() {
        let psi = vec![vec![0.0; 3]; 3];
        let est = kappa_estimate(&psi, &[0.0, 1.0, 0.0], 1.0, &KappaSearch::default()).unwrap();
        assert_eq!(est.kappa_sq_upper, 0.0);
        assert!(matches!(kappa_estimate(&psi, &[0.0; 3], 1.0, &KappaSearch::default()), Err(TheoryError::ZeroTheta)));
        assert!(kappa_estimate(&psi, &[1.0; 2], 1.0, &KappaSearch::default()).is_err());
        assert!(kappa_estimate(&psi, &[1.0; 3], 0.5, &KappaSearch::default()).is_err());
    }

    #[test]
    fn kappa_diagonal_example() {
        let psi = vec![vec![1.0, 0.0], vec![0.0, 4.0]];
        let est = kappa_estimate(&psi, &[1.0, 0.0], 1.0, &KappaSearch::default()).unwrap();
        // analytic: min over |t| <= 1 of (1 + 4 t^2) / 4
        let analytic = (0..=2000)
            .map(|k| -1.0 + f64::from(k) / 1000.0)
            .map(|t| (1.0 + 4.0 * t * t) / 4.0)
            .fold(f64::INFINITY, f64::min);
        assert!((est.kappa_sq_upper - analytic).abs() < 1e-12);
    }

    #[test]
    fn kappa_finds_off_support_directions() {
        // a negatively correlated off-support column lowers the ratio
        let psi = vec![vec![1.0, -0.9], vec![-0.9, 1.0]];
        let est = kappa_estimate(&psi, &[1.0, 0.0], 1.0, &KappaSearch::default()).unwrap();
        // min over |t| <= 1 of (1 - 1.8 t + t^2) / 4 at t = 0.9
        assert!((est.kappa_sq_upper - 0.19 / 4.0).abs() < 1e-6, "{}", est.kappa_sq_upper);
    }

    #[test]
    fn psi_examples() {
        let dist = DiscreteDistribution::uniform(vec![(vec![0.0], 0.5), (vec![1.0], 0.5)]).unwrap();
        let dict = Dictionary::new(DictSpec::Constant { dim: 1 }).unwrap();
        assert!((gram_psi(&dist, &dict).unwrap()[0][0] - 1.0).abs() < 1e-15);
        let dist = DiscreteDistribution::uniform(vec![(vec![0.0], 0.0), (vec![1.0], 1.0)]).unwrap();
        let dict = Dictionary::linear(1).unwrap();
        assert_eq!(gram_psi(&dist, &dict).unwrap(), vec![vec![0.0]]);
    }

    fn uniform_eta(k: usize) -> DiscreteDistribution {
        DiscreteDistribution::uniform((0..k).map(|i| (vec![i as f64], (i as f64 + 0.5) / k as f64)).collect()).unwrap()
    }

    #[test]
    fn complexity_of_uniform_eta_is_one() {
        let dist = uniform_eta(1000);
        match complexity_estimate(&dist, 0.25, &default_t_grid()).unwrap() {
            Complexity::Finite { alpha, a } => {
                assert!((alpha - 1.0).abs() < 0.1, "alpha = {alpha}");
                assert!(margin_condition_holds(&dist, 0.25, alpha, a, &log_grid(1e-4, 1.0, 200)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn complexity_far_from_thresholds_is_infinite() {
        let dist = DiscreteDistribution::uniform(vec![(vec![0.0], 0.0), (vec![1.0], 0.5), (vec![2.0], 0.96)]).unwrap();
        match complexity_estimate(&dist, 0.25, &default_t_grid()).unwrap() {
            Complexity::Infinite { gap } => assert!((gap - 0.21).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_exponent_is_always_admissible() {
        for k in [1, 7, 50] {
            let dist = uniform_eta(k);
            assert!(margin_condition_holds(&dist, 0.3, 0.0, 1.0, &log_grid(1e-4, 1.0, 50)));
        }
        assert!(complexity_estimate(&uniform_eta(3), 0.25, &[]).is_err());
    }

    #[test]
    fn atom_on_threshold_forces_zero_exponent() {
        let dist = DiscreteDistribution::uniform(vec![(vec![0.0], 0.25), (vec![1.0], 0.9)]).unwrap();
        assert_eq!(
            complexity_estimate(&dist, 0.25, &default_t_grid()).unwrap(),
            Complexity::Finite { alpha: 0.0, a: 1.0 }
        );
    }

    fn five_atoms(d: f64) -> TheoryContext {
        let dist = DiscreteDistribution::uniform(vec![
            (vec![-2.0], 0.05),
            (vec![-1.0], d - 0.003),
            (vec![0.0], 0.5),
            (vec![1.0], 1.0 - d + 0.004),
            (vec![2.0], 0.97),
        ])
        .unwrap();
        let dict = Dictionary::new(DictSpec::ConstantLinear { dim: 1 }).unwrap();
        TheoryContext::new(dist, dict, CostParams::with_default_tau(d).unwrap()).unwrap()
    }

    #[test]
    fn norm_bound_at_bayes_rule_is_zero() {
        let ctx = five_atoms(0.25);
        let cx = complexity_estimate(&ctx.dist, 0.25, &default_t_grid()).unwrap();
        let zero = ctx.f0.iter().map(|v| v - v).collect::<Vec<_>>();
        assert_eq!(ctx.weighted_norm(&zero), 0.0);
        let Complexity::Finite { alpha, .. } = cx else { panic!("{cx:?}") };
        assert!(alpha >= 0.0);
    }

    #[test]
    fn norm_bound_holds_on_random_coefficients() {
        for d in [0.25, 0.5] {
            let ctx = five_atoms(d);
            let cx = complexity_estimate(&ctx.dist, d, &default_t_grid()).unwrap();
            let rep = check_weighted_norm_bound(&ctx, cx, &random_lambdas(2, 200, 2.0, 11)).unwrap();
            match rep {
                NormBoundReport::Checked { violations, cases, .. } => {
                    assert_eq!(cases, 200);
                    assert!(violations.is_empty(), "{violations:?}");
                }
                NormBoundReport::Skipped { .. } => panic!("expected a finite exponent"),
            }
        }
    }

    #[test]
    fn domination_at_bayes_and_zero() {
        let ctx = five_atoms(0.25);
        let rep = check_excess_domination(&ctx, &[ctx.f0.clone()]).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.min_slack.abs() < 1e-15);
        let zero = vec![0.0; ctx.dist.len()];
        let rep = check_excess_domination(&ctx, &[zero.clone()]).unwrap();
        let bayes = crate::losses::bayes_risk(&ctx.dist, &ctx.cp);
        let d_ell = 0.25 - bayes;
        let d_phi = 1.0 - ctx.phi_risk(&ctx.f0).unwrap();
        assert!((rep.min_slack - (d_phi - d_ell)).abs() < 1e-14);
        assert!(d_ell <= d_phi);
    }

    fn plateau_ctx() -> TheoryContext {
        let dist = DiscreteDistribution::uniform(vec![(vec![-1.0], 0.0), (vec![0.0], 0.5), (vec![1.0], 1.0)]).unwrap();
        let dict = Dictionary::linear(1).unwrap();
        TheoryContext::new(dist, dict, CostParams::with_default_tau(0.25).unwrap()).unwrap()
    }

    #[test]
    fn plateau_below_outer_mass() {
        let ctx = plateau_ctx();
        let rep = check_regularization_path(&ctx, &log_grid(1e-3, 2.0, 20)).unwrap();
        assert!((rep.lambda0[0] - 1.0).abs() < 1e-9);
        // lambda(r) = 1 exactly when r < p(-1) + p(1) = 2/3
        for p in &rep.path {
            if p.r < 2.0 / 3.0 {
                assert!(p.distance() <= PLATEAU_TOLERANCE && p.risk_gap.abs() <= PLATEAU_TOLERANCE);
            } else {
                assert!(p.lambda[0].abs() < 1e-9);
            }
        }
        let end = rep.plateau_end.unwrap();
        assert!(end < 2.0 / 3.0);
        assert!(rep.path.iter().all(|p| p.norm_ok && p.cone_ok));
    }
}
