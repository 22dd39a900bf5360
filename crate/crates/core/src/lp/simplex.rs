//! Dense tableau simplex.
//!
//! Programs whose standard form has non-negative costs and a slack in every
//! row start from the all-slack basis, which is dual feasible, and are solved
//! by the dual simplex method. Everything else goes through the two-phase
//! primal method on a slightly perturbed right-hand side; the perturbation is
//! removed at the end and any basic variable it hid is repaired by dual
//! pivots.
//!
//! Pricing is Dantzig's rule with a Harris two-pass ratio test. After a run
//! of degenerate pivots both choices fall back to Bland's lowest-index rule
//! until the objective moves again. The pivot sequence is a function of the
//! input alone.

use super::standard::StandardForm;
use super::tolerance::{BLOW_UP, DEGENERATE_STREAK, FEASIBILITY, OPTIMALITY, PIVOT};
use super::{LpError, LpStatus};

const HARRIS_SLACK: f64 = 1e-9;
const PERTURBATION: f64 = 1e-6;
/// Basic values above `-CLEANUP` count as feasible after unperturbing.
const CLEANUP: f64 = 1e-11;

pub(crate) struct Outcome {
    pub status: LpStatus,
    /// Standard-form column values; empty unless optimal.
    pub values: Vec<f64>,
    pub iterations: usize,
}

struct Tableau {
    /// `rows + 1` rows of `width` entries; the last row holds reduced costs,
    /// the last column the right-hand side (negated objective in the cost row).
    data: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    fn cost_row(&self) -> &[f64] {
        self.row(self.rows)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    /// Runs pivots on columns `< active` until optimal or unbounded.
    fn optimize(&mut self, active: usize) -> Result<Step, LpError> {
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_STREAK;
            let Some(q) = self.entering(active, bland) else {
                return Ok(Step::Optimal);
            };
            let Some(r) = self.leaving(q, bland) else {
                return Ok(Step::Unbounded);
            };
            let step = self.at(r, self.rhs_col()) / self.at(r, q);
            if step <= FEASIBILITY * 1e-3 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q)?;
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::NumericalFailure(format!(
                    "no convergence after {} pivots",
                    self.iterations
                )));
            }
        }
    }

    fn entering(&self, active: usize, bland: bool) -> Option<usize> {
        let cost = &self.cost_row()[..active];
        if bland {
            return cost.iter().position(|&d| d < -OPTIMALITY);
        }
        let mut best = None;
        let mut best_val = -OPTIMALITY;
        for (j, &d) in cost.iter().enumerate() {
            if d < best_val {
                best_val = d;
                best = Some(j);
            }
        }
        best
    }

    /// Two-pass (Harris) ratio test: the step bound allows each basic
    /// variable to go `HARRIS_SLACK` negative, and among rows within that
    /// bound the largest pivot wins. In Bland mode the lowest basic index
    /// among rows attaining the exact minimum ratio wins.
    fn leaving(&self, q: usize, bland: bool) -> Option<usize> {
        let rhs = self.rhs_col();
        let candidates = || {
            (0..self.rows).filter_map(move |i| {
                let a = self.at(i, q);
                (a > PIVOT).then(|| (i, a, self.at(i, rhs).max(0.0)))
            })
        };
        if bland {
            let min_ratio = candidates()
                .map(|(_, a, b)| b / a)
                .fold(f64::INFINITY, f64::min);
            if !min_ratio.is_finite() {
                return None;
            }
            let limit = min_ratio + 1e-12 * (1.0 + min_ratio);
            return candidates()
                .filter(|&(_, a, b)| b / a <= limit)
                .min_by_key(|&(i, _, _)| self.basis[i])
                .map(|(i, _, _)| i);
        }
        let bound = candidates()
            .map(|(_, a, b)| (b + HARRIS_SLACK) / a)
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, a, b) in candidates() {
            if b / a <= bound && best.map_or(true, |(_, ba)| a > ba) {
                best = Some((i, a));
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, r: usize, q: usize) -> Result<(), LpError> {
        let w = self.width;
        let inv = 1.0 / self.at(r, q);
        let mut peak = 0.0f64;
        let mut nonzero = Vec::new();
        {
            let prow = &mut self.data[r * w..(r + 1) * w];
            for (j, v) in prow.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    peak = peak.max(v.abs());
                    nonzero.push(j);
                }
            }
            prow[q] = 1.0;
        }
        if !peak.is_finite() || peak > BLOW_UP {
            return Err(LpError::NumericalFailure(format!(
                "pivot row magnitude {peak:e} exceeds {BLOW_UP:e}"
            )));
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let sparse = nonzero.len() * 3 < w;
        let update = |row: &mut [f64]| {
            let f = row[q];
            if f == 0.0 {
                return;
            }
            if sparse {
                for &j in &nonzero {
                    row[j] -= f * prow[j];
                }
            } else {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
            }
            row[q] = 0.0;
        };
        before.chunks_exact_mut(w).for_each(update);
        after.chunks_exact_mut(w).for_each(update);
        self.basis[r] = q;
        Ok(())
    }

    /// Dual simplex pivots from a dual feasible basis until every basic
    /// value is non-negative. Returns `false` when a row proves the program
    /// infeasible. Leaving rows are chosen by most negative value and fall
    /// back to lowest basic index after a run of dual degenerate pivots.
    fn dual_simplex(&mut self, active: usize) -> Result<bool, LpError> {
        let rhs = self.rhs_col();
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let v = self.at(i, rhs);
                if v >= -CLEANUP {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((li, _)) if bland => self.basis[i] < self.basis[li],
                    Some((_, lv)) => v < lv,
                };
                if better {
                    leave = Some((i, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(true);
            };
            let Some((q, step)) = self.dual_entering(r, active, bland) else {
                return Ok(false);
            };
            if step <= OPTIMALITY {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q)?;
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::NumericalFailure(format!(
                    "no convergence after {} pivots",
                    self.iterations
                )));
            }
        }
    }

    /// Dual ratio test on row `r`. Harris style by default: reduced costs
    /// may go `HARRIS_SLACK` negative and the largest pivot within that bound
    /// wins. In Bland mode the lowest column attaining the exact minimum
    /// ratio wins. Returns the column and its ratio.
    fn dual_entering(&self, r: usize, active: usize, bland: bool) -> Option<(usize, f64)> {
        let cost = self.cost_row();
        let row = self.row(r);
        let ratio = |j: usize| cost[j].max(0.0) / -row[j];
        let eligible = (0..active).filter(|&j| row[j] < -PIVOT);
        if bland {
            let min_ratio = eligible.clone().map(ratio).fold(f64::INFINITY, f64::min);
            let limit = min_ratio + 1e-12 * (1.0 + min_ratio);
            return eligible
                .filter(|&j| ratio(j) <= limit)
                .map(|j| (j, ratio(j)))
                .next();
        }
        let bound = eligible
            .clone()
            .map(|j| (cost[j].max(0.0) + HARRIS_SLACK) / -row[j])
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in eligible {
            if ratio(j) <= bound && best.map_or(true, |(b, _)| -row[j] > -row[b]) {
                best = Some((j, ratio(j)));
            }
        }
        best
    }

    fn values(&self, ncols: usize) -> Vec<f64> {
        let mut z = vec![0.0; ncols];
        let rhs = self.rhs_col();
        for (i, &col) in self.basis.iter().enumerate() {
            if col < ncols {
                z[col] = self.at(i, rhs).max(0.0);
            }
        }
        z
    }
}

pub(crate) fn solve(sf: &StandardForm) -> Result<Outcome, LpError> {
    if sf.c.iter().all(|&c| c >= 0.0) && sf.slack_col.iter().all(Option::is_some) {
        return solve_from_slack_basis(sf);
    }
    let m = sf.num_rows();
    let n = sf.num_cols();

    // Row equilibration leaves the solution set unchanged. A slack appears
    // in a single row, so restoring its unit coefficient only rescales it.
    let mut a = sf.a.clone();
    let mut b = sf.b.clone();
    for ((row, rhs), unit) in a.iter_mut().zip(b.iter_mut()).zip(&sf.identity_col) {
        let scale = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale > 0.0 && scale != 1.0 {
            row.iter_mut().for_each(|v| *v /= scale);
            *rhs /= scale;
            if let Some(col) = *unit {
                row[col] = 1.0;
            }
        }
    }

    // Rows lacking a unit column get an artificial variable.
    let artificial_rows: Vec<usize> = (0..m)
        .filter(|&i| sf.identity_col[i].is_none())
        .collect();
    let k = artificial_rows.len();
    // Layout: real columns, artificials, perturbation column, right-hand side.
    let width = n + k + 2;
    let eps_col = n + k;
    let mut data = vec![0.0; (m + 1) * width];
    let mut basis = vec![0; m];
    for i in 0..m {
        let row = &mut data[i * width..(i + 1) * width];
        row[..n].copy_from_slice(&a[i]);
        let eps = perturbation(i, b[i]);
        row[eps_col] = eps;
        row[width - 1] = b[i] + eps;
        if let Some(col) = sf.identity_col[i] {
            basis[i] = col;
        }
    }
    for (t, &i) in artificial_rows.iter().enumerate() {
        data[i * width + n + t] = 1.0;
        basis[i] = n + t;
    }
    // Phase-one reduced costs: minus the sum of artificial rows.
    for &i in &artificial_rows {
        for j in (0..n).chain([eps_col, width - 1]) {
            data[m * width + j] -= data[i * width + j];
        }
    }

    let mut tab = Tableau {
        data,
        rows: m,
        width,
        basis,
        iterations: 0,
        max_iterations: 50_000 + 50 * (m + n),
    };

    if k > 0 {
        tab.optimize(n)?;
        let infeasibility = -(tab.at(m, width - 1) - tab.at(m, eps_col));
        if infeasibility > FEASIBILITY {
            return Ok(Outcome {
                status: LpStatus::Infeasible,
                values: Vec::new(),
                iterations: tab.iterations,
            });
        }
        tab = drop_artificials(tab, n)?;
    }

    // Phase-two reduced costs.
    let rows = tab.rows;
    let w = tab.width;
    {
        let (body, cost) = tab.data.split_at_mut(rows * w);
        cost.fill(0.0);
        cost[..n].copy_from_slice(&sf.c);
        for (i, &col) in tab.basis.iter().enumerate() {
            let cb = sf.c[col];
            if cb != 0.0 {
                let row = &body[i * w..(i + 1) * w];
                for (x, &v) in cost.iter_mut().zip(row) {
                    *x -= cb * v;
                }
            }
        }
        for &col in &tab.basis {
            cost[col] = 0.0;
        }
    }

    if let Step::Unbounded = tab.optimize(n)? {
        return Ok(Outcome {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            iterations: tab.iterations,
        });
    }

    // Remove the perturbation; the basis stays dual feasible, so any
    // basic variable that turns negative is repaired by dual simplex pivots.
    let eps_col = tab.width - 2;
    let rhs = tab.width - 1;
    for i in 0..=tab.rows {
        let e = tab.at(i, eps_col);
        tab.data[i * tab.width + rhs] -= e;
        tab.data[i * tab.width + eps_col] = 0.0;
    }
    if !tab.dual_simplex(n)? {
        return Ok(Outcome {
            status: LpStatus::Infeasible,
            values: Vec::new(),
            iterations: tab.iterations,
        });
    }
    Ok(Outcome {
        status: LpStatus::Optimal,
        values: tab.values(n),
        iterations: tab.iterations,
    })
}

/// Non-negative costs make the all-slack basis dual feasible, so the dual
/// simplex method starts there directly and needs no artificial phase.
fn solve_from_slack_basis(sf: &StandardForm) -> Result<Outcome, LpError> {
    let m = sf.num_rows();
    let n = sf.num_cols();
    let width = n + 2;
    let mut data = vec![0.0; (m + 1) * width];
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let col = sf.slack_col[i].expect("slack basis");
        let sign = sf.a[i][col];
        let scale = sign / sf.a[i].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let row = &mut data[i * width..(i + 1) * width];
        for (x, &v) in row.iter_mut().zip(&sf.a[i]) {
            *x = v * scale;
        }
        row[col] = 1.0;
        row[width - 1] = sf.b[i] * scale;
        basis.push(col);
    }
    data[m * width..m * width + n].copy_from_slice(&sf.c);
    let mut tab = Tableau {
        data,
        rows: m,
        width,
        basis,
        iterations: 0,
        max_iterations: 50_000 + 50 * (m + n),
    };
    if !tab.dual_simplex(n)? {
        return Ok(Outcome {
            status: LpStatus::Infeasible,
            values: Vec::new(),
            iterations: tab.iterations,
        });
    }
    Ok(Outcome {
        status: LpStatus::Optimal,
        values: tab.values(n),
        iterations: tab.iterations,
    })
}

/// Deterministic right-hand-side perturbation of row `i` against degeneracy.
fn perturbation(i: usize, b: f64) -> f64 {
    // Weyl sequence in [0, 1).
    let frac = (i as f64 * 0.618_033_988_749_895).fract();
    PERTURBATION * (1.0 + frac) * (1.0 + b.abs())
}

/// Pivots zero-level artificials out of the basis, deletes rows that turn
/// out redundant, and removes the artificial columns.
fn drop_artificials(mut tab: Tableau, n: usize) -> Result<Tableau, LpError> {
    let mut redundant = Vec::new();
    for i in 0..tab.rows {
        if tab.basis[i] < n {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            let v = tab.at(i, j).abs();
            if v > PIVOT && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        match best {
            Some((j, _)) => {
                tab.pivot(i, j)?;
                tab.iterations += 1;
            }
            None => redundant.push(i),
        }
    }

    let old_w = tab.width;
    let width = n + 2;
    let keep: Vec<usize> = (0..=tab.rows).filter(|i| !redundant.contains(i)).collect();
    let mut data = Vec::with_capacity(keep.len() * width);
    let mut basis = Vec::with_capacity(keep.len() - 1);
    for &i in &keep {
        let row = &tab.data[i * old_w..(i + 1) * old_w];
        data.extend_from_slice(&row[..n]);
        data.extend_from_slice(&row[old_w - 2..]);
        if i < tab.rows {
            basis.push(tab.basis[i]);
        }
    }
    Ok(Tableau {
        data,
        rows: basis.len(),
        width,
        basis,
        iterations: tab.iterations,
        max_iterations: tab.max_iterations,
    })
}
