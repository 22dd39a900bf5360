//! Dense linear programming.
//!
//! [`solve_lp`] runs a two-phase tableau simplex on the standard-form
//! conversion of a [`LinearProgram`]. [`enumerate_vertices_oracle`] solves the
//! same conversion by brute force and exists to check the simplex on small
//! problems.

mod oracle;
mod simplex;
mod standard;
pub mod tolerance;

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

pub use oracle::{enumerate_vertices_oracle, ORACLE_MAX_COLUMNS};
pub use standard::StandardForm;

/// Relation of a constraint row to its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    /// Signed violation of the row at `x`; zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Lower and upper bound of one variable; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarBound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl VarBound {
    pub const FREE: VarBound = VarBound {
        lower: None,
        upper: None,
    };
    pub const NON_NEGATIVE: VarBound = VarBound {
        lower: Some(0.0),
        upper: None,
    };

    pub fn new(lower: Option<f64>, upper: Option<f64>) -> Self {
        Self { lower, upper }
    }
}

impl Default for VarBound {
    fn default() -> Self {
        VarBound::NON_NEGATIVE
    }
}

/// `min objective·x` subject to `constraints` and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<VarBound>,
}

impl LinearProgram {
    /// A program with `objective` and every variable non-negative.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            bounds: vec![VarBound::NON_NEGATIVE; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    pub fn set_bound(&mut self, var: usize, bound: VarBound) {
        self.bounds[var] = bound;
    }

    /// Checks shapes, finiteness and bound ordering.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if n == 0 {
            return Err(LpError::Empty);
        }
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch {
                what: "bounds",
                expected: n,
                found: self.bounds.len(),
            });
        }
        if let Some(j) = self.objective.iter().position(|v| !v.is_finite()) {
            return Err(LpError::NonFinite(format!("objective[{j}]")));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: "constraint row",
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if let Some(j) = c.coeffs.iter().position(|v| !v.is_finite()) {
                return Err(LpError::NonFinite(format!("constraint {i}, column {j}")));
            }
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("constraint {i}, rhs")));
            }
        }
        for (j, b) in self.bounds.iter().enumerate() {
            let finite = |v: Option<f64>| v.map_or(true, f64::is_finite);
            if !finite(b.lower) || !finite(b.upper) {
                return Err(LpError::NonFinite(format!("bound of variable {j}")));
            }
            if let (Some(l), Some(u)) = (b.lower, b.upper) {
                if l > u {
                    return Err(LpError::InvalidBound(j));
                }
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(b, &v)| {
                let lo = b.lower.map_or(0.0, |l| (l - v).max(0.0));
                let hi = b.upper.map_or(0.0, |u| (v - u).max(0.0));
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present iff `status` is `Optimal`.
    pub primal: Option<Vec<f64>>,
    /// Present iff `status` is `Optimal`.
    pub objective_value: Option<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub(crate) fn optimal(primal: Vec<f64>, value: f64, iterations: usize) -> Self {
        Self {
            status: LpStatus::Optimal,
            primal: Some(primal),
            objective_value: Some(value),
            iterations,
        }
    }

    pub(crate) fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            primal: None,
            objective_value: None,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program has no variables")]
    Empty,
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("variable {0} has lower bound above upper bound")]
    InvalidBound(usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("problem too large for vertex enumeration: {columns} standard-form columns (limit {limit})")]
    Oversize { columns: usize, limit: usize },
}

/// Solves `lp` with the two-phase simplex method.
///
/// The result is a vertex of the feasible region when an optimum exists. The
/// pivot sequence depends only on the input, so repeated calls return
/// identical vectors.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let sf = StandardForm::from_lp(lp);
    let outcome = simplex::solve(&sf)?;
    match outcome.status {
        LpStatus::Optimal => {
            let x = sf.recover(&outcome.values);
            let violation = lp.max_violation(&x);
            if violation > tolerance::FEASIBILITY {
                return Err(LpError::NumericalFailure(format!(
                    "optimal basis violates a constraint by {violation:e}"
                )));
            }
            let value = lp.objective_at(&x);
            Ok(LpSolution::optimal(x, value, outcome.iterations))
        }
        status => Ok(LpSolution::without_point(status, outcome.iterations)),
    }
}

/// Writes the initial standard-form tableau `[A | b]` followed by the cost
/// row `[c | 0]`, one row per line, space-separated.
pub fn dump_tableau<W: Write>(lp: &LinearProgram, out: &mut W) -> Result<(), LpDumpError> {
    lp.validate()?;
    let sf = StandardForm::from_lp(lp);
    for (row, b) in sf.a.iter().zip(&sf.b) {
        write_row(out, row, *b)?;
    }
    write_row(out, &sf.c, 0.0)?;
    Ok(())
}

fn write_row<W: Write>(out: &mut W, row: &[f64], last: f64) -> io::Result<()> {
    let mut line = String::with_capacity(row.len() * 8);
    for v in row.iter().chain(std::iter::once(&last)) {
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(&format!("{v}"));
    }
    writeln!(out, "{line}")
}

#[derive(Debug, Error)]
pub enum LpDumpError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_variable_upper_row() {
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(approx(sol.primal.unwrap()[0], 1.0, 1e-12));
        assert!(approx(sol.objective_value.unwrap(), -1.0, 1e-12));
    }

    #[test]
    fn symmetric_covering_row() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Ge, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.objective_value.unwrap(), 1.0, 1e-12));
        let x = sol.primal.unwrap();
        assert!(approx(x[0] + x[1], 1.0, 1e-12));
        assert!(x[0] == 0.0 || x[1] == 0.0, "expected a vertex, got {x:?}");
    }

    #[test]
    fn intersection_vertex() {
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_constraint(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.add_constraint(vec![3.0, 1.0], Relation::Le, 6.0);
        let sol = solve_lp(&lp).unwrap();
        let x = sol.primal.unwrap();
        assert!(approx(x[0], 1.6, 1e-12) && approx(x[1], 1.2, 1e-12));
        assert!(approx(sol.objective_value.unwrap(), -2.8, 1e-12));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_constraint(vec![1.0], Relation::Ge, 2.0);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_constraint(vec![1.0, -1.0], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
        assert!(sol.primal.is_none() && sol.objective_value.is_none());
    }

    #[test]
    fn free_and_boxed_variables() {
        // min x - y with x free, -2 <= y <= 3 and x >= y - 5
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.set_bound(0, VarBound::FREE);
        lp.set_bound(1, VarBound::new(Some(-2.0), Some(3.0)));
        lp.add_constraint(vec![1.0, -1.0], Relation::Ge, -5.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.objective_value.unwrap(), -5.0, 1e-12));
        let x = sol.primal.unwrap();
        assert!(lp.max_violation(&x) <= 1e-12);
    }

    #[test]
    fn upper_bound_only_variable() {
        // max x with x <= 4 and no lower bound
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.set_bound(0, VarBound::new(None, Some(4.0)));
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.primal.unwrap()[0], 4.0, 1e-12));
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 2 listed twice, min x
        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.add_constraint(vec![2.0, 2.0], Relation::Eq, 4.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(approx(sol.objective_value.unwrap(), 0.0, 1e-12));
        assert!(approx(sol.primal.unwrap()[1], 2.0, 1e-12));
    }

    #[test]
    fn structural_errors_before_solving() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(
            solve_lp(&lp),
            Err(LpError::DimensionMismatch { .. })
        ));

        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_constraint(vec![f64::NAN], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::NonFinite(_))));

        let mut lp = LinearProgram::new(vec![1.0]);
        lp.set_bound(0, VarBound::new(Some(2.0), Some(1.0)));
        assert_eq!(solve_lp(&lp), Err(LpError::InvalidBound(0)));
    }

    #[test]
    fn tableau_dump_has_one_line_per_row_plus_cost() {
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_constraint(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.add_constraint(vec![3.0, 1.0], Relation::Le, 6.0);
        let mut buf = Vec::new();
        dump_tableau(&lp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "1 2 1 0 4");
        assert_eq!(lines[2], "-1 -1 0 0 0");
    }
}
