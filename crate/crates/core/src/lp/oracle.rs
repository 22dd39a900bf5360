//! Brute-force LP solver used to cross-check the simplex.
//!
//! Every basic solution of the standard-form system is enumerated; the best
//! feasible one is the optimum unless an extreme ray of the recession cone
//! has negative cost.

use super::standard::StandardForm;
use super::{LinearProgram, LpError, LpSolution, LpStatus};

/// Upper limit on standard-form columns (variables plus slacks).
pub const ORACLE_MAX_COLUMNS: usize = 20;

const ZERO: f64 = 1e-10;
const NONNEG: f64 = 1e-9;

pub fn enumerate_vertices_oracle(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let sf = StandardForm::from_lp(lp);
    let ncols = sf.num_cols();
    if ncols > ORACLE_MAX_COLUMNS {
        return Err(LpError::Oversize {
            columns: ncols,
            limit: ORACLE_MAX_COLUMNS,
        });
    }

    let Some((rows, rhs)) = independent_rows(&sf.a, &sf.b) else {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
    };
    let mut visited = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_basic_solution(&rows, &rhs, ncols, |z| {
        visited += 1;
        let cost: f64 = sf.c.iter().zip(z).map(|(c, v)| c * v).sum();
        if best.as_ref().map_or(true, |(bc, _)| cost < *bc) {
            best = Some((cost, z.to_vec()));
        }
    });
    let Some((_, z)) = best else {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, visited));
    };

    // Extreme rays of {d >= 0 : A d = 0, sum d = 1}.
    let mut ray_rows = sf.a.clone();
    ray_rows.push(vec![1.0; ncols]);
    let mut ray_rhs = vec![0.0; sf.num_rows()];
    ray_rhs.push(1.0);
    let mut unbounded = false;
    if let Some((rows, rhs)) = independent_rows(&ray_rows, &ray_rhs) {
        for_each_basic_solution(&rows, &rhs, ncols, |d| {
            let cost: f64 = sf.c.iter().zip(d).map(|(c, v)| c * v).sum();
            if cost < -NONNEG {
                unbounded = true;
            }
        });
    }
    if unbounded {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, visited));
    }

    let x = sf.recover(&z);
    let value = lp.objective_at(&x);
    Ok(LpSolution::optimal(x, value, visited))
}

/// Row-reduces `[A | b]`; returns a full-row-rank equivalent system, or
/// `None` when the equations are inconsistent.
fn independent_rows(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let ncols = a.first().map_or(0, Vec::len);
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    let mut rank = 0;
    for col in 0..ncols {
        if rank == m.len() {
            break;
        }
        let pivot = (rank..m.len())
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= ZERO {
            continue;
        }
        m.swap(rank, pivot);
        let p = m[rank][col];
        m[rank].iter_mut().for_each(|v| *v /= p);
        let prow = m[rank].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != rank && row[col] != 0.0 {
                let f = row[col];
                row.iter_mut().zip(&prow).for_each(|(v, p)| *v -= f * p);
            }
        }
        rank += 1;
    }
    if m[rank..].iter().any(|row| row[ncols].abs() > 1e-9) {
        return None;
    }
    m.truncate(rank);
    let rhs = m.iter_mut().map(|row| row.pop().unwrap()).collect();
    Some((m, rhs))
}

/// Calls `visit` with every non-negative basic solution of `rows z = rhs`.
fn for_each_basic_solution<F: FnMut(&[f64])>(
    rows: &[Vec<f64>],
    rhs: &[f64],
    ncols: usize,
    mut visit: F,
) {
    let k = rows.len();
    if k == 0 {
        visit(&vec![0.0; ncols]);
        return;
    }
    if k > ncols {
        return;
    }
    let mut combo: Vec<usize> = (0..k).collect();
    let mut z = vec![0.0; ncols];
    loop {
        if let Some(xb) = solve_square(rows, rhs, &combo) {
            if xb.iter().all(|&v| v >= -NONNEG) {
                z.fill(0.0);
                for (&col, &v) in combo.iter().zip(&xb) {
                    z[col] = v.max(0.0);
                }
                visit(&z);
            }
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if combo[i] < ncols - k + i {
                combo[i] += 1;
                for t in i + 1..k {
                    combo[t] = combo[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(rows: &[Vec<f64>], rhs: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let k = cols.len();
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .zip(rhs)
        .map(|(row, &b)| {
            let mut r: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
            r.push(b);
            r
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= ZERO {
            return None;
        }
        m.swap(col, pivot);
        for i in col + 1..k {
            let f = m[i][col] / m[col][col];
            if f != 0.0 {
                for j in col..=k {
                    m[i][j] -= f * m[col][j];
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][k] - s) / m[i][i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Relation;

    #[test]
    fn bound_example() {
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        let sol = enumerate_vertices_oracle(&lp).unwrap();
        assert_eq!(sol.primal.unwrap(), vec![1.0]);
        assert_eq!(sol.objective_value.unwrap(), -1.0);
    }

    #[test]
    fn infeasible_pair() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_constraint(vec![1.0], Relation::Ge, 2.0);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert_eq!(
            enumerate_vertices_oracle(&lp).unwrap().status,
            LpStatus::Infeasible
        );
    }

    #[test]
    fn hand_solved_intersection() {
        let mut lp = LinearProgram::new(vec![-1.0, -1.0]);
        lp.add_constraint(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.add_constraint(vec![3.0, 1.0], Relation::Le, 6.0);
        let sol = enumerate_vertices_oracle(&lp).unwrap();
        let x = sol.primal.unwrap();
        assert!((x[0] - 8.0 / 5.0).abs() < 1e-12);
        assert!((x[1] - 6.0 / 5.0).abs() < 1e-12);
        assert!((sol.objective_value.unwrap() + 14.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn detects_unbounded_direction() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_constraint(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(
            enumerate_vertices_oracle(&lp).unwrap().status,
            LpStatus::Unbounded
        );
    }

    #[test]
    fn refuses_oversize_problems() {
        let mut lp = LinearProgram::new(vec![1.0; 15]);
        for _ in 0..6 {
            lp.add_constraint(vec![1.0; 15], Relation::Ge, 1.0);
        }
        assert!(matches!(
            enumerate_vertices_oracle(&lp),
            Err(LpError::Oversize { columns: 21, .. })
        ));
    }
}
