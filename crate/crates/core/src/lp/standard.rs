use super::{LinearProgram, Relation};

/// How an original variable is expressed through non-negative columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum VarMap {
    /// `x = lower + col`
    Shifted { col: usize, lower: f64 },
    /// `x = upper - col`
    Reflected { col: usize, upper: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

/// `min c·z + offset` subject to `A z = b`, `z >= 0`, `b >= 0`.
///
/// Columns are ordered: structural columns (one per shifted or reflected
/// variable, two per free variable, in variable order), then one slack or
/// surplus column per inequality row, in row order. Finite two-sided bounds
/// add a `col + s = upper - lower` row after the original constraints.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub offset: f64,
    /// For each row, a column holding `+1` in that row and zero elsewhere.
    pub identity_col: Vec<Option<usize>>,
    /// For each inequality row, its slack or surplus column (`±1`).
    pub slack_col: Vec<Option<usize>>,
    pub(crate) vars: Vec<VarMap>,
}

impl StandardForm {
    /// Converts a validated program.
    pub fn from_lp(lp: &LinearProgram) -> Self {
        let mut vars = Vec::with_capacity(lp.num_vars());
        let mut ncols = 0;
        let mut boxed = Vec::new();
        for b in &lp.bounds {
            let map = match (b.lower, b.upper) {
                (Some(lower), upper) => {
                    if let Some(u) = upper {
                        boxed.push((ncols, u - lower));
                    }
                    VarMap::Shifted { col: ncols, lower }
                }
                (None, Some(upper)) => VarMap::Reflected { col: ncols, upper },
                (None, None) => {
                    ncols += 1;
                    VarMap::Split {
                        pos: ncols - 1,
                        neg: ncols,
                    }
                }
            };
            ncols += 1;
            vars.push(map);
        }
        let structural = ncols;

        let mut rows: Vec<(Vec<f64>, Relation, f64)> =
            Vec::with_capacity(lp.constraints.len() + boxed.len());
        for con in &lp.constraints {
            let mut row = vec![0.0; structural];
            let mut rhs = con.rhs;
            for (&coef, map) in con.coeffs.iter().zip(&vars) {
                if coef == 0.0 {
                    continue;
                }
                match *map {
                    VarMap::Shifted { col, lower } => {
                        row[col] += coef;
                        rhs -= coef * lower;
                    }
                    VarMap::Reflected { col, upper } => {
                        row[col] -= coef;
                        rhs -= coef * upper;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += coef;
                        row[neg] -= coef;
                    }
                }
            }
            rows.push((row, con.relation, rhs));
        }
        for &(col, width) in &boxed {
            let mut row = vec![0.0; structural];
            row[col] = 1.0;
            rows.push((row, Relation::Le, width));
        }

        let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let total = structural + slacks;
        let mut a = Vec::with_capacity(rows.len());
        let mut b = Vec::with_capacity(rows.len());
        let mut identity_col = Vec::with_capacity(rows.len());
        let mut slack_col = Vec::with_capacity(rows.len());
        let mut next_slack = structural;
        for (mut row, relation, mut rhs) in rows {
            row.resize(total, 0.0);
            let slack = match relation {
                Relation::Le => Some((next_slack, 1.0)),
                Relation::Ge => Some((next_slack, -1.0)),
                Relation::Eq => None,
            };
            if let Some((col, sign)) = slack {
                row[col] = sign;
                next_slack += 1;
            }
            if rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            identity_col.push(slack.and_then(|(col, _)| (row[col] == 1.0).then_some(col)));
            slack_col.push(slack.map(|(col, _)| col));
            a.push(row);
            b.push(rhs);
        }

        let mut c = vec![0.0; total];
        let mut offset = 0.0;
        for (&cost, map) in lp.objective.iter().zip(&vars) {
            match *map {
                VarMap::Shifted { col, lower } => {
                    c[col] += cost;
                    offset += cost * lower;
                }
                VarMap::Reflected { col, upper } => {
                    c[col] -= cost;
                    offset += cost * upper;
                }
                VarMap::Split { pos, neg } => {
                    c[pos] += cost;
                    c[neg] -= cost;
                }
            }
        }

        Self {
            a,
            b,
            c,
            offset,
            identity_col,
            slack_col,
            vars,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn num_cols(&self) -> usize {
        self.c.len()
    }

    /// Maps a standard-form point back to the original variables.
    pub fn recover(&self, z: &[f64]) -> Vec<f64> {
        self.vars
            .iter()
            .map(|map| match *map {
                VarMap::Shifted { col, lower } => lower + z[col],
                VarMap::Reflected { col, upper } => upper - z[col],
                VarMap::Split { pos, neg } => z[pos] - z[neg],
            })
            .collect()
    }
}
