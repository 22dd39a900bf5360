//! Basis functions `f_j` and their evaluation on data.

use std::fmt;

use thiserror::Error;

/// Default RBF bandwidth, `f_j(x) = exp(-2 |x - b_j|^2)`.
pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DictError {
    #[error("dictionary expects {expected} features, row {row} has {found}")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} coefficients for a dictionary of {1} functions")]
    Coefficients(usize, usize),
    #[error("invalid dictionary: {0}")]
    Invalid(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {value} at row {row} is not -1 or +1")]
    Label { row: usize, value: f64 },
    #[error("{labels} labels for {rows} rows")]
    LabelCount { rows: usize, labels: usize },
}

/// Which functions make up the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub enum DictSpec {
    /// `f_j(x) = x_j`.
    Linear { dim: usize },
    /// `f_1 = 1`, then `f_{j+1}(x) = x_j`.
    ConstantLinear { dim: usize },
    /// The single function `f = 1`.
    Constant { dim: usize },
    /// Gaussian bumps on an axis-aligned lattice spanning `[lower, upper]`.
    RbfLattice {
        counts: Vec<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        beta: f64,
    },
    /// Gaussian bumps at arbitrary centres.
    Custom { centers: Vec<Vec<f64>>, beta: f64 },
}

impl DictSpec {
    pub fn dim(&self) -> usize {
        match self {
            DictSpec::Linear { dim } | DictSpec::ConstantLinear { dim } | DictSpec::Constant { dim } => *dim,
            DictSpec::RbfLattice { counts, .. } => counts.len(),
            DictSpec::Custom { centers, .. } => centers.first().map_or(0, Vec::len),
        }
    }

    /// Whether `max_j sup |f_j|` is known without looking at data.
    pub fn is_bounded(&self) -> bool {
        matches!(
            self,
            DictSpec::Constant { .. } | DictSpec::RbfLattice { .. } | DictSpec::Custom { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            DictSpec::Linear { .. } => "linear",
            DictSpec::ConstantLinear { .. } => "constant_linear",
            DictSpec::Constant { .. } => "constant",
            DictSpec::RbfLattice { .. } => "rbf_lattice",
            DictSpec::Custom { .. } => "custom",
        }
    }
}

impl fmt::Display for DictSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictSpec::Linear { dim } | DictSpec::ConstantLinear { dim } | DictSpec::Constant { dim } => {
                write!(f, "{}(dim={dim})", self.name())
            }
            DictSpec::RbfLattice { counts, beta, .. } => {
                let grid: Vec<String> = counts.iter().map(usize::to_string).collect();
                write!(f, "rbf_lattice({}, beta={beta})", grid.join("x"))
            }
            DictSpec::Custom { centers, beta } => {
                write!(f, "custom({} centres, beta={beta})", centers.len())
            }
        }
    }
}

/// A sup-norm bound `C_F` and whether it was read off training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupBound {
    pub value: f64,
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    spec: DictSpec,
    centers: Vec<Vec<f64>>,
    beta: f64,
    c_f: Option<SupBound>,
}

/// Largest number of functions or input coordinates a dictionary may have.
pub const MAX_FUNCTIONS: usize = 1 << 20;

impl Dictionary {
    pub fn new(spec: DictSpec) -> Result<Self, DictError> {
        let invalid = |msg: String| Err(DictError::Invalid(msg));
        let (centers, beta) = match &spec {
            DictSpec::Linear { dim } | DictSpec::ConstantLinear { dim } | DictSpec::Constant { dim } => {
                if *dim == 0 {
                    return invalid("dimension must be at least 1".into());
                }
                if *dim > MAX_FUNCTIONS {
                    return invalid(format!("dimension {dim} exceeds {MAX_FUNCTIONS}"));
                }
                (Vec::new(), 0.0)
            }
            DictSpec::RbfLattice {
                counts,
                lower,
                upper,
                beta,
            } => {
                if counts.is_empty() || counts.len() != lower.len() || counts.len() != upper.len() {
                    return invalid("lattice counts and box corners must have one entry per axis".into());
                }
                for (axis, ((&k, &lo), &hi)) in counts.iter().zip(lower).zip(upper).enumerate() {
                    if k == 0 {
                        return invalid(format!("axis {axis} has zero lattice points"));
                    }
                    if !lo.is_finite() || !hi.is_finite() || hi < lo {
                        return invalid(format!("axis {axis} has box [{lo}, {hi}]"));
                    }
                    if k > 1 && hi == lo {
                        return invalid(format!("axis {axis} has zero width but {k} lattice points"));
                    }
                }
                let size = counts.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k));
                if counts.len() > MAX_FUNCTIONS || size.map_or(true, |s| s > MAX_FUNCTIONS) {
                    return invalid(format!("lattice {counts:?} has more than {MAX_FUNCTIONS} points"));
                }
                (lattice(counts, lower, upper), *beta)
            }
            DictSpec::Custom { centers, beta } => {
                let Some(first) = centers.first() else {
                    return invalid("no centres".into());
                };
                if first.is_empty() || centers.iter().any(|c| c.len() != first.len()) {
                    return invalid("centres must share a non-zero dimension".into());
                }
                if centers.iter().flatten().any(|v| !v.is_finite()) {
                    return invalid("non-finite centre".into());
                }
                (centers.clone(), *beta)
            }
        };
        if matches!(spec, DictSpec::RbfLattice { .. } | DictSpec::Custom { .. }) && !(beta > 0.0 && beta.is_finite()) {
            return invalid(format!("bandwidth must be positive, got {beta}"));
        }
        let c_f = spec.is_bounded().then_some(SupBound {
            value: 1.0,
            estimated: false,
        });
        Ok(Self {
            spec,
            centers,
            beta,
            c_f,
        })
    }

    /// RBF lattice with `counts[k]` points per axis, corners included.
    pub fn rbf_lattice(counts: &[usize], lower: &[f64], upper: &[f64], beta: f64) -> Result<Self, DictError> {
        Self::new(DictSpec::RbfLattice {
            counts: counts.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            beta,
        })
    }

    pub fn linear(dim: usize) -> Result<Self, DictError> {
        Self::new(DictSpec::Linear { dim })
    }

    pub fn spec(&self) -> &DictSpec {
        &self.spec
    }

    /// Number of functions `M`.
    pub fn len(&self) -> usize {
        match &self.spec {
            DictSpec::Linear { dim } => *dim,
            DictSpec::ConstantLinear { dim } => dim + 1,
            DictSpec::Constant { .. } => 1,
            DictSpec::RbfLattice { .. } | DictSpec::Custom { .. } => self.centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `C_F = max_j sup |f_j|`; `None` for an unbounded dictionary that has
    /// not seen data yet.
    pub fn sup_bound(&self) -> Option<SupBound> {
        self.c_f
    }

    /// Replaces `C_F` by `max_{i,j} |f_j(x_i)|` for unbounded dictionaries.
    /// Bounded dictionaries keep their exact value.
    pub fn with_estimated_bound(mut self, rows: &[Vec<f64>]) -> Result<Self, DictError> {
        if self.spec.is_bounded() {
            return Ok(self);
        }
        let mut buf = vec![0.0; self.len()];
        let mut sup: f64 = 0.0;
        for (i, row) in rows.iter().enumerate() {
            self.eval_into(i, row, &mut buf)?;
            sup = buf.iter().fold(sup, |s, v| s.max(v.abs()));
        }
        if !(sup > 0.0) {
            return Err(DictError::Invalid(
                "all dictionary values vanish on the data, C_F cannot be estimated".into(),
            ));
        }
        self.c_f = Some(SupBound {
            value: sup,
            estimated: true,
        });
        Ok(self)
    }

    /// Restores a stored bound, e.g. when loading a model.
    pub fn with_bound(mut self, bound: SupBound) -> Self {
        self.c_f = Some(bound);
        self
    }

    fn eval_into(&self, row: usize, x: &[f64], out: &mut [f64]) -> Result<(), DictError> {
        if x.len() != self.dim() {
            return Err(DictError::Dimension {
                row,
                expected: self.dim(),
                found: x.len(),
            });
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(DictError::NonFinite { row, col });
        }
        match &self.spec {
            DictSpec::Linear { .. } => out.copy_from_slice(x),
            DictSpec::ConstantLinear { .. } => {
                out[0] = 1.0;
                out[1..].copy_from_slice(x);
            }
            DictSpec::Constant { .. } => out[0] = 1.0,
            DictSpec::RbfLattice { .. } | DictSpec::Custom { .. } => {
                for (o, c) in out.iter_mut().zip(&self.centers) {
                    let sq: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    *o = (-self.beta * sq).exp();
                }
            }
        }
        Ok(())
    }

    /// All `f_j(x)` for a single point.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, DictError> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(0, x, &mut out)?;
        Ok(out)
    }

    /// `Phi[i][j] = f_j(x_i)`, with labels attached when given.
    pub fn evaluate(&self, rows: &[Vec<f64>], labels: Option<&[f64]>) -> Result<DesignMatrix, DictError> {
        let m = self.len();
        let mut data = vec![0.0; rows.len() * m];
        for (i, row) in rows.iter().enumerate() {
            self.eval_into(i, row, &mut data[i * m..(i + 1) * m])?;
        }
        let labels = match labels {
            Some(y) => {
                if y.len() != rows.len() {
                    return Err(DictError::LabelCount {
                        rows: rows.len(),
                        labels: y.len(),
                    });
                }
                if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
                    return Err(DictError::Label { row, value });
                }
                Some(y.to_vec())
            }
            None => None,
        };
        Ok(DesignMatrix {
            n: rows.len(),
            m,
            data,
            labels,
        })
    }

    /// `f_lambda(x_i) = sum_j coeffs[j] f_j(x_i)` for every point.
    pub fn combine(&self, rows: &[Vec<f64>], coeffs: &[f64]) -> Result<Vec<f64>, DictError> {
        if coeffs.len() != self.len() {
            return Err(DictError::Coefficients(coeffs.len(), self.len()));
        }
        let mut buf = vec![0.0; self.len()];
        rows.iter()
            .enumerate()
            .map(|(i, x)| {
                self.eval_into(i, x, &mut buf)?;
                Ok(dot(&buf, coeffs))
            })
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lattice points, last axis varying fastest.
fn lattice(counts: &[usize], lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = counts
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&k, (&lo, &hi))| {
            if k == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..k)
                    .map(|i| {
                        if i == k - 1 {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (k - 1) as f64
                        }
                    })
                    .collect()
            }
        })
        .collect();
    let mut points = vec![Vec::with_capacity(counts.len())];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Row-major `n x M` matrix of dictionary values with optional `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
    labels: Option<Vec<f64>>,
}

impl DesignMatrix {
    /// Builds from raw values, checking shape, finiteness and labels.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Option<Vec<f64>>) -> Result<Self, DictError> {
        let m = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * m);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(DictError::Dimension {
                    row: i,
                    expected: m,
                    found: row.len(),
                });
            }
            if let Some(col) = row.iter().position(|v| !v.is_finite()) {
                return Err(DictError::NonFinite { row: i, col });
            }
            data.extend(row);
        }
        if let Some(y) = &labels {
            if y.len() != n {
                return Err(DictError::LabelCount { rows: n, labels: y.len() });
            }
            if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
                return Err(DictError::Label { row, value });
            }
        }
        Ok(Self { n, m, data, labels })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    /// `max |Phi[i][j]|`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |s, v| s.max(v.abs()))
    }

    /// Margins `sum_j coeffs[j] Phi[i][j]`.
    pub fn margins(&self, coeffs: &[f64]) -> Result<Vec<f64>, DictError> {
        if coeffs.len() != self.m {
            return Err(DictError::Coefficients(coeffs.len(), self.m));
        }
        Ok((0..self.n).map(|i| dot(self.row(i), coeffs)).collect())
    }

    /// The rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.m);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n: indices.len(),
            m: self.m,
            data,
            labels: self
                .labels
                .as_ref()
                .map(|y| indices.iter().map(|&i| y[i]).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lattice_size_and_corners() {
        let dict = Dictionary::rbf_lattice(&[10, 10], &[-2.0, -1.0], &[3.0, 4.0], DEFAULT_BETA).unwrap();
        assert_eq!(dict.len(), 100);
        assert_eq!(dict.centers()[0], vec![-2.0, -1.0]);
        assert_eq!(dict.centers()[99], vec![3.0, 4.0]);
        assert_eq!(dict.centers()[9], vec![-2.0, 4.0]);
        assert_eq!(dict.sup_bound(), Some(SupBound { value: 1.0, estimated: false }));
    }

    #[test]
    fn rbf_is_one_at_its_centre() {
        let dict = Dictionary::rbf_lattice(&[3, 4], &[0.0, 0.0], &[1.0, 2.0], 2.0).unwrap();
        for (j, c) in dict.centers().iter().enumerate() {
            assert_eq!(dict.eval(c).unwrap()[j], 1.0);
        }
    }

    #[test]
    fn one_dimensional_pair() {
        let dict = Dictionary::rbf_lattice(&[2], &[0.0], &[1.0], 2.0).unwrap();
        let v = dict.eval(&[1.0]).unwrap();
        assert!((v[0] - 0.1353352832366127).abs() < 1e-15);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn degenerate_boxes() {
        assert!(Dictionary::rbf_lattice(&[2], &[1.0], &[1.0], 2.0).is_err());
        assert!(Dictionary::rbf_lattice(&[1], &[1.0], &[1.0], 2.0).is_ok());
        assert!(Dictionary::rbf_lattice(&[0], &[0.0], &[1.0], 2.0).is_err());
        assert!(Dictionary::rbf_lattice(&[2], &[0.0], &[1.0], 0.0).is_err());
        assert!(Dictionary::linear(0).is_err());
        assert!(Dictionary::linear(MAX_FUNCTIONS + 1).is_err());
        assert!(Dictionary::rbf_lattice(&[1 << 11, 1 << 11], &[0.0; 2], &[1.0; 2], 2.0).is_err());
        assert!(Dictionary::rbf_lattice(&[usize::MAX, 2], &[0.0; 2], &[1.0; 2], 2.0).is_err());
    }

    #[test]
    fn linear_dictionary() {
        let dict = Dictionary::linear(200).unwrap();
        assert_eq!(dict.len(), 200);
        assert_eq!(dict.sup_bound(), None);
        let mut e = vec![0.0; 200];
        e[7] = 1.0;
        assert_eq!(dict.eval(&e).unwrap()[7], 1.0);

        let rows = vec![vec![1.0, -2.0], vec![0.5, 3.0], vec![-4.0, 0.0]];
        let dict = Dictionary::linear(2).unwrap();
        let phi = dict.evaluate(&rows, None).unwrap();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(phi.row(i), row.as_slice());
        }
        let dict = dict.with_estimated_bound(&rows).unwrap();
        assert_eq!(dict.sup_bound(), Some(SupBound { value: 4.0, estimated: true }));
    }

    #[test]
    fn constant_and_constant_linear() {
        let dict = Dictionary::new(DictSpec::Constant { dim: 3 }).unwrap();
        let phi = dict
            .evaluate(&[vec![5.0, 1.0, 2.0], vec![-7.0, 0.0, 0.0]], Some(&[1.0, -1.0]))
            .unwrap();
        assert_eq!(phi.cols(), 1);
        assert_eq!(phi.row(0), &[1.0]);
        assert_eq!(phi.row(1), &[1.0]);
        let dict = Dictionary::new(DictSpec::ConstantLinear { dim: 2 }).unwrap();
        assert_eq!(dict.eval(&[3.0, -1.0]).unwrap(), vec![1.0, 3.0, -1.0]);
    }

    #[test]
    fn evaluation_errors() {
        let dict = Dictionary::linear(2).unwrap();
        assert!(matches!(
            dict.evaluate(&[vec![1.0]], None),
            Err(DictError::Dimension { row: 0, expected: 2, found: 1 })
        ));
        assert!(matches!(
            dict.evaluate(&[vec![1.0, f64::INFINITY]], None),
            Err(DictError::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            dict.evaluate(&[vec![1.0, 2.0]], Some(&[0.0])),
            Err(DictError::Label { row: 0, .. })
        ));
        assert!(dict.combine(&[vec![1.0, 2.0]], &[1.0]).is_err());
    }

    #[test]
    fn select_keeps_rows_and_labels() {
        let phi = DesignMatrix::from_rows(
            vec![vec![1.0], vec![2.0], vec![3.0]],
            Some(vec![1.0, -1.0, 1.0]),
        )
        .unwrap();
        let sub = phi.select(&[2, 0]);
        assert_eq!(sub.row(0), &[3.0]);
        assert_eq!(sub.labels().unwrap(), &[1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn rbf_values_in_unit_interval(
            x in proptest::collection::vec(-3.0..3.0f64, 2),
            kx in 1usize..5,
            ky in 1usize..5,
        ) {
            let dict = Dictionary::rbf_lattice(&[kx, ky], &[-1.0, -1.0], &[1.0, 1.0], 2.0).unwrap();
            for v in dict.eval(&x).unwrap() {
                prop_assert!(v > 0.0 && v <= 1.0);
            }
        }
    }
}
