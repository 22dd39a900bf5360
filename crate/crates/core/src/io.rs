//! Data files, distribution files, model files and dictionary spec strings.

use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

use crate::dictionary::{DictError, DictSpec, Dictionary, SupBound, DEFAULT_BETA};
use crate::losses::{Atom, CostParams, DiscreteDistribution, LossError};
use crate::train::{Model, TrainMeta};

pub const MODEL_MAGIC: &str = "reject-svm-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("empty header")]
    NoHeader,
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("no feature columns")]
    NoFeatures,
    #[error("no data rows")]
    NoRows,
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column:?}: missing value")]
    Missing { row: usize, column: String },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    Number { row: usize, column: String, value: String },
    #[error("row {row}: label {value:?} is not -1 or +1")]
    Label { row: usize, value: String },
    #[error("row {row}: {message}")]
    Distribution { row: usize, message: String },
    #[error(transparent)]
    Loss(#[from] LossError),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        DataError::Csv(e.to_string())
    }
}

/// A parsed data file. Row numbers in errors are 1-based data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

impl DataSet {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn header(rdr: &mut csv::Reader<impl Read>) -> Result<Vec<String>, DataError> {
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DataError::NoHeader);
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(DataError::DuplicateColumn(n.clone()));
        }
    }
    Ok(names)
}

fn number(row: usize, column: &str, field: &str) -> Result<f64, DataError> {
    if field.is_empty() {
        return Err(DataError::Missing {
            row,
            column: column.to_owned(),
        });
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::Number {
            row,
            column: column.to_owned(),
            value: field.to_owned(),
        }),
    }
}

/// Reads a CSV with a header row. A column named `y` holds `-1`/`+1`
/// labels; every other column is a numeric feature, in header order.
pub fn read_data<R: Read>(input: R, require_labels: bool) -> Result<DataSet, DataError> {
    let mut rdr = reader(input);
    let names = header(&mut rdr)?;
    let label_col = names.iter().position(|n| n == "y");
    if require_labels && label_col.is_none() {
        return Err(DataError::MissingColumn("y"));
    }
    let feature_cols: Vec<usize> = (0..names.len()).filter(|&c| Some(c) != label_col).collect();
    if feature_cols.is_empty() {
        return Err(DataError::NoFeatures);
    }
    let mut x = Vec::new();
    let mut y = label_col.map(|_| Vec::new());
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != names.len() {
            return Err(DataError::Ragged {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            features.push(number(row, &names[c], &record[c])?);
        }
        x.push(features);
        if let (Some(c), Some(labels)) = (label_col, y.as_mut()) {
            let field = &record[c];
            let value = match field {
                "" => {
                    return Err(DataError::Missing {
                        row,
                        column: "y".into(),
                    })
                }
                _ => field.parse::<f64>().ok().filter(|v| *v == 1.0 || *v == -1.0),
            };
            labels.push(value.ok_or_else(|| DataError::Label {
                row,
                value: field.to_owned(),
            })?);
        }
    }
    if x.is_empty() {
        return Err(DataError::NoRows);
    }
    Ok(DataSet {
        feature_names: feature_cols.iter().map(|&c| names[c].clone()).collect(),
        x,
        y,
    })
}

/// Reads a finite-support law: columns `p`, `eta`, then feature columns.
pub fn read_distribution<R: Read>(input: R) -> Result<DiscreteDistribution, DataError> {
    let mut rdr = reader(input);
    let names = header(&mut rdr)?;
    if names.first().map(String::as_str) != Some("p") {
        return Err(DataError::MissingColumn("p"));
    }
    if names.get(1).map(String::as_str) != Some("eta") {
        return Err(DataError::MissingColumn("eta"));
    }
    if names.len() < 3 {
        return Err(DataError::NoFeatures);
    }
    let mut atoms = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != names.len() {
            return Err(DataError::Ragged {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        let values = names
            .iter()
            .zip(record.iter())
            .map(|(n, f)| number(row, n, f))
            .collect::<Result<Vec<_>, _>>()?;
        let (p, eta) = (values[0], values[1]);
        if !(p > 0.0) {
            return Err(DataError::Distribution {
                row,
                message: format!("probability {p} is not positive"),
            });
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(DataError::Distribution {
                row,
                message: format!("eta {eta} is outside [0, 1]"),
            });
        }
        atoms.push(Atom {
            x: values[2..].to_vec(),
            p,
            eta,
        });
    }
    if atoms.is_empty() {
        return Err(DataError::NoRows);
    }
    Ok(DiscreteDistribution::new(atoms)?)
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("unknown dictionary {0:?}")]
    Unknown(String),
    #[error("malformed dictionary spec {spec:?}: {reason}")]
    Malformed { spec: String, reason: String },
    #[error("dictionary spec expects {expected} features, data has {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Dictionary(#[from] DictError),
}

/// A dictionary request whose data-dependent parts are not yet fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum DictTemplate {
    Linear,
    Constant,
    ConstantLinear,
    RbfLattice {
        counts: Vec<usize>,
        beta: f64,
        /// `(lower, upper)`; the data's bounding box when absent.
        bounds: Option<(Vec<f64>, Vec<f64>)>,
    },
    Custom {
        centers: Vec<Vec<f64>>,
        beta: f64,
    },
}

fn malformed(spec: &str, reason: impl Into<String>) -> SpecError {
    SpecError::Malformed {
        spec: spec.to_owned(),
        reason: reason.into(),
    }
}

fn parse_floats(spec: &str, s: &str) -> Result<Vec<f64>, SpecError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(spec, format!("{t:?} is not a finite number")))
        })
        .collect()
}

/// Parses a dictionary spec string.
///
/// Accepted forms: `linear`, `constant`, `constant+linear`,
/// `rbf:10x10[:beta=2][:box=lo1,hi1,lo2,hi2]` and
/// `centers:x1,y1;x2,y2[:beta=2]`.
pub fn parse_dict_spec(spec: &str) -> Result<DictTemplate, SpecError> {
    let mut parts = spec.trim().split(':');
    let kind = parts.next().unwrap_or_default();
    let options: Vec<&str> = parts.collect();
    let simple = |t: DictTemplate| {
        if options.is_empty() {
            Ok(t)
        } else {
            Err(malformed(spec, "takes no options"))
        }
    };
    match kind {
        "linear" => simple(DictTemplate::Linear),
        "constant" => simple(DictTemplate::Constant),
        "constant+linear" => simple(DictTemplate::ConstantLinear),
        "rbf" | "centers" => {
            let Some((&shape, rest)) = options.split_first() else {
                return Err(malformed(spec, "missing lattice shape or centres"));
            };
            let mut beta = DEFAULT_BETA;
            let mut bounds: Option<(Vec<f64>, Vec<f64>)> = None;
            for opt in rest {
                let (key, value) = opt
                    .split_once('=')
                    .ok_or_else(|| malformed(spec, format!("option {opt:?} is not key=value")))?;
                match key {
                    "beta" => {
                        beta = parse_floats(spec, value)?
                            .into_iter()
                            .next()
                            .filter(|b| *b > 0.0)
                            .ok_or_else(|| malformed(spec, "beta must be positive"))?;
                        if value.contains(',') {
                            return Err(malformed(spec, "beta takes one value"));
                        }
                    }
                    "box" if kind == "rbf" => {
                        let v = parse_floats(spec, value)?;
                        if v.len() % 2 != 0 {
                            return Err(malformed(spec, "box needs lower,upper pairs"));
                        }
                        bounds = Some((v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect()));
                    }
                    _ => return Err(malformed(spec, format!("unknown option {key:?}"))),
                }
            }
            if kind == "rbf" {
                let counts = shape
                    .split('x')
                    .map(|t| t.trim().parse::<usize>().ok().filter(|&k| k >= 1))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| malformed(spec, format!("lattice shape {shape:?} is not like 10x10")))?;
                if let Some((lo, _)) = &bounds {
                    if lo.len() != counts.len() {
                        return Err(malformed(spec, "box and lattice shape disagree on dimension"));
                    }
                }
                Ok(DictTemplate::RbfLattice { counts, beta, bounds })
            } else {
                let centers = shape
                    .split(';')
                    .map(|c| parse_floats(spec, c))
                    .collect::<Result<Vec<_>, _>>()?;
                if centers.iter().any(|c| c.len() != centers[0].len()) {
                    return Err(malformed(spec, "centres have different dimensions"));
                }
                Ok(DictTemplate::Custom { centers, beta })
            }
        }
        other => Err(SpecError::Unknown(other.to_owned())),
    }
}

impl DictTemplate {
    /// Fixes dimension and box from training rows.
    pub fn resolve(&self, x: &[Vec<f64>]) -> Result<Dictionary, SpecError> {
        let dim = x.first().map_or(0, Vec::len);
        let spec = match self {
            DictTemplate::Linear => DictSpec::Linear { dim },
            DictTemplate::Constant => DictSpec::Constant { dim },
            DictTemplate::ConstantLinear => DictSpec::ConstantLinear { dim },
            DictTemplate::RbfLattice { counts, beta, bounds } => {
                if counts.len() != dim {
                    return Err(SpecError::Dimension {
                        expected: counts.len(),
                        found: dim,
                    });
                }
                let (lower, upper) = match bounds {
                    Some(b) => b.clone(),
                    None => crate::sim::bounding_box(x),
                };
                DictSpec::RbfLattice {
                    counts: counts.clone(),
                    lower,
                    upper,
                    beta: *beta,
                }
            }
            DictTemplate::Custom { centers, beta } => {
                if centers[0].len() != dim {
                    return Err(SpecError::Dimension {
                        expected: centers[0].len(),
                        found: dim,
                    });
                }
                DictSpec::Custom {
                    centers: centers.clone(),
                    beta: *beta,
                }
            }
        };
        Ok(Dictionary::new(spec)?.with_estimated_bound(x)?)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unsupported model format version {0}")]
    Version(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Writes `x` so that parsing it back gives the same bits.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|&x| float(x)).collect::<Vec<_>>().join(" ")
}

/// Serializes a model as `key value...` lines.
pub fn model_to_string(model: &Model) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
    let spec = model.dict.spec();
    let _ = writeln!(s, "dict {}", spec.name());
    match spec {
        DictSpec::Linear { dim } | DictSpec::ConstantLinear { dim } | DictSpec::Constant { dim } => {
            let _ = writeln!(s, "dim {dim}");
        }
        DictSpec::RbfLattice { counts, lower, upper, beta } => {
            let counts: Vec<String> = counts.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "counts {}", counts.join(" "));
            let _ = writeln!(s, "lower {}", floats(lower));
            let _ = writeln!(s, "upper {}", floats(upper));
            let _ = writeln!(s, "beta {}", float(*beta));
        }
        DictSpec::Custom { centers, beta } => {
            let _ = writeln!(s, "beta {}", float(*beta));
            let _ = writeln!(s, "centers {}", centers.len());
            for c in centers {
                let _ = writeln!(s, "center {}", floats(c));
            }
        }
    }
    match model.dict.sup_bound() {
        Some(b) => {
            let flag = if b.estimated { "estimated" } else { "declared" };
            let _ = writeln!(s, "c_f {} {flag}", float(b.value));
        }
        None => {
            let _ = writeln!(s, "c_f none");
        }
    }
    let _ = writeln!(s, "d {}", float(model.cp.d()));
    let _ = writeln!(s, "a {}", float(model.cp.a()));
    let _ = writeln!(s, "tau {}", float(model.cp.tau()));
    let _ = writeln!(s, "r {}", float(model.r));
    let _ = writeln!(s, "n {}", model.meta.n);
    let _ = writeln!(s, "objective {}", float(model.meta.objective));
    let _ = writeln!(s, "iterations {}", model.meta.iterations);
    let _ = writeln!(s, "lambda {}", model.lambda.len());
    for &v in &model.lambda {
        let _ = writeln!(s, "{}", float(v));
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn syntax(&self, reason: impl Into<String>) -> ModelError {
        ModelError::Syntax {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str, ModelError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.syntax("unexpected end of file"))
            }
        }
    }

    /// The values after `key` on the next line.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>, ModelError> {
        let line = self.next_line()?;
        let mut it = line.split(' ');
        if it.next() != Some(key) {
            return Err(self.syntax(format!("expected {key:?}")));
        }
        Ok(it.collect())
    }

    fn float(&self, s: &str) -> Result<f64, ModelError> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.syntax(format!("{s:?} is not a finite number")))
    }

    fn int(&self, s: &str) -> Result<usize, ModelError> {
        s.parse::<usize>()
            .map_err(|_| self.syntax(format!("{s:?} is not a non-negative integer")))
    }

    fn one_float(&mut self, key: &str) -> Result<f64, ModelError> {
        let v = self.field(key)?;
        match v.as_slice() {
            [x] => self.float(x),
            _ => Err(self.syntax(format!("{key} takes one value"))),
        }
    }

    fn one_int(&mut self, key: &str) -> Result<usize, ModelError> {
        let v = self.field(key)?;
        match v.as_slice() {
            [x] => self.int(x),
            _ => Err(self.syntax(format!("{key} takes one value"))),
        }
    }

    fn float_list(&mut self, key: &str) -> Result<Vec<f64>, ModelError> {
        let v = self.field(key)?;
        v.iter().map(|s| self.float(s)).collect()
    }
}

/// Inverse of [`model_to_string`]. Rejects anything it would not write.
pub fn model_from_str(text: &str) -> Result<Model, ModelError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.next_line()?;
    match head.split_once(' ') {
        Some((MODEL_MAGIC, v)) if v == MODEL_VERSION.to_string() => {}
        Some((MODEL_MAGIC, v)) => return Err(ModelError::Version(v.to_owned())),
        _ => return Err(lines.syntax(format!("expected {MODEL_MAGIC:?} header"))),
    }
    let kind = lines.field("dict")?;
    let spec = match kind.as_slice() {
        ["linear"] => DictSpec::Linear { dim: lines.one_int("dim")? },
        ["constant"] => DictSpec::Constant { dim: lines.one_int("dim")? },
        ["constant_linear"] => DictSpec::ConstantLinear { dim: lines.one_int("dim")? },
        ["rbf_lattice"] => {
            let counts = lines.field("counts")?;
            let counts = counts.iter().map(|s| lines.int(s)).collect::<Result<Vec<_>, _>>()?;
            let lower = lines.float_list("lower")?;
            let upper = lines.float_list("upper")?;
            let beta = lines.one_float("beta")?;
            DictSpec::RbfLattice { counts, lower, upper, beta }
        }
        ["custom"] => {
            let beta = lines.one_float("beta")?;
            let k = lines.one_int("centers")?;
            let mut centers = Vec::new();
            for _ in 0..k {
                centers.push(lines.float_list("center")?);
            }
            DictSpec::Custom { centers, beta }
        }
        other => return Err(lines.syntax(format!("unknown dictionary {:?}", other.join(" ")))),
    };
    let mut dict = Dictionary::new(spec).map_err(|e| ModelError::Invalid(e.to_string()))?;
    let c_f = lines.field("c_f")?;
    match c_f.as_slice() {
        ["none"] => {}
        [v, flag @ ("estimated" | "declared")] => {
            let value = lines.float(v)?;
            if !(value > 0.0) {
                return Err(ModelError::Invalid(format!("C_F must be positive, got {value}")));
            }
            dict = dict.with_bound(SupBound {
                value,
                estimated: *flag == "estimated",
            });
        }
        _ => return Err(lines.syntax("c_f takes a value and estimated|declared")),
    }
    let d = lines.one_float("d")?;
    let a = lines.one_float("a")?;
    let tau = lines.one_float("tau")?;
    let cp = CostParams::from_parts(d, a, tau).map_err(|e| ModelError::Invalid(e.to_string()))?;
    let r = lines.one_float("r")?;
    if r < 0.0 {
        return Err(ModelError::Invalid(format!("negative weight {r}")));
    }
    let n = lines.one_int("n")?;
    let objective = lines.one_float("objective")?;
    let iterations = lines.one_int("iterations")?;
    let m = lines.one_int("lambda")?;
    if m != dict.len() {
        return Err(ModelError::Invalid(format!(
            "{m} coefficients for a dictionary of {} functions",
            dict.len()
        )));
    }
    let mut lambda = Vec::with_capacity(m);
    for _ in 0..m {
        let l = lines.next_line()?;
        lambda.push(lines.float(l)?);
    }
    if let Some((i, _)) = lines.inner.next() {
        return Err(ModelError::Syntax {
            line: i + 1,
            reason: "trailing content".into(),
        });
    }
    Ok(Model {
        lambda,
        dict,
        cp,
        r,
        meta: TrainMeta { n, objective, iterations },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_with_labels_anywhere() {
        let csv = "a,y,b\n1,1,2\n-0.5,-1,3e2\n";
        let ds = read_data(csv.as_bytes(), true).unwrap();
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.x, vec![vec![1.0, 2.0], vec![-0.5, 300.0]]);
        assert_eq!(ds.y.unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn data_errors() {
        assert!(matches!(read_data("a,b\n1,2\n".as_bytes(), true), Err(DataError::MissingColumn("y"))));
        assert!(read_data("a,b\n1,2\n".as_bytes(), false).unwrap().y.is_none());
        assert!(matches!(read_data("a,y\n1,\n".as_bytes(), true), Err(DataError::Missing { .. })));
        assert!(matches!(read_data("a,y\n,1\n".as_bytes(), true), Err(DataError::Missing { .. })));
        assert!(matches!(read_data("a,y\n1,0\n".as_bytes(), true), Err(DataError::Label { .. })));
        assert!(matches!(read_data("a,y\nx,1\n".as_bytes(), true), Err(DataError::Number { .. })));
        assert!(matches!(read_data("a,y\nNaN,1\n".as_bytes(), true), Err(DataError::Number { .. })));
        assert!(matches!(read_data("a,y\n1,1,3\n".as_bytes(), true), Err(DataError::Ragged { .. })));
        assert!(matches!(read_data("a,y\n".as_bytes(), true), Err(DataError::NoRows)));
        assert!(matches!(read_data("y\n1\n".as_bytes(), true), Err(DataError::NoFeatures)));
        assert!(matches!(read_data("a,a\n1,1\n".as_bytes(), false), Err(DataError::DuplicateColumn(_))));
    }

    #[test]
    fn distribution_file() {
        let csv = "p,eta,x\n0.25,0.1,-1\n0.75,0.9,1\n";
        let dist = read_distribution(csv.as_bytes()).unwrap();
        assert_eq!(dist.len(), 2);
        assert!(read_distribution("eta,p,x\n1,1,1\n".as_bytes()).is_err());
        assert!(read_distribution("p,eta,x\n0.5,0.1,1\n".as_bytes()).is_err());
        assert!(read_distribution("p,eta,x\n1,1.5,1\n".as_bytes()).is_err());
        assert!(read_distribution("p,eta\n1,0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn spec_strings() {
        assert_eq!(parse_dict_spec("linear").unwrap(), DictTemplate::Linear);
        assert_eq!(parse_dict_spec("constant+linear").unwrap(), DictTemplate::ConstantLinear);
        assert_eq!(
            parse_dict_spec("rbf:10x10").unwrap(),
            DictTemplate::RbfLattice { counts: vec![10, 10], beta: 2.0, bounds: None }
        );
        assert_eq!(
            parse_dict_spec("rbf:2x3:beta=0.5:box=0,1,-1,1").unwrap(),
            DictTemplate::RbfLattice {
                counts: vec![2, 3],
                beta: 0.5,
                bounds: Some((vec![0.0, -1.0], vec![1.0, 1.0])),
            }
        );
        assert_eq!(
            parse_dict_spec("centers:0,0;1,1:beta=3").unwrap(),
            DictTemplate::Custom { centers: vec![vec![0.0, 0.0], vec![1.0, 1.0]], beta: 3.0 }
        );
        assert!(matches!(parse_dict_spec("poly:3"), Err(SpecError::Unknown(_))));
        for bad in ["rbf", "rbf:0x3", "rbf:ax3", "rbf:2x2:beta=-1", "rbf:2x2:box=0,1", "linear:3", "centers:0;1,1", "rbf:2:gamma=1"] {
            assert!(matches!(parse_dict_spec(bad), Err(SpecError::Malformed { .. })), "{bad}");
        }
    }

    #[test]
    fn resolve_uses_bounding_box() {
        let x = vec![vec![0.0, -1.0], vec![2.0, 3.0]];
        let dict = parse_dict_spec("rbf:3x3").unwrap().resolve(&x).unwrap();
        assert_eq!(dict.centers()[0], vec![0.0, -1.0]);
        assert_eq!(dict.centers()[8], vec![2.0, 3.0]);
        assert!(matches!(
            parse_dict_spec("rbf:3x3x3").unwrap().resolve(&x),
            Err(SpecError::Dimension { expected: 3, found: 2 })
        ));
    }

    fn sample_model(spec: DictSpec) -> Model {
        let dict = Dictionary::new(spec).unwrap().with_bound(SupBound { value: 1.5, estimated: true });
        let m = dict.len();
        Model {
            lambda: (0..m).map(|j| (j as f64 + 0.1).sin() / 3.0).collect(),
            dict,
            cp: CostParams::new(0.25, 0.5).unwrap(),
            r: 0.1 / 3.0,
            meta: TrainMeta { n: 6, objective: 1.0 / 7.0, iterations: 12 },
        }
    }

    #[test]
    fn model_round_trip_is_byte_stable() {
        let specs = [
            DictSpec::Linear { dim: 3 },
            DictSpec::ConstantLinear { dim: 2 },
            DictSpec::Constant { dim: 4 },
            DictSpec::RbfLattice { counts: vec![2, 3], lower: vec![-1.0, 0.1], upper: vec![1.0, 2.0 / 3.0], beta: 2.0 },
            DictSpec::Custom { centers: vec![vec![0.5, 1e-300], vec![-7.0, 3.0]], beta: 0.3 },
        ];
        for spec in specs {
            let model = sample_model(spec);
            let text = model_to_string(&model);
            let back = model_from_str(&text).unwrap();
            assert_eq!(back, model);
            assert_eq!(model_to_string(&back), text);
        }
    }

    #[test]
    fn model_load_rejects_inconsistent_files() {
        let text = model_to_string(&sample_model(DictSpec::Linear { dim: 2 }));
        let bad_a = text.replace("a 3.0000000000000000e0", "a 2.0000000000000000e0");
        assert!(matches!(model_from_str(&bad_a), Err(ModelError::Invalid(_))));
        assert!(matches!(model_from_str(&text.replace("model 1", "model 9")), Err(ModelError::Version(_))));
        assert!(model_from_str(&format!("{text}extra\n")).is_err());
        assert!(model_from_str(&text.replace("lambda 2", "lambda 3")).is_err());
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(model_from_str(&truncated).is_err());
        assert!(model_from_str("").is_err());
    }
}
