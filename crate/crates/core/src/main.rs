use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize as _;

use reject_svm::dictionary::DictError;
use reject_svm::evaluate::{self, EvalError, DEFAULT_DELTA, DEFAULT_P};
use reject_svm::io::{self as rio, DataError, DataSet, ModelError, SpecError};
use reject_svm::losses::{CostParams, LossError};
use reject_svm::lp::dump_tableau;
use reject_svm::sim::{self, ExperimentConfig, Scenario, SimError};
use reject_svm::theory::{self, Check, DiagnoseConfig, TheoryContext, TheoryError};
use reject_svm::train::{self, Model, TrainError, DEFAULT_FOLDS};

const SEED_ENV: &str = "REJECT_SVM_SEED";

#[derive(Parser)]
#[command(name = "reject-svm", version, about = "l1-regularized SVMs with a reject option")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model by linear programming.
    Train(TrainArgs),
    /// Margins and decisions for each row.
    Predict(PredictArgs),
    /// Empirical risks of a model on labelled data.
    Eval(EvalArgs),
    /// Data-driven bounds on misclassification and rejection rates.
    Bounds(BoundsArgs),
    /// Run a synthetic experiment.
    Simulate(SimulateArgs),
    /// Check population-level properties on a finite-support law.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("weight").required(true).args(["r", "cv"]))]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// linear | constant | constant+linear | rbf:KxK[:beta=B][:box=...] | centers:x,y;x,y[:beta=B]
    #[arg(long)]
    dict: String,
    /// Rejection cost in (0, 1/2].
    #[arg(long, default_value_t = 0.25)]
    d: f64,
    /// Rejection threshold; defaults to 1/2 clipped to [d, 1-d].
    #[arg(long)]
    tau: Option<f64>,
    /// Weight of the l1 penalty.
    #[arg(long)]
    r: Option<f64>,
    /// Choose the weight by cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the training LP tableau here.
    #[arg(long)]
    dump_tableau: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_P)]
    p: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// two_gaussian | mixture; overrides the config file.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the bound-coverage experiment instead (two_gaussian only).
    #[arg(long)]
    coverage: bool,
    #[arg(long, default_value_t = 0.05, requires = "coverage")]
    r: f64,
    #[arg(long, default_value_t = 0.1, requires = "coverage")]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_P, requires = "coverage")]
    p: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// CSV with columns p, eta, then features.
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    dict: String,
    #[arg(long, default_value_t = 0.25)]
    d: f64,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated subset of psi,kappa,complexity,norm_bound,path,domination.
    #[arg(long, default_value = "psi,kappa,complexity,norm_bound,path,domination")]
    checks: String,
    /// Random cases for the norm-bound and domination checks.
    #[arg(long, default_value_t = 500)]
    cases: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 2;
const DATA: u8 = 3;
const NUMERICAL: u8 = 4;
const PARAMETER: u8 = 5;

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::new(DATA, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::new(DATA, e)
    }
}

impl From<DictError> for Failure {
    fn from(e: DictError) -> Self {
        Failure::new(DATA, e)
    }
}

impl From<LossError> for Failure {
    fn from(e: LossError) -> Self {
        Failure::new(PARAMETER, e)
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        let code = match e {
            SpecError::Unknown(_) | SpecError::Malformed { .. } => USAGE,
            SpecError::Dimension { .. } | SpecError::Dictionary(_) => DATA,
        };
        Failure::new(code, e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::Status(_) | TrainError::Lp(_) => NUMERICAL,
            TrainError::Unlabeled | TrainError::Empty { .. } | TrainError::Dictionary(_) => DATA,
            _ => PARAMETER,
        };
        Failure::new(code, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Parameter(t) => t.into(),
            EvalError::NonFinite(_) => Failure::new(NUMERICAL, e),
            EvalError::Gamma(_) | EvalError::EmptyGrid => Failure::new(PARAMETER, e),
            _ => Failure::new(DATA, e),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Train(t) => t.into(),
            SimError::Eval(t) => t.into(),
            SimError::Loss(t) => t.into(),
            SimError::Dictionary(t) => t.into(),
            SimError::Config(_) => Failure::new(PARAMETER, e),
            SimError::Io(_) => Failure::new(DATA, e),
        }
    }
}

impl From<TheoryError> for Failure {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::Train(t) => t.into(),
            TheoryError::Loss(t) => t.into(),
            _ => Failure::new(PARAMETER, e),
        }
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn write_failed(e: std::io::Error) -> Failure {
    Failure::new(DATA, format!("write failed: {e}"))
}

/// Runs `body` against the file at `out`, or standard output.
fn with_output(
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            body(&mut w).and_then(|_| w.flush()).map_err(write_failed)
        }
        None => {
            let mut w = std::io::stdout().lock();
            body(&mut w).map_err(write_failed)
        }
    }
}

fn read_data(path: &Path, require_labels: bool) -> Result<DataSet, Failure> {
    rio::read_data(open(path)?, require_labels).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))?;
    rio::model_from_str(&text).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn cost_params(d: f64, tau: Option<f64>) -> Result<CostParams, Failure> {
    Ok(match tau {
        Some(t) => CostParams::new(d, t)?,
        None => CostParams::with_default_tau(d)?,
    })
}

/// Flag, then environment, then zero.
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::new(USAGE, format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn check_dimension(model: &Model, data: &DataSet) -> Result<(), Failure> {
    if model.dict.dim() != data.dim() {
        return Err(Failure::new(
            DATA,
            format!("model expects {} features, data has {}", model.dict.dim(), data.dim()),
        ));
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let cp = cost_params(args.d, args.tau)?;
    let template = rio::parse_dict_spec(&args.dict)?;
    let data = read_data(&args.data, true)?;
    let dict = template.resolve(&data.x)?;
    let phi = dict.evaluate(&data.x, data.y.as_deref())?;
    let r = match args.r {
        Some(r) => r,
        None => {
            let seed = resolve_seed(args.seed)?.unwrap_or(0);
            let c_f = dict.sup_bound().map_or(1.0, |b| b.value);
            let cv = train::cross_validate(&phi, &cp, &train::default_r_grid(&cp, c_f), args.folds, seed)?;
            println!("cross-validation ({} folds, seed {seed})", args.folds);
            println!("{:>12} {:>12} {:>12}", "r", "mean_risk", "std_error");
            for row in &cv.table {
                println!("{:>12.4e} {:>12.6} {:>12.6}", row.r, row.mean_risk, row.std_error);
            }
            cv.best_r
        }
    };
    if r == 0.0 {
        eprintln!("warning: r = 0 solves the unpenalized LP");
    }
    if let Some(path) = &args.dump_tableau {
        let lp = train::assemble_lp(&phi, &cp, r)?;
        let mut w = create(path)?;
        dump_tableau(&lp, &mut w).map_err(|e| Failure::new(DATA, e))?;
        w.flush().map_err(write_failed)?;
    }
    let model = train::fit(&dict, &phi, &cp, r)?;
    std::fs::write(&args.out, rio::model_to_string(&model))
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", args.out.display())))?;
    println!("n          {}", model.meta.n);
    println!("M          {}", model.dict.len());
    println!("r          {:e}", model.r);
    println!("l1_norm    {:.10}", model.l1_norm());
    println!("objective  {:.10}", model.meta.objective);
    println!("support    {}", model.support_size());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let data = read_data(&args.data, false)?;
    check_dimension(&model, &data)?;
    let phi = model.dict.evaluate(&data.x, None)?;
    let rows = evaluate::predict_matrix(&model, &phi)?;
    with_output(args.out.as_deref(), |w| {
        writeln!(w, "margin,decision")?;
        for (f, dec) in &rows {
            writeln!(w, "{f:.16e},{dec}")?;
        }
        Ok(())
    })
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let data = read_data(&args.data, true)?;
    check_dimension(&model, &data)?;
    let phi = model.dict.evaluate(&data.x, data.y.as_deref())?;
    let rep = evaluate::risk_report(&model, &phi)?;
    if let Some(path) = &args.out {
        with_output(Some(path), |w| {
            writeln!(w, "n_eval,phi_risk,ell_risk,misclass_rate,reject_rate")?;
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                rep.n_eval, rep.phi_risk, rep.ell_risk, rep.misclass_rate, rep.reject_rate
            )
        })?;
    }
    println!("n_eval         {}", rep.n_eval);
    println!("phi_risk       {:.10}", rep.phi_risk);
    println!("ell_risk       {:.10}", rep.ell_risk);
    println!("misclass_rate  {:.10}", rep.misclass_rate);
    println!("reject_rate    {:.10}", rep.reject_rate);
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let data = read_data(&args.data, true)?;
    check_dimension(&model, &data)?;
    let phi = model.dict.evaluate(&data.x, data.y.as_deref())?;
    let rep = evaluate::bounds(&model, &phi, &evaluate::default_gamma_grid(), args.delta, args.p)?;
    let tail = rep.misclass.tail;
    if let Some(path) = &args.out {
        with_output(Some(path), |w| {
            writeln!(w, "gamma,empirical_misclass,empirical_reject,rate,complexity,tail,bound_misclass,bound_reject")?;
            for row in &rep.grid {
                let complexity = row.rate * rep.l1_norm;
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    row.gamma,
                    row.empirical_misclass,
                    row.empirical_reject,
                    row.rate,
                    complexity,
                    tail,
                    row.empirical_misclass + complexity + tail,
                    row.empirical_reject + complexity + tail
                )?;
            }
            Ok(())
        })?;
    }
    println!("delta {}  p {}  l1_norm {:.10}", rep.delta, rep.p, rep.l1_norm);
    for (name, side) in [("misclass", &rep.misclass), ("reject", &rep.reject)] {
        println!(
            "{name:<9} bound {:.10}  (gamma {:.4}, empirical {:.6}, complexity {:.6}, tail {:.6})",
            side.bound, side.gamma, side.empirical, side.complexity, side.tail
        );
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, bool), Failure> {
    let Some(path) = path else {
        return Ok((ExperimentConfig::default(), false));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))?;
    let has_seed = table.contains_key("seed");
    let config = ExperimentConfig::deserialize(table)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))?;
    Ok((config, has_seed))
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let (mut config, config_seed) = load_config(args.config.as_deref())?;
    if let Some(s) = args.scenario {
        config.scenario = s;
    }
    // flag, then config file, then environment
    if args.seed.is_some() || !config_seed {
        if let Some(seed) = resolve_seed(args.seed)? {
            config.seed = seed;
        }
    }
    let out = args.out.as_deref();
    match (config.scenario, args.coverage) {
        (Scenario::TwoGaussian, true) => {
            let rows = sim::run_bound_coverage(&config, args.r, args.delta, args.p)?;
            with_output(out, |w| {
                writeln!(w, "repetition,l1_norm,empirical_misclass,bound_misclass,true_misclass,bound_reject,true_reject")?;
                for c in &rows {
                    writeln!(
                        w,
                        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        c.repetition, c.l1_norm, c.empirical_misclass, c.bound_misclass, c.true_misclass, c.bound_reject, c.true_reject
                    )?;
                }
                Ok(())
            })?;
            let covered = rows.iter().filter(|c| c.covered()).count();
            eprintln!("coverage {covered}/{} at delta {}", rows.len(), args.delta);
        }
        (Scenario::TwoGaussian, false) => {
            let rows = sim::run_reject_vs_plain(&config)?;
            with_output(out, |w| sim::write_results(&rows, w))?;
            let reject = sim::best_over_grid(&rows, sim::Arm::Reject);
            let plain = sim::best_over_grid(&rows, sim::Arm::Plain);
            let wins = reject.iter().zip(&plain).filter(|(r, p)| r < p).count();
            eprintln!(
                "median best excess risk: reject {:.6}, plain {:.6}; reject wins {wins}/{}",
                sim::median(&reject),
                sim::median(&plain),
                reject.len()
            );
        }
        (Scenario::Mixture, false) => {
            let map = sim::run_mixture_boundaries(&config)?;
            with_output(out, |w| sim::write_boundary(&map, w))?;
            eprintln!(
                "cv r {:.4e}; high-density agreement {:.4}; reject cells {}",
                map.r,
                map.high_density_agreement(),
                map.reject_cells()
            );
        }
        (Scenario::Mixture, true) => {
            return Err(Failure::new(USAGE, "--coverage needs the two_gaussian scenario"));
        }
    }
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<(), Failure> {
    let cp = cost_params(args.d, args.tau)?;
    let template = rio::parse_dict_spec(&args.dict)?;
    let checks = args
        .checks
        .split(',')
        .map(|s| Check::parse(s.trim()).ok_or_else(|| Failure::new(USAGE, format!("unknown check {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let dist = rio::read_distribution(open(&args.dist)?)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", args.dist.display())))?;
    let dict = template.resolve(&dist.points())?;
    let ctx = TheoryContext::new(dist, dict, cp)?;
    let cfg = DiagnoseConfig {
        random_cases: args.cases,
        seed: resolve_seed(args.seed)?.unwrap_or(0),
        ..DiagnoseConfig::default()
    };
    let rows = theory::diagnose(&ctx, &checks, &cfg)?;
    if let Some(path) = &args.out {
        with_output(Some(path), |w| {
            writeln!(w, "check,status,slack,witness")?;
            for row in &rows {
                writeln!(w, "{},{},{:.16e},\"{}\"", row.name, row.status, row.slack, row.witness.replace('"', "\"\""))?;
            }
            Ok(())
        })?;
    }
    for row in &rows {
        println!("{:<20} {:<8} slack {:.6e}", row.name, row.status, row.slack);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Bounds(a) => bounds(a),
        Command::Simulate(a) => simulate(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
