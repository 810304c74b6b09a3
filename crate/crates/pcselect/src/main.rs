//! Command-line front end: simulate | select | roc | verify | eval.
//!
//! Exit codes: 0 success, 2 usage/domain error, 3 data error,
//! 4 verification failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use pcselect::error::Error;
use pcselect::eval::{confusion, mse_measures, ols_refit, roc_sweep, Metrics, SimConfig};
use pcselect::io;
use pcselect::oracle::{
    check_partial_faithfulness, population_recovers_support, random_suite_model,
    verify_corollary1, DEFAULT_ORACLE_ZERO_TOL,
};
use pcselect::pc::{pc_simple_population, pc_simple_select, ActiveSet, DEFAULT_ZERO_TOL};
use pcselect::sim::{
    build_sigma, draw_coefficients, fixture, seeded_rng, simulate_dataset, FixtureId, ModelSpec,
    SigmaKind,
};
use pcselect::stats::correlation_matrix;

#[derive(Parser)]
#[command(name = "pcselect", version, about = "Partial-correlation screening for variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Gaussian linear-model dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Run the selection algorithm on a dataset (or a population model).
    Select(SelectArgs),
    /// Sweep alpha over seeded replicates and write a ROC table.
    Roc(RocArgs),
    /// Run the brute-force verification suites.
    Verify(VerifyArgs),
    /// Compute performance metrics from a result and its ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    peff: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value = "toeplitz")]
    design: String,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Output truth JSON path.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Dataset CSV (sample mode).
    #[arg(long, conflicts_with = "model")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    max_order: Option<usize>,
    /// Run the exact population mode on a model JSON file.
    #[arg(long, requires = "model")]
    population: bool,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    zero_tol: f64,
    /// Result JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the full test trace to this JSON path.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    peff: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value = "toeplitz")]
    design: String,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Comma-separated strictly increasing significance levels.
    #[arg(long, default_value = "0.001,0.01,0.05,0.15")]
    alphas: String,
    #[arg(long)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check the worked fixtures.
    #[arg(long, conflicts_with = "random")]
    fixtures: bool,
    /// Check seeded random models against the oracle.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 100)]
    models: usize,
    #[arg(long, default_value_t = 6)]
    p: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_ORACLE_ZERO_TOL)]
    zero_tol: f64,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Selection result JSON.
    #[arg(long)]
    result: PathBuf,
    /// Truth JSON from `simulate`.
    #[arg(long)]
    truth: PathBuf,
    /// Dataset CSV; enables the coefficient refit and MSE measures.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    response: String,
    /// Metrics JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Select(args) => run_select(args),
        Command::Roc(args) => run_roc(args),
        Command::Verify(args) => run_verify(args),
        Command::Eval(args) => run_eval(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Model(_) | Error::Capability(_) | Error::NonInformative(_) => 2,
        Error::Data(_) | Error::Refit(_) | Error::Io(_) | Error::Json(_) => 3,
    }
}

fn with_threads<T>(
    threads: Option<usize>,
    f: impl FnOnce() -> pcselect::Result<T> + Send,
) -> pcselect::Result<T>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(t) => {
            if t == 0 {
                return Err(Error::Domain("--threads must be >= 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

fn run_simulate(args: SimulateArgs) -> pcselect::Result<ExitCode> {
    let kind = SigmaKind::parse(&args.design)?;
    let sigma = build_sigma(kind, args.p, args.rho)?;
    let mut rng = seeded_rng(args.seed);
    let beta = draw_coefficients(args.p, args.peff, &mut rng)?;
    let model = ModelSpec::new(
        DVector::zeros(args.p),
        sigma,
        beta,
        args.delta,
        args.sigma2,
    )?;
    let data = simulate_dataset(&model, args.n, &mut rng)?;
    let truth = io::TruthRecord {
        p: args.p,
        peff: args.peff,
        beta: model.beta.iter().copied().collect(),
        support: model.support(),
        sigma_kind: kind.as_str().to_string(),
        rho: args.rho,
        sigma2: args.sigma2,
        delta: args.delta,
        seed: args.seed,
    };
    let mut csv = Vec::new();
    io::write_dataset_csv(&data, &mut csv)?;
    fs::write(&args.out, csv)?;
    fs::write(&args.truth, serde_json::to_string_pretty(&truth)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run_select(args: SelectArgs) -> pcselect::Result<ExitCode> {
    let (result, names) = if args.population {
        let path = args.model.as_ref().expect("clap enforces --model");
        let model = io::read_model_json(&fs::read(path)?)?;
        let names: Vec<String> = (1..=model.p()).map(|j| format!("x{j}")).collect();
        (
            pc_simple_population(&model, args.zero_tol, args.max_order)?,
            names,
        )
    } else {
        let path = args.data.as_ref().ok_or_else(|| {
            Error::Domain("either --data or --population --model is required".into())
        })?;
        let data = io::read_dataset_csv(fs::File::open(path)?, &args.response)?;
        let stats = correlation_matrix(&data)?;
        let names = stats.names.clone();
        (pc_simple_select(&stats, args.alpha, args.max_order)?, names)
    };
    let doc = io::selection_json(&result, &names);
    match &args.out {
        Some(path) => fs::write(path, doc)?,
        None => println!("{doc}"),
    }
    if let Some(path) = &args.trace {
        fs::write(path, serde_json::to_string_pretty(&result.trace)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_alpha_grid(s: &str) -> pcselect::Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("cannot parse alpha '{tok}'")))
        })
        .collect()
}

fn run_roc(args: RocArgs) -> pcselect::Result<ExitCode> {
    let kind = SigmaKind::parse(&args.design)?;
    let alphas = parse_alpha_grid(&args.alphas)?;
    let cfg = SimConfig {
        p: args.p,
        peff: args.peff,
        n: args.n,
        kind,
        rho: args.rho,
        sigma2: args.sigma2,
        delta: 0.0,
        max_order: args.max_order,
    };
    let table = with_threads(args.threads, || {
        roc_sweep(&cfg, &alphas, args.replicates, args.seed)
    })?;
    let mut buf = Vec::new();
    io::write_roc_csv(&table, &mut buf)?;
    fs::write(&args.out, buf)?;
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> pcselect::Result<ExitCode> {
    if !args.fixtures && !args.random {
        return Err(Error::Domain("choose --fixtures or --random".into()));
    }
    let mut failed = false;
    if args.fixtures {
        let seed = args.seed.unwrap_or(0);
        let fixtures = [
            (FixtureId::Example1, "example1", false),
            (FixtureId::Example2, "example2", true),
            (FixtureId::Example3, "example3", true),
            (FixtureId::Example4, "example4", true),
        ];
        for (id, name, expect_faithful) in fixtures {
            let model = fixture(id, &mut seeded_rng(seed));
            let report = check_partial_faithfulness(&model, args.zero_tol)?;
            let cor1 = verify_corollary1(&model, args.zero_tol)?;
            let recovered = population_recovers_support(&model, DEFAULT_ZERO_TOL)?;
            let ok = report.holds == expect_faithful
                && cor1 == expect_faithful
                && recovered == expect_faithful;
            println!(
                "{name}: faithful={} corollary1={cor1} support-recovered={recovered} [{}]",
                report.holds,
                if ok { "ok" } else { "FAIL" }
            );
            if !ok {
                failed = true;
            }
        }
    }
    if args.random {
        let seed = args
            .seed
            .ok_or_else(|| Error::Domain("--seed is required for verify --random".into()))?;
        let results = with_threads(args.threads, || {
            use rayon::prelude::*;
            (0..args.models)
                .into_par_iter()
                .map(|i| -> pcselect::Result<(usize, bool, bool, bool)> {
                    let model = random_suite_model(seed, i, args.p)?;
                    let faithful = check_partial_faithfulness(&model, args.zero_tol)?.holds;
                    let cor1 = verify_corollary1(&model, args.zero_tol)?;
                    let recovered = population_recovers_support(&model, DEFAULT_ZERO_TOL)?;
                    Ok((i, faithful, cor1, recovered))
                })
                .collect::<pcselect::Result<Vec<_>>>()
        })?;
        let mut bad = 0usize;
        for &(i, faithful, cor1, recovered) in &results {
            if !(faithful && cor1 && recovered) {
                println!(
                    "model {i}: faithful={faithful} corollary1={cor1} support-recovered={recovered} [FAIL]"
                );
                bad += 1;
            }
        }
        println!(
            "random suite: {}/{} models pass (p={}, seed={seed})",
            results.len() - bad,
            results.len(),
            args.p
        );
        if bad > 0 {
            failed = true;
        }
    }
    if failed {
        Ok(ExitCode::from(4))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn run_eval(args: EvalArgs) -> pcselect::Result<ExitCode> {
    let result = io::read_selection_json(&fs::read(&args.result)?)?;
    let truth = io::read_truth_json(&fs::read(&args.truth)?)?;
    if truth.p != result.p {
        return Err(Error::Data(format!(
            "result has p = {}, truth has p = {}",
            result.p, truth.p
        )));
    }
    let selected = ActiveSet::new(result.selected.clone());
    let truth_set = ActiveSet::new(truth.support.clone());
    let rates = confusion(&selected, &truth_set, truth.p)?;
    let (mse_coeff, mse_pred) = match &args.data {
        None => (None, None),
        Some(path) => {
            let data = io::read_dataset_csv(fs::File::open(path)?, &args.response)?;
            if data.x.ncols() != truth.p {
                return Err(Error::Data("dataset width does not match truth".into()));
            }
            let beta_hat = ols_refit(&data, &selected)?;
            let kind = SigmaKind::parse(&truth.sigma_kind)?;
            let sigma = build_sigma(kind, truth.p, truth.rho)?;
            let model = ModelSpec::new(
                DVector::zeros(truth.p),
                sigma,
                DVector::from_vec(truth.beta.clone()),
                truth.delta,
                truth.sigma2,
            )?;
            let (c, p) = mse_measures(&beta_hat, &model)?;
            (Some(c), Some(p))
        }
    };
    let metrics = Metrics {
        mse_coeff,
        mse_pred,
        tpr: rates.tpr,
        fpr: rates.fpr,
    };
    let doc = io::metrics_json(&metrics);
    match &args.out {
        Some(path) => fs::write(path, doc)?,
        None => println!("{doc}"),
    }
    Ok(ExitCode::SUCCESS)
}
