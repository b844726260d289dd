use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use locscale_core::predict::{DEFAULT_BAND, DEFAULT_CREDIBLE_LEVEL, DEFAULT_GRID, DEFAULT_PREDICTION_LEVEL};
use locscale_core::summarize::{print_report, summary_json, summary_report};
use locscale_core::{
    design_for, parse_model_formula, predict_mean, predict_response, simulate, term_grid, BlockSizes, CurveSide,
    DataTable, DesignMatrices, FitRequest, GridOptions, Mechanism, Posterior, PriorStrings, RunConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] locscale_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "locscale", version, about = "Bayesian location-scale regression with variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sampler and store posterior samples.
    Fit(FitArgs),
    /// Deviances and the most visited models of a stored run.
    Summary(SummaryArgs),
    /// Credible or prediction intervals on new data.
    Predict(PredictArgs),
    /// Posterior curve of one term on a grid.
    Plotdata(PlotArgs),
    /// Write a simulated dataset.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct StoreArg {
    /// Directory holding the posterior samples.
    #[arg(long, env = "LOCSCALE_STORE")]
    store_dir: Option<PathBuf>,
}

impl StoreArg {
    fn get(&self) -> Result<&Path> {
        self.store_dir
            .as_deref()
            .ok_or_else(|| CliError::Usage("no storage directory: pass --store-dir or set LOCSCALE_STORE".into()))
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// e.g. `y ~ sm(u, k = 20) | sm(u, k = 20)`
    #[arg(long)]
    formula: String,
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    #[arg(long, default_value_t = 5_000)]
    burn: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    c_beta_prior: Option<String>,
    #[arg(long)]
    c_alpha_prior: Option<String>,
    /// One for all mean terms, or one per term.
    #[arg(long)]
    pi_mu_prior: Vec<String>,
    #[arg(long)]
    pi_sigma_prior: Vec<String>,
    #[arg(long)]
    sigma_prior: Option<String>,
    /// Comma-separated weights of block sizes 1, 2, ...
    #[arg(long)]
    block_size_probs: Option<String>,
    /// Treat this column as categorical even if it looks numeric.
    #[arg(long)]
    categorical: Vec<String>,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Print the manifest as JSON instead of the text report.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SummaryArgs {
    #[command(flatten)]
    store: StoreArg,
    /// Override the data path recorded at fit time.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    n_models: usize,
    #[arg(long)]
    json: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum IntervalArg {
    Credible,
    Prediction,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    newdata: PathBuf,
    #[arg(long, value_enum, default_value = "credible")]
    interval: IntervalArg,
    /// Defaults to 0.80 for credible and 0.95 for prediction intervals.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SideArg {
    Mean,
    Stdev,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mean")]
    side: SideArg,
    /// Term label such as `sm(u)`, or its 1-based position.
    #[arg(long)]
    term: String,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    centre_effects: bool,
    /// Comma-separated probabilities, or `none`.
    #[arg(long)]
    quantiles: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// m1, m2, biv or gam4.
    #[arg(long)]
    mechanism: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid number `{}` in {what}", t.trim())))
        })
        .collect()
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let store_dir = args.store.get()?;
    if args.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let spec = parse_model_formula(&args.formula)?;
    let mut config = RunConfig::new(args.sweeps, args.burn, args.thin, args.seed);
    if let Some(text) = &args.block_size_probs {
        config.block_sizes = BlockSizes::User(parse_list(text, "--block-size-probs")?);
    }
    config.validate()?;
    let data = DataTable::read_csv(&args.data, &args.categorical)?;
    let priors = PriorStrings {
        c_beta: args.c_beta_prior.clone(),
        c_alpha: args.c_alpha_prior.clone(),
        pi_mu: args.pi_mu_prior.clone(),
        pi_sigma: args.pi_sigma_prior.clone(),
        sigma: args.sigma_prior.clone(),
    };
    let request = FitRequest {
        spec: &spec,
        data: &data,
        priors: &priors,
        config,
        data_path: Some(absolute(&args.data).display().to_string()),
        categorical: args.categorical.clone(),
    };
    let manifests = if args.chains == 1 {
        vec![request.run(store_dir)?]
    } else {
        request.run_chains(store_dir, args.chains)?
    };
    for (j, m) in manifests.iter().enumerate() {
        if args.json {
            println!("{}", serde_json::to_string_pretty(m)?);
            continue;
        }
        if manifests.len() > 1 {
            println!("Chain {j} (seed {})", m.seed);
        }
        print!("{}", print_report(&Posterior::open(&m.store_dir)?));
    }
    Ok(())
}

/// The training table recorded in the manifest, or `override_path`.
fn training_data(post: &Posterior, override_path: Option<&Path>) -> Result<Option<DataTable>> {
    let m = &post.manifest;
    let path = match (override_path, &m.data_path) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => return Ok(None),
    };
    if !path.exists() {
        warn!("training data {} not found", path.display());
        return Ok(None);
    }
    let data = DataTable::read_csv(&path, &m.categorical)?;
    if let (Some(now), Some(then)) = (data.fingerprint(), &m.fingerprint) {
        if now.sha256 != then.sha256 {
            warn!("{} differs from the data used for the fit", path.display());
        }
    }
    Ok(Some(data))
}

fn training_design(post: &Posterior, data: Option<&DataTable>) -> Result<Option<DesignMatrices>> {
    let Some(data) = data else { return Ok(None) };
    let design = design_for(&post.manifest, data)?;
    if design.n() != post.manifest.n {
        return Err(CliError::Usage(format!(
            "training data has {} usable rows but the fit used {}",
            design.n(),
            post.manifest.n
        )));
    }
    Ok(Some(design))
}

fn cmd_summary(args: &SummaryArgs) -> Result<()> {
    let post = Posterior::open(args.store.get()?)?;
    let data = training_data(&post, args.data.as_deref())?;
    let design = training_design(&post, data.as_ref())?;
    if design.is_none() {
        warn!("training data unavailable, deviances omitted");
    }
    let n_models = args.n_models.max(1);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary_json(&post, design.as_ref(), n_models))?);
    } else {
        print!("{}", summary_report(&post, design.as_ref(), n_models));
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let post = Posterior::open(args.store.get()?)?;
    let newdata = DataTable::read_csv(&args.newdata, &post.manifest.categorical)?;
    let table = match args.interval {
        IntervalArg::Credible => predict_mean(&post, &newdata, args.level.unwrap_or(DEFAULT_CREDIBLE_LEVEL))?,
        IntervalArg::Prediction => {
            let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
            predict_response(&post, &newdata, args.level.unwrap_or(DEFAULT_PREDICTION_LEVEL), &mut rng)?
        }
    };
    let text = if args.json {
        serde_json::to_string_pretty(&table)? + "\n"
    } else {
        table.to_csv()
    };
    write_output(args.out.as_deref(), &text)
}

fn cmd_plotdata(args: &PlotArgs) -> Result<()> {
    let post = Posterior::open(args.store.get()?)?;
    let data = training_data(&post, args.data.as_deref())?
        .ok_or_else(|| CliError::Usage("training data unavailable; pass --data".into()))?;
    let side = match args.side {
        SideArg::Mean => CurveSide::Mean,
        SideArg::Stdev => CurveSide::Stdev,
    };
    let mut opts = GridOptions::new(side, &args.term);
    opts.grid = args.grid;
    opts.intercept = args.intercept;
    opts.centre_effects = args.centre_effects;
    opts.quantiles = match args.quantiles.as_deref() {
        None => DEFAULT_BAND.to_vec(),
        Some("none") => Vec::new(),
        Some(text) => parse_list(text, "--quantiles")?,
    };
    let grid = term_grid(&post, &data, &opts)?;
    let text = if args.json {
        serde_json::to_string_pretty(&grid)? + "\n"
    } else {
        grid.to_csv()
    };
    write_output(args.out.as_deref(), &text)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mechanism: Mechanism = args.mechanism.parse()?;
    let data = simulate(mechanism, args.n.unwrap_or(mechanism.default_n()), args.seed)?;
    write_output(args.out.as_deref(), &data.to_csv())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Summary(a) => cmd_summary(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Plotdata(a) => cmd_plotdata(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
