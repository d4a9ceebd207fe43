//! `hornets` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.
//! Results go to stdout and files; progress goes to stderr.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hornets_core::datagen::{dataset_stem, generate_gate_dataset, suite_seed, GateSpec, DEFAULT_DIMS};
use hornets_core::{extract_rules, ActivationKind, Gate, HorNetsConfig, LogisticConfig, Route, RoutePolicy};

use crate::bench::{grid_search, run_cv, run_suite, CvOptions, GridSpec, Method, SuiteSpec};
use crate::csv_io::{load_csv, save_csv};
use crate::error::{AppError, Result};
use crate::model_file::ModelFile;

#[derive(Debug, Parser)]
#[command(name = "hornets", version, about = "Train, evaluate and inspect HorNets classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic logic-gate datasets as CSV.
    Gen(GenArgs),
    /// Fit a model on a CSV dataset and write it as JSON.
    Train(TrainArgs),
    /// Repeated stratified cross-validation.
    Eval(EvalArgs),
    /// Grid search on a dataset, or the synthetic gate suite.
    Bench(BenchArgs),
    /// Print the highest-scoring combinations of a trained model as clauses.
    Rules(RulesArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed.
    #[arg(long, env = "HORNETS_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_gate)]
    pub gate: Gate,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 128)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Polyclip,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    Auto,
    Categorical,
    Continuous,
}

/// Model hyperparameters; unset flags keep the library defaults.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value = "polyclip")]
    pub activation: ActivationArg,
    /// polyClip exponent parameter.
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub rules: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 15)]
    pub batch_size: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub resample_fraction: Option<f64>,
    #[arg(long)]
    pub m_init: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    pub route: RouteArg,
}

impl ConfigArgs {
    pub fn to_config(&self, seed: u64) -> HorNetsConfig {
        let d = HorNetsConfig::default();
        HorNetsConfig {
            activation: match self.activation {
                ActivationArg::Polyclip => ActivationKind::PolyClip { k: self.k },
                ActivationArg::Relu => ActivationKind::Relu,
            },
            order: self.order.unwrap_or(d.order),
            num_rules: self.rules.unwrap_or(d.num_rules),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            batch_size: self.batch_size,
            epochs: self.epochs.unwrap_or(d.epochs),
            dropout_rate: self.dropout.unwrap_or(d.dropout_rate),
            resample_fraction: self.resample_fraction.unwrap_or(d.resample_fraction),
            m_init_scale: self.m_init.unwrap_or(d.m_init_scale),
            early_stop_patience: self.patience.unwrap_or(d.early_stop_patience),
            route: match self.route {
                RouteArg::Auto => RoutePolicy::Auto,
                RouteArg::Categorical => RoutePolicy::Pinned(Route::Categorical),
                RouteArg::Continuous => RoutePolicy::Pinned(Route::Continuous),
            },
            seed,
            ..d
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub model_out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Take the configuration from a model file instead of the flags.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Synthetic,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, conflicts_with = "data", required_unless_present = "data")]
    pub suite: Option<SuiteArg>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON grid; the full 600-configuration grid when omitted.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_gate)]
    pub gates: Vec<Gate>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    #[arg(long, default_value_t = 128)]
    pub count: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Structured JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; rule extraction draws no random numbers.
    #[command(flatten)]
    pub seed: SeedArg,
}

fn parse_gate(s: &str) -> std::result::Result<Gate, String> {
    s.parse::<Gate>().map_err(|e| e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}

fn stdout_line(out: &mut impl std::io::Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| AppError::io("<stdout>", e))
}

pub fn cmd_gen(args: &GenArgs, out: &mut impl std::io::Write) -> Result<()> {
    if args.reps == 0 {
        return Err(AppError::Usage("--reps must be at least 1".into()));
    }
    create_dir(&args.out_dir)?;
    for rep in 0..args.reps {
        let seed = suite_seed(args.seed.seed, args.gate, args.dim, rep);
        let spec = GateSpec::new(args.gate, args.dim, seed).with_count(args.count);
        let ds = generate_gate_dataset(&spec)?;
        let path = args.out_dir.join(format!("{}.csv", dataset_stem(args.gate, args.dim, rep)));
        save_csv(&ds, &path)?;
        stdout_line(out, format_args!("{}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, out: &mut impl std::io::Write) -> Result<()> {
    let config = args.config.to_config(args.seed.seed);
    config.validate()?;
    let ds = load_csv(&args.data)?;
    config.validate_for(ds.feature_count())?;
    eprintln!(
        "training on {} samples x {} features ({} classes)",
        ds.len(),
        ds.feature_count(),
        ds.class_count()
    );
    let (model, report) = hornets_core::fit(&ds, &config)?;
    let route = match model.fitted_route {
        Some(Route::Categorical) => "categorical",
        Some(Route::Continuous) => "continuous",
        None => "none",
    };
    stdout_line(out, format_args!("final_loss\t{:.6}", report.final_loss().unwrap_or(f64::NAN)))?;
    stdout_line(out, format_args!("epochs_run\t{}", report.epochs_run))?;
    stdout_line(
        out,
        format_args!(
            "routing\tcategorical={} continuous={} fitted={route}",
            report.categorical_batches, report.continuous_batches
        ),
    )?;
    let file = ModelFile::new(model, report, ds.feature_names.clone(), ds.class_names.clone());
    file.save(&args.model_out)?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, out: &mut impl std::io::Write) -> Result<()> {
    let config = match &args.model {
        Some(path) => ModelFile::load(path)?.model.config,
        None => args.config.to_config(args.seed.seed),
    };
    config.validate()?;
    let ds = load_csv(&args.data)?;
    let opts = CvOptions {
        folds: args.folds,
        seeds: args.seeds,
        master_seed: args.seed.seed,
        jobs: args.jobs,
    };
    eprintln!("evaluating {} folds x {} seeds", opts.folds, opts.seeds);
    let report = run_cv(&ds, &config, &opts)?;
    stdout_line(
        out,
        format_args!("macro_f1\t{:.4} ± {:.4}\t({} scores)", report.mean, report.std, report.cells.len()),
    )?;
    if let Some(path) = &args.report_out {
        write_file(path, &report.to_json()?)?;
    }
    Ok(())
}

fn load_grid(path: Option<&Path>) -> Result<GridSpec> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
            GridSpec::from_json(&text, &p.display().to_string())
        }
        None => Ok(GridSpec::standard()),
    }
}

pub fn cmd_bench(args: &BenchArgs, out: &mut impl std::io::Write) -> Result<()> {
    let grid = load_grid(args.grid_file.as_deref())?;
    grid.validate()?;
    stdout_line(out, format_args!("grid\t{} configurations", grid.len()))?;
    create_dir(&args.out_dir)?;

    if let Some(data) = &args.data {
        let ds = load_csv(data)?;
        let opts = CvOptions {
            folds: args.folds,
            seeds: args.seeds,
            master_seed: args.seed.seed,
            jobs: args.jobs,
        };
        let ranked = grid_search(&ds, &grid, &opts)?;
        let mut table = String::from("rank,grid_index,activation,order,rules,learning_rate,mean,std,fit_seconds\n");
        for (rank, r) in ranked.iter().enumerate() {
            let c = &r.report.config;
            let act = match c.activation {
                ActivationKind::PolyClip { k } => format!("polyclip{k}"),
                ActivationKind::Relu => "relu".into(),
            };
            table.push_str(&format!(
                "{},{},{act},{},{},{},{:.6},{:.6},{:.3}\n",
                rank + 1,
                r.grid_index,
                c.order,
                c.num_rules,
                c.learning_rate,
                r.report.mean,
                r.report.std,
                r.report.total_fit_seconds
            ));
        }
        write_file(&args.out_dir.join("grid_results.csv"), &table)?;
        write_file(&args.out_dir.join("grid_reports.json"), &crate::bench::to_json(&ranked)?)?;
        if let Some(best) = ranked.first() {
            stdout_line(
                out,
                format_args!("best\tgrid_index={} mean={:.4} std={:.4}", best.grid_index, best.report.mean, best.report.std),
            )?;
        }
        return Ok(());
    }

    let gates = if args.gates.is_empty() { Gate::ALL.to_vec() } else { args.gates.clone() };
    let dims = if args.dims.is_empty() { DEFAULT_DIMS.to_vec() } else { args.dims.clone() };
    let spec = SuiteSpec {
        count: args.count,
        repetitions: args.reps,
        base_seed: args.seed.seed,
        ..SuiteSpec::default()
    };
    let mut methods = vec![Method::Logistic(LogisticConfig::default())];
    methods.extend(grid.configs().into_iter().map(Method::HorNets));
    let result = run_suite(&spec, &gates, &dims, &methods, args.jobs, |g, d| eprintln!("done {g} d={d}"))?;
    write_file(&args.out_dir.join("synthetic_results.csv"), &result.to_csv())?;
    write_file(&args.out_dir.join("synthetic_summary.json"), &result.to_json()?)?;
    let cells = gates.len() * dims.len();
    stdout_line(out, format_args!("cells\t{cells}"))?;
    for row in &result.rows {
        stdout_line(
            out,
            format_args!("{}\t{}\t{}\t{:.3} ± {:.3}", row.gate, row.dim, row.method, row.mean, row.std),
        )?;
    }
    Ok(())
}

pub fn cmd_rules(args: &RulesArgs, out: &mut impl std::io::Write) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let mut ds = load_csv(&args.data)?;
    if ds.feature_count() != file.model.feature_count {
        return Err(AppError::Usage(format!(
            "dataset has {} features, model expects {}",
            ds.feature_count(),
            file.model.feature_count
        )));
    }
    ds.feature_names = file.feature_names.clone();
    let report = extract_rules(&file.model, &ds, args.top)?;
    out.write_all(report.to_text().as_bytes()).map_err(|e| AppError::io("<stdout>", e))?;
    if let Some(path) = &args.out {
        write_file(path, &crate::bench::to_json(&report)?)?;
    }
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut impl std::io::Write) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Rules(a) => cmd_rules(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_match_library() {
        let cli = Cli::try_parse_from(["hornets", "train", "--data", "x.csv", "--model-out", "m.json"]).unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        assert_eq!(args.config.to_config(0), HorNetsConfig::default());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "hornets", "eval", "--data", "x.csv", "--activation", "relu", "--order", "8", "--rules", "16",
            "--lr", "0.1", "--route", "continuous", "--seed", "9",
        ])
        .unwrap();
        let Command::Eval(args) = cli.command else { panic!() };
        let cfg = args.config.to_config(args.seed.seed);
        assert_eq!(cfg.activation, ActivationKind::Relu);
        assert_eq!((cfg.order, cfg.num_rules, cfg.seed), (8, 16, 9));
        assert_eq!(cfg.route, RoutePolicy::Pinned(Route::Continuous));
    }

    #[test]
    fn bad_gate_is_usage_error() {
        let err = Cli::try_parse_from(["hornets", "gen", "--gate", "nand", "--dim", "4"]).unwrap_err();
        assert!(err.use_stderr());
        assert_eq!(run(["hornets", "gen", "--gate", "nand", "--dim", "4"]), 2);
    }

    #[test]
    fn bench_needs_a_source() {
        assert!(Cli::try_parse_from(["hornets", "bench"]).is_err());
        assert!(Cli::try_parse_from(["hornets", "bench", "--suite", "synthetic", "--data", "x.csv"]).is_err());
        let cli = Cli::try_parse_from(["hornets", "bench", "--suite", "synthetic", "--gates", "xor,and", "--dims", "3,8"])
            .unwrap();
        let Command::Bench(args) = cli.command else { panic!() };
        assert_eq!(args.gates, [Gate::Xor, Gate::And]);
        assert_eq!(args.dims, [3, 8]);
    }
}
