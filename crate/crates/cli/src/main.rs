use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustfl_bench::config::DEFAULT_CONFIG_PATH;
use robustfl_bench::grid::infeasible;
use robustfl_bench::{emit_curves, emit_heatmap, expand_grid, load_config, run_benchmark, CellFilter};
use robustfl_cli::{format_vector, parse_params, parse_pre, read_vectors, CliError};
use robustfl_core::{AggregatorSpec, AttackContext, AttackKind, AttackSpec, Pipeline, PreAggregatorSpec};

#[derive(Parser)]
#[command(name = "robustfl", version, about = "Robust aggregation, attacks and benchmarks for federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate the vectors of a CSV file and print the result.
    Agg(AggArgs),
    /// Print the vector a Byzantine client would send.
    Attack(AttackArgs),
    /// Run every experiment of a benchmark config.
    Run(RunArgs),
    /// Draw accuracy curves or heatmaps from finished runs.
    Plot(PlotArgs),
    /// Parse a config, expand its grid and print the number of runs.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Declared number of Byzantine inputs.
    #[arg(long, default_value_t = 0)]
    f: usize,
    /// Pre-aggregator, `NAME` or `NAME:key=value,...`; repeatable, applied in order.
    #[arg(long = "pre")]
    pre: Vec<String>,
    /// Aggregator parameter `key=value`; repeatable.
    #[arg(long = "param")]
    param: Vec<String>,
    /// Seed for randomized pre-aggregators.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn pipeline(&self, rule: &str) -> Result<Pipeline<f64>, CliError> {
        let params = parse_params(self.param.iter().map(String::as_str))?;
        let agg = AggregatorSpec::parse(rule, self.f, params).map_err(|e| CliError::Usage(e.to_string()))?;
        let pre: Vec<PreAggregatorSpec> = self
            .pre
            .iter()
            .map(|p| parse_pre(p, self.f))
            .collect::<Result<_, _>>()?;
        Pipeline::new(&pre, &agg).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Args)]
struct AggArgs {
    /// Aggregation rule.
    #[arg(long)]
    rule: String,
    /// CSV file, one vector per line.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct AttackArgs {
    /// Attack name.
    #[arg(long)]
    name: String,
    /// Attack factor of InnerProductManipulation and ALittleIsEnough.
    #[arg(long)]
    tau: Option<f64>,
    /// CSV file with the honest vectors.
    #[arg(long)]
    input: PathBuf,
    /// Server rule the optimized attacks play against; `--f` copies of the
    /// attack vector (at least one) join the honest rows.
    #[arg(long, default_value = "Average")]
    rule: String,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = DEFAULT_CONFIG_PATH)]
    config: PathBuf,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Curve,
    Heatmap,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(value_enum)]
    kind: PlotKind,
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Curves only: keep cells of this aggregator or pipeline label.
    #[arg(long)]
    aggregator: Option<String>,
    /// Curves only: keep cells with this f.
    #[arg(long)]
    f: Option<usize>,
    /// Curves only: keep cells with this distribution label, e.g. `gamma0.33`.
    #[arg(long)]
    distribution: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value = DEFAULT_CONFIG_PATH)]
    config: PathBuf,
}

fn failure(e: impl ToString) -> CliError {
    CliError::Failure(e.to_string())
}

fn cmd_agg(args: AggArgs) -> Result<(), CliError> {
    let mut pipeline = args.pipeline.pipeline(&args.rule)?;
    let xs = read_vectors(&args.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.pipeline.seed);
    let out = pipeline.apply(&xs, &mut rng).map_err(failure)?;
    println!("{}", format_vector(&out));
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let mut params = robustfl_core::Params::new();
    if let Some(tau) = args.tau {
        params.insert("tau".into(), tau);
    }
    let spec = AttackSpec::parse(&args.name, &params, None).map_err(|e| CliError::Usage(e.to_string()))?;
    if spec.kind == AttackKind::LabelFlipping {
        return Err(CliError::Usage("LabelFlipping acts on training data; use it from a benchmark config".into()));
    }
    let honest = read_vectors(&args.input)?;
    let pipeline = args.pipeline.pipeline(&args.rule)?;
    let ctx = AttackContext {
        honest: &honest,
        f: args.pipeline.f.max(1),
        pipeline: &pipeline,
    };
    let rng = ChaCha8Rng::seed_from_u64(args.pipeline.seed);
    let rows = spec.generate(&ctx, &rng).map_err(failure)?.expect("f >= 1");
    println!("{}", format_vector(rows.row(0)));
    Ok(())
}

fn load(path: &std::path::Path) -> Result<robustfl_bench::BenchmarkConfig, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such config file", path.display())));
    }
    load_config(path).map_err(failure)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    if args.parallel == 0 {
        return Err(CliError::Usage("--parallel must be at least 1".into()));
    }
    let cfg = load(&args.config)?;
    let summary = run_benchmark(&cfg, args.parallel).map_err(failure)?;
    println!("{}", summary.to_json());
    eprintln!(
        "{} completed, {} skipped, {} failed; results in {}",
        summary.completed,
        summary.skipped,
        summary.failed,
        cfg.results_directory().display()
    );
    for (id, msg) in &summary.failures {
        eprintln!("  {id}: {msg}");
    }
    if summary.failed > 0 {
        return Err(failure(format!("{} runs failed", summary.failed)));
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), CliError> {
    let report = match args.kind {
        PlotKind::Curve => {
            let filter = CellFilter {
                aggregator: args.aggregator,
                f: args.f,
                distribution: args.distribution,
            };
            emit_curves(&args.results, &args.out, &filter)
        }
        PlotKind::Heatmap => emit_heatmap(&args.results, &args.out),
    }
    .map_err(failure)?;
    for file in &report.files {
        println!("{}", file.display());
    }
    if report.warnings > 0 {
        eprintln!("{} warnings", report.warnings);
    }
    if report.files.is_empty() {
        return Err(failure("nothing to plot"));
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let cfg = load(&args.config)?;
    let grid = expand_grid(&cfg).map_err(failure)?;
    let bad = infeasible(&cfg, &grid);
    println!("{}", grid.len());
    if !bad.is_empty() {
        for (id, msg) in &bad {
            eprintln!("{id}: {msg}");
        }
        return Err(failure(format!("{} of {} runs are infeasible", bad.len(), grid.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Agg(a) => cmd_agg(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Run(a) => cmd_run(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
