//! `hetnet`: scenario generation, solvers, SVM training, and experiment
//! harness behind one deterministic command-line interface.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 solver infeasibility.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use hetnet_core::harness::{
    atomic_write, emit_plot_data, run_comparison, sweep_load, EmitOpts, HarnessOpts,
};
use hetnet_core::jur::{
    solution_csv, solve_dsm, solve_jur_bnb, solve_jur_exhaustive, JurError, JurOpts,
};
use hetnet_core::lhm::{build_training_data, solve_lhm, LhmOpts};
use hetnet_core::pricing::build_bid_table;
use hetnet_core::scenario::{generate_scenario, Scenario, ScenarioConfig};
use hetnet_core::seed::substream;
use hetnet_core::svm::{accuracy, cross_validate, train, SvmModel, SvmParams, TrainingSet};

#[derive(Parser)]
#[command(name = "hetnet", version, about = "URLLC HetNet offloading toolkit")]
struct Cli {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration JSON; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory or file, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print the default configuration JSON and exit.
    #[arg(long)]
    print_default_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario JSON from the configuration and seed.
    Generate(GenerateArgs),
    /// Solve one scenario with dsm, jur, or lhm.
    Solve(SolveArgs),
    /// Train the association classifier.
    Train(TrainArgs),
    /// Run DSM/JUR/LHM on one scenario and emit plot data.
    Compare(CompareArgs),
    /// Sweep the user load and emit service-rate data.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {}

#[derive(Args)]
struct SolveArgs {
    /// Scenario JSON produced by `generate`.
    #[arg(long)]
    scenario: PathBuf,
    /// dsm | jur | lhm
    #[arg(long)]
    algorithm: String,
    /// Trained model JSON (required for lhm).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the exhaustive solver instead of branch-and-bound (jur only).
    #[arg(long)]
    exact_only: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled dataset CSV (x,d_th,r_th,delta_d,delta_r,snr,mu).
    #[arg(long, conflicts_with = "from_scenarios")]
    data: Option<PathBuf>,
    /// Comma-separated scenario seeds to label with the exact solver.
    #[arg(long, value_delimiter = ',')]
    from_scenarios: Option<Vec<u64>>,
    /// Select hyperparameters by cross validation over the config grid.
    #[arg(long)]
    cv: bool,
    #[arg(long)]
    folds: Option<usize>,
    /// Where to write the model JSON.
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Trained model JSON for the LHM phase.
    #[arg(long)]
    model: PathBuf,
    /// Write the running-time column as zeros for reproducibility audits.
    #[arg(long)]
    normalize_times: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Load grid as start:end:step, e.g. 300:500:20.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    normalize_times: bool,
}

enum CliError {
    Io(String),
    Usage(String),
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Infeasible(m) => m,
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    if cli.print_default_config {
        println!("{}", RunConfig::print_default());
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    match run(&cli, command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// HETNET_THREADS caps worker parallelism (defaults to the logical cores).
fn configure_threads() {
    if let Ok(value) = std::env::var("HETNET_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .ok();
            }
        } else {
            eprintln!("warning: ignoring unparsable HETNET_THREADS={value}");
        }
    }
}

fn run(cli: &Cli, command: &Command) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let master_seed = cli.seed.unwrap_or(config.master_seed);
    let out_dir = cli.out.clone().unwrap_or_else(|| {
        PathBuf::from(if config.out_dir.is_empty() {
            "out"
        } else {
            &config.out_dir
        })
    });
    match command {
        Command::Generate(_) => cmd_generate(cli, &config, master_seed, &out_dir),
        Command::Solve(args) => cmd_solve(cli, &config, args, &out_dir),
        Command::Train(args) => cmd_train(cli, &config, args, master_seed),
        Command::Compare(args) => cmd_compare(cli, &config, args, master_seed, &out_dir),
        Command::Sweep(args) => cmd_sweep(cli, &config, args, master_seed, &out_dir),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic_write(path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

fn read_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read scenario {}: {e}", path.display())))?;
    Scenario::from_json(&text)
        .map_err(|e| CliError::Usage(format!("scenario {}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<SvmModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    SvmModel::from_json(&text)
        .map_err(|e| CliError::Usage(format!("model {}: {e}", path.display())))
}

fn scenario_from_config(config: &RunConfig, master_seed: u64) -> Result<Scenario, CliError> {
    generate_scenario(&config.scenario, substream(master_seed, "scenario"))
        .map_err(|e| CliError::Usage(format!("scenario config: {e}")))
}

fn cmd_generate(
    cli: &Cli,
    config: &RunConfig,
    master_seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let scenario = scenario_from_config(config, master_seed)?;
    let path = if out.extension().is_some() {
        out.to_path_buf()
    } else {
        out.join("scenario.json")
    };
    write_atomic(&path, scenario.to_json().as_bytes())?;
    if !cli.quiet {
        println!(
            "scenario: {} users, {} SBSs, seed {} -> {}",
            scenario.users.len(),
            scenario.sbss.len(),
            scenario.seed,
            path.display()
        );
    }
    Ok(())
}

fn map_jur_error(e: JurError) -> CliError {
    match e {
        JurError::TooLarge { n } => CliError::Usage(format!(
            "{n} users exceed the exhaustive-enumeration guard of 20"
        )),
        JurError::Infeasible { blocking } => CliError::Infeasible(format!(
            "no feasible assignment; blocking users: {:?}",
            blocking.iter().map(|u| u.0).collect::<Vec<_>>()
        )),
    }
}

fn cmd_solve(
    cli: &Cli,
    config: &RunConfig,
    args: &SolveArgs,
    out_dir: &Path,
) -> Result<(), CliError> {
    let scenario = read_scenario(&args.scenario)?;
    let bids = build_bid_table(&scenario);
    let jur_opts = JurOpts {
        node_budget: config.solver.jur_node_budget,
    };

    let (name, association, resources, total_cost, wall, fallbacks) =
        match args.algorithm.as_str() {
            "dsm" => {
                let sol = solve_dsm(&scenario);
                (
                    "dsm",
                    sol.association,
                    sol.resources,
                    sol.total_cost,
                    sol.wall_time_s,
                    None,
                )
            }
            "jur" => {
                let sol = if args.exact_only {
                    solve_jur_exhaustive(&scenario, &bids).map_err(map_jur_error)?
                } else {
                    solve_jur_bnb(&scenario, &bids, &jur_opts).map_err(map_jur_error)?
                };
                (
                    "jur",
                    sol.association,
                    sol.resources,
                    sol.total_cost,
                    sol.wall_time_s,
                    None,
                )
            }
            "lhm" => {
                let model_path = args.model.as_ref().ok_or_else(|| {
                    CliError::Usage("lhm requires --model <model.json>".to_string())
                })?;
                let model = read_model(model_path)?;
                let opts = LhmOpts {
                    barrier: config.solver.barrier,
                    ..Default::default()
                };
                let sol = solve_lhm(&scenario, &model, &bids, &opts)
                    .map_err(|e| CliError::Infeasible(e.to_string()))?;
                (
                    "lhm",
                    sol.association,
                    sol.resources,
                    sol.total_cost,
                    sol.wall_time_s,
                    Some(sol.fallback_flags),
                )
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown algorithm {other:?} (expected dsm, jur, or lhm)"
                )))
            }
        };

    let csv = solution_csv(
        &scenario,
        &association,
        &resources,
        &bids,
        fallbacks.as_deref(),
    );
    let path = out_dir.join(format!("solution_{name}.csv"));
    write_atomic(&path, csv.as_bytes())?;
    let served = association.served_count();
    if !cli.quiet {
        println!(
            "{}: total cost {:.3}, service rate {:.4}, runtime {:.3}s -> {}",
            name,
            total_cost,
            served as f64 / scenario.users.len() as f64,
            wall,
            path.display()
        );
    }
    Ok(())
}

fn cmd_train(
    cli: &Cli,
    config: &RunConfig,
    args: &TrainArgs,
    master_seed: u64,
) -> Result<(), CliError> {
    let data: TrainingSet = match (&args.data, &args.from_scenarios) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read dataset {}: {e}", path.display()))
            })?;
            TrainingSet::from_csv(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        (None, Some(seeds)) => {
            let scenarios: Result<Vec<Scenario>, CliError> = seeds
                .iter()
                .map(|s| {
                    let cfg = ScenarioConfig {
                        n_users: config.training.users_per_scenario,
                        ..config.scenario.clone()
                    };
                    generate_scenario(&cfg, *s)
                        .map_err(|e| CliError::Usage(format!("seed {s}: {e}")))
                })
                .collect();
            let jur_opts = JurOpts {
                node_budget: config.solver.jur_node_budget,
            };
            let (data, skipped) = build_training_data(&scenarios?, &jur_opts);
            if skipped > 0 && !cli.quiet {
                eprintln!("warning: {skipped} scenario(s) skipped as infeasible");
            }
            data
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --data or --from-scenarios is required".to_string(),
            ))
        }
    };

    let mut params = SvmParams {
        c: config.svm.c,
        kernel_gamma: config.svm.kernel_gamma,
        tol: config.svm.tol,
        max_passes: config.svm.max_passes,
        seed: substream(master_seed, "svm-shuffle"),
    };
    if args.cv {
        let folds = args.folds.unwrap_or(config.svm.cv_folds);
        if folds < 2 {
            return Err(CliError::Usage(
                "--cv requires at least 2 folds".to_string(),
            ));
        }
        let grid: Vec<(f64, f64)> = config
            .svm
            .cv_grid_c
            .iter()
            .flat_map(|&c| config.svm.cv_grid_gamma.iter().map(move |&g| (c, g)))
            .collect();
        let cv = cross_validate(
            &data,
            &grid,
            folds,
            &params,
            substream(master_seed, "cv-folds"),
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;
        if !cli.quiet {
            println!(
                "cross-validation: c={} kernel_gamma={} ({} folds)",
                cv.best_c, cv.best_kernel_gamma, folds
            );
        }
        params.c = cv.best_c;
        params.kernel_gamma = cv.best_kernel_gamma;
    }
    let model = train(&data, &params).map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(&args.model_out, model.to_json().as_bytes())?;
    if !cli.quiet {
        println!(
            "trained on {} rows; training accuracy {:.2}% -> {}",
            data.len(),
            100.0 * accuracy(&model, &data.rows),
            args.model_out.display()
        );
    }
    Ok(())
}

fn harness_opts(config: &RunConfig) -> HarnessOpts {
    HarnessOpts {
        jur: JurOpts {
            node_budget: config.solver.jur_node_budget,
        },
        lhm: LhmOpts {
            barrier: config.solver.barrier,
            ..Default::default()
        },
    }
}

fn cmd_compare(
    cli: &Cli,
    config: &RunConfig,
    args: &CompareArgs,
    master_seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let scenario = scenario_from_config(config, master_seed)?;
    let model = read_model(&args.model)?;
    let comparison = run_comparison(&scenario, &model, &harness_opts(config));
    let emit = EmitOpts {
        normalize_times: args.normalize_times,
    };
    let manifest = emit_plot_data(&comparison, None, out_dir, &emit)
        .map_err(|e| CliError::Io(e.to_string()))?;
    let ok_rows = comparison
        .metrics
        .iter()
        .filter(|m| m.error.is_none())
        .count();
    if !cli.quiet {
        for m in &comparison.metrics {
            match &m.error {
                None => println!(
                    "{}: avg cost {:.3}, service rate {:.4}, offloaded {}, {:.3}s",
                    m.algorithm.as_str(),
                    m.avg_cost_per_user,
                    m.service_rate,
                    m.offloaded_count,
                    m.running_time_s
                ),
                Some(e) => println!("{}: FAILED ({e})", m.algorithm.as_str()),
            }
        }
        println!(
            "wrote {} files under {}",
            manifest.files.len() + 1,
            out_dir.display()
        );
    }
    if ok_rows == 0 {
        return Err(CliError::Infeasible("every algorithm failed".to_string()));
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<usize>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "grid {spec:?} must be start:end:step"
        )));
    }
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
    let nums = nums.map_err(|e| CliError::Usage(format!("grid {spec:?}: {e}")))?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || end < start {
        return Err(CliError::Usage(format!(
            "grid {spec:?} must ascend with a positive step"
        )));
    }
    Ok((start..=end).step_by(step).collect())
}

fn cmd_sweep(
    cli: &Cli,
    config: &RunConfig,
    args: &SweepArgs,
    master_seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let grid = parse_grid(&args.grid)?;
    let model = read_model(&args.model)?;
    let sweep = sweep_load(
        &config.scenario,
        &grid,
        &model,
        substream(master_seed, "sweep"),
        &harness_opts(config),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    // emit alongside a comparison at the first grid point so the manifest
    // carries the shared-input hashes
    let cfg0 = ScenarioConfig {
        n_users: grid[0],
        ..config.scenario.clone()
    };
    let scenario = generate_scenario(&cfg0, substream(master_seed, "sweep"))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let comparison = run_comparison(&scenario, &model, &harness_opts(config));
    let emit = EmitOpts {
        normalize_times: args.normalize_times,
    };
    let manifest = emit_plot_data(&comparison, Some(&sweep), out_dir, &emit)
        .map_err(|e| CliError::Io(e.to_string()))?;
    if !cli.quiet {
        println!(
            "swept {} loads x 3 algorithms -> {} files under {}",
            grid.len(),
            manifest.files.len() + 1,
            out_dir.display()
        );
    }
    Ok(())
}
