use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delocsim_cli::aggregate::Fitted;
use delocsim_cli::fit::{fit_betas, fit_traces};
use delocsim_cli::{run_experiment, CliError, CliResult, ExperimentSpec, Mode, RunOptions, RunReport, Summary};

#[derive(Parser)]
#[command(name = "delocsim", version, about = "Disorder-ensemble quench and spectral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quench dynamics for every (W, realization) of the experiment.
    Quench(RunArgs),
    /// Central eigenvalues for every (W, realization).
    Spectrum(RunArgs),
    /// Mean gap ratio per disorder strength.
    Gapratio(RunArgs),
    /// Run the experiment in its configured mode, including all fits.
    Sweep(RunArgs),
    /// Fit previously written traces or exponent tables.
    Fit(FitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to DELOCSIM_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Seed base, overriding the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip tasks completed by an earlier run of the same experiment.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Trace CSVs (time_ns,imbalance,...) to fit with a power law.
    traces: Vec<PathBuf>,
    /// CSV of W_MHz,beta[,stderr] for the decay-law chain.
    #[arg(long, conflicts_with_all = ["traces", "config"])]
    betas: Option<PathBuf>,
    /// Refit the traces of an existing run directory.
    #[arg(long, conflicts_with = "traces")]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit window in ns.
    #[arg(long, num_args = 2, value_names = ["T_LO", "T_HI"], default_values_t = [250.0, 1000.0])]
    window: Vec<f64>,
    #[arg(long, default_value_t = delocsim::analysis::DEFAULT_BETA_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = delocsim::analysis::DEFAULT_N_REP)]
    n_rep: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_spec(args: &RunArgs, mode: Option<Mode>) -> CliResult<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(&args.config)?;
    if let Some(m) = mode {
        spec.mode = m;
    }
    if let Some(out) = &args.out {
        spec.out = out.clone();
    }
    if let Some(seed) = args.seed {
        spec.seed_base = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn print_report(report: &RunReport) {
    match &report.summary {
        Summary::Quench(q) => {
            println!("{:>10} {:>12} {:>12} {:>6}", "W_MHz", "beta", "stderr", "n");
            for row in &q.per_w {
                match row {
                    Fitted::Value(r) => {
                        println!("{:>10} {:>12.5} {:>12.5} {:>6}", r.w, r.beta, r.stderr, r.n_realizations)
                    }
                    Fitted::Failed { error } => println!("{:>10} fit failed: {error}", ""),
                }
            }
            if !q.monotone_non_increasing {
                println!("warning: beta is not monotonically non-increasing in W");
            }
            if let Some(w) = q.w_star.value() {
                println!("W* = {:.4} ± {:.4} MHz (beta = {})", w.w_star, w.w_star_std, w.threshold);
            }
        }
        Summary::GapRatio(g) => {
            println!("{:>10} {:>10} {:>10} {:>6}", "W_MHz", "mean_r", "stderr", "n");
            for r in &g.per_w {
                println!("{:>10} {:>10.5} {:>10.5} {:>6}", r.w, r.mean_r, r.stderr, r.n_realizations);
            }
            if let Some(b) = g.ergodic_boundary.value() {
                println!("ergodic boundary W_E = {:.4} MHz ({:?})", b.w_e, b.range);
            }
        }
        Summary::Spectrum { files } => println!("{files} spectra written"),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (args, mode) = match &cli.command {
        Command::Quench(a) => (a, Some(Mode::Quench)),
        Command::Spectrum(a) => (a, Some(Mode::Spectrum)),
        Command::Gapratio(a) => (a, Some(Mode::GapRatio)),
        Command::Sweep(a) => (a, None),
        Command::Fit(f) => return run_fit(f),
    };
    let spec = load_spec(args, mode)?;
    let report = run_experiment(
        &spec,
        RunOptions {
            workers: args.workers,
            resume: args.resume,
        },
    )?;
    print_report(&report);
    Ok(())
}

fn run_fit(args: &FitArgs) -> CliResult<()> {
    let json = if let Some(path) = &args.betas {
        serde_json::to_value(fit_betas(path, args.threshold, args.n_rep, args.seed)?)
    } else if let Some(config) = &args.config {
        let mut spec = ExperimentSpec::load(config)?;
        spec.mode = Mode::FitOnly;
        if let Some(out) = &args.out {
            spec.out = out.clone();
        }
        spec.fit_window = (args.window[0], args.window[1]);
        let report = run_experiment(&spec, RunOptions::default())?;
        match report.summary {
            Summary::Quench(q) => serde_json::to_value(q),
            _ => unreachable!("fit-only runs reduce traces"),
        }
    } else {
        serde_json::to_value(fit_traces(&args.traces, (args.window[0], args.window[1]))?)
    };
    println!("{}", serde_json::to_string_pretty(&json.expect("fit results serialize")).unwrap());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Validation(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
