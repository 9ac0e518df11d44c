use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtasep_cli::{cmd_compare, cmd_identities, cmd_pmf, cmd_qlap, cmd_simulate, CliError, Outcome, RunConfig};

#[derive(Parser)]
#[command(name = "qtasep", version, about = "q-TASEP simulation and q-Laplace transform evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo histogram of λ_N.
    Simulate,
    /// Exact marginal of λ_N on the λ-window.
    Pmf,
    /// q-Laplace transform by each requested method.
    Qlap,
    /// Several methods side by side with their pairwise deviation.
    Compare,
    /// Seeded random checks of the supporting identities.
    Identities,
}

/// Flags override values from `--config`, which override the defaults.
#[derive(Args)]
struct Opts {
    /// File of key=value lines using the long flag names as keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    q: Option<String>,
    #[arg(long, global = true)]
    n_particles: Option<String>,
    /// Comma-separated rates a_1,...,a_N.
    #[arg(long, global = true, allow_hyphen_values = true)]
    rates: Option<String>,
    /// One value for half-stationary data, or N comma-separated values.
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    time: Option<String>,
    /// Comma-separated complex values such as -0.2,0.1+0.3i.
    #[arg(long, global = true, allow_hyphen_values = true)]
    zeta: Option<String>,
    /// Comma-separated methods: empirical, pmf, genfunc, prop6, prop10, rank-n, t110, fredholm.
    #[arg(long, global = true)]
    methods: Option<String>,
    #[arg(long, global = true)]
    trajectories: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    nodes_circle: Option<String>,
    #[arg(long, global = true)]
    nodes_line: Option<String>,
    #[arg(long, global = true)]
    trunc_height: Option<String>,
    #[arg(long, global = true)]
    eps: Option<String>,
    /// Inclusive λ range lo:hi.
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda_window: Option<String>,
    #[arg(long, global = true)]
    tolerance: Option<String>,
    #[arg(long, global = true)]
    draws: Option<String>,
    /// Leave runtime_ms empty so that reruns are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
    /// Exit nonzero when a deviation threshold is exceeded.
    #[arg(long, global = true)]
    check: bool,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn build_config(opts: &Opts) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &opts.config {
        cfg.load_file(path)?;
    }
    let flags = [
        ("q", &opts.q),
        ("n-particles", &opts.n_particles),
        ("rates", &opts.rates),
        ("alpha", &opts.alpha),
        ("time", &opts.time),
        ("zeta", &opts.zeta),
        ("methods", &opts.methods),
        ("trajectories", &opts.trajectories),
        ("seed", &opts.seed),
        ("nodes-circle", &opts.nodes_circle),
        ("nodes-line", &opts.nodes_line),
        ("trunc-height", &opts.trunc_height),
        ("eps", &opts.eps),
        ("lambda-window", &opts.lambda_window),
        ("tolerance", &opts.tolerance),
        ("draws", &opts.draws),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if opts.no_timing {
        cfg.timing = false;
    }
    if opts.check {
        cfg.check = true;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = build_config(&cli.opts)?;
    let mut out: Box<dyn Write> = match &cli.opts.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let outcome = match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &mut out),
        Command::Pmf => cmd_pmf(&cfg, &mut out),
        Command::Qlap => cmd_qlap(&cfg, &mut out),
        Command::Compare => cmd_compare(&cfg, &mut out),
        Command::Identities => cmd_identities(&cfg, &mut out),
    }?;
    out.flush()?;
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome { failed: false }) => ExitCode::SUCCESS,
        Ok(Outcome { failed: true }) => ExitCode::from(1),
        Err(e) => {
            eprintln!("qtasep: {e}");
            ExitCode::from(2)
        }
    }
}
