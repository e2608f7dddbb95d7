mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use polyspec::density::{DEFAULT_EPSILON, DEFAULT_GRID_POINTS};
use polyspec::SolverConfig;

use crate::config::{
    parse_bindings, parse_grid, CompareConfig, DensityConfig, LinearizeConfig, RunConfig, SimulateConfig,
};
use crate::error::{CliError, CliResult};

const GRAMMARS: &str = "\
Polynomial grammar (whitespace is insignificant):
  expr    := term (('+' | '-') term)*
  term    := unary ('*' unary)*
  unary   := ('+' | '-') unary | power
  power   := atom ('^' integer)?
  atom    := 'x' integer | number | 'i' | '(' expr ')'
  number  := digits ('.' digits)? (('e' | 'E') sign? digits)? 'i'?
  Variables are x1 .. x<nvars>; products must be written with '*'.
  Example: \"x1*x2 + x2*x1 + 0.5*x1^2\"

Measure grammar (--var k=<measure>):
  semicircle(mean,var)        semicircle law; alias sc(mean,var)
  mp(rate,scale)              free Poisson law with jump size scale; mp(rate) means scale 1
  atoms((t1,w1),(t2,w2),...)  point masses; weights must sum to 1
  table(path)                 density from a CSV file of t,density rows

Ensemble grammar (--ensemble k=<ensemble>):
  gue                         Hermitian Gaussian, entry variance 1/n
  wishart(ratio)              A A*/n with A of shape n x round(ratio*n)

Exit codes:
  0 success, 1 usage, 2 parse, 3 solver, 4 I/O";

#[derive(Parser)]
#[command(
    name = "polyspec",
    version,
    about = "Spectral distributions of self-adjoint polynomials in free random variables",
    after_long_help = GRAMMARS
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the self-adjoint linearization of a polynomial as JSON.
    #[command(after_long_help = GRAMMARS)]
    Linearize(LinearizeArgs),
    /// Compute the spectral density on a grid.
    #[command(after_long_help = GRAMMARS)]
    Density(DensityArgs),
    /// Sample random matrices and pool the eigenvalues of the polynomial.
    #[command(after_long_help = GRAMMARS)]
    Simulate(SimulateArgs),
    /// Compare a density curve with sampled eigenvalues.
    Compare(CompareArgs),
    /// Re-run the command recorded in a JSON sidecar.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct PolyArgs {
    /// Polynomial text.
    #[arg(long, allow_hyphen_values = true)]
    poly: String,
    /// Number of variables.
    #[arg(long)]
    nvars: usize,
}

#[derive(Args)]
struct LinearizeArgs {
    #[command(flatten)]
    poly: PolyArgs,
    /// Check the linearization on this many random Hermitian evaluations.
    #[arg(long)]
    verify: Option<usize>,
    /// Matrix size of the verification evaluations.
    #[arg(long, default_value_t = 4)]
    verify_dim: usize,
    /// Largest acceptable verification residual.
    #[arg(long, default_value_t = 1e-10)]
    verify_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    poly: PolyArgs,
    /// Law of one variable, k=<measure>; repeat for every variable.
    #[arg(long = "var", value_name = "K=MEASURE", required = true)]
    vars: Vec<String>,
    /// Evaluation grid lo:hi:count (default: norm-bound range, 1000 points).
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Distance of the evaluation points from the real axis.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    /// Fixed-point tolerance.
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    /// Iteration cap per fixed-point solve.
    #[arg(long, default_value_t = SolverConfig::default().max_iter)]
    max_iter: usize,
    /// Extrapolate from ε and 2ε to ε → 0.
    #[arg(long)]
    richardson: bool,
    /// Grid points per warm-started chunk.
    #[arg(long, default_value_t = 50)]
    chunk: usize,
    /// Exit successfully even if some points failed.
    #[arg(long)]
    allow_gaps: bool,
    #[arg(long, default_value = "curve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    poly: PolyArgs,
    /// Ensemble of one variable, k=<ensemble>; repeat for every variable.
    #[arg(long = "ensemble", value_name = "K=ENSEMBLE", required = true)]
    ensembles: Vec<String>,
    /// Matrix size.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Independent replicates to pool.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "eigs.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Density curve written by `density`.
    #[arg(long)]
    curve: PathBuf,
    /// Eigenvalues written by `simulate`.
    #[arg(long)]
    eigs: PathBuf,
    /// Add moments from the free-cumulant oracle, using the curve's sidecar.
    #[arg(long)]
    oracle: bool,
    /// Highest moment in the table.
    #[arg(long, default_value_t = 4)]
    moments: u32,
    /// Histogram bins in the overlay file.
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Histogram/density overlay, whitespace-separated columns.
    #[arg(long, default_value = "overlay.dat")]
    out: PathBuf,
    /// Also write the report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// A sidecar (`<artifact>.json`) or a bare configuration file.
    config: PathBuf,
}

fn resolve(command: Command) -> CliResult<RunConfig> {
    Ok(match command {
        Command::Linearize(a) => RunConfig::Linearize(LinearizeConfig {
            poly: a.poly.poly,
            nvars: a.poly.nvars,
            verify: a.verify,
            verify_dim: a.verify_dim,
            verify_tol: a.verify_tol,
            seed: a.seed,
            out: a.out,
        }),
        Command::Density(a) => {
            let vars = parse_bindings(&a.vars, a.poly.nvars, "var")?;
            let grid = match &a.grid {
                Some(text) => parse_grid(text)?,
                None => commands::auto_grid(&a.poly.poly, a.poly.nvars, &vars, DEFAULT_GRID_POINTS)?,
            };
            if !(a.eps > 0.0) || !(a.tol > 0.0) || a.max_iter == 0 || a.chunk == 0 {
                return Err(CliError::Usage("--eps and --tol must be positive, --max-iter and --chunk non-zero".into()));
            }
            RunConfig::Density(DensityConfig {
                poly: a.poly.poly,
                nvars: a.poly.nvars,
                vars,
                grid,
                eps: a.eps,
                tol: a.tol,
                max_iter: a.max_iter,
                richardson: a.richardson,
                chunk: a.chunk,
                allow_gaps: a.allow_gaps,
                out: a.out,
            })
        }
        Command::Simulate(a) => RunConfig::Simulate(SimulateConfig {
            ensembles: parse_bindings(&a.ensembles, a.poly.nvars, "ensemble")?,
            poly: a.poly.poly,
            nvars: a.poly.nvars,
            n: a.n,
            reps: a.reps,
            seed: a.seed,
            out: a.out,
        }),
        Command::Compare(a) => RunConfig::Compare(CompareConfig {
            curve: a.curve,
            eigs: a.eigs,
            oracle: a.oracle,
            moments: a.moments,
            bins: a.bins,
            out: a.out,
            report: a.report,
        }),
        Command::Replay(a) => io::read_sidecar_config(&a.config)?,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("{}", CliError::Usage("--threads must be positive".into()));
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match resolve(cli.command).and_then(|cfg| commands::run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
