use std::io::Write;
use std::path::Path;

use polyspec::density::{self, DensityCurve, ProblemSpec};
use polyspec::linearization::{selfadjoint_linearize, verify_linearization, BlockLayout, VerificationReport};
use polyspec::oracle::{poly_moment, Budget, CumulantSpec};
use polyspec::rmt::{self, EnsembleSpec};
use polyspec::{Error, SolverConfig};
use serde::Serialize;

use crate::config::{
    parse_ensembles, parse_measures, Binding, parse_poly, sidecar_path, CompareConfig, DensityConfig, GridSpec,
    LinearizeConfig, RunConfig, SimulateConfig,
};
use crate::error::{CliError, CliResult};
use crate::io;

pub fn run(config: &RunConfig) -> CliResult<()> {
    match config {
        RunConfig::Linearize(c) => linearize(c, config),
        RunConfig::Density(c) => density(c, config),
        RunConfig::Simulate(c) => simulate(c, config),
        RunConfig::Compare(c) => compare(c, config),
    }
}

/// Errors about the inputs themselves exit as parse errors, the rest as
/// solver failures.
fn classify(context: &str, e: Error) -> CliError {
    match e {
        Error::Parse { .. } | Error::VariableOutOfRange { .. } | Error::NotSelfAdjoint | Error::NotHermitian { .. } => {
            CliError::parse(context, e)
        }
        Error::Budget(_) => CliError::Usage(format!("{context}: {e}")),
        _ => CliError::solver(context, e),
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io("encoding JSON", e))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| CliError::io("writing to stdout", e))
}

#[derive(Serialize)]
struct LinearizeOutput<'a> {
    config: &'a RunConfig,
    dimension: usize,
    n_vars: usize,
    /// `b_0, .., b_n`, each a row-major list of `[re, im]` entries.
    coefficients: Vec<Vec<Vec<[f64; 2]>>>,
    layout: &'a BlockLayout,
    verification: Option<VerificationReport>,
    verified: Option<bool>,
}

fn linearize(cfg: &LinearizeConfig, full: &RunConfig) -> CliResult<()> {
    let p = parse_poly(&cfg.poly, cfg.nvars)?;
    let lin = selfadjoint_linearize(&p).map_err(|e| match e {
        Error::NotSelfAdjoint | Error::InvalidArgument(_) => CliError::parse("polynomial", e),
        other => CliError::solver("linearization", other),
    })?;
    let verification = cfg
        .verify
        .map(|trials| verify_linearization(&lin, &p, trials, cfg.verify_dim, cfg.seed))
        .transpose()
        .map_err(|e| CliError::solver("verification", e))?;
    let verified = verification.as_ref().map(|r| r.passed(cfg.verify_tol));
    let coefficients = lin
        .coeffs()
        .iter()
        .map(|b| {
            (0..b.nrows())
                .map(|i| (0..b.ncols()).map(|j| [b[(i, j)].re + 0.0, b[(i, j)].im + 0.0]).collect())
                .collect()
        })
        .collect();
    let output = LinearizeOutput {
        config: full,
        dimension: lin.dim(),
        n_vars: lin.n_vars(),
        coefficients,
        layout: lin.layout(),
        verification,
        verified,
    };
    match &cfg.out {
        Some(path) => io::write_json(path, &output)?,
        None => print_json(&output)?,
    }
    match (&output.verification, verified) {
        (Some(r), Some(false)) => Err(CliError::Solver(format!(
            "verification failed: max residual {:.3e} (tolerance {:.1e}), {} failed trials",
            r.max_residual(),
            cfg.verify_tol,
            r.failures
        ))),
        _ => Ok(()),
    }
}

/// Default grid: `count` points over the norm-bound range of `p`.
pub fn auto_grid(poly: &str, nvars: usize, vars: &[Binding], count: usize) -> CliResult<GridSpec> {
    let p = parse_poly(poly, nvars)?;
    let measures = parse_measures(vars)?;
    let (lo, hi) = density::auto_range(&p, &measures).map_err(|e| classify("grid range", e))?;
    Ok(GridSpec { lo, hi, count })
}

#[derive(Serialize)]
struct Failure {
    t: f64,
    message: String,
}

#[derive(Serialize)]
struct DensitySummary {
    points: usize,
    mass: f64,
    epsilon: f64,
    richardson: bool,
    max_residual: f64,
    total_iterations: usize,
    failures: Vec<Failure>,
}

fn density(cfg: &DensityConfig, full: &RunConfig) -> CliResult<()> {
    let p = parse_poly(&cfg.poly, cfg.nvars)?;
    let measures = parse_measures(&cfg.vars)?;
    let grid = density::uniform_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.count)
        .map_err(|e| CliError::Usage(format!("grid: {e}")))?;
    let mut spec = ProblemSpec::new(p, measures)
        .map_err(|e| classify("problem", e))?
        .with_grid(grid)
        .with_epsilon(cfg.eps);
    spec.solver = SolverConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..SolverConfig::default()
    };
    spec.richardson = cfg.richardson;
    spec.chunk_size = cfg.chunk;
    spec.parallel = true;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let curve = density::density_grid(&spec).map_err(|e| classify("density", e))?;
    io::write_curve(&cfg.out, &curve)?;
    let summary = summarize(&curve);
    io::write_sidecar(&cfg.out, full, &summary)?;
    print_json(&summary)?;
    if !curve.failures.is_empty() && !cfg.allow_gaps {
        return Err(CliError::Solver(format!(
            "{} of {} points failed and were interpolated; first at t = {}: {}",
            curve.failures.len(),
            curve.points.len(),
            curve.failures[0].0,
            curve.failures[0].1
        )));
    }
    Ok(())
}

fn summarize(curve: &DensityCurve) -> DensitySummary {
    DensitySummary {
        points: curve.points.len(),
        mass: curve.mass,
        epsilon: curve.epsilon,
        richardson: curve.richardson,
        max_residual: curve.max_residual(),
        total_iterations: curve.total_iterations(),
        failures: curve
            .failures
            .iter()
            .map(|(t, m)| Failure {
                t: *t,
                message: m.clone(),
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    count: usize,
    min: f64,
    max: f64,
    /// Empirical trace moments `m_1..m_4`.
    moments: Vec<f64>,
}

fn simulate(cfg: &SimulateConfig, full: &RunConfig) -> CliResult<()> {
    let p = parse_poly(&cfg.poly, cfg.nvars)?;
    let ensembles = parse_ensembles(&cfg.ensembles)?;
    let spec = EnsembleSpec::new(ensembles, cfg.n, cfg.reps, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let eigs = rmt::empirical_spectrum(&p, &spec).map_err(|e| classify("simulation", e))?;
    io::write_eigenvalues(&cfg.out, &eigs)?;
    let summary = SimulateSummary {
        count: eigs.len(),
        min: eigs[0],
        max: eigs[eigs.len() - 1],
        moments: rmt::empirical_moments(&eigs, 4),
    };
    io::write_sidecar(&cfg.out, full, &summary)?;
    print_json(&summary)
}

#[derive(Serialize)]
struct MomentRow {
    k: u32,
    pipeline: f64,
    empirical: f64,
    oracle: Option<f64>,
}

#[derive(Serialize)]
struct CompareReport {
    ks_distance: f64,
    eigenvalues: usize,
    curve_points: usize,
    curve_mass: f64,
    moments: Vec<MomentRow>,
    overlay: String,
}

fn interpolate(curve: &DensityCurve, t: f64) -> f64 {
    let pts = &curve.points;
    if t < pts[0].t || t > pts[pts.len() - 1].t {
        return 0.0;
    }
    let k = pts.partition_point(|p| p.t <= t).clamp(1, pts.len() - 1);
    let (a, b) = (&pts[k - 1], &pts[k]);
    a.rho + (b.rho - a.rho) * (t - a.t) / (b.t - a.t)
}

/// Oracle moments `φ(p^k)` for the polynomial and measures recorded in the
/// curve's sidecar; `None` where the enumeration budget is exceeded.
fn oracle_moments(curve_path: &Path, k_max: u32) -> CliResult<Vec<Option<f64>>> {
    let sidecar = sidecar_path(curve_path);
    let cfg = match io::read_sidecar_config(&sidecar)? {
        RunConfig::Density(c) => c,
        _ => {
            return Err(CliError::Usage(format!(
                "{} does not describe a density run",
                sidecar.display()
            )))
        }
    };
    let p = parse_poly(&cfg.poly, cfg.nvars)?;
    let measures = parse_measures(&cfg.vars)?;
    let order = (k_max as usize * p.degree()).max(1);
    let cumulants = CumulantSpec::from_measures(&measures, order);
    (1..=k_max)
        .map(|k| match poly_moment(&p, &cumulants, k, Budget::default()) {
            Ok(m) => Ok(Some(m)),
            Err(Error::Budget(msg)) => {
                log::warn!("oracle moment {k} skipped: {msg}");
                Ok(None)
            }
            Err(e) => Err(classify("oracle", e)),
        })
        .collect()
}

fn compare(cfg: &CompareConfig, full: &RunConfig) -> CliResult<()> {
    if cfg.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let curve = io::read_curve(&cfg.curve)?;
    let eigs = io::read_eigenvalues(&cfg.eigs)?;
    let cdf = density::cdf_from_density(&curve);
    let ks = rmt::ks_distance(&eigs, |t| cdf.eval(t));

    let pipeline = density::moments_from_density(&curve, cfg.moments);
    let empirical = rmt::empirical_moments(&eigs, cfg.moments as usize);
    let oracle = if cfg.oracle {
        oracle_moments(&cfg.curve, cfg.moments)?
    } else {
        vec![None; cfg.moments as usize]
    };
    let moments = (1..=cfg.moments)
        .map(|k| {
            let i = k as usize - 1;
            MomentRow {
                k,
                pipeline: pipeline[i],
                empirical: empirical[i],
                oracle: oracle[i],
            }
        })
        .collect();

    let (lo, hi) = (eigs[0], eigs[eigs.len() - 1]);
    let width = if hi > lo { (hi - lo) / cfg.bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; cfg.bins];
    for &e in &eigs {
        let b = (((e - lo) / width) as usize).min(cfg.bins - 1);
        counts[b] += 1;
    }
    let total = eigs.len() as f64;
    io::write_atomic(&cfg.out, |w| {
        writeln!(w, "# bin_centre empirical_density pipeline_density")?;
        for (b, &c) in counts.iter().enumerate() {
            let centre = lo + (b as f64 + 0.5) * width;
            writeln!(w, "{centre} {} {}", c as f64 / (total * width), interpolate(&curve, centre))?;
        }
        Ok(())
    })?;

    let report = CompareReport {
        ks_distance: ks,
        eigenvalues: eigs.len(),
        curve_points: curve.points.len(),
        curve_mass: curve.mass,
        moments,
        overlay: cfg.out.display().to_string(),
    };
    io::write_sidecar(&cfg.out, full, &report)?;
    if let Some(path) = &cfg.report {
        io::write_json(path, &report)?;
    }
    print_json(&report)
}
