//! End-to-end density computation: linearize, add the leaves `b_j ⊗ x_j`
//! by subordination, read the `(1,1)` corner at `Λ_ε(z) − b_0` and apply
//! Stieltjes inversion.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, HalfPlanePoint};
use crate::linearization::{selfadjoint_linearize, Linearization};
use crate::ncpoly::NcPolynomial;
use crate::spectra::{OpVarLeaf, SpectralMeasure};
use crate::subordination::{convolve, OpVar, SolverConfig};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_GRID_POINTS: usize = 1000;
const DEFAULT_CHUNK: usize = 50;

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub poly: NcPolynomial,
    /// Law of `x_j` at index `j − 1`.
    pub measures: Vec<SpectralMeasure>,
    pub grid: Vec<f64>,
    pub epsilon: f64,
    pub solver: SolverConfig,
    /// Replace `ρ(ε)` by `2ρ(ε) − ρ(2ε)`.
    pub richardson: bool,
    /// Grid points per warm-start chain.
    pub chunk_size: usize,
    /// Run chains on the rayon pool; results do not depend on this.
    pub parallel: bool,
}

impl ProblemSpec {
    /// Spec with the default ε and a uniform grid over [`auto_range`].
    pub fn new(poly: NcPolynomial, measures: Vec<SpectralMeasure>) -> Result<Self> {
        let (lo, hi) = auto_range(&poly, &measures)?;
        let spec = ProblemSpec {
            grid: uniform_grid(lo, hi, DEFAULT_GRID_POINTS)?,
            poly,
            measures,
            epsilon: DEFAULT_EPSILON,
            solver: SolverConfig::default(),
            richardson: false,
            chunk_size: DEFAULT_CHUNK,
            parallel: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.poly.is_selfadjoint() {
            return Err(Error::NotSelfAdjoint);
        }
        if self.measures.len() != self.poly.n_vars() {
            return Err(Error::Dimension(format!(
                "{} variables but {} measures",
                self.poly.n_vars(),
                self.measures.len()
            )));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) || self.grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk size must be positive".into()));
        }
        self.solver.validate()
    }
}

/// `[−1.1 B, 1.1 B]` with `B = Σ |c_w| Π_{j ∈ w} sup |supp μ_j|`, a crude
/// bound on `‖p‖`.
pub fn auto_range(poly: &NcPolynomial, measures: &[SpectralMeasure]) -> Result<(f64, f64)> {
    if measures.len() != poly.n_vars() {
        return Err(Error::Dimension("one measure per variable is required".into()));
    }
    let bound: f64 = poly
        .terms()
        .map(|m| m.coeff.norm() * m.word.letters().iter().map(|&j| measures[j - 1].norm()).product::<f64>())
        .sum();
    let b = if bound > 0.0 { 1.1 * bound } else { 1.0 };
    Ok((-b, b))
}

pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(hi > lo) {
        return Err(Error::InvalidArgument(format!("cannot build a grid {lo}:{hi}:{count}")));
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|k| lo + step * k as f64).collect())
}

/// One corner evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerValue {
    pub g: Complex64,
    pub iterations: usize,
    /// `max(r2, r3)` of the outermost solve; zero without a solve.
    pub residual: f64,
}

/// Linearization plus the convolution tree, built once per problem.
#[derive(Debug, Clone)]
pub struct Pipeline {
    linearization: Linearization,
    tree: OpVar,
}

impl Pipeline {
    pub fn new(poly: &NcPolynomial, measures: &[SpectralMeasure], solver: SolverConfig) -> Result<Self> {
        if measures.len() != poly.n_vars() {
            return Err(Error::Dimension(format!(
                "{} variables but {} measures",
                poly.n_vars(),
                measures.len()
            )));
        }
        let linearization = selfadjoint_linearize(poly)?;
        let mut leaves = Vec::new();
        for (j, mu) in measures.iter().enumerate() {
            let b = linearization.coeff(j + 1);
            if b.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                continue;
            }
            leaves.push(OpVar::from(OpVarLeaf::new(b.clone(), mu.clone())?));
        }
        let tree = convolve(leaves, solver)?;
        Ok(Pipeline { linearization, tree })
    }

    pub fn linearization(&self) -> &Linearization {
        &self.linearization
    }

    pub fn tree(&self) -> &OpVar {
        &self.tree
    }

    /// Copy with empty caches and warm-start hints.
    pub fn fresh_copy(&self) -> Self {
        Pipeline {
            linearization: self.linearization.clone(),
            tree: self.tree.fresh_copy(),
        }
    }

    /// `Λ_ε(z) − b_0`. A real `z` is moved to `z + iε` so that the argument
    /// stays inside the half-plane.
    pub fn argument(&self, z: Complex64, epsilon: f64) -> Result<HalfPlanePoint> {
        if !(epsilon > 0.0) || z.im < 0.0 {
            return Err(Error::InvalidArgument(format!("need Im z ≥ 0 and ε > 0, got z={z}, ε={epsilon}")));
        }
        let n = self.linearization.dim();
        let z = if z.im == 0.0 { c64(z.re, epsilon) } else { z };
        let mut lambda = CMatrix::identity(n, n) * c64(0.0, epsilon);
        lambda[(0, 0)] = z;
        HalfPlanePoint::new(lambda - self.linearization.coeff(0))
    }

    /// `[E (Λ_ε(z) − L_P)⁻¹]₁₁ ≈ G_P(z)`.
    pub fn corner(&self, z: Complex64, epsilon: f64) -> Result<CornerValue> {
        let beta = self.argument(z, epsilon)?;
        let wrap = |e: Error| Error::AtPoint {
            t: z.re,
            eps: epsilon,
            source: Box::new(e),
        };
        match self.tree.solve(beta.matrix()) {
            None => {
                let g = self.tree.cauchy(beta.matrix()).map_err(wrap)?;
                Ok(CornerValue {
                    g: g[(0, 0)],
                    iterations: 0,
                    residual: 0.0,
                })
            }
            Some(res) => {
                let res = res.map_err(wrap)?;
                Ok(CornerValue {
                    g: res.g[(0, 0)],
                    iterations: res.iterations,
                    residual: res.r2.max(res.r3),
                })
            }
        }
    }
}

/// `G_P(z)` for a single point, building the pipeline on the fly.
pub fn cauchy_of_polynomial(spec: &ProblemSpec, z: Complex64, epsilon: f64) -> Result<Complex64> {
    spec.validate()?;
    let pipe = Pipeline::new(&spec.poly, &spec.measures, spec.solver.clone())?;
    Ok(pipe.corner(z, epsilon)?.g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    /// Clamped at zero; for a failed point, interpolated from neighbours.
    pub rho: f64,
    /// `−Im G / π` before clamping, `NaN` for a failed point.
    pub raw_rho: f64,
    pub iterations: usize,
    pub residual: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct DensityCurve {
    pub points: Vec<CurvePoint>,
    pub epsilon: f64,
    pub richardson: bool,
    /// Trapezoid integral of `rho`.
    pub mass: f64,
    pub failures: Vec<(f64, String)>,
}

impl DensityCurve {
    pub fn ts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rho).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.points.iter().filter(|p| p.ok).map(|p| p.residual).fold(0.0, f64::max)
    }

    pub fn total_iterations(&self) -> usize {
        self.points.iter().map(|p| p.iterations).sum()
    }
}

fn rho_of(g: Complex64) -> f64 {
    -g.im / PI
}

/// Sweeps one chunk left to right; every solve seeds the next.
fn sweep(pipe: &Pipeline, ts: &[f64], epsilon: f64) -> Vec<std::result::Result<CornerValue, Error>> {
    ts.iter()
        .map(|&t| {
            let z = c64(t, 0.0);
            pipe.corner(z, epsilon).or_else(|e| {
                log::debug!("retrying t={t} from a cold start after: {e}");
                pipe.tree().set_hint(None);
                pipe.fresh_copy().corner(z, epsilon)
            })
        })
        .collect()
}

fn run_chunks(pipe: &Pipeline, spec: &ProblemSpec, epsilon: f64) -> Vec<std::result::Result<CornerValue, Error>> {
    let chunks: Vec<&[f64]> = spec.grid.chunks(spec.chunk_size).collect();
    let run = |ts: &&[f64]| sweep(&pipe.fresh_copy(), ts, epsilon);
    let nested: Vec<Vec<_>> = if spec.parallel {
        chunks.par_iter().map(run).collect()
    } else {
        chunks.iter().map(run).collect()
    };
    nested.into_iter().flatten().collect()
}

/// Density on `spec.grid`. Isolated failures become flagged gaps.
pub fn density_grid(spec: &ProblemSpec) -> Result<DensityCurve> {
    spec.validate()?;
    if spec.grid.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    let pipe = Pipeline::new(&spec.poly, &spec.measures, spec.solver.clone())?;
    let main = run_chunks(&pipe, spec, spec.epsilon);
    let coarse = spec
        .richardson
        .then(|| run_chunks(&pipe, spec, 2.0 * spec.epsilon));

    let mut points = Vec::with_capacity(spec.grid.len());
    let mut failures = Vec::new();
    for (k, &t) in spec.grid.iter().enumerate() {
        let fine = &main[k];
        let rough = coarse.as_ref().map(|c| &c[k]);
        let point = match (fine, rough) {
            (Ok(f), None) => Ok((rho_of(f.g), f.iterations, f.residual)),
            (Ok(f), Some(Ok(c))) => Ok((
                2.0 * rho_of(f.g) - rho_of(c.g),
                f.iterations + c.iterations,
                f.residual.max(c.residual),
            )),
            (Err(e), _) | (_, Some(Err(e))) => Err(e.to_string()),
        };
        match point {
            Ok((raw, iterations, residual)) => {
                if raw < -1e-9 {
                    log::warn!("clamping rho({t}) = {raw:e} to zero");
                } else if raw < 0.0 {
                    log::debug!("clamping rho({t}) = {raw:e} to zero");
                }
                points.push(CurvePoint {
                    t,
                    rho: raw.max(0.0),
                    raw_rho: raw,
                    iterations,
                    residual,
                    ok: true,
                });
            }
            Err(msg) => {
                log::warn!("density failed at t={t}: {msg}");
                failures.push((t, msg));
                points.push(CurvePoint {
                    t,
                    rho: f64::NAN,
                    raw_rho: f64::NAN,
                    iterations: 0,
                    residual: f64::NAN,
                    ok: false,
                });
            }
        }
    }
    fill_gaps(&mut points);
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let rhos: Vec<f64> = points.iter().map(|p| p.rho).collect();
    Ok(DensityCurve {
        mass: trapezoid(&ts, &rhos),
        points,
        epsilon: spec.epsilon,
        richardson: spec.richardson,
        failures,
    })
}

fn fill_gaps(points: &mut [CurvePoint]) {
    let good: Vec<usize> = (0..points.len()).filter(|&k| points[k].ok).collect();
    for k in 0..points.len() {
        if points[k].ok {
            continue;
        }
        let left = good.iter().rev().find(|&&g| g < k).copied();
        let right = good.iter().find(|&&g| g > k).copied();
        points[k].rho = match (left, right) {
            (Some(l), Some(r)) => {
                let s = (points[k].t - points[l].t) / (points[r].t - points[l].t);
                points[l].rho + s * (points[r].rho - points[l].rho)
            }
            (Some(g), None) | (None, Some(g)) => points[g].rho,
            (None, None) => 0.0,
        };
    }
}

pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// `∫ t^k ρ(t) dt` for `k = 1..=k_max` by the trapezoid rule.
pub fn moments_from_density(curve: &DensityCurve, k_max: u32) -> Vec<f64> {
    let ts = curve.ts();
    let rhos = curve.rhos();
    (1..=k_max)
        .map(|k| {
            let ys: Vec<f64> = ts.iter().zip(&rhos).map(|(t, r)| t.powi(k as i32) * r).collect();
            trapezoid(&ts, &ys)
        })
        .collect()
}

/// Piecewise-linear CDF, monotone and clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Cdf {
    ts: Vec<f64>,
    values: Vec<f64>,
}

impl Cdf {
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if n == 0 || t <= self.ts[0] {
            return if n > 0 && t == self.ts[0] { self.values[0] } else { 0.0 };
        }
        if t >= self.ts[n - 1] {
            return self.values[n - 1];
        }
        let k = self.ts.partition_point(|&x| x <= t);
        let (t0, t1) = (self.ts[k - 1], self.ts[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.ts, &self.values)
    }
}

pub fn cdf_from_density(curve: &DensityCurve) -> Cdf {
    let ts = curve.ts();
    let rhos = curve.rhos();
    let mut values = Vec::with_capacity(ts.len());
    let mut acc = 0.0f64;
    let mut running_max = 0.0f64;
    for k in 0..ts.len() {
        if k > 0 {
            acc += 0.5 * (ts[k] - ts[k - 1]) * (rhos[k] + rhos[k - 1]);
        }
        running_max = running_max.max(acc.clamp(0.0, 1.0));
        values.push(running_max);
    }
    Cdf { ts, values }
}
