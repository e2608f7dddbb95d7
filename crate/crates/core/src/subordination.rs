//! Operator-valued free additive convolution by subordination.
//!
//! For `x`, `y` free over `M_N(ℂ)` and `b` in the matrix upper half-plane,
//! `ω₁(b)` is the attracting fixed point of `f_b(w) = h_y(h_x(w) + b) + b`
//! where `h(w) = G(w)⁻¹ − w`. Then `ω₂ = h_x(ω₁) + b` and
//! `G_{x+y}(b) = G_x(ω₁) = G_y(ω₂)`.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMatrix, HalfPlanePoint};
use crate::spectra::OpVarLeaf;

const CACHE_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Absolute bound on the operator norm of the iterate displacement.
    pub tol: f64,
    pub max_iter: usize,
    pub warm_start: Option<CMatrix>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iter: 20_000,
            warm_start: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "solver needs tol > 0 and max_iter ≥ 1, got tol={} max_iter={}",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }

    pub fn with_warm_start(mut self, w: Option<CMatrix>) -> Self {
        self.warm_start = w;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ConvResult {
    pub omega1: CMatrix,
    pub omega2: CMatrix,
    /// `G_{x+y}(b) = G_x(ω₁)`.
    pub g: CMatrix,
    /// `h_{x+y}(b) = (ω₁ − b) + (ω₂ − b)`, kept without forming `g⁻¹`.
    pub h: CMatrix,
    pub iterations: usize,
    /// `‖F_y(ω₂) + b − ω₁ − ω₂‖`.
    pub r2: f64,
    /// `‖G_x(ω₁) − G_y(ω₂)‖`.
    pub r3: f64,
    /// `min_j λ_min(Im ω_j − Im b)`.
    pub im_gain: f64,
    /// `‖w_{k+1} − w_k‖` per iteration.
    pub displacements: Vec<f64>,
}

impl ConvResult {
    /// Geometric rate fitted to the displacement tail by least squares on
    /// `log d_k`, ignoring the final steps at the rounding floor.
    pub fn fitted_rate(&self) -> Option<f64> {
        let d: Vec<f64> = self
            .displacements
            .iter()
            .copied()
            .filter(|v| *v > 1e-14)
            .collect();
        if d.len() < 3 {
            return None;
        }
        let tail = &d[d.len() / 2..];
        let n = tail.len() as f64;
        let xs: Vec<f64> = (0..tail.len()).map(|k| k as f64).collect();
        let ys: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        (sxx > 0.0).then(|| (sxy / sxx).exp())
    }
}

/// Free sum node with its per-node cache and warm-start hint.
#[derive(Debug)]
pub struct ConvNode {
    left: OpVar,
    right: OpVar,
    config: SolverConfig,
    cache: Mutex<LruCache<Vec<u64>, ConvResult>>,
    hint: Mutex<Option<CMatrix>>,
}

impl ConvNode {
    fn new(left: OpVar, right: OpVar, config: SolverConfig) -> Self {
        ConvNode {
            left,
            right,
            config,
            cache: Mutex::new(LruCache::new(NonZeroUsize::new(CACHE_CAPACITY).expect("positive"))),
            hint: Mutex::new(None),
        }
    }

    pub fn left(&self) -> &OpVar {
        &self.left
    }

    pub fn right(&self) -> &OpVar {
        &self.right
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn solve(&self, beta: &CMatrix) -> Result<ConvResult> {
        let key = matrix_key(beta);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let b = HalfPlanePoint::new(beta.clone())?;
        let mut cfg = self.config.clone();
        if cfg.warm_start.is_none() {
            cfg.warm_start = self.hint.lock().expect("hint lock").clone();
        }
        let res = match cfg.warm_start {
            Some(_) => fixed_point_subordination(&self.left, &self.right, &b, &cfg).or_else(|e| match e {
                Error::NoConvergence { .. } | Error::MarginLoss { .. } => {
                    log::debug!("warm start failed ({e}), retrying by continuation");
                    subordination_by_continuation(&self.left, &self.right, &b, &cfg.clone().with_warm_start(None))
                }
                other => Err(other),
            })?,
            None => subordination_by_continuation(&self.left, &self.right, &b, &cfg)?,
        };
        *self.hint.lock().expect("hint lock") = Some(res.omega1.clone());
        self.cache.lock().expect("cache lock").put(key, res.clone());
        Ok(res)
    }
}

fn matrix_key(m: &CMatrix) -> Vec<u64> {
    m.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
}

/// A matrix-valued random variable: a single `b ⊗ x` or a free sum.
#[derive(Debug, Clone)]
pub enum OpVar {
    Leaf(Arc<OpVarLeaf>),
    Conv(Arc<ConvNode>),
}

impl From<OpVarLeaf> for OpVar {
    fn from(leaf: OpVarLeaf) -> Self {
        OpVar::Leaf(Arc::new(leaf))
    }
}

impl OpVar {
    pub fn dim(&self) -> usize {
        match self {
            OpVar::Leaf(l) => l.dim(),
            OpVar::Conv(c) => c.left.dim(),
        }
    }

    /// Upper bound on the operator norm.
    pub fn norm(&self) -> f64 {
        match self {
            OpVar::Leaf(l) => l.norm(),
            OpVar::Conv(c) => c.left.norm() + c.right.norm(),
        }
    }

    pub fn leaves(&self) -> Vec<Arc<OpVarLeaf>> {
        match self {
            OpVar::Leaf(l) => vec![l.clone()],
            OpVar::Conv(c) => {
                let mut out = c.left.leaves();
                out.extend(c.right.leaves());
                out
            }
        }
    }

    /// `G(β) = E[(β − X)⁻¹]`.
    pub fn cauchy(&self, beta: &CMatrix) -> Result<CMatrix> {
        match self {
            OpVar::Leaf(l) => l.cauchy(beta),
            OpVar::Conv(c) => c.solve(beta).map(|r| r.g),
        }
    }

    /// Full solver output for a sum node; `None` for a leaf.
    pub fn solve(&self, beta: &CMatrix) -> Option<Result<ConvResult>> {
        match self {
            OpVar::Leaf(_) => None,
            OpVar::Conv(c) => Some(c.solve(beta)),
        }
    }

    pub fn f_transform(&self, w: &CMatrix) -> Result<CMatrix> {
        Ok(self.h_transform(w)? + w)
    }

    /// `h(w) = G(w)⁻¹ − w`.
    pub fn h_transform(&self, w: &CMatrix) -> Result<CMatrix> {
        match self {
            OpVar::Leaf(l) => l.h_transform(w),
            OpVar::Conv(c) => c.solve(w).map(|r| r.h),
        }
    }

    /// The same tree with empty caches and hints, for use on another worker.
    pub fn fresh_copy(&self) -> OpVar {
        match self {
            OpVar::Leaf(l) => OpVar::Leaf(l.clone()),
            OpVar::Conv(c) => OpVar::Conv(Arc::new(ConvNode::new(
                c.left.fresh_copy(),
                c.right.fresh_copy(),
                c.config.clone(),
            ))),
        }
    }

    /// Sets the warm-start hint of the top node.
    pub fn set_hint(&self, w: Option<CMatrix>) {
        if let OpVar::Conv(c) = self {
            *c.hint.lock().expect("hint lock") = w;
        }
    }

    pub fn hint(&self) -> Option<CMatrix> {
        match self {
            OpVar::Conv(c) => c.hint.lock().expect("hint lock").clone(),
            OpVar::Leaf(_) => None,
        }
    }
}

/// Left fold `((v₁ ⊞ v₂) ⊞ v₃) ⊞ ⋯`.
pub fn convolve(vars: Vec<OpVar>, config: SolverConfig) -> Result<OpVar> {
    config.validate()?;
    let mut iter = vars.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("convolve needs at least one variable".into()))?;
    iter.try_fold(first, |acc, next| convolve_pair(acc, next, config.clone()))
}

pub fn convolve_pair(x: OpVar, y: OpVar, config: SolverConfig) -> Result<OpVar> {
    config.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!(
            "cannot add {}×{} and {}×{} variables",
            x.dim(),
            x.dim(),
            y.dim(),
            y.dim()
        )));
    }
    Ok(OpVar::Conv(Arc::new(ConvNode::new(x, y, config))))
}

fn margin_error(e: Error) -> Error {
    match e {
        Error::NotInHalfPlane { min_eig } => Error::MarginLoss { min_eig },
        other => other,
    }
}

/// Picard iteration of `w ↦ h_y(h_x(w) + b) + b`.
///
/// Starts from `cfg.warm_start` when it lies in the half-plane, else from
/// `b`. Stops once the displacement `d_k` is below `tol` and, when the
/// observed ratio `q = d_k / d_{k−1}` is a contraction, the geometric tail
/// bound `d_k q / (1 − q)` is below `tol` as well.
pub fn fixed_point_subordination(
    x: &OpVar,
    y: &OpVar,
    b: &HalfPlanePoint,
    cfg: &SolverConfig,
) -> Result<ConvResult> {
    cfg.validate()?;
    let n = b.dim();
    if x.dim() != n || y.dim() != n {
        return Err(Error::Dimension("operands and evaluation point disagree in size".into()));
    }
    let bm = b.matrix();
    let mut w = match &cfg.warm_start {
        Some(w0) if w0.nrows() == n && w0.ncols() == n && linalg::imag_min_eig(w0) > 0.0 => w0.clone(),
        _ => bm.clone(),
    };
    let mut displacements = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    // ω₁ − b, carried separately so that Im(ω₁ − b) is not lost to rounding
    let mut hy = CMatrix::zeros(n, n);
    for _ in 0..cfg.max_iter {
        let inner = x.h_transform(&w).map_err(margin_error)? + bm;
        hy = y.h_transform(&inner).map_err(margin_error)?;
        let next = &hy + bm;
        let d = linalg::op_norm(&(&next - &w));
        w = next;
        displacements.push(d);
        if !d.is_finite() {
            break;
        }
        let q = d / prev;
        prev = d;
        if d < cfg.tol && (q >= 1.0 || d * q / (1.0 - q) < cfg.tol) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: displacements.len(),
            last_displacement: displacements.last().copied().unwrap_or(f64::NAN),
        });
    }
    let omega1 = w;
    let hx = x.h_transform(&omega1).map_err(margin_error)?;
    let omega2 = &hx + bm;
    let g = x.cauchy(&omega1).map_err(margin_error)?;
    let gy = y.cauchy(&omega2).map_err(margin_error)?;
    // F_y(ω₂) + b − ω₁ − ω₂ = h_y(ω₂) − (ω₁ − b)
    let r2 = linalg::op_norm(&(y.h_transform(&omega2).map_err(margin_error)? - &hy));
    let r3 = linalg::op_norm(&(&g - &gy));
    let gain1 = linalg::min_eig_herm(&linalg::imag_part(&hy))?;
    let gain2 = linalg::min_eig_herm(&linalg::imag_part(&hx))?;
    let im_gain = gain1.min(gain2);
    if im_gain < -10.0 * cfg.tol {
        return Err(Error::MarginLoss { min_eig: im_gain });
    }
    let h = hx + hy;
    Ok(ConvResult {
        omega1,
        omega2,
        g,
        h,
        iterations: displacements.len(),
        r2,
        r3,
        im_gain,
        displacements,
    })
}

/// Margin, relative to `1 + ‖b‖`, below which a cold start goes through
/// [`subordination_by_continuation`].
pub const CONTINUATION_MARGIN: f64 = 1e-2;

/// Solves at `b + iδ` for `δ` shrinking tenfold from
/// `CONTINUATION_MARGIN · (1 + ‖b‖)` and then at `b`, each stage starting
/// from the previous one. From a cold start the plain iteration can stall
/// for a long time when `Im b` is tiny; the path keeps every stage close to
/// its solution.
pub fn subordination_by_continuation(
    x: &OpVar,
    y: &OpVar,
    b: &HalfPlanePoint,
    cfg: &SolverConfig,
) -> Result<ConvResult> {
    let bm = b.matrix();
    let n = b.dim();
    let margin = b.margin();
    let mut delta = CONTINUATION_MARGIN * (1.0 + linalg::op_norm(bm));
    let mut stage_cfg = cfg.clone();
    let mut spent = 0;
    while delta > margin {
        let shifted = HalfPlanePoint::new(bm + CMatrix::identity(n, n) * c64(0.0, delta))?;
        let res = fixed_point_subordination(x, y, &shifted, &stage_cfg)?;
        spent += res.iterations;
        stage_cfg.warm_start = Some(res.omega1);
        delta *= 0.1;
    }
    let mut res = fixed_point_subordination(x, y, b, &stage_cfg)?;
    res.iterations += spent;
    Ok(res)
}

/// `‖h(w)‖ ≤ 4M(1 + 2M/ε)` for `‖X‖ ≤ M` and `Im w ⪰ ε`.
pub fn h_norm_bound(norm: f64, eps: f64) -> f64 {
    4.0 * norm * (1.0 + 2.0 * norm / eps)
}

#[derive(Debug, Clone)]
pub struct AtomDiagnostic {
    /// Eigenvalues of `Im(F_y(w) − w)`, ascending.
    pub spectrum: Vec<f64>,
    /// Eigenpairs below the threshold.
    pub flagged: Vec<(f64, DVector<nalgebra::Complex<f64>>)>,
    /// Second evaluation point used for the independence check.
    pub second_point: CMatrix,
    pub flagged_at_second: usize,
    /// `‖P − P'‖` between the flagged projections at both points; `None`
    /// when they differ in rank.
    pub kernel_distance: Option<f64>,
}

impl AtomDiagnostic {
    pub fn kernel_dim(&self) -> usize {
        self.flagged.len()
    }
}

fn flagged_projection(y: &OpVar, w: &CMatrix, threshold: f64) -> Result<(Vec<f64>, Vec<(f64, DVector<nalgebra::Complex<f64>>)>, CMatrix)> {
    let h = y.h_transform(w)?;
    let (vals, vecs) = linalg::eigh(&linalg::imag_part(&h));
    let n = w.nrows();
    let mut proj = CMatrix::zeros(n, n);
    let mut flagged = Vec::new();
    for (k, &v) in vals.iter().enumerate() {
        if v < threshold {
            let col = vecs.column(k).into_owned();
            proj += &col * col.adjoint();
            flagged.push((v, col));
        }
    }
    Ok((vals, flagged, proj))
}

/// Eigenpairs of `Im(F_y(w) − w)` below `threshold`. A non-trivial kernel
/// signals directions in which `y` is deterministic; it should not depend
/// on `w`, which is checked at `w + (1 + ‖w‖) i`.
pub fn atom_diagnostic(y: &OpVar, w: &HalfPlanePoint, threshold: f64) -> Result<AtomDiagnostic> {
    let wm = w.matrix();
    let n = wm.nrows();
    let (spectrum, flagged, p1) = flagged_projection(y, wm, threshold)?;
    let shift = 1.0 + linalg::op_norm(wm);
    let second_point = wm + CMatrix::identity(n, n) * linalg::c64(0.5 * shift, shift);
    let (_, flagged2, p2) = flagged_projection(y, &second_point, threshold)?;
    let kernel_distance = (flagged.len() == flagged2.len()).then(|| linalg::op_norm(&(p1 - p2)));
    Ok(AtomDiagnostic {
        spectrum,
        flagged,
        second_point,
        flagged_at_second: flagged2.len(),
        kernel_distance,
    })
}
