//! Dense complex matrix kernel and matrix upper half-plane predicates.
//!
//! Matrices here are small (a linearization rarely exceeds a few dozen rows),
//! so everything is plain `nalgebra` dense storage.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `true` when every entry is finite.
pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn symmetrize(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()).scale(0.5)
}

/// `Im b = (b − b*)/(2i)`, returned exactly Hermitian.
pub fn imag_part(b: &CMatrix) -> CMatrix {
    let h = (b - b.adjoint()).map(|z| z / (2.0 * I));
    symmetrize(&h)
}

/// `Re b = (b + b*)/2`.
pub fn real_part(b: &CMatrix) -> CMatrix {
    symmetrize(b)
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && hermitian_defect(m) <= tol * max_abs(m).max(1.0)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    let eig = SymmetricEigen::new(symmetrize(h));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig_herm(h: &CMatrix) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::Dimension("matrix is not square".into()));
    }
    if !is_hermitian(h, 1e-10) {
        return Err(Error::NotHermitian {
            asymmetry: hermitian_defect(h),
        });
    }
    Ok(herm_eigenvalues(h)[0])
}

fn herm_eigenvalues(h: &CMatrix) -> Vec<f64> {
    if h.nrows() == 1 {
        return vec![h[(0, 0)].re];
    }
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(h)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Smallest eigenvalue of `Im b`.
pub fn imag_min_eig(b: &CMatrix) -> f64 {
    herm_eigenvalues(&imag_part(b))[0]
}

/// Largest eigenvalue of `Im b`.
pub fn imag_max_eig(b: &CMatrix) -> f64 {
    *herm_eigenvalues(&imag_part(b)).last().expect("non-empty matrix")
}

/// Spectral (operator) norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    let gram = m.adjoint() * m;
    herm_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlaneCheck {
    pub inside: bool,
    /// Smallest eigenvalue of the imaginary part.
    pub min_eig: f64,
}

/// Tests `Im b > margin` through the spectrum of the imaginary part.
pub fn in_upper_half_plane(b: &CMatrix, margin: f64) -> HalfPlaneCheck {
    let min_eig = imag_min_eig(b);
    HalfPlaneCheck {
        inside: min_eig > margin,
        min_eig,
    }
}

/// A point of the matrix upper half-plane together with a certified lower
/// bound on the spectrum of its imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlanePoint {
    m: CMatrix,
    margin: f64,
}

impl HalfPlanePoint {
    /// Certifies `m` and records `min eig(Im m)` as the margin.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.is_empty() {
            return Err(Error::Dimension("half-plane point must be a non-empty square matrix".into()));
        }
        if !is_finite(&m) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let min_eig = imag_min_eig(&m);
        if min_eig <= 0.0 {
            return Err(Error::NotInHalfPlane { min_eig });
        }
        Ok(HalfPlanePoint { m, margin: min_eig })
    }

    pub fn scalar(z: Complex64) -> Result<Self> {
        Self::new(CMatrix::from_element(1, 1, z))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct Inverse {
    pub matrix: CMatrix,
    /// `‖b‖₁ ‖b⁻¹‖₁`.
    pub cond: f64,
}

fn norm1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU inverse with partial pivoting and a 1-norm condition estimate.
pub fn invert(b: &CMatrix) -> Result<Inverse> {
    if !b.is_square() {
        return Err(Error::Dimension("cannot invert a non-square matrix".into()));
    }
    let matrix = inv(b)?;
    let cond = norm1(b) * norm1(&matrix);
    if !cond.is_finite() {
        return Err(Error::Singular);
    }
    Ok(Inverse { matrix, cond })
}

/// Inverse without the condition estimate; 1×1 and 2×2 use closed forms.
pub fn inv(b: &CMatrix) -> Result<CMatrix> {
    let n = b.nrows();
    let scale = max_abs(b);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Singular);
    }
    let tiny = scale * f64::EPSILON * n as f64;
    match n {
        1 => {
            let d = b[(0, 0)];
            if d.norm() <= tiny {
                return Err(Error::Singular);
            }
            Ok(CMatrix::from_element(1, 1, d.inv()))
        }
        2 => {
            let (a, bb, c, d) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
            let det = a * d - bb * c;
            if det.norm() <= tiny * scale {
                return Err(Error::Singular);
            }
            let r = det.inv();
            Ok(CMatrix::from_row_slice(2, 2, &[d * r, -bb * r, -c * r, a * r]))
        }
        _ => {
            let lu = b.clone().lu();
            let min_pivot = lu.u().diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            if min_pivot <= tiny {
                return Err(Error::Singular);
            }
            lu.try_inverse().ok_or(Error::Singular)
        }
    }
}

/// Eigendecomposition `m = V diag(d) V⁻¹` of a general square matrix, with
/// `‖V‖₁ ‖V⁻¹‖₁` as the conditioning of the basis.
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
    pub vectors_inv: CMatrix,
    pub cond: f64,
}

pub fn eig(m: &CMatrix) -> Result<Eigen> {
    let n = m.nrows();
    if !m.is_square() || n == 0 {
        return Err(Error::Dimension("eigendecomposition needs a non-empty square matrix".into()));
    }
    if n == 1 {
        let one = CMatrix::identity(1, 1);
        return Ok(Eigen {
            values: vec![m[(0, 0)]],
            vectors: one.clone(),
            vectors_inv: one,
            cond: 1.0,
        });
    }
    let fm = faer::Mat::<Complex64>::from_fn(n, n, |i, j| m[(i, j)]);
    let evd = fm
        .eigen()
        .map_err(|e| Error::InvalidArgument(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values = (0..n).map(|k| s[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    let inverse = invert(&vectors)?;
    Ok(Eigen {
        values,
        vectors,
        vectors_inv: inverse.matrix,
        cond: inverse.cond,
    })
}
