//! Operator-valued Cauchy transform of `b ⊗ x` for a Hermitian coefficient
//! `b` and a scalar variable `x` with known law μ:
//! `G(β) = E[(β − b ⊗ x)⁻¹] = ∫ (β − t b)⁻¹ dμ(t)`.
//!
//! With `b = U diag(Λ, 0) U*` only the `r × r` block on the range of `b`
//! depends on `t`. Writing `β' = U* β U` in blocks and
//! `A = β₁₁ − β₁₂ β₂₂⁻¹ β₂₁`, the block inverse gives
//!
//! ```text
//! G' = [[K, −K c], [−d K, β₂₂⁻¹ + d K c]],   c = β₁₂ β₂₂⁻¹,  d = β₂₂⁻¹ β₂₁
//! ```
//!
//! with `K = ∫ (A − tΛ)⁻¹ dμ(t)`. Since `Λ⁻¹A` has no real eigenvalues when
//! `Im β > 0`, `K = G_μ(Λ⁻¹A) Λ⁻¹` by the holomorphic functional calculus;
//! quadrature is the fallback when its eigenbasis is badly conditioned.

use num_complex::Complex64;

use super::measure::SpectralMeasure;
use super::quadrature::QuadOptions;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Eigenbases worse than this are not trusted for the functional calculus.
const MAX_BASIS_COND: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafMethod {
    /// Functional calculus on the scalar transform, quadrature as fallback.
    #[default]
    Auto,
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct OpVarLeaf {
    coeff: CMatrix,
    measure: SpectralMeasure,
    /// Columns: range of `coeff` first, then its kernel.
    basis: CMatrix,
    lambda: Vec<f64>,
    method: LeafMethod,
    quad: QuadOptions,
}

impl OpVarLeaf {
    pub fn new(coeff: CMatrix, measure: SpectralMeasure) -> Result<Self> {
        if !coeff.is_square() || coeff.nrows() == 0 {
            return Err(Error::Dimension("leaf coefficient must be square".into()));
        }
        let scale = linalg::max_abs(&coeff).max(1.0);
        let defect = linalg::hermitian_defect(&coeff);
        if defect > 1e-12 * scale {
            return Err(Error::NotHermitian { asymmetry: defect });
        }
        let coeff = linalg::symmetrize(&coeff);
        let (vals, vecs) = linalg::eigh(&coeff);
        let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k].abs() > 1e-12 * top).collect();
        let drop: Vec<usize> = (0..vals.len()).filter(|k| !keep.contains(k)).collect();
        let order: Vec<usize> = keep.iter().chain(drop.iter()).copied().collect();
        let n = coeff.nrows();
        let basis = CMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
        let lambda = keep.iter().map(|&k| vals[k]).collect();
        Ok(OpVarLeaf {
            coeff,
            measure,
            basis,
            lambda,
            method: LeafMethod::Auto,
            quad: QuadOptions::default(),
        })
    }

    pub fn with_method(mut self, method: LeafMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_quadrature(mut self, quad: QuadOptions) -> Self {
        self.quad = quad;
        self
    }

    pub fn dim(&self) -> usize {
        self.coeff.nrows()
    }

    pub fn coeff(&self) -> &CMatrix {
        &self.coeff
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// `‖b ⊗ x‖ = ‖b‖ · sup |supp μ|`.
    pub fn norm(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, v| m.max(v.abs())) * self.measure.norm()
    }

    fn check_argument(&self, beta: &CMatrix) -> Result<()> {
        let n = self.dim();
        if beta.nrows() != n || beta.ncols() != n {
            return Err(Error::Dimension(format!(
                "leaf is {n}×{n}, argument is {}×{}",
                beta.nrows(),
                beta.ncols()
            )));
        }
        let min_eig = linalg::imag_min_eig(beta);
        if !(min_eig > 0.0) {
            return Err(Error::NotInHalfPlane { min_eig });
        }
        Ok(())
    }

    /// Blocks of `β' = U* β U` around the range of `b`.
    fn reduce(&self, beta: &CMatrix) -> Result<Reduced> {
        let (n, r) = (self.dim(), self.rank());
        let k = n - r;
        let bp = self.basis.adjoint() * beta * &self.basis;
        let b11 = bp.view((0, 0), (r, r)).into_owned();
        if k == 0 {
            return Ok(Reduced { a: b11, rest: None });
        }
        let b12 = bp.view((0, r), (r, k)).into_owned();
        let b21 = bp.view((r, 0), (k, r)).into_owned();
        let b22_inv = linalg::inv(&bp.view((r, r), (k, k)).into_owned())?;
        let c = &b12 * &b22_inv;
        let d = &b22_inv * &b21;
        let a = b11 - &c * &b21;
        Ok(Reduced {
            a,
            rest: Some((c, d, b22_inv)),
        })
    }

    /// `E[(β − b ⊗ x)⁻¹]` for `β` in the matrix upper half-plane.
    pub fn cauchy(&self, beta: &CMatrix) -> Result<CMatrix> {
        self.check_argument(beta)?;
        let (n, r) = (self.dim(), self.rank());
        if r == 0 {
            return linalg::inv(beta);
        }
        let red = self.reduce(beta)?;
        let kk = self.kernel(&red.a)?;
        let gp = match red.rest {
            None => kk,
            Some((c, d, b22_inv)) => {
                let k = n - r;
                let mut gp = CMatrix::zeros(n, n);
                gp.view_mut((0, 0), (r, r)).copy_from(&kk);
                gp.view_mut((0, r), (r, k)).copy_from(&(-(&kk * &c)));
                gp.view_mut((r, 0), (k, r)).copy_from(&(-(&d * &kk)));
                gp.view_mut((r, r), (k, k)).copy_from(&(b22_inv + &d * &kk * &c));
                gp
            }
        };
        Ok(&self.basis * gp * self.basis.adjoint())
    }

    /// `F(w) = G(w)⁻¹`.
    pub fn f_transform(&self, w: &CMatrix) -> Result<CMatrix> {
        Ok(self.h_transform(w)? + w)
    }

    /// `h(w) = G(w)⁻¹ − w`.
    ///
    /// Inverting the block form of `G'` shows `F(β)` differs from `β` only
    /// in the range block, by `K⁻¹ − A`; so `h(β) = U_r (K⁻¹ − A) U_r*`,
    /// and `K⁻¹ − A = Λ h_μ(Λ⁻¹A)` in the spectral path. Nothing large is
    /// subtracted.
    pub fn h_transform(&self, w: &CMatrix) -> Result<CMatrix> {
        self.check_argument(w)?;
        let (n, r) = (self.dim(), self.rank());
        if r == 0 {
            return Ok(CMatrix::zeros(n, n));
        }
        let a = self.reduce(w)?.a;
        let inner = match self.method {
            LeafMethod::Auto => self.spectral(&a, |d| self.measure.h_transform(d), false)?,
            LeafMethod::Quadrature => None,
        };
        let inner = match inner {
            Some(m) => m,
            None => linalg::inv(&self.kernel_quadrature(&a)?)? - &a,
        };
        let ur = self.basis.columns(0, r);
        Ok(&ur * inner * ur.adjoint())
    }

    /// `K = ∫ (A − tΛ)⁻¹ dμ(t)`.
    fn kernel(&self, a: &CMatrix) -> Result<CMatrix> {
        if self.method == LeafMethod::Auto {
            if let Some(k) = self.spectral(a, |d| self.measure.cauchy(d), true)? {
                return Ok(k);
            }
        }
        self.kernel_quadrature(a)
    }

    /// `f(Λ⁻¹A) Λ⁻¹` when `right` is set, else `Λ f(Λ⁻¹A)`, through an
    /// eigendecomposition of `Λ⁻¹A`; `None` if that basis is untrustworthy.
    fn spectral<F>(&self, a: &CMatrix, f: F, right: bool) -> Result<Option<CMatrix>>
    where
        F: Fn(Complex64) -> Complex64,
    {
        let r = self.rank();
        let lambda_inv: Vec<f64> = self.lambda.iter().map(|l| 1.0 / l).collect();
        let c = CMatrix::from_fn(r, r, |i, j| a[(i, j)] * lambda_inv[i]);
        let eig = match linalg::eig(&c) {
            Ok(e) => e,
            Err(_) => return Ok(None),
        };
        if !(eig.cond <= MAX_BASIS_COND) || eig.values.iter().any(|d| d.im == 0.0) {
            return Ok(None);
        }
        let mut m = eig.vectors.clone();
        for (j, d) in eig.values.iter().enumerate() {
            let v = f(*d);
            for i in 0..r {
                m[(i, j)] *= v;
            }
        }
        let mut m = m * eig.vectors_inv;
        for j in 0..r {
            for i in 0..r {
                if right {
                    m[(i, j)] *= lambda_inv[j];
                } else {
                    m[(i, j)] *= self.lambda[i];
                }
            }
        }
        Ok(linalg::is_finite(&m).then_some(m))
    }

    fn kernel_quadrature(&self, a: &CMatrix) -> Result<CMatrix> {
        let r = self.rank();
        self.measure.integrate(
            |t| {
                let mut m = a.clone();
                for i in 0..r {
                    m[(i, i)] -= Complex64::from(t * self.lambda[i]);
                }
                linalg::inv(&m)
            },
            self.quad,
        )
    }
}

struct Reduced {
    /// Schur complement `β₁₁ − β₁₂ β₂₂⁻¹ β₂₁`.
    a: CMatrix,
    /// `(β₁₂ β₂₂⁻¹, β₂₂⁻¹ β₂₁, β₂₂⁻¹)` when `b` has a kernel.
    rest: Option<(CMatrix, CMatrix, CMatrix)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_half_plane(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> CMatrix {
        let re = crate::linearization::random_hermitian(rng, n);
        let g = CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let im = &g * g.adjoint() + CMatrix::identity(n, n) * c64(margin, 0.0);
        re + im * c64(0.0, 1.0)
    }

    fn random_hermitian_of_rank(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMatrix {
        let mut b = CMatrix::zeros(n, n);
        for _ in 0..rank {
            let v = nalgebra::DVector::from_fn(n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            b += &v * v.adjoint() * c64(s, 0.0);
        }
        b
    }

    #[test]
    fn scalar_leaf_is_scalar_transform() {
        let mu = SpectralMeasure::semicircle(0.0, 1.0).unwrap();
        let leaf = OpVarLeaf::new(CMatrix::identity(1, 1), mu.clone()).unwrap();
        let z = c64(0.0, 1.0);
        let g = leaf.cauchy(&CMatrix::from_element(1, 1, z)).unwrap()[(0, 0)];
        assert!((g - c64(0.0, -0.618_033_988_749_895)).norm() < 1e-12);
    }

    #[test]
    fn identity_coefficient_is_scalar_times_identity() {
        let mu = SpectralMeasure::marchenko_pastur(0.7, 1.0).unwrap();
        let leaf = OpVarLeaf::new(CMatrix::identity(3, 3), mu.clone()).unwrap();
        let z = c64(0.4, 0.3);
        let g = leaf.cauchy(&(CMatrix::identity(3, 3) * z)).unwrap();
        let want = CMatrix::identity(3, 3) * mu.cauchy(z);
        assert!(linalg::max_abs(&(g - want)) < 1e-12);
    }

    #[test]
    fn spectral_and_quadrature_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tab = super::super::Tabulated::new(vec![-2.0, -0.5, 1.0, 1.5], vec![0.0, 1.0, 0.2, 0.0]).unwrap();
        let measures = [
            SpectralMeasure::semicircle(0.2, 1.3).unwrap(),
            SpectralMeasure::marchenko_pastur(0.4, 1.0).unwrap(),
            SpectralMeasure::marchenko_pastur(1.0, 1.0).unwrap(),
            SpectralMeasure::atomic(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
            SpectralMeasure::tabulated(tab),
        ];
        for mu in &measures {
            for (n, rank) in [(1, 1), (2, 1), (3, 2), (3, 3), (4, 2)] {
                let b = random_hermitian_of_rank(&mut rng, n, rank);
                let leaf = OpVarLeaf::new(b, mu.clone()).unwrap();
                assert_eq!(leaf.rank(), rank);
                let quad = leaf.clone().with_method(LeafMethod::Quadrature);
                let beta = random_half_plane(&mut rng, n, 0.2);
                let g1 = leaf.cauchy(&beta).unwrap();
                let g2 = quad.cauchy(&beta).unwrap();
                assert!(linalg::max_abs(&(&g1 - &g2)) < 1e-8, "{mu} n={n} r={rank}");
            }
        }
    }

    #[test]
    fn h_transform_matches_inverse_of_cauchy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for mu in [
            SpectralMeasure::semicircle(0.3, 1.0).unwrap(),
            SpectralMeasure::marchenko_pastur(0.6, 1.0).unwrap(),
            SpectralMeasure::atomic(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
        ] {
            for (n, rank) in [(1, 1), (3, 2), (3, 3), (4, 1)] {
                let leaf = OpVarLeaf::new(random_hermitian_of_rank(&mut rng, n, rank), mu.clone()).unwrap();
                let w = random_half_plane(&mut rng, n, 0.3);
                let direct = linalg::inv(&leaf.cauchy(&w).unwrap()).unwrap() - &w;
                let h = leaf.h_transform(&w).unwrap();
                assert!(linalg::max_abs(&(&h - &direct)) < 1e-9, "{mu} n={n} r={rank}");
                let hq = leaf.clone().with_method(LeafMethod::Quadrature).h_transform(&w).unwrap();
                assert!(linalg::max_abs(&(&h - &hq)) < 1e-7);
                // Im h ⪰ 0
                assert!(linalg::imag_min_eig(&h) > -1e-12);
            }
        }
    }

    #[test]
    fn h_transform_stays_accurate_for_anisotropic_arguments() {
        // Im β = diag(100, 1e-8, 1e-8): h must still satisfy Im h ⪰ 0
        let mut b = CMatrix::zeros(3, 3);
        b[(0, 1)] = c64(1.0, 0.0);
        b[(1, 0)] = c64(1.0, 0.0);
        let leaf = OpVarLeaf::new(b, SpectralMeasure::semicircle(0.0, 1.0).unwrap()).unwrap();
        let mut beta = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(0.0, 100.0),
            c64(0.0, 1e-8),
            c64(0.0, 1e-8),
        ]));
        beta[(1, 2)] = c64(1.0, 0.0);
        beta[(2, 1)] = c64(1.0, 0.0);
        let h = leaf.h_transform(&beta).unwrap();
        assert!(linalg::imag_min_eig(&h) > -1e-14);
        assert!(linalg::max_abs(&h) < 10.0);
    }

    #[test]
    fn atomic_leaf_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let atoms = vec![(-1.0, 0.3), (0.5, 0.2), (2.0, 0.5)];
        let mu = SpectralMeasure::atomic(atoms.clone()).unwrap();
        let b = random_hermitian_of_rank(&mut rng, 3, 2);
        let leaf = OpVarLeaf::new(b.clone(), mu).unwrap();
        let beta = random_half_plane(&mut rng, 3, 0.1);
        let direct = atoms.iter().fold(CMatrix::zeros(3, 3), |acc, &(t, w)| {
            acc + linalg::inv(&(&beta - &b * c64(t, 0.0))).unwrap() * c64(w, 0.0)
        });
        assert!(linalg::max_abs(&(leaf.cauchy(&beta).unwrap() - direct)) < 1e-12);
    }

    #[test]
    fn zero_coefficient_gives_resolvent() {
        let leaf = OpVarLeaf::new(CMatrix::zeros(2, 2), SpectralMeasure::semicircle(0.0, 1.0).unwrap()).unwrap();
        let beta = CMatrix::identity(2, 2) * c64(1.0, 2.0);
        let g = leaf.cauchy(&beta).unwrap();
        assert!(linalg::max_abs(&(g - linalg::inv(&beta).unwrap())) < 1e-15);
        assert_eq!(leaf.norm(), 0.0);
    }

    #[test]
    fn im_g_is_negative_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let leaf = OpVarLeaf::new(
            random_hermitian_of_rank(&mut rng, 3, 2),
            SpectralMeasure::semicircle(0.0, 1.0).unwrap(),
        )
        .unwrap();
        for _ in 0..20 {
            let beta = random_half_plane(&mut rng, 3, 1e-3);
            let g = leaf.cauchy(&beta).unwrap();
            assert!(linalg::imag_max_eig(&g) < 0.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let mu = SpectralMeasure::semicircle(0.0, 1.0).unwrap();
        let mut b = CMatrix::identity(2, 2);
        b[(0, 1)] = c64(1.0, 0.0);
        assert!(matches!(OpVarLeaf::new(b, mu.clone()), Err(Error::NotHermitian { .. })));
        let leaf = OpVarLeaf::new(CMatrix::identity(2, 2), mu).unwrap();
        assert!(matches!(
            leaf.cauchy(&CMatrix::identity(2, 2)),
            Err(Error::NotInHalfPlane { .. })
        ));
        assert!(leaf.cauchy(&(CMatrix::identity(3, 3) * c64(0.0, 1.0))).is_err());
    }
}
