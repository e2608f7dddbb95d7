//! Self-adjoint linearizations `L_p = b_0 ⊗ 1 + Σ_j b_j ⊗ X_j`.
//!
//! A linearization has block form `[[0, u], [v, Q]]` with every entry of
//! degree at most one and `p = −u Q⁻¹ v`. The resolvent corner identity
//! `[(Λ(z) − L_P)⁻¹]₁₁ = (z − P)⁻¹` is what the density pipeline relies on.
//!
//! Construction of a self-adjoint linearization for a self-adjoint `p`:
//!
//! * `deg p ≤ 1`: `L_p` is `1 × 1` with `b_j = [β_j]`.
//! * a palindromic word of odd length `≥ 3` (necessarily with a real
//!   coefficient) is its own adjoint; its monomial chain is symmetric once the
//!   coefficient sits on the middle letter, so it is used as is.
//! * every other term goes into a polynomial `q` with `p = q + q*`: a word
//!   and its reversal contribute the coefficient of the smaller one, other
//!   self-adjoint terms (constants, letters, even palindromes) half of theirs.
//!   Words of `q` sharing everything but their last letter are grouped so that
//!   the last slot of the chain carries a linear form. `L_q` is doubled into
//!   `[[0, u, v*], [u*, 0, Q*], [v, Q, 0]]`.
//!
//! All pieces are joined with [`linearize_sum`].

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMatrix};
use crate::ncpoly::{NcPolynomial, Word};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Affine form `a_0 + Σ a_j X_j`; index 0 is the constant term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine(BTreeMap<usize, Complex64>);

impl Affine {
    pub fn constant(c: Complex64) -> Self {
        Affine::default().plus(0, c)
    }

    pub fn var(j: usize, c: Complex64) -> Self {
        Affine::default().plus(j, c)
    }

    pub fn plus(mut self, j: usize, c: Complex64) -> Self {
        *self.0.entry(j).or_default() += c;
        self
    }
}

/// One summand in a [`Linearization`], for auditing the block structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Part {
    pub label: String,
    /// Rows `offset .. offset + size` of the `Q` block belong to this part.
    pub offset: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BlockLayout {
    /// Length of `u` and `v`; `Q` is `q_dim × q_dim`.
    pub q_dim: usize,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    dim: usize,
    coeffs: Vec<CMatrix>,
    layout: BlockLayout,
}

impl Linearization {
    /// Wraps explicit coefficient matrices `b_0, .., b_n`.
    pub fn from_coeffs(coeffs: Vec<CMatrix>) -> Result<Self> {
        let dim = coeffs
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| Error::InvalidArgument("need at least b_0".into()))?;
        if dim == 0 || coeffs.iter().any(|b| b.nrows() != dim || b.ncols() != dim) {
            return Err(Error::Dimension("coefficients must share one square shape".into()));
        }
        let layout = BlockLayout {
            q_dim: dim - 1,
            parts: vec![Part {
                label: "explicit".into(),
                offset: 1,
                size: dim - 1,
            }],
        };
        Ok(Linearization { dim, coeffs, layout })
    }

    fn from_affine(entries: &[Vec<Affine>], n_vars: usize, label: String) -> Self {
        let dim = entries.len();
        let mut coeffs = vec![CMatrix::zeros(dim, dim); n_vars + 1];
        for (r, row) in entries.iter().enumerate() {
            for (c, a) in row.iter().enumerate() {
                for (&j, &v) in &a.0 {
                    coeffs[j][(r, c)] += v;
                }
            }
        }
        let layout = BlockLayout {
            q_dim: dim - 1,
            parts: vec![Part {
                label,
                offset: 1,
                size: dim - 1,
            }],
        };
        Linearization { dim, coeffs, layout }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vars(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `b_0, b_1, .., b_n`.
    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> &CMatrix {
        &self.coeffs[j]
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.coeffs.iter().all(|b| b == &b.adjoint())
    }

    pub fn corner_is_zero(&self) -> bool {
        self.coeffs.iter().all(|b| b[(0, 0)] == ZERO)
    }

    /// `L_P = b_0 ⊗ 1 + Σ b_j ⊗ X_j` as an `(N·d) × (N·d)` matrix.
    pub fn pencil_at(&self, mats: &[CMatrix]) -> Result<CMatrix> {
        if mats.len() != self.n_vars() {
            return Err(Error::Dimension(format!(
                "linearization has {} variables, got {} matrices",
                self.n_vars(),
                mats.len()
            )));
        }
        let d = mats.first().map(|m| m.nrows()).unwrap_or(1);
        let n = self.dim;
        let mut out = CMatrix::zeros(n * d, n * d);
        for r in 0..n {
            for c in 0..n {
                let mut block = out.view_mut((r * d, c * d), (d, d));
                let b0 = self.coeffs[0][(r, c)];
                if b0 != ZERO {
                    for k in 0..d {
                        block[(k, k)] += b0;
                    }
                }
                for (j, x) in mats.iter().enumerate() {
                    let bj = self.coeffs[j + 1][(r, c)];
                    if bj != ZERO {
                        block.zip_apply(x, |a, b| *a += bj * b);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Chain linearization of `ℓ_1 ℓ_2 ⋯ ℓ_k` for affine letters `ℓ_r`.
///
/// `k = 1` gives `[[0, ℓ_1], [1, −1]]`; otherwise the `k × k` matrix with
/// `ℓ_{r+1}` at `(r, k−1−r)` and `−1` at `(r, k−r)`.
fn chain(letters: &[Affine], n_vars: usize, label: String) -> Linearization {
    let k = letters.len();
    assert!(k >= 1, "chain needs at least one letter");
    if k == 1 {
        let entries = vec![
            vec![Affine::default(), letters[0].clone()],
            vec![Affine::constant(ONE), Affine::constant(-ONE)],
        ];
        return Linearization::from_affine(&entries, n_vars, label);
    }
    let mut entries = vec![vec![Affine::default(); k]; k];
    for (r, letter) in letters.iter().enumerate() {
        entries[r][k - 1 - r] = letter.clone();
        if r >= 1 {
            entries[r][k - r] = Affine::constant(-ONE);
        }
    }
    Linearization::from_affine(&entries, n_vars, label)
}

fn word_label(word: &[usize]) -> String {
    if word.is_empty() {
        return "1".into();
    }
    word.iter().map(|j| format!("x{j}")).collect::<Vec<_>>().join("*")
}

/// Linearization of `coeff · X_{i_1} ⋯ X_{i_k}`, the coefficient placed in
/// the top row. Not self-adjoint in general.
pub fn linearize_monomial(word: &[usize], coeff: Complex64, n_vars: usize) -> Result<Linearization> {
    if let Some(&bad) = word.iter().find(|&&j| j == 0 || j > n_vars) {
        return Err(Error::VariableOutOfRange { index: bad, n_vars });
    }
    let letters: Vec<Affine> = if word.is_empty() {
        vec![Affine::constant(coeff)]
    } else {
        word.iter()
            .enumerate()
            .map(|(r, &j)| Affine::var(j, if r == 0 { coeff } else { ONE }))
            .collect()
    };
    Ok(chain(&letters, n_vars, word_label(word)))
}

/// Joins linearizations of `p_1, .., p_k` into one for `p_1 + ⋯ + p_k`,
/// sharing the first row and column. Dimension `Σ N_i − k + 1`.
pub fn linearize_sum(parts: &[Linearization]) -> Result<Linearization> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("linearize_sum needs at least one part".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let n_vars = first.n_vars();
    if parts.iter().any(|p| p.n_vars() != n_vars) {
        return Err(Error::Dimension("parts disagree on the variable count".into()));
    }
    if !parts.iter().all(Linearization::corner_is_zero) {
        return Err(Error::InvalidArgument("every part needs a zero top-left entry".into()));
    }
    let dim = parts.iter().map(|p| p.dim).sum::<usize>() - parts.len() + 1;
    let mut coeffs = vec![CMatrix::zeros(dim, dim); n_vars + 1];
    let mut layout = BlockLayout {
        q_dim: dim - 1,
        parts: Vec::new(),
    };
    let mut offset = 1;
    for part in parts {
        let place = |a: usize| if a == 0 { 0 } else { offset + a - 1 };
        for (target, src) in coeffs.iter_mut().zip(&part.coeffs) {
            for r in 0..part.dim {
                for c in 0..part.dim {
                    target[(place(r), place(c))] += src[(r, c)];
                }
            }
        }
        for p in &part.layout.parts {
            layout.parts.push(Part {
                label: p.label.clone(),
                offset: offset + p.offset - 1,
                size: p.size,
            });
        }
        offset += part.dim - 1;
    }
    Ok(Linearization { dim, coeffs, layout })
}

/// `[[0, u], [v, Q]] ↦ [[0, u, v*], [u*, 0, Q*], [v, Q, 0]]`.
fn double(lq: &Linearization) -> Linearization {
    let m = lq.dim - 1;
    let dim = 2 * m + 1;
    let coeffs = lq
        .coeffs
        .iter()
        .map(|b| {
            let mut out = CMatrix::zeros(dim, dim);
            for a in 0..m {
                let u = b[(0, a + 1)];
                let v = b[(a + 1, 0)];
                out[(0, 1 + a)] = u;
                out[(1 + a, 0)] = u.conj();
                out[(0, 1 + m + a)] = v.conj();
                out[(1 + m + a, 0)] = v;
                for c in 0..m {
                    let q = b[(a + 1, c + 1)];
                    out[(1 + m + a, 1 + c)] = q;
                    out[(1 + c, 1 + m + a)] = q.conj();
                }
            }
            out
        })
        .collect();
    let layout = BlockLayout {
        q_dim: dim - 1,
        parts: vec![Part {
            label: "q + q*".into(),
            offset: 1,
            size: dim - 1,
        }],
    };
    Linearization { dim, coeffs, layout }
}

/// Self-adjoint linearization of a self-adjoint, non-constant polynomial.
pub fn selfadjoint_linearize(p: &NcPolynomial) -> Result<Linearization> {
    if !p.is_selfadjoint() {
        return Err(Error::NotSelfAdjoint);
    }
    let n_vars = p.n_vars();
    let degree = p.degree();
    if degree == 0 {
        return Err(Error::InvalidArgument("constant polynomial has no spectrum to compute".into()));
    }
    if degree == 1 {
        let mut coeffs = vec![CMatrix::zeros(1, 1); n_vars + 1];
        for m in p.terms() {
            let j = m.word.letters().first().copied().unwrap_or(0);
            coeffs[j][(0, 0)] = c64(m.coeff.re, 0.0);
        }
        return Ok(Linearization {
            dim: 1,
            coeffs,
            layout: BlockLayout::default(),
        });
    }

    let mut half: BTreeMap<Word, Complex64> = BTreeMap::new();
    let mut direct = Vec::new();
    for m in p.terms() {
        let w = &m.word;
        let k = w.degree();
        if w.is_palindrome() {
            if k >= 3 && k % 2 == 1 {
                let mid = k / 2;
                let letters: Vec<Affine> = w
                    .letters()
                    .iter()
                    .enumerate()
                    .map(|(r, &j)| Affine::var(j, if r == mid { c64(m.coeff.re, 0.0) } else { ONE }))
                    .collect();
                direct.push(chain(&letters, n_vars, word_label(w.letters())));
            } else {
                *half.entry(w.clone()).or_default() += c64(m.coeff.re * 0.5, 0.0);
            }
        } else if w.letters() < w.reversed().letters() {
            *half.entry(w.clone()).or_default() += m.coeff;
        }
    }

    let mut parts = Vec::new();
    if !half.is_empty() {
        // group q's words by all-but-last letter
        let mut groups: BTreeMap<Vec<usize>, Affine> = BTreeMap::new();
        for (w, c) in &half {
            let letters = w.letters();
            let (prefix, tail) = match letters.split_last() {
                Some((&last, head)) => (head.to_vec(), (last, *c)),
                None => (Vec::new(), (0, *c)),
            };
            let e = groups.entry(prefix).or_default();
            *e = std::mem::take(e).plus(tail.0, tail.1);
        }
        let chains: Vec<Linearization> = groups
            .into_iter()
            .map(|(prefix, tail)| {
                let mut letters: Vec<Affine> = prefix.iter().map(|&j| Affine::var(j, ONE)).collect();
                letters.push(tail);
                chain(&letters, n_vars, format!("{}*(..)", word_label(&prefix)))
            })
            .collect();
        parts.push(double(&linearize_sum(&chains)?));
    }
    parts.extend(direct);
    linearize_sum(&parts)
}

/// Outcome of [`verify_linearization`].
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub trials: usize,
    pub dim: usize,
    /// `max ‖[(Λ(z) − L_P)⁻¹]₁₁ − (z − P)⁻¹‖ / (1 + ‖(z − P)⁻¹‖)`.
    pub max_corner_residual: f64,
    /// `max ‖−uQ⁻¹v − P‖ / (1 + ‖P‖)`.
    pub max_schur_residual: f64,
    /// Block-inverse formula against the direct inverse, relative.
    pub max_factorization_residual: f64,
    /// Trials where an inversion failed.
    pub failures: usize,
}

impl VerificationReport {
    pub fn max_residual(&self) -> f64 {
        self.max_corner_residual
            .max(self.max_schur_residual)
            .max(self.max_factorization_residual)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.failures == 0 && self.max_residual() < tol
    }
}

/// Random Hermitian matrix with complex Gaussian entries of variance `1/d`.
pub fn random_hermitian(rng: &mut impl Rng, d: usize) -> CMatrix {
    let s = (1.0 / (2.0 * d as f64)).sqrt();
    let g = CMatrix::from_fn(d, d, |_, _| {
        c64(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * s
    });
    (&g + g.adjoint()).scale(std::f64::consts::FRAC_1_SQRT_2)
}

struct TrialResult {
    corner: f64,
    schur: f64,
    factor: f64,
}

fn run_trial(l: &Linearization, p: &NcPolynomial, d: usize, rng: &mut ChaCha8Rng) -> Result<TrialResult> {
    let mats: Vec<CMatrix> = (0..p.n_vars()).map(|_| random_hermitian(rng, d)).collect();
    let z = c64(rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0));
    let pv = p.evaluate(&mats)?;
    let id = CMatrix::identity(d, d);
    let resolvent = linalg::inv(&(&id * z - &pv))?;
    let nd = l.dim * d;
    let pencil = l.pencil_at(&mats)?;
    let mut m = -pencil;
    for k in 0..d {
        m[(k, k)] += z;
    }
    let m_inv = linalg::inv(&m)?;
    let corner = m_inv.view((0, 0), (d, d)).into_owned();
    let corner_res = linalg::op_norm(&(corner - &resolvent)) / (1.0 + linalg::op_norm(&resolvent));

    if l.dim == 1 {
        // no Q block: the pencil itself must be P
        let p_res = linalg::op_norm(&(-(&m) + &id * z - &pv)) / (1.0 + linalg::op_norm(&pv));
        return Ok(TrialResult {
            corner: corner_res,
            schur: p_res,
            factor: 0.0,
        });
    }

    // blocks of M = [[a, b], [c, dd]] with a = z·1, b = −u, c = −v, dd = −Q
    let r = nd - d;
    let a = m.view((0, 0), (d, d)).into_owned();
    let b = m.view((0, d), (d, r)).into_owned();
    let c = m.view((d, 0), (r, d)).into_owned();
    let dd = m.view((d, d), (r, r)).into_owned();
    let dd_inv = linalg::inv(&dd)?;
    // u = −b, v = −c, Q = −dd, so −uQ⁻¹v = b dd⁻¹ c
    let schur_p = &b * &dd_inv * &c;
    let schur_res = linalg::op_norm(&(&schur_p - &pv)) / (1.0 + linalg::op_norm(&pv));

    let s = &a - &b * &dd_inv * &c;
    let s_inv = linalg::inv(&s)?;
    let mut formula = CMatrix::zeros(nd, nd);
    formula.view_mut((d, d), (r, r)).copy_from(&dd_inv);
    let mut left = CMatrix::zeros(nd, d);
    left.view_mut((0, 0), (d, d)).copy_from(&id);
    left.view_mut((d, 0), (r, d)).copy_from(&(-(&dd_inv * &c)));
    let mut right = CMatrix::zeros(d, nd);
    right.view_mut((0, 0), (d, d)).copy_from(&id);
    right.view_mut((0, d), (d, r)).copy_from(&(-(&b * &dd_inv)));
    formula += left * s_inv * right;
    let factor_res = linalg::op_norm(&(formula - &m_inv)) / (1.0 + linalg::op_norm(&m_inv));

    Ok(TrialResult {
        corner: corner_res,
        schur: schur_res,
        factor: factor_res,
    })
}

/// Checks `L` against `p` on random Hermitian `dim × dim` evaluations.
///
/// Each trial draws its own stream from `rng_seed`, so the report does not
/// depend on how trials are scheduled. Failed inversions are counted, not
/// propagated.
pub fn verify_linearization(
    l: &Linearization,
    p: &NcPolynomial,
    trials: usize,
    dim: usize,
    rng_seed: u64,
) -> Result<VerificationReport> {
    if trials == 0 || dim == 0 {
        return Err(Error::InvalidArgument("trials and dim must be positive".into()));
    }
    if l.n_vars() != p.n_vars() {
        return Err(Error::Dimension("linearization and polynomial disagree on variables".into()));
    }
    let results: Vec<Option<TrialResult>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(t as u64);
            run_trial(l, p, dim, &mut rng).ok()
        })
        .collect();
    let mut report = VerificationReport {
        trials,
        dim,
        max_corner_residual: 0.0,
        max_schur_residual: 0.0,
        max_factorization_residual: 0.0,
        failures: 0,
    };
    for r in results {
        match r {
            Some(r) => {
                report.max_corner_residual = report.max_corner_residual.max(r.corner);
                report.max_schur_residual = report.max_schur_residual.max(r.schur);
                report.max_factorization_residual = report.max_factorization_residual.max(r.factor);
            }
            None => report.failures += 1,
        }
    }
    Ok(report)
}

/// Parses a small matrix of affine entries such as `"0, x1, x2; x1, 0, -1"`.
/// Used to state reference linearizations compactly.
pub fn from_entry_text(text: &str, n_vars: usize) -> Result<Linearization> {
    let rows: Vec<&str> = text.split(';').collect();
    let dim = rows.len();
    let mut entries = Vec::with_capacity(dim);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != dim {
            return Err(Error::Dimension("entry matrix must be square".into()));
        }
        let mut out = Vec::with_capacity(dim);
        for cell in cells {
            let poly = NcPolynomial::parse(cell, n_vars)?;
            if poly.degree() > 1 {
                return Err(Error::InvalidArgument(format!("entry '{cell}' is not affine")));
            }
            let mut a = Affine::default();
            for m in poly.terms() {
                a = a.plus(m.word.letters().first().copied().unwrap_or(0), m.coeff);
            }
            out.push(a);
        }
        entries.push(out);
    }
    Ok(Linearization::from_affine(&entries, n_vars, "explicit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(s: &str, n: usize) -> NcPolynomial {
        NcPolynomial::parse(s, n).unwrap()
    }

    #[test]
    fn monomial_single_letter() {
        let l = linearize_monomial(&[2], ONE, 2).unwrap();
        assert_eq!(l.dim(), 2);
        assert_eq!(l, from_entry_text("0, x2; 1, -1", 2).unwrap().with_layout_of(&l));
    }

    #[test]
    fn monomial_two_letters_satisfies_schur_identity() {
        let l = linearize_monomial(&[1, 2], ONE, 2).unwrap();
        assert_eq!(l.dim(), 2);
        let rep = verify_linearization(&l, &poly("x1*x2", 2), 20, 3, 1).unwrap();
        assert!(rep.passed(1e-10), "{rep:?}");

        let l3 = linearize_monomial(&[1, 2, 2, 1], c64(0.5, -2.0), 2).unwrap();
        assert_eq!(l3.dim(), 4);
        let rep = verify_linearization(&l3, &poly("(0.5-2i)*x1*x2*x2*x1", 2), 20, 3, 2).unwrap();
        assert!(rep.passed(1e-10), "{rep:?}");
    }

    #[test]
    fn monomial_constant_term() {
        let gamma = c64(2.5, 0.0);
        let l = linearize_monomial(&[], gamma, 1).unwrap();
        assert_eq!(l.coeff(0)[(0, 1)], gamma);
        assert_eq!(l.coeff(0)[(1, 0)], ONE);
        assert_eq!(l.coeff(0)[(1, 1)], -ONE);
        // −γ (−1)⁻¹ 1 = γ
        let schur = -l.coeff(0)[(0, 1)] * l.coeff(0)[(1, 1)].inv() * l.coeff(0)[(1, 0)];
        assert_eq!(schur, gamma);
    }

    #[test]
    fn sum_dimension_bookkeeping() {
        let a = linearize_monomial(&[1], ONE, 2).unwrap();
        assert_eq!(linearize_sum(&[a.clone()]).unwrap(), a);
        let b = linearize_monomial(&[2], ONE, 2).unwrap();
        assert_eq!(linearize_sum(&[a.clone(), b.clone()]).unwrap().dim(), 3);
        let c = linearize_monomial(&[1, 2, 1], ONE, 2).unwrap();
        let s = linearize_sum(&[a, b, c]).unwrap();
        assert_eq!(s.dim(), 2 + 2 + 3 - 3 + 1);
        assert_eq!(s.layout().parts.len(), 3);
        let rep = verify_linearization(&s, &poly("x1 + x2 + x1*x2*x1", 2), 20, 3, 3).unwrap();
        assert!(rep.passed(1e-10), "{rep:?}");
    }

    #[test]
    fn anticommutator_as_sum_of_monomials() {
        let a = linearize_monomial(&[1, 2], ONE, 2).unwrap();
        let b = linearize_monomial(&[2, 1], ONE, 2).unwrap();
        let s = linearize_sum(&[a, b]).unwrap();
        let rep = verify_linearization(&s, &poly("x1*x2 + x2*x1", 2), 30, 4, 4).unwrap();
        assert!(rep.passed(1e-10), "{rep:?}");
    }

    #[test]
    fn anticommutator_reproduces_reference_form() {
        let l = selfadjoint_linearize(&poly("x1*x2+x2*x1", 2)).unwrap();
        let reference = from_entry_text("0, x1, x2; x1, 0, -1; x2, -1, 0", 2).unwrap();
        assert_eq!(l.coeffs(), reference.coeffs());
        assert!(l.is_selfadjoint() && l.corner_is_zero());
    }

    #[test]
    fn perturbed_anticommutator_reproduces_reference_form() {
        let l = selfadjoint_linearize(&poly("x1*x2+x2*x1+x1^2", 2)).unwrap();
        let reference =
            from_entry_text("0, x1, 0.5*x1 + x2; x1, 0, -1; 0.5*x1 + x2, -1, 0", 2).unwrap();
        assert_eq!(l.coeffs(), reference.coeffs());
    }

    #[test]
    fn cubic_reproduces_seven_by_seven_reference() {
        let p = poly("x1*x2*x1 + x2*x3*x2 + x3*x1*x3", 3);
        let l = selfadjoint_linearize(&p).unwrap();
        let reference = from_entry_text(
            "0, 0, x1, 0, x2, 0, x3;\
             0, x2, -1, 0, 0, 0, 0;\
             x1, -1, 0, 0, 0, 0, 0;\
             0, 0, 0, x3, -1, 0, 0;\
             x2, 0, 0, -1, 0, 0, 0;\
             0, 0, 0, 0, 0, x1, -1;\
             x3, 0, 0, 0, 0, -1, 0",
            3,
        )
        .unwrap();
        assert_eq!(l.coeffs(), reference.coeffs());
    }

    #[test]
    fn degree_one_bypass() {
        let l = selfadjoint_linearize(&poly("x1", 1)).unwrap();
        assert_eq!(l.dim(), 1);
        assert_eq!(l.coeff(1)[(0, 0)], ONE);
        let l2 = selfadjoint_linearize(&poly("2 - 0.5*x2 + x1", 2)).unwrap();
        assert_eq!(l2.coeff(0)[(0, 0)], c64(2.0, 0.0));
        assert_eq!(l2.coeff(2)[(0, 0)], c64(-0.5, 0.0));
        let rep = verify_linearization(&l2, &poly("2 - 0.5*x2 + x1", 2), 10, 3, 5).unwrap();
        assert!(rep.passed(1e-12), "{rep:?}");
    }

    #[test]
    fn rejects_non_selfadjoint_and_constant() {
        assert!(matches!(
            selfadjoint_linearize(&poly("x1*x2", 2)),
            Err(Error::NotSelfAdjoint)
        ));
        assert!(selfadjoint_linearize(&poly("3", 2)).is_err());
    }

    #[test]
    fn mixed_terms_with_constants_and_complex_coefficients() {
        let p = poly(
            "1.5 - x1 + (2+1i)*x1*x2 + (2-1i)*x2*x1 + x1*x1 - 3*x2*x2*x2 + 0.25*x1*x2*x2*x1 + i*x1*x2*x1*x1 - i*x1*x1*x2*x1",
            2,
        );
        assert!(p.is_selfadjoint());
        let l = selfadjoint_linearize(&p).unwrap();
        assert!(l.is_selfadjoint() && l.corner_is_zero());
        let rep = verify_linearization(&l, &p, 40, 4, 6).unwrap();
        assert!(rep.passed(1e-10), "{rep:?}");
    }

    #[test]
    fn scalar_corner_for_single_letter() {
        // L = [[0, x], [1, −1]] at scalar x: corner of (Λ(2i) − L)⁻¹ is 1/(2i − x)
        let l = linearize_monomial(&[1], ONE, 1).unwrap();
        let x = 0.7;
        let z = c64(0.0, 2.0);
        let mut m = -l.pencil_at(&[CMatrix::from_element(1, 1, c64(x, 0.0))]).unwrap();
        m[(0, 0)] += z;
        let corner = linalg::inv(&m).unwrap()[(0, 0)];
        assert!((corner - (z - x).inv()).norm() < 1e-15);
    }

    #[test]
    fn corrupted_linearization_is_reported() {
        let p = poly("x1*x2+x2*x1", 2);
        let good = selfadjoint_linearize(&p).unwrap();
        let mut coeffs = good.coeffs().to_vec();
        coeffs[0][(1, 2)] = ONE;
        coeffs[0][(2, 1)] = ONE;
        let bad = Linearization::from_coeffs(coeffs).unwrap();
        let rep = verify_linearization(&bad, &p, 20, 4, 7).unwrap();
        assert!(!rep.passed(1e-10));
        assert!(rep.max_corner_residual > 1e-3);
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let p = poly("x1*x2*x1 + x2", 2);
        let l = selfadjoint_linearize(&p).unwrap();
        let a = verify_linearization(&l, &p, 8, 3, 42).unwrap();
        let b = verify_linearization(&l, &p, 8, 3, 42).unwrap();
        assert_eq!(a.max_corner_residual, b.max_corner_residual);
    }

    impl Linearization {
        fn with_layout_of(mut self, other: &Linearization) -> Self {
            self.layout = other.layout.clone();
            self
        }
    }
}
