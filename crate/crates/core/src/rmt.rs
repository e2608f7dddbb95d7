//! Random-matrix Monte Carlo: sample independent Hermitian ensembles,
//! evaluate a polynomial on them and pool the eigenvalues.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ncpoly::{NcAlgebra, NcPolynomial};
use crate::spectra::SpectralMeasure;

pub type CMat = Mat<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ensemble {
    /// Hermitian with complex Gaussian entries of variance `1/n`.
    Gue,
    /// `A A* / n` with `A` of shape `n × round(ratio · n)`.
    Wishart { ratio: f64 },
}

impl Ensemble {
    /// Limit spectral law as `n → ∞`.
    pub fn limit_law(&self) -> Result<SpectralMeasure> {
        match *self {
            Ensemble::Gue => SpectralMeasure::semicircle(0.0, 1.0),
            Ensemble::Wishart { ratio } => SpectralMeasure::marchenko_pastur(ratio, 1.0),
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ensemble::Gue => write!(f, "gue"),
            Ensemble::Wishart { ratio } => write!(f, "wishart({ratio})"),
        }
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "gue" {
            return Ok(Ensemble::Gue);
        }
        let bad = || Error::Parse {
            position: 0,
            message: format!("unknown ensemble '{s}' (expected gue or wishart(ratio))"),
        };
        let inner = t
            .strip_prefix("wishart")
            .map(str::trim)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let ratio: f64 = inner.trim().parse().map_err(|_| bad())?;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::InvalidArgument(format!("wishart ratio must be positive, got {ratio}")));
        }
        Ok(Ensemble::Wishart { ratio })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub ensembles: Vec<Ensemble>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Upper bound on the working memory of one replicate, in bytes.
    pub max_bytes: usize,
}

pub const DEFAULT_MAX_BYTES: usize = 4 << 30;

impl EnsembleSpec {
    pub fn new(ensembles: Vec<Ensemble>, n: usize, reps: usize, seed: u64) -> Result<Self> {
        let spec = EnsembleSpec {
            ensembles,
            n,
            reps,
            seed,
            max_bytes: DEFAULT_MAX_BYTES,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("matrix size must be at least 2, got {}", self.n)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("need at least one replicate".into()));
        }
        if self.ensembles.is_empty() {
            return Err(Error::InvalidArgument("no ensembles given".into()));
        }
        Ok(())
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn sample_one(ensemble: Ensemble, n: usize, rng: &mut ChaCha8Rng) -> CMat {
    match ensemble {
        Ensemble::Gue => {
            let g = Mat::from_fn(n, n, |_, _| complex_gaussian(rng));
            let scale = 1.0 / (2.0 * n as f64).sqrt();
            Mat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * scale)
        }
        Ensemble::Wishart { ratio } => {
            let m = ((ratio * n as f64).round() as usize).max(1);
            let a = Mat::from_fn(n, m, |_, _| complex_gaussian(rng));
            let mut w = &a * a.adjoint();
            let inv_n = 1.0 / n as f64;
            for j in 0..n {
                for i in 0..n {
                    w[(i, j)] *= inv_n;
                }
            }
            w
        }
    }
}

/// One matrix per variable for replicate `rep`. Every (replicate, variable)
/// pair draws from its own stream of the seeded generator.
pub fn sample_ensemble(spec: &EnsembleSpec, rep: usize) -> Vec<CMat> {
    spec.ensembles
        .iter()
        .enumerate()
        .map(|(var, &e)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((rep as u64) << 16) | var as u64);
            sample_one(e, spec.n, &mut rng)
        })
        .collect()
}

impl NcAlgebra for CMat {
    fn identity_like(&self) -> Self {
        Mat::identity(self.nrows(), self.ncols())
    }

    fn zeros_like(&self) -> Self {
        Mat::zeros(self.nrows(), self.ncols())
    }

    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }

    fn add_scaled(&mut self, coeff: Complex64, rhs: &Self) {
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                self[(i, j)] += coeff * rhs[(i, j)];
            }
        }
    }

    fn adjoint(&self) -> Self {
        self.as_ref().adjoint().to_owned()
    }
}

fn estimated_bytes(p: &NcPolynomial, spec: &EnsembleSpec) -> usize {
    let cached_products: usize = p.terms().map(|t| t.word.degree().saturating_sub(1)).sum();
    let matrices = spec.ensembles.len() + cached_products + 3;
    matrices
        .saturating_mul(spec.n)
        .saturating_mul(spec.n)
        .saturating_mul(std::mem::size_of::<Complex64>())
}

/// Eigenvalues of `p(X_1, .., X_n)` for one replicate, unsorted.
pub fn replicate_spectrum(p: &NcPolynomial, spec: &EnsembleSpec, rep: usize) -> Result<Vec<f64>> {
    let mats = sample_ensemble(spec, rep);
    let m = p.evaluate_in(&mats, true);
    let sym = Mat::from_fn(spec.n, spec.n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::InvalidArgument(format!("Hermitian eigensolver failed: {e:?}")))
}

/// Sorted eigenvalues of `p` evaluated on every replicate, pooled.
pub fn empirical_spectrum(p: &NcPolynomial, spec: &EnsembleSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if p.n_vars() != spec.ensembles.len() {
        return Err(Error::Dimension(format!(
            "polynomial has {} variables but {} ensembles were given",
            p.n_vars(),
            spec.ensembles.len()
        )));
    }
    if !p.is_selfadjoint() {
        return Err(Error::NotSelfAdjoint);
    }
    let need = estimated_bytes(p, spec);
    if need > spec.max_bytes {
        return Err(Error::Budget(format!(
            "one replicate needs about {} MiB, limit {} MiB",
            need >> 20,
            spec.max_bytes >> 20
        )));
    }
    let per_rep: Vec<Vec<f64>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| replicate_spectrum(p, spec, rep))
        .collect::<Result<_>>()?;
    let mut pooled: Vec<f64> = per_rep.into_iter().flatten().collect();
    pooled.sort_by(f64::total_cmp);
    Ok(pooled)
}

/// Kolmogorov–Smirnov distance between the empirical law of sorted samples
/// and a CDF.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = cdf(s);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.abs().max(below.abs())
        })
        .fold(0.0, f64::max)
}

/// Empirical trace moments `m_1..m_kmax` of pooled eigenvalues.
pub fn empirical_moments(eigs: &[f64], k_max: usize) -> Vec<f64> {
    let n = eigs.len() as f64;
    (1..=k_max)
        .map(|k| eigs.iter().map(|x| x.powi(k as i32)).sum::<f64>() / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn trace_moment(m: &CMat, k: usize) -> f64 {
        let n = m.nrows();
        let mut p = m.clone();
        for _ in 1..k {
            p = &p * m;
        }
        (0..n).map(|i| p[(i, i)].re).sum::<f64>() / n as f64
    }

    #[test]
    fn parses_ensembles() {
        assert_eq!("gue".parse::<Ensemble>().unwrap(), Ensemble::Gue);
        assert_eq!(" Wishart( 0.5 )".parse::<Ensemble>().unwrap(), Ensemble::Wishart { ratio: 0.5 });
        assert!("wishart(-1)".parse::<Ensemble>().is_err());
        assert!("goe".parse::<Ensemble>().is_err());
        let w = Ensemble::Wishart { ratio: 2.0 };
        assert_eq!(w.to_string().parse::<Ensemble>().unwrap(), w);
    }

    #[test]
    fn gue_and_wishart_normalization() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue, Ensemble::Wishart { ratio: 1.0 }], 2000, 1, 7).unwrap();
        let mats = sample_ensemble(&spec, 0);
        let gue_m2: f64 = {
            let g = &mats[0];
            let n = g.nrows();
            let mut s = 0.0;
            for j in 0..n {
                for i in 0..n {
                    s += g[(i, j)].norm_sqr();
                }
            }
            s / n as f64
        };
        assert!((gue_m2 - 1.0).abs() < 0.1, "{gue_m2}");
        let w_m1 = (0..2000).map(|i| mats[1][(i, i)].re).sum::<f64>() / 2000.0;
        assert!((w_m1 - 1.0).abs() < 0.1, "{w_m1}");
    }

    #[test]
    fn sampling_is_deterministic_per_rep() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue, Ensemble::Gue], 30, 3, 42).unwrap();
        let a = sample_ensemble(&spec, 1);
        let b = sample_ensemble(&spec, 1);
        assert!(a == b);
        let c = sample_ensemble(&spec, 2);
        assert!(a[0] != c[0]);
        assert!(a[0] != a[1]);
    }

    #[test]
    fn gue_is_hermitian_with_semicircle_moments() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue], 300, 1, 3).unwrap();
        let g = &sample_ensemble(&spec, 0)[0];
        for j in 0..300 {
            for i in 0..300 {
                assert_eq!(g[(i, j)], g[(j, i)].conj());
            }
        }
        assert!((trace_moment(g, 4) - 2.0).abs() < 0.15);
    }

    #[test]
    fn single_gue_spectrum_stays_near_support() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue], 500, 2, 11).unwrap();
        let p = NcPolynomial::parse("x1", 1).unwrap();
        let eigs = empirical_spectrum(&p, &spec).unwrap();
        assert_eq!(eigs.len(), 1000);
        assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
        assert!(eigs[0] > -2.2 && eigs[999] < 2.2);
    }

    #[test]
    fn sum_of_gues_is_semicircular() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue, Ensemble::Gue], 400, 2, 5).unwrap();
        let p = NcPolynomial::parse("x1 + x2", 2).unwrap();
        let eigs = empirical_spectrum(&p, &spec).unwrap();
        let law = SpectralMeasure::semicircle(0.0, 2.0).unwrap();
        let ks = ks_distance(&eigs, |x| law.cdf(x));
        assert!(ks < 0.05, "{ks}");
    }

    #[test]
    fn anticommutator_spectrum_is_symmetric() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue, Ensemble::Gue], 300, 2, 9).unwrap();
        let p = NcPolynomial::parse("x1*x2 + x2*x1", 2).unwrap();
        let eigs = empirical_spectrum(&p, &spec).unwrap();
        let m = empirical_moments(&eigs, 2);
        assert!(m[0].abs() < 0.05);
        assert!((m[1] - 2.0).abs() < 0.2);
    }

    #[test]
    fn spectrum_errors() {
        let spec = EnsembleSpec::new(vec![Ensemble::Gue], 10, 1, 0).unwrap();
        let p2 = NcPolynomial::parse("x1*x2 + x2*x1", 2).unwrap();
        assert!(matches!(empirical_spectrum(&p2, &spec), Err(Error::Dimension(_))));
        let skew = NcPolynomial::parse("x1*x1*x1 + i*x1", 1).unwrap();
        assert!(matches!(empirical_spectrum(&skew, &spec), Err(Error::NotSelfAdjoint)));
        let mut huge = EnsembleSpec::new(vec![Ensemble::Gue], 100, 1, 0).unwrap();
        huge.max_bytes = 1000;
        let p = NcPolynomial::parse("x1", 1).unwrap();
        assert!(matches!(empirical_spectrum(&p, &huge), Err(Error::Budget(_))));
        assert!(EnsembleSpec::new(vec![Ensemble::Gue], 1, 1, 0).is_err());
        assert!(EnsembleSpec::new(vec![Ensemble::Gue], 4, 0, 0).is_err());
    }

    #[test]
    fn ks_trivial_cases() {
        let s: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(ks_distance(&s, |_| 0.0), 1.0);
        assert_eq!(ks_distance(&[0.0], |x: f64| if x >= 0.0 { 0.5 } else { 0.0 }), 0.5);
    }

    #[test]
    fn ks_of_inverse_transform_samples_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // exponential law: F(x) = 1 − e^{−x}
        let mut s: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        s.sort_by(f64::total_cmp);
        let ks = ks_distance(&s, |x| 1.0 - (-x).exp());
        assert!(ks < 0.02, "{ks}");
    }
}
