//! Moments of polynomials in free variables from free cumulants.
//!
//! For free variables the mixed free cumulants vanish, so
//! `φ(x_{i_1} ⋯ x_{i_k}) = Σ_π Π_{B ∈ π} κ_{|B|}(x_B)` over non-crossing
//! partitions `π` whose blocks each carry a single variable index.
//! The sum is computed by a memoized recursion on the block containing the
//! first position of an interval; coefficients may be exact rationals.

use std::collections::HashMap;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{Num, Zero};

use crate::error::{Error, Result};
use crate::ncpoly::NcPolynomial;
use crate::spectra::SpectralMeasure;

/// Enumeration limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_word_len: usize,
    pub max_words: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_word_len: 32,
            max_words: 1_000_000,
        }
    }
}

/// Free cumulants `κ_1, κ_2, ..` per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSpec<T> {
    per_var: Vec<Vec<T>>,
}

impl<T: Num + Clone> CumulantSpec<T> {
    /// `per_var[j][n − 1] = κ_n(x_{j+1})`; missing orders count as zero.
    pub fn new(per_var: Vec<Vec<T>>) -> Self {
        CumulantSpec { per_var }
    }

    pub fn n_vars(&self) -> usize {
        self.per_var.len()
    }

    pub fn cumulant(&self, var: usize, order: usize) -> T {
        self.per_var
            .get(var - 1)
            .and_then(|k| k.get(order - 1))
            .cloned()
            .unwrap_or_else(T::zero)
    }

    /// Semicircular law with the given mean and variance, for every variable.
    pub fn semicircular(n_vars: usize, mean: T, var: T) -> Self {
        CumulantSpec::new(vec![vec![mean, var]; n_vars])
    }

    /// Free Poisson with rate `λ` and jump `α`: `κ_n = λ αⁿ` up to `order`.
    pub fn free_poisson(rate: T, scale: T, order: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(order);
        let mut power = scale.clone();
        for _ in 0..order {
            out.push(rate.clone() * power.clone());
            power = power * scale.clone();
        }
        out
    }

    /// Cumulants `κ_1..κ_K` of one variable from its moments `m_1..m_K` by
    /// inverting `m_n = Σ_s κ_s [zⁿ⁻ˢ] M(z)ˢ`, `M(z) = Σ m_i zⁱ`.
    pub fn cumulants_from_moments(moments: &[T]) -> Vec<T> {
        let k = moments.len();
        let mut m = vec![T::one()];
        m.extend(moments.iter().cloned());
        let mut kappa: Vec<T> = Vec::with_capacity(k);
        for n in 1..=k {
            // Σ_{s<n} κ_s [z^{n−s}] M^s
            let mut acc = T::zero();
            let mut power = vec![T::one()]; // M^0
            for s in 1..n {
                power = poly_mul_trunc(&power, &m, n);
                let coeff = power.get(n - s).cloned().unwrap_or_else(T::zero);
                acc = acc + kappa[s - 1].clone() * coeff;
            }
            kappa.push(m[n].clone() - acc);
        }
        kappa
    }
}

fn poly_mul_trunc<T: Num + Clone>(a: &[T], b: &[T], len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len.min(a.len() + b.len() - 1)];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if i + j < out.len() {
                out[i + j] = out[i + j].clone() + x.clone() * y.clone();
            }
        }
    }
    out
}

impl CumulantSpec<f64> {
    /// Cumulants up to `order` for each measure: closed forms where known,
    /// otherwise from the measure's moments.
    pub fn from_measures(measures: &[SpectralMeasure], order: usize) -> Self {
        let per_var = measures
            .iter()
            .map(|mu| {
                let closed: Option<Vec<f64>> = (1..=order).map(|n| mu.free_cumulant(n as u32)).collect();
                closed.unwrap_or_else(|| {
                    let moments: Vec<f64> = (1..=order).map(|n| mu.moment(n as u32)).collect();
                    CumulantSpec::cumulants_from_moments(&moments)
                })
            })
            .collect();
        CumulantSpec::new(per_var)
    }
}

struct WordMoment<'a, T> {
    word: &'a [usize],
    cumulants: &'a CumulantSpec<T>,
    interval: HashMap<(usize, usize), T>,
    block: HashMap<(usize, usize, usize), T>,
}

impl<T: Num + Clone> WordMoment<'_, T> {
    /// Sum over admissible partitions of positions `lo..hi`.
    fn interval(&mut self, lo: usize, hi: usize) -> T {
        if lo >= hi {
            return T::one();
        }
        if let Some(v) = self.interval.get(&(lo, hi)) {
            return v.clone();
        }
        let v = self.extend(lo, 1, hi);
        self.interval.insert((lo, hi), v.clone());
        v
    }

    /// The block containing the interval's first position has `size`
    /// elements so far, the last being `last`; either close it here or add
    /// a later position carrying the same letter.
    fn extend(&mut self, last: usize, size: usize, hi: usize) -> T {
        if let Some(v) = self.block.get(&(last, size, hi)) {
            return v.clone();
        }
        let letter = self.word[last];
        let mut total = self.cumulants.cumulant(letter, size) * self.interval(last + 1, hi);
        for next in last + 1..hi {
            if self.word[next] == letter {
                let gap = self.interval(last + 1, next);
                if gap.is_zero() {
                    continue;
                }
                total = total + gap * self.extend(next, size + 1, hi);
            }
        }
        self.block.insert((last, size, hi), total.clone());
        total
    }
}

/// `φ(x_{w_1} ⋯ x_{w_k})` for free variables with the given cumulants.
pub fn word_moment<T: Num + Clone>(word: &[usize], cumulants: &CumulantSpec<T>, budget: Budget) -> Result<T> {
    if word.len() > budget.max_word_len {
        return Err(Error::Budget(format!(
            "word of length {} exceeds the limit {}",
            word.len(),
            budget.max_word_len
        )));
    }
    if let Some(&bad) = word.iter().find(|&&j| j == 0 || j > cumulants.n_vars()) {
        return Err(Error::VariableOutOfRange {
            index: bad,
            n_vars: cumulants.n_vars(),
        });
    }
    let mut state = WordMoment {
        word,
        cumulants,
        interval: HashMap::new(),
        block: HashMap::new(),
    };
    Ok(state.interval(0, word.len()))
}

/// `φ(p^k)` with real cumulants.
pub fn poly_moment(p: &NcPolynomial, cumulants: &CumulantSpec<f64>, k: u32, budget: Budget) -> Result<f64> {
    let power = expand_power(p, k, budget)?;
    let mut total = Complex64::new(0.0, 0.0);
    for term in power.terms() {
        total += term.coeff * word_moment(term.word.letters(), cumulants, budget)?;
    }
    Ok(total.re)
}

/// `φ(p^k)` exactly; real coefficients are converted to the nearest
/// small-denominator rational.
pub fn poly_moment_exact(p: &NcPolynomial, cumulants: &CumulantSpec<Rational64>, k: u32, budget: Budget) -> Result<Rational64> {
    let power = expand_power(p, k, budget)?;
    let mut total = Rational64::zero();
    for term in power.terms() {
        if term.coeff.im != 0.0 {
            return Err(Error::InvalidArgument("exact moments need real coefficients".into()));
        }
        let c = Rational64::approximate_float(term.coeff.re)
            .ok_or_else(|| Error::InvalidArgument(format!("coefficient {} is not representable", term.coeff.re)))?;
        total += c * word_moment(term.word.letters(), cumulants, budget)?;
    }
    Ok(total)
}

fn expand_power(p: &NcPolynomial, k: u32, budget: Budget) -> Result<NcPolynomial> {
    let len = p.degree() * k as usize;
    if len > budget.max_word_len {
        return Err(Error::Budget(format!(
            "p^{k} has words of length {len}, limit {}",
            budget.max_word_len
        )));
    }
    let words = (p.term_count() as f64).powi(k as i32);
    if words > budget.max_words as f64 {
        return Err(Error::Budget(format!("p^{k} expands to ~{words} words, limit {}", budget.max_words)));
    }
    Ok(p.pow(k))
}

/// Brute-force reference: enumerates every set partition of the positions
/// as a restricted growth string and keeps the non-crossing, single-letter
/// ones. Exponential; for tests.
pub fn word_moment_brute_force<T: Num + Clone>(word: &[usize], cumulants: &CumulantSpec<T>) -> T {
    let n = word.len();
    if n == 0 {
        return T::one();
    }
    let mut labels = vec![0usize; n];
    let mut total = T::zero();
    loop {
        if admissible(word, &labels) {
            let blocks = labels.iter().max().map_or(0, |m| m + 1);
            let mut prod = T::one();
            for b in 0..blocks {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == b).collect();
                prod = prod * cumulants.cumulant(word[members[0]], members.len());
            }
            total = total + prod;
        }
        if !next_growth_string(&mut labels) {
            break;
        }
    }
    total
}

fn admissible(word: &[usize], labels: &[usize]) -> bool {
    let n = word.len();
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] && word[i] != word[j] {
                return false;
            }
        }
    }
    // crossing: a < b < c < d with a,c in one block and b,d in another
    for a in 0..n {
        for b in a + 1..n {
            if labels[b] == labels[a] {
                continue;
            }
            for c in b + 1..n {
                if labels[c] != labels[a] {
                    continue;
                }
                for d in c + 1..n {
                    if labels[d] == labels[b] {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn next_growth_string(labels: &mut [usize]) -> bool {
    let n = labels.len();
    for i in (1..n).rev() {
        let max_prefix = labels[..i].iter().copied().max().unwrap_or(0);
        if labels[i] <= max_prefix {
            labels[i] += 1;
            for l in labels.iter_mut().skip(i + 1) {
                *l = 0;
            }
            return true;
        }
    }
    false
}

/// Shorthand for exact cumulant tables.
pub fn rational(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn semicirculars(n: usize) -> CumulantSpec<Rational64> {
        CumulantSpec::semicircular(n, rational(0, 1), rational(1, 1))
    }

    fn exact(word: &[usize], c: &CumulantSpec<Rational64>) -> Rational64 {
        word_moment(word, c, Budget::default()).unwrap()
    }

    #[test]
    fn hand_enumerated_words() {
        let sc = semicirculars(2);
        assert_eq!(exact(&[1, 2, 1, 2], &sc), rational(0, 1));
        assert_eq!(exact(&[1, 2, 2, 1], &sc), rational(1, 1));
        assert_eq!(exact(&[1, 1, 1, 1], &sc), rational(2, 1));
        assert_eq!(exact(&[], &sc), rational(1, 1));
        assert_eq!(exact(&[1], &sc), rational(0, 1));
    }

    #[test]
    fn catalan_numbers() {
        let sc = semicirculars(1);
        let catalan = [1, 1, 2, 5, 14, 42, 132];
        for k in 0..=6 {
            assert_eq!(exact(&vec![1; 2 * k], &sc), rational(catalan[k], 1));
            assert_eq!(exact(&vec![1; 2 * k + 1], &sc), rational(0, 1));
        }
    }

    #[test]
    fn free_poisson_rate_one_moments_are_catalan() {
        // κ_n ≡ 1: non-crossing partitions of n points, counted by C_n
        let fp = CumulantSpec::new(vec![CumulantSpec::free_poisson(rational(1, 1), rational(1, 1), 8)]);
        let want = [1, 2, 5, 14, 42, 132];
        for (k, &w) in want.iter().enumerate() {
            let word = vec![1; k + 1];
            assert_eq!(exact(&word, &fp), rational(w, 1));
            // second, independent enumeration order
            assert_eq!(word_moment_brute_force(&word, &fp), rational(w, 1));
        }
    }

    #[test]
    fn poly_moments() {
        let sc = CumulantSpec::semicircular(2, 0.0, 1.0);
        let anti = NcPolynomial::parse("x1*x2 + x2*x1", 2).unwrap();
        assert_eq!(poly_moment(&anti, &sc, 1, Budget::default()).unwrap(), 0.0);
        assert_eq!(poly_moment(&anti, &sc, 2, Budget::default()).unwrap(), 2.0);
        let fp = CumulantSpec::new(vec![CumulantSpec::free_poisson(1.0, 1.0, 4)]);
        let x = NcPolynomial::parse("x1", 1).unwrap();
        assert_eq!(poly_moment(&x, &fp, 2, Budget::default()).unwrap(), 2.0);
    }

    #[test]
    fn exact_and_float_agree() {
        let p = NcPolynomial::parse("x1*x2 + x2*x1 + x1*x1", 2).unwrap();
        let exact_sc = semicirculars(2);
        let float_sc = CumulantSpec::semicircular(2, 0.0, 1.0);
        for k in 1..=4 {
            let e = poly_moment_exact(&p, &exact_sc, k, Budget::default()).unwrap();
            let f = poly_moment(&p, &float_sc, k, Budget::default()).unwrap();
            assert!((*e.numer() as f64 / *e.denom() as f64 - f).abs() < 1e-9);
        }
    }

    #[test]
    fn cumulants_from_moments_inverts_known_laws() {
        let sc = SpectralMeasure::semicircle(0.5, 2.0).unwrap();
        let moments: Vec<f64> = (1..=6).map(|n| sc.moment(n)).collect();
        let k = CumulantSpec::cumulants_from_moments(&moments);
        let want = [0.5, 2.0, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in k.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{k:?}");
        }
        let fp = SpectralMeasure::marchenko_pastur(0.5, 2.0).unwrap();
        let moments: Vec<f64> = (1..=6).map(|n| fp.moment(n)).collect();
        let k = CumulantSpec::cumulants_from_moments(&moments);
        for (n, a) in k.iter().enumerate() {
            assert!((a - 0.5 * 2f64.powi(n as i32 + 1)).abs() < 1e-8);
        }
    }

    #[test]
    fn bernoulli_cumulants_reproduce_moments() {
        let mu = SpectralMeasure::atomic(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let spec = CumulantSpec::from_measures(&[mu.clone()], 8);
        for n in 1..=8 {
            let m = word_moment(&vec![1; n], &spec, Budget::default()).unwrap();
            assert!((m - mu.moment(n as u32)).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let sc = CumulantSpec::semicircular(1, 0.0, 1.0);
        let tight = Budget {
            max_word_len: 4,
            max_words: 10,
        };
        assert!(matches!(word_moment(&[1; 6], &sc, tight), Err(Error::Budget(_))));
        let p = NcPolynomial::parse("x1*x1", 1).unwrap();
        assert!(matches!(poly_moment(&p, &sc, 3, tight), Err(Error::Budget(_))));
        assert!(word_moment(&[3], &sc, Budget::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn recursion_matches_brute_force(word in proptest::collection::vec(1usize..=3, 0..9),
                                         k1 in -3i64..4, k2 in -3i64..4, k3 in -3i64..4) {
            let spec = CumulantSpec::new(vec![
                vec![rational(k1, 1), rational(1, 1), rational(k2, 2)],
                vec![rational(0, 1), rational(2, 1), rational(0, 1), rational(k3, 1)],
                CumulantSpec::free_poisson(rational(1, 2), rational(1, 1), 8),
            ]);
            prop_assert_eq!(exact(&word, &spec), word_moment_brute_force(&word, &spec));
        }

        #[test]
        fn single_letter_words_match_measure_moments(n in 1usize..10, mean in -1.0f64..1.0, var in 0.1f64..2.0) {
            let mu = SpectralMeasure::semicircle(mean, var).unwrap();
            let spec = CumulantSpec::from_measures(&[mu.clone()], n);
            let m = word_moment(&vec![1; n], &spec, Budget::default()).unwrap();
            prop_assert!((m - mu.moment(n as u32)).abs() < 1e-9 * (1.0 + m.abs()));
        }
    }
}
