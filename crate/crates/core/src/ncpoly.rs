//! Polynomials in non-commuting variables `x1 .. xn` with complex coefficients.
//!
//! Text grammar (whitespace is insignificant, juxtaposition is an error):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := ('+' | '-') unary | power
//! power   := atom ('^' integer)?
//! atom    := 'x' integer | number | 'i' | '(' expr ')'
//! number  := digits ('.' digits)? (('e' | 'E') sign? digits)? 'i'?
//! ```
//!
//! A number with an `i` suffix is imaginary, so `2+3i` is read as `2 + 3i`.
//! Canonical term order is by degree, then lexicographic on the index word.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Ordered sequence of 1-based variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    pub fn is_palindrome(&self) -> bool {
        self.0.iter().eq(self.0.iter().rev())
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl From<Vec<usize>> for Word {
    fn from(v: Vec<usize>) -> Self {
        Word(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: Complex64,
    pub word: Word,
}

/// Canonical non-commutative polynomial: no duplicate words, no zero
/// coefficients, terms sorted by [`Word`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct NcPolynomial {
    n_vars: usize,
    terms: BTreeMap<Word, Complex64>,
}

impl NcPolynomial {
    pub fn zero(n_vars: usize) -> Self {
        NcPolynomial {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: Complex64) -> Self {
        Self::from_terms(n_vars, [(Word::empty(), c)]).expect("empty word is always in range")
    }

    pub fn var(n_vars: usize, index: usize) -> Result<Self> {
        Self::from_terms(n_vars, [(Word(vec![index]), Complex64::new(1.0, 0.0))])
    }

    /// Builds a polynomial from `(word, coeff)` pairs, collecting like terms.
    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Word, Complex64)>,
    {
        let mut p = NcPolynomial::zero(n_vars);
        for (word, c) in terms {
            if let Some(&bad) = word.0.iter().find(|&&j| j == 0 || j > n_vars) {
                return Err(Error::VariableOutOfRange { index: bad, n_vars });
            }
            p.add_term(word, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, word: Word, c: Complex64) {
        let entry = self.terms.entry(word.clone()).or_default();
        *entry += c;
        if *entry == Complex64::new(0.0, 0.0) {
            self.terms.remove(&word);
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms.iter().map(|(w, &c)| Monomial {
            coeff: c,
            word: w.clone(),
        })
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, word: &[usize]) -> Complex64 {
        self.terms
            .get(&Word(word.to_vec()))
            .copied()
            .unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Reverses every word and conjugates every coefficient.
    pub fn adjoint(&self) -> Self {
        let mut p = NcPolynomial::zero(self.n_vars);
        for (w, c) in &self.terms {
            p.add_term(w.reversed(), c.conj());
        }
        p
    }

    /// `adjoint(p) = p` up to a relative coefficient tolerance of 1e-12.
    pub fn is_selfadjoint(&self) -> bool {
        let adj = self.adjoint();
        let scale = self.terms.values().map(|c| c.norm()).fold(1.0, f64::max);
        let keys = self.terms.keys().chain(adj.terms.keys());
        keys.into_iter().all(|w| {
            let a = self.terms.get(w).copied().unwrap_or_default();
            let b = adj.terms.get(w).copied().unwrap_or_default();
            (a - b).norm() <= 1e-12 * scale
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut p = NcPolynomial::zero(self.n_vars);
        for (w, &c) in &self.terms {
            p.add_term(w.clone(), c * s);
        }
        p
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = NcPolynomial::constant(self.n_vars, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Parses polynomial text; see the module docs for the grammar.
    pub fn parse(text: &str, n_vars: usize) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::InvalidArgument("n_vars must be positive".into()));
        }
        let mut parser = Parser {
            src: text.as_bytes(),
            pos: 0,
            n_vars,
        };
        let p = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error("expected operator or end of input"));
        }
        Ok(p)
    }

    /// Substitutes matrices for the variables, products taken in word order.
    pub fn evaluate(&self, mats: &[CMatrix]) -> Result<CMatrix> {
        if mats.len() != self.n_vars {
            return Err(Error::Dimension(format!(
                "expected {} matrices, got {}",
                self.n_vars,
                mats.len()
            )));
        }
        let dim = mats.first().map(|m| m.nrows()).unwrap_or(0);
        if mats.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::Dimension("matrices must be square and of equal size".into()));
        }
        Ok(self.evaluate_in(mats, false))
    }

    /// Evaluation in any algebra implementing [`NcAlgebra`].
    ///
    /// Word products are memoized by prefix. With `hermitian_inputs`, the
    /// product of a reversed word is taken as the adjoint of an already
    /// computed one.
    pub fn evaluate_in<A: NcAlgebra>(&self, vars: &[A], hermitian_inputs: bool) -> A {
        let like = &vars[0];
        let mut acc = like.zeros_like();
        let mut cache: HashMap<Vec<usize>, A> = HashMap::new();
        for (word, &c) in &self.terms {
            let letters = word.letters();
            if letters.is_empty() {
                acc.add_scaled(c, &like.identity_like());
                continue;
            }
            if hermitian_inputs && letters.len() > 1 {
                let rev: Vec<usize> = letters.iter().rev().copied().collect();
                if let Some(prod) = cache.get(&rev) {
                    let adj = prod.adjoint();
                    acc.add_scaled(c, &adj);
                    continue;
                }
            }
            let prod = word_product(letters, vars, &mut cache);
            acc.add_scaled(c, &prod);
        }
        acc
    }
}

fn word_product<A: NcAlgebra>(
    letters: &[usize],
    vars: &[A],
    cache: &mut HashMap<Vec<usize>, A>,
) -> A {
    if letters.len() == 1 {
        return vars[letters[0] - 1].clone();
    }
    if let Some(p) = cache.get(letters) {
        return p.clone();
    }
    let (head, last) = letters.split_at(letters.len() - 1);
    let prefix = word_product(head, vars, cache);
    let prod = prefix.mul(&vars[last[0] - 1]);
    cache.insert(letters.to_vec(), prod.clone());
    prod
}

/// Minimal unital *-algebra interface needed to evaluate a polynomial.
pub trait NcAlgebra: Clone {
    fn identity_like(&self) -> Self;
    fn zeros_like(&self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn add_scaled(&mut self, coeff: Complex64, rhs: &Self);
    fn adjoint(&self) -> Self;
}

impl NcAlgebra for CMatrix {
    fn identity_like(&self) -> Self {
        CMatrix::identity(self.nrows(), self.ncols())
    }

    fn zeros_like(&self) -> Self {
        CMatrix::zeros(self.nrows(), self.ncols())
    }

    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }

    fn add_scaled(&mut self, coeff: Complex64, rhs: &Self) {
        self.zip_apply(rhs, |a, b| *a += coeff * b);
    }

    fn adjoint(&self) -> Self {
        CMatrix::adjoint(self)
    }
}

impl Add for &NcPolynomial {
    type Output = NcPolynomial;

    fn add(self, rhs: &NcPolynomial) -> NcPolynomial {
        assert_eq!(self.n_vars, rhs.n_vars, "variable count mismatch");
        let mut p = self.clone();
        for (w, &c) in &rhs.terms {
            p.add_term(w.clone(), c);
        }
        p
    }
}

impl Sub for &NcPolynomial {
    type Output = NcPolynomial;

    fn sub(self, rhs: &NcPolynomial) -> NcPolynomial {
        self + &(-rhs)
    }
}

impl Neg for &NcPolynomial {
    type Output = NcPolynomial;

    fn neg(self) -> NcPolynomial {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &NcPolynomial {
    type Output = NcPolynomial;

    fn mul(self, rhs: &NcPolynomial) -> NcPolynomial {
        assert_eq!(self.n_vars, rhs.n_vars, "variable count mismatch");
        let mut p = NcPolynomial::zero(self.n_vars);
        for (w1, &c1) in &self.terms {
            for (w2, &c2) in &rhs.terms {
                let mut w = w1.0.clone();
                w.extend_from_slice(&w2.0);
                p.add_term(Word(w), c1 * c2);
            }
        }
        p
    }
}

impl fmt::Display for NcPolynomial {
    /// Canonical printer; the output parses back to the same polynomial.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (word, c)) in self.terms.iter().enumerate() {
            let word_text = word
                .0
                .iter()
                .map(|j| format!("x{j}"))
                .collect::<Vec<_>>()
                .join("*");
            let (negative, body) = format_coeff(*c);
            match (k, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            match (body, word_text.is_empty()) {
                (None, true) => write!(f, "1")?,
                (None, false) => write!(f, "{word_text}")?,
                (Some(b), true) => write!(f, "{b}")?,
                (Some(b), false) => write!(f, "{b}*{word_text}")?,
            }
        }
        Ok(())
    }
}

/// Splits a coefficient into a leading sign and a body; `None` means unit.
fn format_coeff(c: Complex64) -> (bool, Option<String>) {
    if c.im == 0.0 {
        let neg = c.re < 0.0;
        let a = c.re.abs();
        return (neg, if a == 1.0 { None } else { Some(format!("{a}")) });
    }
    if c.re == 0.0 {
        let neg = c.im < 0.0;
        return (neg, Some(format!("{}i", c.im.abs())));
    }
    let sign = if c.im < 0.0 { '-' } else { '+' };
    (false, Some(format!("({}{}{}i)", c.re, sign, c.im.abs())))
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n_vars: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<NcPolynomial> {
        let mut acc = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == b'+' { &acc + &rhs } else { &acc - &rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<NcPolynomial> {
        let mut acc = self.unary()?;
        while let Some(b'*') = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = &acc * &rhs;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<NcPolynomial> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-&self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<NcPolynomial> {
        let base = self.atom()?;
        if let Some(b'^') = self.peek() {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            let k = self.integer()?;
            if k < 1 {
                self.pos = start;
                return Err(self.error("power must be at least 1"));
            }
            let k = u32::try_from(k).map_err(|_| self.error("power too large"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<u64> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse {
                position: start,
                message: "integer too large".into(),
            })
    }

    fn atom(&mut self) -> Result<NcPolynomial> {
        let n = self.n_vars;
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'x') => {
                let start = self.pos;
                self.pos += 1;
                let j = self.integer()? as usize;
                if j == 0 || j > n {
                    return Err(Error::Parse {
                        position: start,
                        message: format!("variable x{j} out of range 1..={n}"),
                    });
                }
                NcPolynomial::var(n, j)
            }
            Some(b'i') => {
                self.pos += 1;
                Ok(NcPolynomial::constant(n, Complex64::new(0.0, 1.0)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let v = self.number()?;
                Ok(NcPolynomial::constant(n, v))
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Complex64> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - b
        };
        let mut p = self.pos;
        let mut count = digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            count += digits(&mut p);
        }
        if count == 0 {
            return Err(self.error("malformed number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) > 0 {
                p = q;
            }
        }
        let text = std::str::from_utf8(&s[start..p]).expect("ascii number");
        let value: f64 = text.parse().map_err(|_| self.error("malformed number"))?;
        if !value.is_finite() {
            return Err(self.error("number out of range"));
        }
        self.pos = p;
        if self.pos < s.len() && s[self.pos] == b'i' {
            self.pos += 1;
            return Ok(Complex64::new(0.0, value));
        }
        Ok(Complex64::new(value, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn words(p: &NcPolynomial) -> Vec<(Vec<usize>, Complex64)> {
        p.terms().map(|m| (m.word.0, m.coeff)).collect()
    }

    #[test]
    fn parses_anticommutator() {
        let p = NcPolynomial::parse("x1*x2 + x2*x1", 2).unwrap();
        assert_eq!(
            words(&p),
            vec![(vec![1, 2], c(1.0, 0.0)), (vec![2, 1], c(1.0, 0.0))]
        );
    }

    #[test]
    fn expands_square_non_commutatively() {
        let p = NcPolynomial::parse("(x1+x2)^2", 2).unwrap();
        let w: Vec<_> = words(&p).into_iter().map(|(w, _)| w).collect();
        assert_eq!(w, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        assert!(p.terms().all(|m| m.coeff == c(1.0, 0.0)));
    }

    #[test]
    fn parses_three_variable_cubic() {
        let p = NcPolynomial::parse("x1*x2*x1 + x2*x3*x2 + x3*x1*x3", 3).unwrap();
        assert_eq!(p.term_count(), 3);
        assert!(p.terms().all(|m| m.word.degree() == 3));
        assert!(p.is_selfadjoint());
    }

    #[test]
    fn parses_complex_literals() {
        let p = NcPolynomial::parse("(2+3i)*x1 - 1.5e-1 + i*x2*x1", 2).unwrap();
        assert_eq!(p.coeff(&[1]), c(2.0, 3.0));
        assert_eq!(p.coeff(&[]), c(-0.15, 0.0));
        assert_eq!(p.coeff(&[2, 1]), c(0.0, 1.0));
    }

    #[test]
    fn parenthesized_products_keep_letter_order() {
        let p = NcPolynomial::parse("(x1 + 2*x2)*(x3*x1)", 3).unwrap();
        assert_eq!(p.coeff(&[1, 3, 1]), c(1.0, 0.0));
        assert_eq!(p.coeff(&[2, 3, 1]), c(2.0, 0.0));
        assert_eq!(p.term_count(), 2);
    }

    #[test]
    fn spellings_share_canonical_form() {
        let a = NcPolynomial::parse("x2*x1 + x1*x2 + x1 - x1 + 0*x2", 2).unwrap();
        let b = NcPolynomial::parse("(x1+x2)^2 - x1^2 - x2*x2", 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_juxtaposition() {
        let err = NcPolynomial::parse("x1 x2", 2).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                position: 3,
                message: "expected operator or end of input".into()
            }
        );
        assert!(NcPolynomial::parse("2x1", 1).is_err());
    }

    #[test]
    fn rejects_out_of_range_variable() {
        match NcPolynomial::parse("x1 + x3", 2) {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(NcPolynomial::parse("x0", 2).is_err());
    }

    #[test]
    fn rejects_zero_power() {
        match NcPolynomial::parse("x1^0", 1) {
            Err(Error::Parse { position, message }) => {
                assert_eq!(position, 3);
                assert!(message.contains("power"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unbalanced_and_empty_input() {
        assert!(NcPolynomial::parse("(x1 + x2", 2).is_err());
        assert!(NcPolynomial::parse("", 2).is_err());
        assert!(NcPolynomial::parse("x1 +", 2).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let p = NcPolynomial::parse("x1*x2", 2).unwrap();
        assert_eq!(words(&p.adjoint()), vec![(vec![2, 1], c(1.0, 0.0))]);

        let q = NcPolynomial::parse("(2+1i)*x1", 1).unwrap();
        assert_eq!(words(&q.adjoint()), vec![(vec![1], c(2.0, -1.0))]);

        let r = NcPolynomial::parse("x1*x2 + x2*x1", 2).unwrap();
        assert_eq!(r.adjoint(), r);
        assert!(r.is_selfadjoint());
        assert!(!p.is_selfadjoint());
    }

    #[test]
    fn evaluate_identity_substitution() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(2.0, -1.0), c(3.0, 0.0)]);
        let p = NcPolynomial::parse("x1", 1).unwrap();
        assert_eq!(p.evaluate(&[a.clone()]).unwrap(), a);
    }

    #[test]
    fn evaluate_anticommutator_by_hand() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let b = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let p = NcPolynomial::parse("x1*x2+x2*x1", 2).unwrap();
        let v = p.evaluate(&[a, b.clone()]).unwrap();
        assert_eq!(v, b);
    }

    #[test]
    fn evaluate_rejects_bad_dimensions() {
        let p = NcPolynomial::parse("x1*x2", 2).unwrap();
        assert!(p.evaluate(&[CMatrix::identity(2, 2)]).is_err());
        assert!(p
            .evaluate(&[CMatrix::identity(2, 2), CMatrix::identity(3, 3)])
            .is_err());
    }

    #[test]
    fn canonical_printer_output() {
        let p = NcPolynomial::parse("-x2*x1 + 2.5*x1 - 3 + (1-2i)*x1*x1 + 4i*x2", 2).unwrap();
        assert_eq!(p.to_string(), "-3 + 2.5*x1 + 4i*x2 + (1-2i)*x1*x1 - x2*x1");
        assert_eq!(NcPolynomial::zero(2).to_string(), "0");
    }

    // -- property tests --------------------------------------------------

    fn arb_poly(n_vars: usize, max_deg: usize) -> impl Strategy<Value = NcPolynomial> {
        let term = (
            prop::collection::vec(1..=n_vars, 0..=max_deg),
            -3i32..=3,
            -3i32..=3,
        );
        prop::collection::vec(term, 0..6).prop_map(move |ts| {
            NcPolynomial::from_terms(
                n_vars,
                ts.into_iter()
                    .map(|(w, a, b)| (Word(w), c(a as f64 * 0.5, b as f64 * 0.25))),
            )
            .unwrap()
        })
    }

    fn arb_herm(dim: usize) -> impl Strategy<Value = CMatrix> {
        prop::collection::vec(-1.0f64..1.0, 2 * dim * dim).prop_map(move |v| {
            let a = CMatrix::from_fn(dim, dim, |i, j| c(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]));
            (&a + a.adjoint()).scale(0.5)
        })
    }

    fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm() / (1.0 + a.norm().max(b.norm()))
    }

    /// Term-by-term product oracle, no memoization or adjoint reuse.
    fn naive_eval(p: &NcPolynomial, mats: &[CMatrix]) -> CMatrix {
        let dim = mats[0].nrows();
        let mut acc = CMatrix::zeros(dim, dim);
        for m in p.terms() {
            let mut prod = CMatrix::identity(dim, dim);
            for &j in m.word.letters() {
                prod = prod * &mats[j - 1];
            }
            acc += prod * m.coeff;
        }
        acc
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(p in arb_poly(3, 4)) {
            let back = NcPolynomial::parse(&p.to_string(), 3).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn adjoint_is_involution(p in arb_poly(3, 4)) {
            prop_assert_eq!(p.adjoint().adjoint(), p);
        }

        #[test]
        fn evaluation_is_homomorphism(
            p in arb_poly(2, 3),
            q in arb_poly(2, 3),
            a in arb_herm(4),
            b in arb_herm(4),
        ) {
            let mats = [a, b];
            let sum = (&p + &q).evaluate(&mats).unwrap();
            let lhs = p.evaluate(&mats).unwrap() + q.evaluate(&mats).unwrap();
            prop_assert!(rel_diff(&sum, &lhs) < 1e-12);
            let prod = (&p * &q).evaluate(&mats).unwrap();
            let rhs = p.evaluate(&mats).unwrap() * q.evaluate(&mats).unwrap();
            prop_assert!(rel_diff(&prod, &rhs) < 1e-12);
        }

        #[test]
        fn evaluation_matches_naive_products(
            p in arb_poly(3, 4),
            a in arb_herm(4),
            b in arb_herm(4),
            d in arb_herm(4),
        ) {
            let mats = [a, b, d];
            let fast = p.evaluate_in(&mats, true);
            prop_assert!(rel_diff(&fast, &naive_eval(&p, &mats)) < 1e-12);
        }

        #[test]
        fn selfadjoint_polys_give_hermitian_values(
            p in arb_poly(2, 4),
            a in arb_herm(4),
            b in arb_herm(4),
        ) {
            let s = &p + &p.adjoint();
            prop_assert!(s.is_selfadjoint());
            let v = s.evaluate(&[a, b]).unwrap();
            prop_assert!((&v - v.adjoint()).norm() <= 1e-12 * (1.0 + v.norm()));
        }
    }
}
