//! Sparse multivariate complex polynomials in scaled coordinates.
//!
//! A [`MultiPoly`] with scale `c` represents `p(z) = sum_a c_a (z / c)^a`.
//! Fitted corrections are stored this way so that monomials stay of order
//! one on the fitting region; the scale is `1` for user-supplied divisors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("exponent vector of length {got} in a polynomial of dimension {n}")]
    DimensionMismatch { n: usize, got: usize },
    #[error("polynomial scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("coefficient for exponent {0:?} is not finite")]
    NonFinite(Vec<u32>),
}

/// One monomial term `coeff * (z / scale)^alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TermWire", into = "TermWire")]
pub struct Term {
    pub alpha: Vec<u32>,
    pub coeff: Complex64,
}

#[derive(Serialize, Deserialize)]
struct TermWire {
    alpha: Vec<u32>,
    re: f64,
    im: f64,
}

impl From<TermWire> for Term {
    fn from(w: TermWire) -> Self {
        Term {
            alpha: w.alpha,
            coeff: Complex64::new(w.re, w.im),
        }
    }
}

impl From<Term> for TermWire {
    fn from(t: Term) -> Self {
        TermWire {
            alpha: t.alpha,
            re: t.coeff.re,
            im: t.coeff.im,
        }
    }
}

/// Sparse polynomial in `n` complex variables.
///
/// Terms are kept sorted in decreasing lexicographic order of exponents,
/// with no repeated exponent and no zero coefficient, which is the layout
/// the nested Horner evaluation walks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyWire", into = "PolyWire")]
pub struct MultiPoly {
    n: usize,
    scale: f64,
    terms: Vec<Term>,
}

#[derive(Serialize, Deserialize)]
struct PolyWire {
    n: usize,
    #[serde(default = "one")]
    scale: f64,
    terms: Vec<Term>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<PolyWire> for MultiPoly {
    type Error = PolyError;
    fn try_from(w: PolyWire) -> Result<Self, Self::Error> {
        MultiPoly::new(w.n, w.scale, w.terms)
    }
}

impl From<MultiPoly> for PolyWire {
    fn from(p: MultiPoly) -> Self {
        PolyWire {
            n: p.n,
            scale: p.scale,
            terms: p.terms,
        }
    }
}

fn lex_desc(a: &[u32], b: &[u32]) -> Ordering {
    b.cmp(a)
}

impl MultiPoly {
    /// Builds a polynomial, merging repeated exponents and dropping zeros.
    pub fn new(n: usize, scale: f64, terms: Vec<Term>) -> Result<Self, PolyError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(PolyError::BadScale(scale));
        }
        for t in &terms {
            if t.alpha.len() != n {
                return Err(PolyError::DimensionMismatch {
                    n,
                    got: t.alpha.len(),
                });
            }
            if !(t.coeff.re.is_finite() && t.coeff.im.is_finite()) {
                return Err(PolyError::NonFinite(t.alpha.clone()));
            }
        }
        let mut terms = terms;
        terms.sort_by(|a, b| lex_desc(&a.alpha, &b.alpha));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.alpha == t.alpha => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
        Ok(Self {
            n,
            scale,
            terms: merged,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            scale: 1.0,
            terms: Vec::new(),
        }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        Self::new(
            n,
            1.0,
            vec![Term {
                alpha: vec![0; n],
                coeff: c,
            }],
        )
        .expect("constant polynomial is valid")
    }

    /// The coordinate function `z_k` (zero based).
    pub fn coordinate(n: usize, k: usize) -> Self {
        let mut alpha = vec![0; n];
        alpha[k] = 1;
        Self::new(
            n,
            1.0,
            vec![Term {
                alpha,
                coeff: Complex64::new(1.0, 0.0),
            }],
        )
        .expect("coordinate polynomial is valid")
    }

    /// Builds `sum_k coeffs[k] (z / scale)^basis[k]`.
    pub fn from_basis(
        n: usize,
        scale: f64,
        basis: &[Vec<u32>],
        coeffs: &[Complex64],
    ) -> Result<Self, PolyError> {
        let terms = basis
            .iter()
            .zip(coeffs)
            .map(|(a, c)| Term {
                alpha: a.clone(),
                coeff: *c,
            })
            .collect();
        Self::new(n, scale, terms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.alpha.iter().sum())
            .max()
            .unwrap_or(0)
    }

    /// Value at `z` by nested Horner evaluation, one variable per level.
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        debug_assert_eq!(z.len(), self.n);
        if self.terms.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let inv = 1.0 / self.scale;
        let mut w = [Complex64::new(0.0, 0.0); 8];
        if self.n <= 8 {
            for (wi, zi) in w.iter_mut().zip(z) {
                *wi = zi * inv;
            }
            horner(&self.terms, 0, &w[..self.n])
        } else {
            let w: Vec<Complex64> = z.iter().map(|zi| zi * inv).collect();
            horner(&self.terms, 0, &w)
        }
    }

    /// Reference evaluation summing monomials one by one.
    pub fn eval_naive(&self, z: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let mut m = t.coeff;
                for (zi, &a) in z.iter().zip(&t.alpha) {
                    m *= (zi / self.scale).powu(a);
                }
                m
            })
            .sum()
    }

    /// Partial derivative with respect to `z_k`, in the same scale.
    pub fn derivative(&self, k: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.alpha[k] > 0)
            .map(|t| {
                let mut alpha = t.alpha.clone();
                alpha[k] -= 1;
                Term {
                    alpha,
                    coeff: t.coeff * (t.alpha[k] as f64 / self.scale),
                }
            })
            .collect();
        Self::new(self.n, self.scale, terms).expect("derivative of a valid polynomial is valid")
    }

    /// Same polynomial with every coefficient multiplied by `c`.
    pub fn scaled_by(&self, c: Complex64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                alpha: t.alpha.clone(),
                coeff: t.coeff * c,
            })
            .collect();
        Self::new(self.n, self.scale, terms).expect("scaling keeps a valid polynomial valid")
    }

    /// Re-expresses the polynomial in another coordinate scale.
    pub fn rescaled(&self, scale: f64) -> Result<Self, PolyError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(PolyError::BadScale(scale));
        }
        let ratio = scale / self.scale;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let d: u32 = t.alpha.iter().sum();
                Term {
                    alpha: t.alpha.clone(),
                    coeff: t.coeff * ratio.powi(d as i32),
                }
            })
            .collect();
        Self::new(self.n, scale, terms)
    }
}

fn horner(terms: &[Term], var: usize, w: &[Complex64]) -> Complex64 {
    if var == w.len() {
        return terms.iter().map(|t| t.coeff).sum();
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev: Option<u32> = None;
    let mut i = 0;
    while i < terms.len() {
        let e = terms[i].alpha[var];
        let mut j = i + 1;
        while j < terms.len() && terms[j].alpha[var] == e {
            j += 1;
        }
        if let Some(p) = prev {
            acc *= w[var].powu(p - e);
        }
        acc += horner(&terms[i..j], var + 1, w);
        prev = Some(e);
        i = j;
    }
    if let Some(p) = prev {
        acc *= w[var].powu(p);
    }
    acc
}

/// All exponents in `n` variables of total degree at most `d`, in graded
/// order (by total degree, then decreasing lexicographic).
pub fn monomial_basis(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=d {
        let mut cur = vec![0u32; n];
        fill(&mut cur, 0, total, &mut out);
    }
    out
}

fn fill(cur: &mut Vec<u32>, k: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if k + 1 == cur.len() {
        cur[k] = left;
        out.push(cur.clone());
        return;
    }
    for a in (0..=left).rev() {
        cur[k] = a;
        fill(cur, k + 1, left - a, out);
    }
}

/// Number of monomials of total degree at most `d` in `n` variables.
pub fn basis_size(n: usize, d: u32) -> usize {
    // binomial(n + d, n)
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 1..=n as u128 {
        num *= d as u128 + i;
        den *= i;
    }
    (num / den) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn arb_poly(n: usize, max_deg: u32) -> impl Strategy<Value = MultiPoly> {
        let basis = monomial_basis(n, max_deg);
        let k = basis.len();
        (
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, any::<bool>()), k),
            0.5f64..2.0,
        )
            .prop_map(move |(cs, scale)| {
                let terms = basis
                    .iter()
                    .zip(cs)
                    .filter(|(_, (_, _, keep))| *keep)
                    .map(|(a, (re, im, _))| Term {
                        alpha: a.clone(),
                        coeff: c(re, im),
                    })
                    .collect();
                MultiPoly::new(n, scale, terms).unwrap()
            })
    }

    #[test]
    fn basis_counts() {
        assert_eq!(monomial_basis(2, 20).len(), 231);
        assert_eq!(basis_size(2, 20), 231);
        assert_eq!(basis_size(3, 4), monomial_basis(3, 4).len());
        assert_eq!(
            monomial_basis(2, 1),
            vec![vec![0, 0], vec![1, 0], vec![0, 1]]
        );
    }

    #[test]
    fn merges_and_drops_zero_terms() {
        let p = MultiPoly::new(
            2,
            1.0,
            vec![
                Term {
                    alpha: vec![1, 0],
                    coeff: c(1.0, 0.0),
                },
                Term {
                    alpha: vec![1, 0],
                    coeff: c(-1.0, 0.0),
                },
                Term {
                    alpha: vec![0, 2],
                    coeff: c(2.0, 0.0),
                },
            ],
        )
        .unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.degree(), 2);
        assert!(MultiPoly::new(
            2,
            1.0,
            vec![Term {
                alpha: vec![1],
                coeff: c(1.0, 0.0)
            }]
        )
        .is_err());
        assert!(MultiPoly::new(2, 0.0, vec![]).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let p = MultiPoly::coordinate(2, 0);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"alpha\":[1,0]"));
        assert!(s.contains("\"re\":1.0"));
        let back: MultiPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn horner_matches_naive(p in arb_poly(2, 8), re in -1.0f64..1.0, im in -1.0f64..1.0, re2 in -1.0f64..1.0, im2 in -1.0f64..1.0) {
            let z = [c(re, im), c(re2, im2)];
            let a = p.eval(&z);
            let b = p.eval_naive(&z);
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }

        #[test]
        fn derivative_matches_finite_difference(p in arb_poly(3, 5), re in -0.7f64..0.7, im in -0.7f64..0.7, k in 0usize..3) {
            let z = [c(re, im), c(im, re), c(0.3, -0.2)];
            let h = 1e-6;
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            let fd = (p.eval(&zp) - p.eval(&zm)) / (2.0 * h);
            let d = p.derivative(k).eval(&z);
            prop_assert!((fd - d).norm() <= 1e-6 * (1.0 + d.norm()));
        }

        #[test]
        fn rescaling_preserves_values(p in arb_poly(2, 6), s in 0.3f64..3.0, re in -1.0f64..1.0) {
            let z = [c(re, 0.1), c(-0.2, re)];
            let q = p.rescaled(s).unwrap();
            prop_assert!((q.eval(&z) - p.eval(&z)).norm() <= 1e-10 * (1.0 + p.eval(&z).norm()));
        }
    }
}
