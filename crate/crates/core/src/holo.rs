//! The divisor `h`, the candidate maps `f = h + h^s W` built on it, their
//! Jacobians, rank margins and the epsilon budget of the induction.

use crate::geometry::to_complex;
use crate::poly::{MultiPoly, PolyError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoloError {
    #[error("divisor needs 1 <= q < n components, got q={q} for n={n}")]
    BadCodimension { q: usize, n: usize },
    #[error("component {index} lives in dimension {got}, expected {n}")]
    DimensionMismatch { index: usize, n: usize, got: usize },
    #[error("interpolation order must be at least 2, got {0}")]
    BadOrder(u32),
    #[error("expected {expected} correction polynomials, got {got}")]
    CorrectionCount { expected: usize, got: usize },
    #[error("rank margin {0} is not positive; the map is not submersive on the samples")]
    DegenerateMargin(f64),
    #[error("radii must satisfy R_prev < r_cur, got R_prev={r_prev}, r_cur={r_cur}")]
    BadRadii { r_prev: f64, r_cur: f64 },
    #[error("safety factor must be at least 2, got {0}")]
    BadSafety(f64),
    #[error(
        "epsilon {value} at step {step} violates 0 < eps_j < eps_(j-1)/2 (previous {previous})"
    )]
    Halving {
        step: usize,
        value: f64,
        previous: f64,
    },
    #[error("no samples supplied")]
    NoSamples,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// The defining polynomials `h = (h_1, ..., h_q)` of `V = h^{-1}(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DivisorWire", into = "DivisorWire")]
pub struct Divisor {
    components: Vec<MultiPoly>,
    smooth: bool,
    #[serde(skip)]
    grads: Vec<Vec<MultiPoly>>,
}

#[derive(Serialize, Deserialize)]
struct DivisorWire {
    components: Vec<MultiPoly>,
    smooth: bool,
}

impl TryFrom<DivisorWire> for Divisor {
    type Error = HoloError;
    fn try_from(w: DivisorWire) -> Result<Self, Self::Error> {
        Divisor::new(w.components, w.smooth)
    }
}

impl From<Divisor> for DivisorWire {
    fn from(d: Divisor) -> Self {
        DivisorWire {
            components: d.components,
            smooth: d.smooth,
        }
    }
}

fn gradients(ps: &[MultiPoly]) -> Vec<Vec<MultiPoly>> {
    ps.iter()
        .map(|p| (0..p.n()).map(|k| p.derivative(k)).collect())
        .collect()
}

impl Divisor {
    pub fn new(components: Vec<MultiPoly>, smooth: bool) -> Result<Self, HoloError> {
        let q = components.len();
        let n = components.first().map(|p| p.n()).unwrap_or(0);
        if q == 0 || q >= n || n < 2 {
            return Err(HoloError::BadCodimension { q, n });
        }
        for (index, p) in components.iter().enumerate() {
            if p.n() != n {
                return Err(HoloError::DimensionMismatch {
                    index,
                    n,
                    got: p.n(),
                });
            }
        }
        let grads = gradients(&components);
        Ok(Self {
            components,
            smooth,
            grads,
        })
    }

    /// The hyperplane `{z_1 = 0}` in `C^n`.
    pub fn coordinate_hyperplane(n: usize) -> Self {
        Self::new(vec![MultiPoly::coordinate(n, 0)], true)
            .expect("z_1 is a valid divisor for n >= 2")
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    pub fn q(&self) -> usize {
        self.components.len()
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn components(&self) -> &[MultiPoly] {
        &self.components
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|p| p.eval(z)).collect()
    }

    /// Euclidean norm of `h(z)`.
    pub fn abs(&self, z: &[Complex64]) -> f64 {
        self.components
            .iter()
            .map(|p| p.eval(z).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn jacobian(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.q(), self.n(), |i, k| self.grads[i][k].eval(z))
    }

    pub fn gradient(&self, i: usize, z: &[Complex64]) -> Vec<Complex64> {
        self.grads[i].iter().map(|g| g.eval(z)).collect()
    }
}

/// `f_i = h_i + h_i^s W_i` when the zero set is pinned to `V`, and
/// `f_i = h_i + W_i` when it is not (the all-fibers mode, where `h` only
/// supplies the starting submersion).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CandidateWire", into = "CandidateWire")]
pub struct CandidateMap {
    divisor: Divisor,
    order: u32,
    pinned: bool,
    w: Vec<MultiPoly>,
    #[serde(skip)]
    w_grads: Vec<Vec<MultiPoly>>,
}

#[derive(Serialize, Deserialize)]
struct CandidateWire {
    n: usize,
    q: usize,
    s: u32,
    pinned: bool,
    divisor: Divisor,
    components: Vec<MultiPoly>,
}

impl TryFrom<CandidateWire> for CandidateMap {
    type Error = HoloError;
    fn try_from(w: CandidateWire) -> Result<Self, Self::Error> {
        if w.divisor.n() != w.n || w.divisor.q() != w.q {
            return Err(HoloError::BadCodimension { q: w.q, n: w.n });
        }
        CandidateMap::new(w.divisor, w.s, w.pinned, w.components)
    }
}

impl From<CandidateMap> for CandidateWire {
    fn from(f: CandidateMap) -> Self {
        CandidateWire {
            n: f.divisor.n(),
            q: f.divisor.q(),
            s: f.order,
            pinned: f.pinned,
            divisor: f.divisor,
            components: f.w,
        }
    }
}

impl CandidateMap {
    pub fn new(
        divisor: Divisor,
        order: u32,
        pinned: bool,
        w: Vec<MultiPoly>,
    ) -> Result<Self, HoloError> {
        if order < 2 {
            return Err(HoloError::BadOrder(order));
        }
        if w.len() != divisor.q() {
            return Err(HoloError::CorrectionCount {
                expected: divisor.q(),
                got: w.len(),
            });
        }
        for (index, p) in w.iter().enumerate() {
            if p.n() != divisor.n() {
                return Err(HoloError::DimensionMismatch {
                    index,
                    n: divisor.n(),
                    got: p.n(),
                });
            }
        }
        let w_grads = gradients(&w);
        Ok(Self {
            divisor,
            order,
            pinned,
            w,
            w_grads,
        })
    }

    /// `F_0 = h`, that is `W = 0`.
    pub fn initial(divisor: Divisor, order: u32, pinned: bool) -> Result<Self, HoloError> {
        let w = vec![MultiPoly::zero(divisor.n()); divisor.q()];
        Self::new(divisor, order, pinned, w)
    }

    /// Same divisor and order with a new correction.
    pub fn with_correction(&self, w: Vec<MultiPoly>) -> Result<Self, HoloError> {
        Self::new(self.divisor.clone(), self.order, self.pinned, w)
    }

    pub fn divisor(&self) -> &Divisor {
        &self.divisor
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_pinned(&self) -> bool {
        self.pinned
    }

    pub fn correction(&self) -> &[MultiPoly] {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.divisor.n()
    }

    pub fn q(&self) -> usize {
        self.divisor.q()
    }

    /// `h_i^s` for pinned maps, `1` otherwise: the factor multiplying `W_i`.
    pub fn weight_factor(&self, h: Complex64) -> Complex64 {
        if self.pinned {
            h.powu(self.order)
        } else {
            Complex64::new(1.0, 0.0)
        }
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Vec<Complex64> {
        (0..self.q())
            .map(|i| {
                let h = self.divisor.components[i].eval(z);
                h + self.weight_factor(h) * self.w[i].eval(z)
            })
            .collect()
    }

    /// Value at a real point `x ∈ R^{2n}`.
    pub fn eval(&self, x: &[f64]) -> Vec<Complex64> {
        self.eval_complex(&to_complex(x))
    }

    /// `|F(x)|`, Euclidean in `C^q`.
    pub fn abs(&self, x: &[f64]) -> f64 {
        self.eval(x)
            .iter()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn jacobian_complex(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        self.value_and_jacobian(z).1
    }

    /// Complex `q x n` Jacobian at a real point.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<Complex64> {
        self.jacobian_complex(&to_complex(x))
    }

    pub fn value_and_jacobian(&self, z: &[Complex64]) -> (Vec<Complex64>, DMatrix<Complex64>) {
        let (q, n) = (self.q(), self.n());
        let s = self.order;
        let mut val = Vec::with_capacity(q);
        let mut jac = DMatrix::zeros(q, n);
        for i in 0..q {
            let h = self.divisor.components[i].eval(z);
            let w = self.w[i].eval(z);
            let (factor, dfactor) = if self.pinned {
                (h.powu(s), h.powu(s - 1) * s as f64)
            } else {
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
            };
            val.push(h + factor * w);
            for k in 0..n {
                let dh = self.divisor.grads[i][k].eval(z);
                let dw = self.w_grads[i][k].eval(z);
                jac[(i, k)] = dh * (Complex64::new(1.0, 0.0) + dfactor * w) + factor * dw;
            }
        }
        (val, jac)
    }

    /// `G_i = 1 + h_i^{s-1} W_i`; off `V`, `f_i = h_i G_i` vanishes only where
    /// `G_i` does. Returns the values and gradients.
    pub fn extra_zero_factor(&self, z: &[Complex64]) -> Vec<(Complex64, Vec<Complex64>)> {
        let s = self.order;
        (0..self.q())
            .map(|i| {
                let h = self.divisor.components[i].eval(z);
                let w = self.w[i].eval(z);
                let hs1 = h.powu(s - 1);
                let dpow = if s >= 2 {
                    h.powu(s.saturating_sub(2)) * (s - 1) as f64
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let g = Complex64::new(1.0, 0.0) + hs1 * w;
                let grad = (0..self.n())
                    .map(|k| {
                        let dh = self.divisor.grads[i][k].eval(z);
                        let dw = self.w_grads[i][k].eval(z);
                        dpow * dh * w + hs1 * dw
                    })
                    .collect();
                (g, grad)
            })
            .collect()
    }
}

/// Moves `x` onto `h = 0` by minimum-norm Newton steps. Returns `None` if
/// `|h|` does not drop below `tol` within `iters` steps.
pub fn project_to_zero_set(h: &Divisor, x: &[f64], iters: usize, tol: f64) -> Option<Vec<f64>> {
    let mut z = to_complex(x);
    for _ in 0..=iters {
        let v = h.eval(&z);
        let r = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if r < tol {
            return Some(crate::geometry::to_real(&z));
        }
        let j = h.jacobian(&z);
        let jh = j.adjoint();
        let gram = &j * &jh;
        let rhs = nalgebra::DVector::from_vec(v);
        let y = gram.lu().solve(&rhs)?;
        let dz = jh * y;
        for (zi, d) in z.iter_mut().zip(dz.iter()) {
            *zi -= d;
        }
    }
    None
}

/// Points of `V = h^{-1}(0)` inside the closed ball of radius `radius`,
/// obtained by projecting low-discrepancy ball samples.
pub fn sample_zero_set(h: &Divisor, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut round = 0u64;
    while out.len() < count && round < 20 {
        let pts = crate::sampling::ball_points(
            h.n(),
            radius,
            count.max(16),
            crate::sampling::derive_seed(seed, "zero-set", round),
        );
        for p in pts {
            if let Some(v) = project_to_zero_set(h, &p, 40, 1e-14) {
                if crate::geometry::norm(&v) <= radius && out.len() < count {
                    out.push(v);
                }
            }
        }
        round += 1;
    }
    out
}

/// Smallest singular value of a complex matrix with at most as many rows as
/// columns.
pub fn smallest_singular_value(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 1 {
        return m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Minimum over the samples of the smallest singular value of the Jacobian.
pub fn min_rank_margin(f: &CandidateMap, samples: &[Vec<f64>]) -> f64 {
    samples
        .par_iter()
        .map(|x| smallest_singular_value(&f.jacobian(x)))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Jacobian rank margin of the divisor itself.
pub fn divisor_rank_margin(h: &Divisor, samples: &[Vec<f64>]) -> f64 {
    samples
        .par_iter()
        .map(|x| smallest_singular_value(&h.jacobian(&to_complex(x))))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Approximation budget for step `j`: half the previous budget (slightly
/// less, to keep the inequality strict), or a bound under which any map
/// within `2 eps` of `F_prev` on the larger ball stays submersive on the
/// smaller ball by the Cauchy estimate along complex lines.
///
/// `samples` should fill the ball of radius `r_prev`.
pub fn cauchy_epsilon(
    f_prev: &CandidateMap,
    r_prev: f64,
    r_cur: f64,
    eps_prev: f64,
    safety: f64,
    samples: &[Vec<f64>],
) -> Result<f64, HoloError> {
    if samples.is_empty() {
        return Err(HoloError::NoSamples);
    }
    let sigma = min_rank_margin(f_prev, samples);
    cauchy_epsilon_from_margin(sigma, r_prev, r_cur, eps_prev, safety)
}

/// The formula behind [`cauchy_epsilon`] for a known margin `sigma_min`.
pub fn cauchy_epsilon_from_margin(
    sigma_min: f64,
    r_prev: f64,
    r_cur: f64,
    eps_prev: f64,
    safety: f64,
) -> Result<f64, HoloError> {
    if !(r_prev < r_cur) {
        return Err(HoloError::BadRadii { r_prev, r_cur });
    }
    if !(safety >= 2.0) {
        return Err(HoloError::BadSafety(safety));
    }
    if !(sigma_min > 0.0) {
        return Err(HoloError::DegenerateMargin(sigma_min));
    }
    Ok((eps_prev / 2.0 * (1.0 - 1e-6)).min(sigma_min * (r_cur - r_prev) / (2.0 * safety)))
}

/// The sequence `eps_0 > eps_1 > ...` with `eps_j < eps_(j-1) / 2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    values: Vec<f64>,
}

impl EpsilonBudget {
    pub fn new(eps0: f64) -> Result<Self, HoloError> {
        if !(eps0 > 0.0 && eps0.is_finite()) {
            return Err(HoloError::Halving {
                step: 0,
                value: eps0,
                previous: f64::INFINITY,
            });
        }
        Ok(Self { values: vec![eps0] })
    }

    /// Appends `eps_j`, enforcing the halving condition.
    pub fn push(&mut self, eps: f64) -> Result<(), HoloError> {
        let previous = *self.values.last().unwrap_or(&f64::INFINITY);
        if !(eps > 0.0 && eps < previous / 2.0) {
            return Err(HoloError::Halving {
                step: self.values.len(),
                value: eps,
                previous,
            });
        }
        self.values.push(eps);
        Ok(())
    }

    /// `eps_j` for `j = 0, 1, ...`.
    pub fn get(&self, j: usize) -> Option<f64> {
        self.values.get(j).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The last recorded index.
    pub fn last_step(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Per-step flags for `eps_j < eps_(j-1) / 2`, for `j >= 1`.
    pub fn halving_flags(&self) -> Vec<bool> {
        self.values
            .windows(2)
            .map(|w| w[1] > 0.0 && w[1] < w[0] / 2.0)
            .collect()
    }

    /// Rebuilds a budget from stored values, re-checking the invariant.
    pub fn from_values(values: &[f64]) -> Result<Self, HoloError> {
        let mut it = values.iter();
        let first = it.next().ok_or(HoloError::NoSamples)?;
        let mut b = Self::new(*first)?;
        for v in it {
            b.push(*v)?;
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{monomial_basis, Term};
    use crate::sampling::ball_points;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn z1_map(w: MultiPoly) -> CandidateMap {
        CandidateMap::new(Divisor::coordinate_hyperplane(2), 2, true, vec![w]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = CandidateMap::initial(Divisor::coordinate_hyperplane(2), 2, true).unwrap();
        assert_eq!(f.eval(&[0.3, 0.0, 0.0, 0.0]), vec![c(0.3, 0.0)]);

        let f = z1_map(MultiPoly::constant(2, c(0.7, -0.2)));
        assert_eq!(f.eval(&[0.0, 0.0, 0.4, 0.1]), vec![c(0.0, 0.0)]);

        let f = z1_map(MultiPoly::constant(2, c(1.0, 0.0)));
        let v = f.eval(&[0.5, 0.0, 0.0, 0.0])[0];
        assert!((v - c(0.75, 0.0)).norm() < 1e-15);
        // Naive oracle: z1 + z1^2 * 1.
        let z = c(0.5, 0.0);
        assert!((v - (z + z * z)).norm() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let cst = c(0.3, 0.4);
        let f = z1_map(MultiPoly::constant(2, cst));
        let z = [c(0.2, -0.1), c(0.5, 0.5)];
        let j = f.jacobian_complex(&z);
        assert!((j[(0, 0)] - (1.0 + 2.0 * cst * z[0])).norm() < 1e-15);
        assert_eq!(j[(0, 1)], c(0.0, 0.0));
        let j0 = f.jacobian_complex(&[c(0.0, 0.0), c(0.5, 0.5)]);
        assert_eq!(j0[(0, 0)], c(1.0, 0.0));
        let f0 = CandidateMap::initial(Divisor::coordinate_hyperplane(2), 2, true).unwrap();
        assert_eq!(
            f0.jacobian_complex(&z),
            Divisor::coordinate_hyperplane(2).jacobian(&z)
        );
    }

    #[test]
    fn rank_margin_examples() {
        let f0 = CandidateMap::initial(Divisor::coordinate_hyperplane(2), 2, true).unwrap();
        let s = ball_points(2, 0.9, 200, 1);
        assert_eq!(min_rank_margin(&f0, &s), 1.0);
        // f = z1 + z1^2 W with W = -1: 1 + 2 z1 W = 0 at z1 = 1/2.
        let f = z1_map(MultiPoly::constant(2, c(-1.0, 0.0)));
        let m = min_rank_margin(&f, &[vec![0.5, 0.0, 0.1, 0.0], vec![0.1, 0.0, 0.0, 0.0]]);
        assert!(m.abs() < 1e-15);
    }

    #[test]
    fn rank_margin_converges_under_refinement() {
        let w = MultiPoly::new(
            2,
            1.0,
            vec![
                Term {
                    alpha: vec![1, 0],
                    coeff: c(0.2, 0.1),
                },
                Term {
                    alpha: vec![0, 2],
                    coeff: c(0.1, 0.0),
                },
            ],
        )
        .unwrap();
        let f = z1_map(w);
        let coarse = min_rank_margin(&f, &ball_points(2, 1.0, 10_000, 2));
        let fine = min_rank_margin(&f, &ball_points(2, 1.0, 40_000, 3));
        assert!(
            (coarse - fine).abs() <= 0.05 * fine.max(1e-3),
            "{coarse} vs {fine}"
        );
    }

    #[test]
    fn cauchy_epsilon_examples() {
        let e = cauchy_epsilon_from_margin(0.5, 0.70, 0.75, 1.0, 4.0).unwrap();
        assert!((e - 0.003125).abs() < 1e-15);
        let e = cauchy_epsilon_from_margin(1.0, 0.5, 0.75, 1e-9, 4.0).unwrap();
        assert!(e < 0.5e-9);
        assert!(matches!(
            cauchy_epsilon_from_margin(0.0, 0.5, 0.75, 1.0, 4.0),
            Err(HoloError::DegenerateMargin(_))
        ));
        assert!(cauchy_epsilon_from_margin(1.0, 0.75, 0.75, 1.0, 4.0).is_err());
        assert!(cauchy_epsilon_from_margin(1.0, 0.5, 0.75, 1.0, 1.0).is_err());
    }

    #[test]
    fn budget_enforces_halving() {
        let mut b = EpsilonBudget::new(0.1).unwrap();
        b.push(0.04).unwrap();
        assert!(b.push(0.03).is_err());
        b.push(0.0199).unwrap();
        assert_eq!(b.halving_flags(), vec![true, true]);
        assert!(EpsilonBudget::from_values(&[0.1, 0.06]).is_err());
    }

    #[test]
    fn candidate_json_roundtrip() {
        let f = z1_map(MultiPoly::constant(2, c(0.25, -1.0)));
        let s = serde_json::to_string(&f).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["q"], 1);
        assert_eq!(v["s"], 2);
        let back: CandidateMap = serde_json::from_str(&s).unwrap();
        assert_eq!(
            back.eval(&[0.1, 0.2, 0.3, 0.4]),
            f.eval(&[0.1, 0.2, 0.3, 0.4])
        );
    }

    fn arb_w(max_deg: u32) -> impl Strategy<Value = MultiPoly> {
        let basis = monomial_basis(2, max_deg);
        let k = basis.len();
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), k).prop_map(move |cs| {
            let coeffs: Vec<Complex64> = cs.iter().map(|(a, b)| c(*a, *b)).collect();
            MultiPoly::from_basis(2, 1.0, &basis, &coeffs).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn interpolates_on_v(w in arb_w(6), a in -0.7f64..0.7, b in -0.7f64..0.7) {
            let f = z1_map(w);
            let x = [0.0, 0.0, a, b];
            let v = f.eval(&x)[0];
            prop_assert!(v.norm() < 1e-10);
            let dj = f.jacobian(&x) - Divisor::coordinate_hyperplane(2).jacobian(&to_complex(&x));
            prop_assert!(dj.norm() < 1e-8);
        }

        #[test]
        fn jacobian_matches_finite_differences(w in arb_w(6), a in -0.6f64..0.6, b in -0.6f64..0.6) {
            let f = z1_map(w);
            let z = [c(a, b), c(b, -a)];
            let j = f.jacobian_complex(&z);
            let h = 1e-5;
            for k in 0..2 {
                let mut zp = z;
                let mut zm = z;
                zp[k] += h;
                zm[k] -= h;
                let fd = (f.eval_complex(&zp)[0] - f.eval_complex(&zm)[0]) / (2.0 * h);
                prop_assert!((fd - j[(0, k)]).norm() <= 1e-6 * (1.0 + j[(0, k)].norm()));
            }
        }

        #[test]
        fn cauchy_epsilon_halves(sigma in 1e-3f64..2.0, gap in 1e-3f64..0.2, prev in 1e-6f64..1.0) {
            let e = cauchy_epsilon_from_margin(sigma, 0.5, 0.5 + gap, prev, 4.0).unwrap();
            prop_assert!(e > 0.0 && e < prev / 2.0);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_at_degree_forty() {
        let basis = monomial_basis(2, 40);
        let coeffs: Vec<Complex64> = (0..basis.len())
            .map(|i| {
                c(
                    ((i * 7919) % 13) as f64 / 13.0 - 0.5,
                    ((i * 104729) % 11) as f64 / 11.0 - 0.5,
                )
            })
            .collect();
        let w = MultiPoly::from_basis(2, 1.0, &basis, &coeffs).unwrap();
        let f = z1_map(w);
        let z = [c(0.31, -0.22), c(-0.17, 0.4)];
        let j = f.jacobian_complex(&z);
        let h = 1e-6;
        for k in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            let fd = (f.eval_complex(&zp)[0] - f.eval_complex(&zm)[0]) / (2.0 * h);
            assert!((fd - j[(0, k)]).norm() <= 1e-6 * (1.0 + j[(0, k)].norm()));
        }
    }
}
