//! Weighted polynomial least squares for the correction `W`: the new map
//! should agree with the deformation `phi` on the closed ball and on the
//! labyrinth, where `phi` equals the previous map except on the inflated
//! zero-free components, on which it is shifted or rescaled out of the
//! band `|f| <= 1/lambda`.

use crate::geometry::to_complex;
use crate::holo::{CandidateMap, HoloError};
use crate::labyrinth::{InflatedPair, LabyrinthSplit, TangentLabyrinth};
use crate::poly::{monomial_basis, MultiPoly};
use crate::sampling::{ball_points, derive_seed, disc_points, random_unit, rng};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OkaWeilError {
    #[error("min |F_prev| = {min_abs} on the zero-free components is below the floor {floor}")]
    ZeroOnLambda0 { min_abs: f64, floor: f64 },
    #[error("|h|^s = {value} on a DELTA_1 sample is below the division floor {floor}")]
    DivisionFloor { value: f64, floor: f64 },
    #[error("no degree up to {max_degree} passed; best validation residual {best_residual}")]
    DegreeCapExceeded {
        max_degree: u32,
        best_residual: f64,
        report: Box<FitReport>,
    },
    #[error("bad fit input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Holo(#[from] HoloError),
}

/// Sample region. Training and held-out sets carry the same tags and are
/// told apart by [`SampleSet::validation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Ball,
    LambdaV,
    Delta1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub regions: Vec<Region>,
    pub weights: Vec<f64>,
    pub validation: bool,
}

/// Sample counts and region weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub ball: usize,
    pub per_component: usize,
    pub weight_ball: f64,
    pub weight_lambda_v: f64,
    pub weight_delta1: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            ball: 4096,
            per_component: 256,
            weight_ball: 1.0,
            weight_lambda_v: 4.0,
            weight_delta1: 4.0,
        }
    }
}

impl SampleSet {
    /// Samples `K = r_ball B ∪ L`: low-discrepancy points of the closed
    /// ball, ring samples of every `lambda_V` component, and points within
    /// `mu` of every `lambda_0` component (half of them on the disc itself).
    pub fn build(
        n: usize,
        r_ball: f64,
        lab: &TangentLabyrinth,
        split: &LabyrinthSplit,
        inflated: &InflatedPair,
        cfg: &SampleConfig,
        seed: u64,
        validation: bool,
    ) -> Self {
        let tag = if validation { "validation" } else { "training" };
        let mut set = Self {
            points: Vec::new(),
            regions: Vec::new(),
            weights: Vec::new(),
            validation,
        };
        for p in ball_points(n, r_ball, cfg.ball, derive_seed(seed, tag, 0)) {
            set.push(p, Region::Ball, cfg.weight_ball);
        }
        for &c in &split.lambda_v {
            for p in disc_points(
                &lab.components()[c],
                cfg.per_component,
                derive_seed(seed, tag, 1 + c as u64),
            ) {
                set.push(p, Region::LambdaV, cfg.weight_lambda_v);
            }
        }
        for &c in &split.lambda_0 {
            let s = derive_seed(seed, tag, 1 + c as u64);
            for p in delta1_points(lab, c, inflated.mu, cfg.per_component, s) {
                set.push(p, Region::Delta1, cfg.weight_delta1);
            }
        }
        set
    }

    pub fn push(&mut self, p: Vec<f64>, region: Region, weight: f64) {
        self.points.push(p);
        self.regions.push(region);
        self.weights.push(weight);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of one region.
    pub fn region(&self, r: Region) -> impl Iterator<Item = &Vec<f64>> {
        self.points
            .iter()
            .zip(&self.regions)
            .filter(move |(_, g)| **g == r)
            .map(|(p, _)| p)
    }
}

/// Points of `{dist(z, T) <= mu}` for one component `T`: ring samples of
/// the disc, and the same samples pushed by a random offset of length at
/// most `mu`.
pub fn delta1_points(
    lab: &TangentLabyrinth,
    c: usize,
    mu: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let base = disc_points(&lab.components()[c], count.div_ceil(2).max(1), seed);
    let mut r = rng(derive_seed(seed, "offset", 0));
    let dim = lab.components()[c].center().coords().len();
    let mut out = base.clone();
    for p in &base {
        let u = random_unit(dim, &mut r);
        let t = mu * r.random::<f64>();
        out.push(p.iter().zip(&u).map(|(x, v)| x + t * v).collect());
    }
    out
}

/// The deformation of the previous map on the zero-free components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhiSpec {
    /// `phi = F_prev` everywhere.
    Identity,
    /// `phi = F_prev + w0`.
    Shift { w0: Vec<Complex64> },
    /// `phi = C F_prev`.
    Scale { c: f64 },
}

impl PhiSpec {
    /// `phi(z)` on the zero-free components given `F_prev(z)`.
    pub fn apply(&self, prev: &[Complex64]) -> Vec<Complex64> {
        match self {
            PhiSpec::Identity => prev.to_vec(),
            PhiSpec::Shift { w0 } => prev.iter().zip(w0).map(|(a, b)| a + b).collect(),
            PhiSpec::Scale { c } => prev.iter().map(|a| a * *c).collect(),
        }
    }
}

/// Which deformation the step uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhiCase {
    Shift,
    Scale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiConfig {
    /// Added to `max |F_prev| + 1/lambda` in the shift.
    pub margin: f64,
    /// Factor above the least admissible scaling constant.
    pub headroom: f64,
    /// Smallest admissible `|F_prev|` on zero-free components when scaling.
    pub floor: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            headroom: 1.1,
            floor: 1e-8,
        }
    }
}

/// Picks the deformation from the values of `F_prev` on samples of the
/// zero-free components. No samples means no zero-free component.
pub fn choose_phi(
    f_prev: &CandidateMap,
    lambda0_points: &[Vec<f64>],
    lambda: f64,
    case: PhiCase,
    cfg: &PhiConfig,
) -> Result<PhiSpec, OkaWeilError> {
    if lambda0_points.is_empty() {
        return Ok(PhiSpec::Identity);
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(OkaWeilError::BadInput(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    let abs: Vec<f64> = lambda0_points.par_iter().map(|p| f_prev.abs(p)).collect();
    match case {
        PhiCase::Shift => {
            let m = abs.iter().cloned().fold(0.0, f64::max);
            let mut w0 = vec![Complex64::new(0.0, 0.0); f_prev.q()];
            w0[0] = Complex64::new(m + 1.0 / lambda + cfg.margin, 0.0);
            Ok(PhiSpec::Shift { w0 })
        }
        PhiCase::Scale => {
            let m = abs.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(m >= cfg.floor) {
                return Err(OkaWeilError::ZeroOnLambda0 {
                    min_abs: m,
                    floor: cfg.floor,
                });
            }
            Ok(PhiSpec::Scale {
                c: cfg.headroom / lambda / m,
            })
        }
    }
}

/// Target values of `W` per sample: `W_prev` where `phi = F_prev`, and
/// `(phi - h) / h^s` (or `phi - h` for maps whose zero set is not pinned)
/// on `DELTA_1`.
pub fn build_targets(
    phi: &PhiSpec,
    samples: &SampleSet,
    f_prev: &CandidateMap,
    division_floor: f64,
) -> Result<Vec<Vec<Complex64>>, OkaWeilError> {
    samples
        .points
        .par_iter()
        .zip(&samples.regions)
        .map(|(p, region)| {
            let z = to_complex(p);
            match region {
                Region::Ball | Region::LambdaV => {
                    Ok(f_prev.correction().iter().map(|w| w.eval(&z)).collect())
                }
                Region::Delta1 => {
                    let prev = f_prev.eval_complex(&z);
                    let phi_v = phi.apply(&prev);
                    f_prev
                        .divisor()
                        .components()
                        .iter()
                        .zip(phi_v)
                        .map(|(h, target)| {
                            let hv = h.eval(&z);
                            let factor = f_prev.weight_factor(hv);
                            if factor.norm() < division_floor {
                                return Err(OkaWeilError::DivisionFloor {
                                    value: factor.norm(),
                                    floor: division_floor,
                                });
                            }
                            Ok((target - hv) / factor)
                        })
                        .collect()
                }
            }
        })
        .collect()
}

/// `epsilon' = min(eps_j, lambda_j h_floor) / 4` with `h_floor` the least
/// `|h^s|` (or `1` for unpinned maps) over the `DELTA_1` samples.
pub fn eps_prime(eps_j: f64, lambda_j: f64, f_prev: &CandidateMap, samples: &SampleSet) -> f64 {
    let floor = samples
        .region(Region::Delta1)
        .map(|p| {
            let z = to_complex(p);
            f_prev
                .divisor()
                .components()
                .iter()
                .map(|h| f_prev.weight_factor(h.eval(&z)).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    if floor.is_finite() {
        eps_j.min(lambda_j * floor) / 4.0
    } else {
        eps_j / 4.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub degrees: Vec<u32>,
    /// Ridge parameter on the column-scaled problem.
    pub ridge: f64,
    pub division_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            degrees: vec![4, 6, 8, 10, 12, 14, 16, 18, 20, 24, 28],
            ridge: 1e-13,
            division_floor: 1e-12,
        }
    }
}

/// Sample-based checks of the downstream conditions, supplied by the caller.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    /// `|F_j - F_(j-1)| < eps_j` on the ball.
    pub close_to_previous: bool,
    /// Labyrinth values avoid `[lambda_j, 1/lambda_j]`.
    pub labyrinth_off_band: bool,
    /// No zeros off `V` near the labyrinths.
    pub no_zeros_near_labyrinth: bool,
    /// Submersive on the previous outer ball.
    pub submersive: Option<bool>,
    /// No zeros off `V` inside the ball (exact zero mode only).
    pub zero_free: Option<bool>,
    pub details: VerdictDetails,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.close_to_previous
            && self.labyrinth_off_band
            && self.no_zeros_near_labyrinth
            && self.submersive.unwrap_or(true)
            && self.zero_free.unwrap_or(true)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictDetails {
    pub max_step_change: f64,
    pub labyrinth_in_band: usize,
    pub min_avoidance_abs: Option<f64>,
    pub rank_margin: Option<f64>,
    pub zero_scan_min: Option<f64>,
    /// `|F_j|` on every labyrinth validation sample.
    pub labyrinth_abs: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub ball: f64,
    #[serde(rename = "lambda_V")]
    pub lambda_v: f64,
    pub delta1: f64,
}

/// One degree of the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeAttempt {
    pub degree: u32,
    pub residuals: Residuals,
    /// Least `|F_new|` on `DELTA_1` validation samples.
    pub delta1_min_abs: Option<f64>,
    /// Weighted root-sum-square residual of `W` on the training set.
    pub train_residual: f64,
    pub fit_ok: bool,
    pub verdicts: Option<Verdicts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub degree: u32,
    pub residuals: Residuals,
    pub eps_prime: f64,
    pub lambda: f64,
    pub verdicts: Verdicts,
    pub accepted: bool,
    pub attempts: Vec<DegreeAttempt>,
}

/// Result of [`fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub w: Vec<MultiPoly>,
    pub map: CandidateMap,
    pub report: FitReport,
}

/// Monomials `(z/scale)^alpha` for every exponent of `basis`.
fn monomial_row(z: &[Complex64], scale: f64, basis: &[Vec<u32>], max_deg: u32) -> Vec<Complex64> {
    let pows: Vec<Vec<Complex64>> = z
        .iter()
        .map(|zi| {
            let w = zi / scale;
            let mut v = Vec::with_capacity(max_deg as usize + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=max_deg {
                v.push(acc);
                acc *= w;
            }
            v
        })
        .collect();
    basis
        .iter()
        .map(|a| {
            a.iter()
                .enumerate()
                .fold(Complex64::new(1.0, 0.0), |acc, (k, &e)| {
                    acc * pows[k][e as usize]
                })
        })
        .collect()
}

/// Weighted least squares for `W` over monomials of degree at most `d` in
/// `z / scale`, solved by Householder QR after scaling every column to unit
/// norm, with optional ridge rows. Returns one polynomial per component
/// and the weighted training residual.
pub fn solve_degree(
    samples: &SampleSet,
    targets: &[Vec<Complex64>],
    n: usize,
    q: usize,
    d: u32,
    scale: f64,
    ridge: f64,
) -> Result<(Vec<MultiPoly>, f64), OkaWeilError> {
    let basis = monomial_basis(n, d);
    let m = samples.len();
    let cols = basis.len();
    let extra = if ridge > 0.0 { cols } else { 0 };
    let rows: Vec<Vec<Complex64>> = samples
        .points
        .par_iter()
        .zip(&samples.weights)
        .map(|(p, w)| {
            let sw = w.sqrt();
            monomial_row(&to_complex(p), scale, &basis, d)
                .into_iter()
                .map(|v| v * sw)
                .collect()
        })
        .collect();
    let mut a = DMatrix::<Complex64>::zeros(m + extra, cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let col_norms: Vec<f64> = (0..cols)
        .map(|j| {
            let s = a.column(j).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in col_norms.iter().enumerate() {
        a.column_mut(j).iter_mut().for_each(|v| *v /= *s);
    }
    for j in 0..extra {
        a[(m + j, j)] = Complex64::new(ridge.sqrt(), 0.0);
    }
    let mut b = DMatrix::<Complex64>::zeros(m + extra, q);
    for i in 0..m {
        let sw = samples.weights[i].sqrt();
        for k in 0..q {
            b[(i, k)] = targets[i][k] * sw;
        }
    }
    if m + extra < cols {
        return Err(OkaWeilError::BadInput(format!(
            "{} rows for {cols} unknowns",
            m + extra
        )));
    }
    let qr = a.clone().qr();
    let qb = qr.q().adjoint() * &b;
    let r = qr.r();
    let x = r.solve_upper_triangular(&qb).ok_or_else(|| {
        OkaWeilError::BadInput(format!("rank-deficient least squares at degree {d}"))
    })?;
    let resid = (&a * &x - &b)
        .rows(0, m)
        .iter()
        .map(|v| v.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let mut out = Vec::with_capacity(q);
    for k in 0..q {
        let coeffs: Vec<Complex64> = (0..cols).map(|j| x[(j, k)] / col_norms[j]).collect();
        out.push(MultiPoly::from_basis(n, scale, &basis, &coeffs).map_err(HoloError::from)?);
    }
    Ok((out, resid))
}

/// Largest `|F_new - phi|` per region and least `|F_new|` on `DELTA_1`.
fn validate(
    f_new: &CandidateMap,
    f_prev: &CandidateMap,
    phi: &PhiSpec,
    valid: &SampleSet,
) -> (Residuals, Option<f64>) {
    let per: Vec<(Region, f64, f64)> = valid
        .points
        .par_iter()
        .zip(&valid.regions)
        .map(|(p, region)| {
            let z = to_complex(p);
            let v = f_new.eval_complex(&z);
            let prev = f_prev.eval_complex(&z);
            let target = if *region == Region::Delta1 {
                phi.apply(&prev)
            } else {
                prev
            };
            let err = v
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let abs = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            (*region, err, abs)
        })
        .collect();
    let mut res = Residuals::default();
    let mut dmin: Option<f64> = None;
    for (region, err, abs) in per {
        match region {
            Region::Ball => res.ball = res.ball.max(err),
            Region::LambdaV => res.lambda_v = res.lambda_v.max(err),
            Region::Delta1 => {
                res.delta1 = res.delta1.max(err);
                dmin = Some(dmin.map_or(abs, |m: f64| m.min(abs)));
            }
        }
    }
    (res, dmin)
}

/// Runs the degree schedule and returns the first degree whose held-out
/// residual is below `eps_prime / 2` on the ball and on `lambda_V`, whose
/// `DELTA_1` values exceed `1/lambda`, and for which `check` passes.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    train: &SampleSet,
    targets: &[Vec<Complex64>],
    valid: &SampleSet,
    f_prev: &CandidateMap,
    phi: &PhiSpec,
    eps_prime: f64,
    lambda: f64,
    scale: f64,
    cfg: &FitConfig,
    check: &dyn Fn(&CandidateMap) -> Verdicts,
) -> Result<FitOutcome, OkaWeilError> {
    if cfg.degrees.is_empty() {
        return Err(OkaWeilError::BadInput("empty degree schedule".into()));
    }
    if train.validation || !valid.validation {
        return Err(OkaWeilError::BadInput(
            "training and validation sets are swapped".into(),
        ));
    }
    if targets.len() != train.len() {
        return Err(OkaWeilError::BadInput(format!(
            "{} targets for {} samples",
            targets.len(),
            train.len()
        )));
    }
    let (n, q) = (f_prev.n(), f_prev.q());
    let mut attempts = Vec::new();
    let mut best: Option<(f64, FitOutcome)> = None;
    for &d in &cfg.degrees {
        let (w, train_residual) = solve_degree(train, targets, n, q, d, scale, cfg.ridge)?;
        let map = f_prev.with_correction(w.clone())?;
        let (residuals, delta1_min_abs) = validate(&map, f_prev, phi, valid);
        let fit_ok = residuals.ball < eps_prime / 2.0
            && residuals.lambda_v < eps_prime / 2.0
            && delta1_min_abs.is_none_or(|m| m > 1.0 / lambda);
        let verdicts = fit_ok.then(|| check(&map));
        let accepted = verdicts.as_ref().is_some_and(|v| v.all());
        attempts.push(DegreeAttempt {
            degree: d,
            residuals: residuals.clone(),
            delta1_min_abs,
            train_residual,
            fit_ok,
            verdicts: verdicts.clone(),
        });
        let score = residuals.ball.max(residuals.lambda_v);
        let report = FitReport {
            degree: d,
            residuals,
            eps_prime,
            lambda,
            verdicts: verdicts.unwrap_or_default(),
            accepted,
            attempts: attempts.clone(),
        };
        let outcome = FitOutcome { w, map, report };
        if accepted {
            return Ok(outcome);
        }
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, outcome));
        }
    }
    let (best_residual, outcome) = best.expect("schedule is nonempty");
    let mut report = outcome.report;
    report.attempts = attempts;
    Err(OkaWeilError::DegreeCapExceeded {
        max_degree: *cfg.degrees.iter().max().expect("schedule is nonempty"),
        best_residual,
        report: Box::new(report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holo::Divisor;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn f0() -> CandidateMap {
        CandidateMap::initial(Divisor::coordinate_hyperplane(2), 2, true).unwrap()
    }

    fn single(p: Vec<f64>, region: Region) -> SampleSet {
        let mut s = SampleSet {
            points: Vec::new(),
            regions: Vec::new(),
            weights: Vec::new(),
            validation: false,
        };
        s.push(p, region, 1.0);
        s
    }

    #[test]
    fn shift_example() {
        // |F_prev| = |z1| on these points, maximum 1.5.
        let pts = vec![vec![1.5, 0.0, 0.0, 0.0], vec![0.5, 0.0, 0.1, 0.0]];
        let phi = choose_phi(
            &f0(),
            &pts,
            1.0 / 16.0,
            PhiCase::Shift,
            &PhiConfig::default(),
        )
        .unwrap();
        let PhiSpec::Shift { w0 } = &phi else {
            panic!("expected a shift")
        };
        assert!((w0[0].re - 18.5).abs() < 1e-12);
        for p in &pts {
            let v = phi.apply(&f0().eval(p));
            assert!(v[0].norm() >= 17.0 && v[0].norm() > 16.0);
        }
    }

    #[test]
    fn scale_example() {
        let pts = vec![vec![0.3, 0.0, 0.0, 0.0], vec![0.6, 0.0, 0.0, 0.0]];
        let phi = choose_phi(
            &f0(),
            &pts,
            1.0 / 16.0,
            PhiCase::Scale,
            &PhiConfig::default(),
        )
        .unwrap();
        let PhiSpec::Scale { c } = phi else {
            panic!("expected a scale")
        };
        assert!((c - 1.1 * 16.0 / 0.3).abs() < 1e-9);
        assert!((c - 58.667).abs() < 1e-3);
        assert!((c * 0.3 - 17.6).abs() < 1e-9);
    }

    #[test]
    fn scale_rejects_zero_on_lambda0() {
        let pts = vec![vec![0.0, 0.0, 0.5, 0.0]];
        let r = choose_phi(&f0(), &pts, 0.25, PhiCase::Scale, &PhiConfig::default());
        assert!(matches!(r, Err(OkaWeilError::ZeroOnLambda0 { .. })));
    }

    #[test]
    fn empty_lambda0_gives_identity() {
        assert_eq!(
            choose_phi(&f0(), &[], 0.25, PhiCase::Shift, &PhiConfig::default()).unwrap(),
            PhiSpec::Identity
        );
    }

    /// Inverts the ansatz: the target `t` is right when `h + h^s t = phi`.
    fn check_inversion(f_prev: &CandidateMap, phi: &PhiSpec, p: &[f64], t: Complex64) {
        let z = to_complex(p);
        let h = z[0];
        let phi_v = phi.apply(&f_prev.eval_complex(&z))[0];
        assert!((h + h * h * t - phi_v).norm() < 1e-10 * phi_v.norm().max(1.0));
    }

    #[test]
    fn target_examples() {
        let w_prev = MultiPoly::new(
            2,
            1.0,
            vec![crate::poly::Term {
                alpha: vec![0, 1],
                coeff: Complex64::new(0.3, -0.2),
            }],
        )
        .unwrap();
        let f_prev = f0().with_correction(vec![w_prev.clone()]).unwrap();
        let p = vec![0.77, 0.0, 0.2, 0.1];
        let z = to_complex(&p);

        let ball = build_targets(
            &PhiSpec::Identity,
            &single(p.clone(), Region::Ball),
            &f_prev,
            1e-12,
        )
        .unwrap();
        assert_eq!(ball[0][0], w_prev.eval(&z));

        let shift = PhiSpec::Shift { w0: vec![c(18.5)] };
        let t = build_targets(&shift, &single(p.clone(), Region::Delta1), &f_prev, 1e-12).unwrap()
            [0][0];
        assert!((t - w_prev.eval(&z) - c(18.5 / 0.5929)).norm() < 1e-9);
        assert!(((t - w_prev.eval(&z)).re - 31.203).abs() < 1e-3);
        check_inversion(&f_prev, &shift, &p, t);

        let scale = PhiSpec::Scale { c: 58.667 };
        let t =
            build_targets(&scale, &single(p.clone(), Region::Delta1), &f0(), 1e-12).unwrap()[0][0];
        assert!((t.re - 74.892).abs() < 1e-3 && t.im.abs() < 1e-12);
        check_inversion(&f0(), &scale, &p, t);
    }

    #[test]
    fn division_floor_is_enforced() {
        let r = build_targets(
            &PhiSpec::Scale { c: 2.0 },
            &single(vec![0.0, 0.0, 0.5, 0.0], Region::Delta1),
            &f0(),
            1e-12,
        );
        assert!(matches!(r, Err(OkaWeilError::DivisionFloor { .. })));
    }

    fn ball_set(count: usize, seed: u64, validation: bool) -> SampleSet {
        let mut s = SampleSet {
            points: Vec::new(),
            regions: Vec::new(),
            weights: Vec::new(),
            validation,
        };
        for p in ball_points(2, 0.8, count, seed) {
            s.push(p, Region::Ball, 1.0);
        }
        s
    }

    fn pass_all(_: &CandidateMap) -> Verdicts {
        Verdicts {
            close_to_previous: true,
            labyrinth_off_band: true,
            no_zeros_near_labyrinth: true,
            ..Default::default()
        }
    }

    #[test]
    fn identity_targets_reproduce_w_prev() {
        let w_prev = MultiPoly::new(
            2,
            1.0,
            vec![
                crate::poly::Term {
                    alpha: vec![1, 1],
                    coeff: Complex64::new(0.3, -0.2),
                },
                crate::poly::Term {
                    alpha: vec![0, 0],
                    coeff: c(0.1),
                },
            ],
        )
        .unwrap();
        let f_prev = f0().with_correction(vec![w_prev]).unwrap();
        let train = ball_set(300, 1, false);
        let valid = ball_set(300, 2, true);
        let targets = build_targets(&PhiSpec::Identity, &train, &f_prev, 1e-12).unwrap();
        let cfg = FitConfig {
            degrees: vec![2, 4],
            ridge: 0.0,
            ..Default::default()
        };
        let out = fit(
            &train,
            &targets,
            &valid,
            &f_prev,
            &PhiSpec::Identity,
            1e-6,
            0.25,
            0.9,
            &cfg,
            &pass_all,
        )
        .unwrap();
        assert_eq!(out.report.degree, 2);
        assert!(out.report.residuals.ball < 1e-12);
    }

    #[test]
    fn polynomial_target_is_exact_at_its_degree() {
        let train = ball_set(400, 3, false);
        let valid = ball_set(200, 4, true);
        let exact =
            |z: &[Complex64]| z[0] * z[0] * z[1] - z[1].powu(3) * Complex64::new(0.0, 2.0) + c(0.5);
        let targets: Vec<Vec<Complex64>> = train
            .points
            .iter()
            .map(|p| vec![exact(&to_complex(p))])
            .collect();
        let (w, resid) = solve_degree(&train, &targets, 2, 1, 3, 0.9, 0.0).unwrap();
        assert!(resid < 1e-10);
        for p in &valid.points {
            let z = to_complex(p);
            assert!((w[0].eval(&z) - exact(&z)).norm() < 1e-10);
        }
    }

    #[test]
    fn residual_is_nonincreasing_in_degree_without_ridge() {
        let train = ball_set(500, 5, false);
        let targets: Vec<Vec<Complex64>> = train
            .points
            .iter()
            .map(|p| {
                let z = to_complex(p);
                vec![(z[0] * 2.0).exp() / (c(1.5) - z[1])]
            })
            .collect();
        let mut last = f64::INFINITY;
        for d in [1, 2, 3, 4, 6, 8] {
            let (_, r) = solve_degree(&train, &targets, 2, 1, d, 0.9, 0.0).unwrap();
            assert!(r <= last * (1.0 + 1e-9), "degree {d}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn fit_reports_degree_cap() {
        let train = ball_set(200, 6, false);
        let valid = ball_set(100, 7, true);
        let targets: Vec<Vec<Complex64>> = train
            .points
            .iter()
            .map(|p| vec![c(1.0 / (0.81 - to_complex(p)[0].re))])
            .collect();
        let cfg = FitConfig {
            degrees: vec![1, 2],
            ridge: 0.0,
            ..Default::default()
        };
        let r = fit(
            &train,
            &targets,
            &valid,
            &f0(),
            &PhiSpec::Identity,
            1e-9,
            0.25,
            0.9,
            &cfg,
            &pass_all,
        );
        let Err(OkaWeilError::DegreeCapExceeded {
            report, max_degree, ..
        }) = r
        else {
            panic!("expected cap")
        };
        assert_eq!(max_degree, 2);
        assert_eq!(report.attempts.len(), 2);
        assert!(!report.accepted);
    }
}
