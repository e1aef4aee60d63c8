//! The inductive construction: starting from `F_0 = h`, every step builds a
//! labyrinth in the next shell, deforms the current map on its zero-free
//! components and fits a new correction, checking each condition the next
//! map must satisfy on samples before accepting it.

use crate::geometry::{norm, to_complex, Shell};
use crate::holo::{
    cauchy_epsilon, min_rank_margin, sample_zero_set, CandidateMap, Divisor, EpsilonBudget,
    HoloError,
};
use crate::labyrinth::{
    build, inflate, nesting_order, split, AvoidanceNeighborhood, BuildConfig, InflateConfig,
    InflatedPair, LabyrinthError, LabyrinthRecord, NestingCertificate, SplitConfig,
};
use crate::okaweil::{
    build_targets, choose_phi, delta1_points, eps_prime, fit, FitConfig, FitReport, OkaWeilError,
    PhiCase, PhiConfig, PhiSpec, Region, SampleConfig, SampleSet, VerdictDetails, Verdicts,
};
use crate::sampling::{ball_points, derive_seed, disc_points, random_unit, rng};
use crate::verify::zeros::{zero_avoidance, Neighborhood, ZeroScanConfig};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InductionError {
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("invalid mode: {0}")]
    BadMode(String),
    #[error("h is not submersive on the ball samples: rank margin {margin} <= {floor}")]
    NotSubmersive { margin: f64, floor: f64 },
    #[error("no tube radius above {floor} keeps |F| < {lambda} near V")]
    EtaFloor { lambda: f64, floor: f64 },
    #[error(
        "no step j <= {steps} has lambda_j + eps_j < {lambda} < 1/lambda < 1/lambda_j - eps_j"
    )]
    NotReached { lambda: f64, steps: usize },
    #[error("all {0} scheduled steps are done")]
    Finished(usize),
    #[error(transparent)]
    Holo(#[from] HoloError),
    #[error(transparent)]
    Labyrinth(#[from] LabyrinthError),
    #[error(transparent)]
    Fit(#[from] OkaWeilError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Fibers off `V` are complete and `f` agrees with `h` to order `s` on `V`.
    Interpolate,
    /// As `Interpolate`, and additionally `f^{-1}(0) = V`.
    ExactZero,
    /// No divisor is pinned; every fiber is complete.
    AllComplete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Ambient {
    Ball,
    FullSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub variant: Variant,
    pub ambient: Ambient,
}

impl Default for Mode {
    fn default() -> Self {
        Self {
            variant: Variant::ExactZero,
            ambient: Ambient::Ball,
        }
    }
}

impl Mode {
    /// Whether the zero set of the maps is pinned to `V`.
    pub fn pinned(&self) -> bool {
        self.variant != Variant::AllComplete
    }
}

/// Interlaced radii `R_0 < r_1 < R_1 < r_2 < ...`, crossing costs and band
/// parameters, indexed so that entry `j - 1` belongs to step `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// `R_0`: the ball on which the first map must stay submersive.
    pub base: f64,
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
    pub delta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Schedule {
    /// `r_j = 1 - 2^{-j-1}`, `R_j = (r_j + r_{j+1}) / 2`, `delta_j = j`,
    /// `lambda_j = 4^{-j}`.
    pub fn default_ball(steps: usize) -> Self {
        let r = |j: usize| 1.0 - 0.5f64.powi(j as i32 + 1);
        Self::from_radii(steps, r)
    }

    /// `r_j = 2^j` with the same interlacing, costs and band parameters.
    pub fn default_full_space(steps: usize) -> Self {
        Self::from_radii(steps, |j| 2f64.powi(j as i32))
    }

    fn from_radii(steps: usize, r: impl Fn(usize) -> f64) -> Self {
        Self {
            base: 0.5 * (r(0) + r(1)),
            inner: (1..=steps).map(&r).collect(),
            outer: (1..=steps).map(|j| 0.5 * (r(j) + r(j + 1))).collect(),
            delta: (1..=steps).map(|j| j as f64).collect(),
            lambda: (1..=steps).map(|j| 0.25f64.powi(j as i32)).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.inner.len()
    }

    pub fn validate(&self, ambient: Ambient) -> Result<(), InductionError> {
        let j = self.steps();
        if j == 0 {
            return Err(InductionError::BadSchedule("no steps".into()));
        }
        if self.outer.len() != j || self.delta.len() != j || self.lambda.len() != j {
            return Err(InductionError::BadSchedule(
                "inner, outer, delta and lambda must have equal lengths".into(),
            ));
        }
        if !(self.base > 0.0) {
            return Err(InductionError::BadSchedule(format!(
                "R_0 = {} must be positive",
                self.base
            )));
        }
        let mut last = self.base;
        for k in 0..j {
            if !(last < self.inner[k]) {
                return Err(InductionError::BadSchedule(format!(
                    "radii must interlace: R_{k} = {last} is not below r_{} = {}",
                    k + 1,
                    self.inner[k]
                )));
            }
            if !(self.inner[k] < self.outer[k]) {
                return Err(InductionError::BadSchedule(format!(
                    "radii must interlace: r_{0} = {1} is not below R_{0} = {2}",
                    k + 1,
                    self.inner[k],
                    self.outer[k]
                )));
            }
            last = self.outer[k];
        }
        if ambient == Ambient::Ball && !(last < 1.0) {
            return Err(InductionError::BadSchedule(format!(
                "R_{j} = {last} leaves the unit ball"
            )));
        }
        if !self.delta.iter().all(|d| *d > 0.0) || !self.delta.windows(2).all(|w| w[0] < w[1]) {
            return Err(InductionError::BadSchedule(
                "delta_j must be positive and strictly increasing".into(),
            ));
        }
        if !self.lambda.iter().all(|l| *l > 0.0 && *l < 1.0)
            || !self.lambda.windows(2).all(|w| w[0] > w[1])
        {
            return Err(InductionError::BadSchedule(
                "lambda_j must lie in (0, 1) and strictly decrease".into(),
            ));
        }
        Ok(())
    }

    /// `R_{j-1}`, with `R_0 = base`.
    pub fn prev_outer(&self, j: usize) -> f64 {
        if j == 1 {
            self.base
        } else {
            self.outer[j - 2]
        }
    }

    pub fn shell(&self, j: usize) -> Result<Shell, InductionError> {
        Shell::new(self.inner[j - 1], self.outer[j - 1])
            .map_err(|e| InductionError::BadSchedule(e.to_string()))
    }

    /// Coordinate scale of the fitted monomials: `r_{j+1}`, extrapolated
    /// as `2 R_j - r_j`.
    pub fn fit_scale(&self, j: usize) -> f64 {
        2.0 * self.outer[j - 1] - self.inner[j - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtaConfig {
    /// The first candidate is `factor lambda / max |dF|` over `V`.
    pub factor: f64,
    /// Each further candidate is the previous one times `factor`.
    pub max_tries: usize,
    pub floor: f64,
    pub v_samples: usize,
    pub offsets_per_point: usize,
    /// Minimal `|G|` off `V` inside the tube.
    pub zero_floor: f64,
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self {
            factor: 0.9,
            max_tries: 200,
            floor: 1e-9,
            v_samples: 500,
            offsets_per_point: 8,
            zero_floor: 1e-6,
        }
    }
}

/// Everything a step needs besides the schedule and mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InductionConfig {
    pub order: u32,
    pub eps0: f64,
    pub safety: f64,
    pub seed: u64,
    pub rank_samples: usize,
    pub rank_floor: f64,
    pub eta: EtaConfig,
    pub build: BuildConfig,
    pub split: SplitConfig,
    pub inflate: InflateConfig,
    pub samples: SampleConfig,
    pub phi: PhiConfig,
    pub fit: FitConfig,
    /// Labyrinth validation samples per component.
    pub check_per_component: usize,
    /// Samples per component of the avoidance neighborhoods.
    pub avoidance_per_component: usize,
    /// `|h|` below this counts as lying on `V`.
    pub v_tol: f64,
    /// `|G|` below this counts as a zero of the map off `V`.
    pub zero_floor: f64,
    /// Multi-start zero scan run inside every step in exact zero mode.
    pub step_zero_scan: ZeroScanConfig,
    pub final_samples: usize,
}

impl Default for InductionConfig {
    fn default() -> Self {
        Self {
            order: 2,
            eps0: 0.1,
            safety: 4.0,
            seed: 0,
            rank_samples: 4000,
            rank_floor: 1e-9,
            eta: EtaConfig::default(),
            build: BuildConfig::default(),
            split: SplitConfig::default(),
            inflate: InflateConfig::default(),
            samples: SampleConfig::default(),
            phi: PhiConfig::default(),
            fit: FitConfig::default(),
            check_per_component: 256,
            avoidance_per_component: 64,
            v_tol: 1e-8,
            zero_floor: 1e-6,
            step_zero_scan: ZeroScanConfig {
                starts: 200,
                ..ZeroScanConfig::default()
            },
            final_samples: 4096,
        }
    }
}

/// The record of one accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub j: usize,
    pub eps: f64,
    pub eta: Option<f64>,
    pub delta: f64,
    pub lambda: f64,
    pub labyrinth: LabyrinthRecord,
    pub inflated: InflatedPair,
    pub nesting: NestingCertificate,
    pub phi: PhiSpec,
    pub fit: FitReport,
    pub map: CandidateMap,
}

impl StepRecord {
    /// The avoidance neighborhood `O_j`.
    pub fn neighborhood(&self) -> Neighborhood {
        Neighborhood {
            step: self.j,
            components: self.labyrinth.labyrinth.components().to_vec(),
            margin: self.labyrinth.nu,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InductionState {
    pub mode: Mode,
    pub maps: Vec<CandidateMap>,
    pub eps: EpsilonBudget,
    pub records: Vec<StepRecord>,
    pub initial_margin: f64,
}

impl InductionState {
    /// Index of the last accepted step.
    pub fn j(&self) -> usize {
        self.records.len()
    }

    pub fn current(&self) -> &CandidateMap {
        self.maps.last().expect("F_0 is always present")
    }

    /// Rebuilds a state from accepted records, re-checking the budget.
    pub fn resume(
        mode: Mode,
        f0: CandidateMap,
        eps0: f64,
        initial_margin: f64,
        records: Vec<StepRecord>,
    ) -> Result<Self, InductionError> {
        let mut eps = EpsilonBudget::new(eps0)?;
        let mut maps = vec![f0];
        for r in &records {
            eps.push(r.eps)?;
            maps.push(r.map.clone());
        }
        Ok(Self {
            mode,
            maps,
            eps,
            records,
            initial_margin,
        })
    }
}

/// `F_0 = h` after checking that `h` is submersive on the closed ball of
/// radius `radius`.
pub fn init(
    h: Divisor,
    mode: Mode,
    radius: f64,
    cfg: &InductionConfig,
) -> Result<InductionState, InductionError> {
    if !h.is_smooth() {
        return Err(InductionError::BadMode(
            "only smooth divisors are supported".into(),
        ));
    }
    let pts = ball_points(
        h.n(),
        radius,
        cfg.rank_samples,
        derive_seed(cfg.seed, "init-rank", 0),
    );
    let f0 = CandidateMap::initial(h, cfg.order, mode.pinned())?;
    let margin = min_rank_margin(&f0, &pts);
    if !(margin > cfg.rank_floor) {
        return Err(InductionError::NotSubmersive {
            margin,
            floor: cfg.rank_floor,
        });
    }
    Ok(InductionState {
        mode,
        maps: vec![f0],
        eps: EpsilonBudget::new(cfg.eps0)?,
        records: Vec::new(),
        initial_margin: margin,
    })
}

/// Tube radius `eta` with `|F| < lambda` and `F != 0` off `V` on sampled
/// points of `R B` within `eta` of `V`. `None` when the map is not pinned
/// to a divisor.
pub fn compute_eta(
    f: &CandidateMap,
    radius: f64,
    lambda: f64,
    cfg: &EtaConfig,
    seed: u64,
) -> Result<Option<f64>, InductionError> {
    if !f.is_pinned() {
        return Ok(None);
    }
    let h = f.divisor();
    let vs = sample_zero_set(h, radius, cfg.v_samples, derive_seed(seed, "eta-v", 0));
    if vs.is_empty() {
        return Ok(None);
    }
    let grad_max = vs
        .par_iter()
        .map(|v| {
            let j = f.jacobian(v);
            j.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
        })
        .reduce(|| 0.0, f64::max);
    if !(grad_max > 0.0) {
        return Err(InductionError::EtaFloor {
            lambda,
            floor: cfg.floor,
        });
    }
    let mut r = rng(derive_seed(seed, "eta-offsets", 0));
    let dim = 2 * f.n();
    let offsets: Vec<(usize, Vec<f64>, f64)> = (0..vs.len())
        .flat_map(|i| (0..cfg.offsets_per_point).map(move |k| (i, k)))
        .map(|(i, k)| {
            let u = random_unit(dim, &mut r);
            // Keep one offset per point on the tube boundary direction at full length.
            let t = if k == 0 {
                1.0 - 1e-12
            } else {
                r.random::<f64>()
            };
            (i, u, t)
        })
        .collect();
    let mut eta = cfg.factor * lambda / grad_max;
    for _ in 0..cfg.max_tries {
        if eta < cfg.floor {
            break;
        }
        let ok = offsets.par_iter().all(|(i, u, t)| {
            let p: Vec<f64> = vs[*i].iter().zip(u).map(|(a, b)| a + eta * t * b).collect();
            if norm(&p) > radius {
                return true;
            }
            let z = to_complex(&p);
            let fv: f64 = f
                .eval_complex(&z)
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
            if !(fv < lambda) {
                return false;
            }
            if h.abs(&z) > 0.0 {
                f.extra_zero_factor(&z)
                    .iter()
                    .all(|(g, _)| g.norm() > cfg.zero_floor)
            } else {
                true
            }
        });
        if ok {
            return Ok(Some(eta));
        }
        eta *= cfg.factor;
    }
    Err(InductionError::EtaFloor {
        lambda,
        floor: cfg.floor,
    })
}

/// Points within `margin` of every component of a recorded labyrinth.
fn neighborhood_points(rec: &LabyrinthRecord, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..rec.labyrinth.len())
        .flat_map(|c| {
            delta1_points(
                &rec.labyrinth,
                c,
                rec.nu,
                count,
                derive_seed(seed, "avoid", c as u64),
            )
        })
        .collect()
}

/// Runs step `j = state.j() + 1` and appends its record on success.
pub fn step<'a>(
    state: &'a mut InductionState,
    schedule: &Schedule,
    cfg: &InductionConfig,
) -> Result<&'a StepRecord, InductionError> {
    let j = state.j() + 1;
    if j > schedule.steps() {
        return Err(InductionError::Finished(schedule.steps()));
    }
    let f_prev = state.current().clone();
    let n = f_prev.n();
    let seed = derive_seed(cfg.seed, "step", j as u64);
    let (r_j, big_r_j) = (schedule.inner[j - 1], schedule.outer[j - 1]);
    let (delta, lambda) = (schedule.delta[j - 1], schedule.lambda[j - 1]);

    let rank_pts = ball_points(
        n,
        schedule.prev_outer(j),
        cfg.rank_samples,
        derive_seed(seed, "rank", 0),
    );
    let eps_prev = state
        .eps
        .values()
        .last()
        .copied()
        .expect("budget starts with eps_0");
    let eps = cauchy_epsilon(
        &f_prev,
        schedule.prev_outer(j),
        r_j,
        eps_prev,
        cfg.safety,
        &rank_pts,
    )?;

    let eta = compute_eta(
        &f_prev,
        big_r_j,
        lambda,
        &cfg.eta,
        derive_seed(seed, "eta", 0),
    )?;
    let shell = schedule.shell(j)?;
    let mut bcfg = cfg.build.clone();
    bcfg.seed = derive_seed(seed, "build", 0);
    let lab = build(&shell, delta, eta, n, &bcfg)?;
    let v = f_prev.is_pinned().then(|| f_prev.divisor().clone());
    let mut scfg = cfg.split.clone();
    scfg.seed = derive_seed(seed, "split", 0);
    let sp = split(&lab, v.as_ref(), &scfg)?;
    let mut icfg = cfg.inflate.clone();
    icfg.seed = derive_seed(seed, "inflate", 0);
    let inflated = inflate(&sp, &lab, v.as_ref(), r_j, &icfg)?;
    let avoid = AvoidanceNeighborhood::new(&lab, &inflated);
    let nesting = nesting_order(&lab, r_j)?;
    let record = LabyrinthRecord {
        labyrinth: lab,
        split: sp,
        mu: inflated.mu,
        nu: avoid.margin,
    };
    let lab = &record.labyrinth;

    let train = SampleSet::build(
        n,
        r_j,
        lab,
        &record.split,
        &inflated,
        &cfg.samples,
        seed,
        false,
    );
    let valid = SampleSet::build(
        n,
        r_j,
        lab,
        &record.split,
        &inflated,
        &cfg.samples,
        seed,
        true,
    );
    let lambda0_pts: Vec<Vec<f64>> = train
        .region(Region::Delta1)
        .chain(valid.region(Region::Delta1))
        .cloned()
        .collect();
    let case = if state.mode.variant == Variant::ExactZero {
        PhiCase::Scale
    } else {
        PhiCase::Shift
    };
    let phi = choose_phi(&f_prev, &lambda0_pts, lambda, case, &cfg.phi)?;
    let targets = build_targets(&phi, &train, &f_prev, cfg.fit.division_floor)?;
    let eps_p = eps_prime(eps, lambda, &f_prev, &train);

    let lab_pts: Vec<Vec<f64>> = lab
        .components()
        .iter()
        .enumerate()
        .flat_map(|(c, b)| {
            disc_points(
                b,
                cfg.check_per_component,
                derive_seed(seed, "check", c as u64),
            )
        })
        .collect();
    let mut protected: Vec<Neighborhood> = state.records.iter().map(|r| r.neighborhood()).collect();
    protected.push(Neighborhood {
        step: j,
        components: lab.components().to_vec(),
        margin: record.nu,
    });
    let mut avoid_pts = neighborhood_points(&record, cfg.avoidance_per_component, seed);
    for r in &state.records {
        avoid_pts.extend(neighborhood_points(
            &r.labyrinth,
            cfg.avoidance_per_component,
            derive_seed(cfg.seed, "step", r.j as u64),
        ));
    }
    let ball_valid: Vec<&Vec<f64>> = valid.region(Region::Ball).collect();
    let all_complete = state.mode.variant == Variant::AllComplete;
    let exact_zero = state.mode.variant == Variant::ExactZero;
    let mut zcfg = cfg.step_zero_scan.clone();
    zcfg.radius = r_j;
    zcfg.seed = derive_seed(seed, "zero-scan", 0);

    let check = |f_new: &CandidateMap| -> Verdicts {
        let max_step_change = ball_valid
            .par_iter()
            .map(|p| {
                let (a, b) = (f_new.eval(p), f_prev.eval(p));
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .reduce(|| 0.0, f64::max);
        let labyrinth_abs: Vec<f64> = lab_pts.par_iter().map(|p| f_new.abs(p)).collect();
        let labyrinth_in_band = labyrinth_abs
            .iter()
            .filter(|&&a| {
                if all_complete {
                    a <= 1.0 / lambda
                } else {
                    a >= lambda && a <= 1.0 / lambda
                }
            })
            .count();
        let min_avoidance_abs = if f_new.is_pinned() {
            avoid_pts
                .par_iter()
                .filter_map(|p| {
                    let z = to_complex(p);
                    (f_new.divisor().abs(&z) > cfg.v_tol).then(|| {
                        f_new
                            .extra_zero_factor(&z)
                            .iter()
                            .map(|(g, _)| g.norm())
                            .fold(f64::INFINITY, f64::min)
                    })
                })
                .reduce(|| f64::INFINITY, f64::min)
        } else {
            f64::INFINITY
        };
        let rank_margin = min_rank_margin(f_new, &rank_pts);
        let zero_scan_min = exact_zero.then(|| zero_avoidance(f_new, &protected, &zcfg));
        Verdicts {
            close_to_previous: max_step_change < eps,
            labyrinth_off_band: labyrinth_in_band == 0,
            no_zeros_near_labyrinth: min_avoidance_abs > cfg.zero_floor,
            submersive: Some(rank_margin > 0.0),
            zero_free: zero_scan_min.as_ref().map(|s| s.zero_free()),
            details: VerdictDetails {
                max_step_change,
                labyrinth_in_band,
                min_avoidance_abs: min_avoidance_abs.is_finite().then_some(min_avoidance_abs),
                rank_margin: Some(rank_margin),
                zero_scan_min: zero_scan_min.map(|s| s.min_value),
                labyrinth_abs,
            },
        }
    };
    let out = fit(
        &train,
        &targets,
        &valid,
        &f_prev,
        &phi,
        eps_p,
        lambda,
        schedule.fit_scale(j),
        &cfg.fit,
        &check,
    )?;

    state.eps.push(eps)?;
    state.maps.push(out.map.clone());
    state.records.push(StepRecord {
        j,
        eps,
        eta,
        delta,
        lambda,
        labyrinth: record,
        inflated,
        nesting,
        phi,
        fit: out.report,
        map: out.map,
    });
    Ok(state.records.last().expect("just pushed"))
}

/// Smallest `j <= steps` with `lambda_j + eps_j < lambda` and
/// `1/lambda < 1/lambda_j - eps_j`. `eps[j]` is `eps_j`, starting at `eps_0`.
pub fn j_lambda(
    schedule: &Schedule,
    eps: &[f64],
    lambda: f64,
    steps: usize,
) -> Result<usize, InductionError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(InductionError::NotReached { lambda, steps });
    }
    (1..=steps.min(schedule.steps()).min(eps.len().saturating_sub(1)))
        .find(|&j| {
            let (lj, ej) = (schedule.lambda[j - 1], eps[j]);
            lj + ej < lambda && 1.0 / lambda < 1.0 / lj - ej
        })
        .ok_or(InductionError::NotReached { lambda, steps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub j: usize,
    pub eps: f64,
    /// `sum_{i=j}^{J} eps_i`.
    pub tail_sum: f64,
    /// `2 eps_j`.
    pub bound: f64,
    pub tail_holds: bool,
    /// Largest sampled `|F_J - F_{j-1}|` on the ball of radius `r_j`.
    pub sampled_drift: f64,
    pub sampled_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalArtifact {
    pub steps: usize,
    pub map: CandidateMap,
    pub eps: Vec<f64>,
    pub ledger: Vec<LedgerEntry>,
    /// `2 eps_{J+1}` would be at most `eps_J`: the drift a further step may add.
    pub continuation_budget: f64,
    pub note: String,
}

/// Truncation ledger of the last map.
pub fn finalize(
    state: &InductionState,
    schedule: &Schedule,
    cfg: &InductionConfig,
) -> FinalArtifact {
    let big_j = state.j();
    let eps = state.eps.values().to_vec();
    let f_j = state.current();
    let ledger = (1..=big_j)
        .map(|j| {
            let tail_sum: f64 = eps[j..=big_j].iter().sum();
            let pts = ball_points(
                f_j.n(),
                schedule.inner[j - 1],
                cfg.final_samples,
                derive_seed(cfg.seed, "final", j as u64),
            );
            let prev = &state.maps[j - 1];
            let drift = pts
                .par_iter()
                .map(|p| {
                    let (a, b) = (f_j.eval(p), prev.eval(p));
                    a.iter()
                        .zip(&b)
                        .map(|(x, y)| (x - y).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                })
                .reduce(|| 0.0, f64::max);
            LedgerEntry {
                j,
                eps: eps[j],
                tail_sum,
                bound: 2.0 * eps[j],
                tail_holds: tail_sum < 2.0 * eps[j],
                sampled_drift: drift,
                sampled_holds: drift < 2.0 * eps[j],
            }
        })
        .collect();
    FinalArtifact {
        steps: big_j,
        map: f_j.clone(),
        continuation_budget: eps.last().copied().unwrap_or(0.0),
        eps,
        ledger,
        note: "F_J is the deliverable. The limit of the infinite sequence is not computed; each further step would move \
               the map by less than its own budget, and all further steps together by less than 2 eps_{J+1}."
            .into(),
    }
}
