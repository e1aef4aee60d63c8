//! Tangent labyrinths: tidy families of tangent balls in a spherical shell
//! that make every crossing path long, together with their split relative
//! to a divisor, the inflated neighborhoods used by the deformation step,
//! and the radial nesting certificate.

use crate::geometry::{
    dist, norm, validate_tidy_with, AmbientPoint, GeometryError, Shell, TangentBall,
    TidyCertificate, DEFAULT_TOL,
};
use crate::holo::{sample_zero_set, Divisor};
use crate::sampling::{
    derive_seed, disc_points, min_separation_angle, random_rotation, rotate, sphere_net,
};
use crate::verify::path::{search, ObstacleField, PathSearchConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabyrinthError {
    #[error("invalid labyrinth input: {0}")]
    BadInput(String),
    #[error(
        "labyrinth not certified after {attempts} refinements ({levels} levels, {components} components); \
         shortest crossing found {best_length:?}"
    )]
    BuildBudgetExceeded {
        attempts: usize,
        levels: usize,
        components: usize,
        best_length: Option<f64>,
    },
    #[error("component {component}: min |h| = {min_abs} lies in the guard band [{tol}, {upper})")]
    AmbiguousClassification {
        component: usize,
        min_abs: f64,
        tol: f64,
        upper: f64,
    },
    #[error("inflation margin {mu} is below the floor {floor}")]
    DegenerateMargin { mu: f64, floor: f64 },
    #[error("levels {lower} and {upper} cannot be separated by a sphere")]
    NoSeparation { lower: usize, upper: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Refinement loop parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Radial levels of the first attempt; doubled on every refinement.
    pub initial_levels: usize,
    /// Angular step of the first spherical net; halved on every refinement.
    pub initial_theta: f64,
    /// Fraction of the largest admissible radius actually used.
    pub c_gap: f64,
    /// Position of the reduced outer radius between `r` and its upper bound.
    pub r0_fraction: f64,
    pub max_refinements: usize,
    /// Hard cap on the number of balls of one attempt.
    pub max_components: usize,
    /// Rotate the net of every level after the first by a seeded rotation.
    pub stagger: bool,
    pub seed: u64,
    pub tol: f64,
    pub certify: PathSearchConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            initial_levels: 1,
            initial_theta: PI / 2.0,
            c_gap: 0.9,
            r0_fraction: 0.9,
            max_refinements: 6,
            max_components: 300_000,
            stagger: true,
            seed: 0,
            tol: DEFAULT_TOL,
            certify: PathSearchConfig::default(),
        }
    }
}

/// How the crossing cost was established.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// `delta <= 0`: every path qualifies.
    Trivial,
    /// The shell is thicker than `delta`, so every crossing is longer than
    /// `delta` by the triangle inequality.
    Thickness { thickness: f64 },
    /// The path search found no crossing of length at most `delta`.
    Search {
        restarts: usize,
        best_length: Option<f64>,
        warning: Option<String>,
    },
}

/// A certified labyrinth in the reduced shell `r < |z| < R0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentLabyrinth {
    shell: Shell,
    r0: f64,
    components: Vec<TangentBall>,
    levels: Vec<usize>,
    tidy: TidyCertificate,
    delta: f64,
    eta: Option<f64>,
    certificate: Certificate,
}

#[derive(Serialize, Deserialize)]
struct ShellRw {
    r: f64,
    #[serde(rename = "R")]
    big_r: f64,
}

#[derive(Serialize, Deserialize)]
struct ComponentWire {
    center: AmbientPoint,
    radius: f64,
    level: usize,
}

#[derive(Serialize, Deserialize)]
struct LabyrinthWire {
    shell: ShellRw,
    #[serde(rename = "R0")]
    r0: f64,
    components: Vec<ComponentWire>,
    delta: f64,
    eta: Option<f64>,
    certificate: Certificate,
}

impl Serialize for TangentLabyrinth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.wire().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TangentLabyrinth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = LabyrinthWire::deserialize(d)?;
        let shell = Shell::new(w.shell.r, w.shell.big_r).map_err(serde::de::Error::custom)?;
        let balls = w
            .components
            .into_iter()
            .map(|c| TangentBall::new(c.center, c.radius))
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        let mut l = TangentLabyrinth::from_components(shell, w.r0, balls, w.delta, w.eta)
            .map_err(serde::de::Error::custom)?;
        l.certificate = w.certificate;
        Ok(l)
    }
}

impl TangentLabyrinth {
    /// Wraps an explicit family of balls, checking tidiness, the reduced
    /// shell and the diameter bound. The certificate is left as `Trivial`
    /// when `delta <= 0` and as an empty search record otherwise.
    pub fn from_components(
        shell: Shell,
        r0: f64,
        components: Vec<TangentBall>,
        delta: f64,
        eta: Option<f64>,
    ) -> Result<Self, LabyrinthError> {
        if !(r0 > shell.inner() && r0 <= shell.outer()) {
            return Err(LabyrinthError::BadInput(format!(
                "reduced radius {r0} outside ({}, {}]",
                shell.inner(),
                shell.outer()
            )));
        }
        let reduced = Shell::new(shell.inner(), r0)?;
        let tidy = validate_tidy_with(&components, &reduced, DEFAULT_TOL)?;
        if let Some(e) = eta {
            if let Some(b) = components.iter().find(|b| b.diameter() >= e) {
                return Err(LabyrinthError::BadInput(format!(
                    "component diameter {} is not below eta {e}",
                    b.diameter()
                )));
            }
        }
        let levels = components
            .iter()
            .map(|b| {
                tidy.level_of(b.level(), DEFAULT_TOL)
                    .expect("every ball belongs to a level")
            })
            .collect();
        let certificate = if delta <= 0.0 {
            Certificate::Trivial
        } else {
            Certificate::Search {
                restarts: 0,
                best_length: None,
                warning: Some("not certified".into()),
            }
        };
        Ok(Self {
            shell,
            r0,
            components,
            levels,
            tidy,
            delta,
            eta,
            certificate,
        })
    }

    fn wire(&self) -> LabyrinthWire {
        LabyrinthWire {
            shell: ShellRw {
                r: self.shell.inner(),
                big_r: self.shell.outer(),
            },
            r0: self.r0,
            components: self
                .components
                .iter()
                .zip(&self.levels)
                .map(|(b, &level)| ComponentWire {
                    center: b.center().clone(),
                    radius: b.radius(),
                    level,
                })
                .collect(),
            delta: self.delta,
            eta: self.eta,
            certificate: self.certificate.clone(),
        }
    }

    pub fn shell(&self) -> &Shell {
        &self.shell
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn components(&self) -> &[TangentBall] {
        &self.components
    }

    /// Level index of each component.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn tidy(&self) -> &TidyCertificate {
        &self.tidy
    }

    pub fn delta_target(&self) -> f64 {
        self.delta
    }

    /// The diameter bound; `None` when there is none (empty divisor).
    pub fn eta_target(&self) -> Option<f64> {
        self.eta
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Real ambient dimension.
    pub fn dim(&self) -> usize {
        self.components
            .first()
            .map(|b| b.center().coords().len())
            .unwrap_or(0)
    }
}

/// Upper bound `min{R, sqrt(r^2 + eta^2/4)}` for the reduced radius.
pub fn reduced_radius_bound(shell: &Shell, eta: Option<f64>) -> f64 {
    match eta {
        Some(e) => shell
            .outer()
            .min((shell.inner().powi(2) + e * e / 4.0).sqrt()),
        None => shell.outer(),
    }
}

/// Reduced outer radius `R0 = r + fraction (bound - r)`.
pub fn reduced_radius(shell: &Shell, eta: Option<f64>, fraction: f64) -> f64 {
    shell.inner() + fraction * (reduced_radius_bound(shell, eta) - shell.inner())
}

/// Diameter bound `2 sqrt(R0^2 - r^2)` for balls in the reduced shell.
pub fn diameter_bound(r: f64, r0: f64) -> f64 {
    2.0 * (r0 * r0 - r * r).max(0.0).sqrt()
}

/// One layout: `levels` equally spaced radii strictly inside `(r, R0)`,
/// each carrying a rotated copy of the spherical net scaled to that radius.
fn layout(
    shell: &Shell,
    r0: f64,
    eta: Option<f64>,
    dim: usize,
    levels: usize,
    theta: f64,
    cfg: &BuildConfig,
) -> Vec<TangentBall> {
    let net = sphere_net(dim, theta);
    let sep = min_separation_angle(&net, theta);
    let step = (r0 - shell.inner()) / (levels + 1) as f64;
    let mut out = Vec::with_capacity(levels * net.len());
    for k in 0..levels {
        let rho = shell.inner() + step * (k + 1) as f64;
        let next = if k + 1 == levels { r0 } else { rho + step };
        let mut a = cfg.c_gap * (next * next - rho * rho).sqrt();
        a = a.min(cfg.c_gap * rho * (sep / 2.0).tan());
        if let Some(e) = eta {
            a = a.min(cfg.c_gap * e / 2.0);
        }
        let rot = (cfg.stagger && k > 0)
            .then(|| random_rotation(dim, derive_seed(cfg.seed, "level", k as u64)));
        for p in &net {
            let q = match &rot {
                Some(m) => rotate(m, p),
                None => p.clone(),
            };
            let c: Vec<f64> = q.iter().map(|v| v * rho).collect();
            let center = AmbientPoint::new(c).expect("net points have the ambient dimension");
            out.push(TangentBall::new(center, a).expect("net centers are nonzero"));
        }
    }
    out
}

/// Builds a labyrinth in `shell` whose components have diameter below `eta`
/// and whose crossing paths are longer than `delta`, refining the layout
/// until the certifier accepts it.
pub fn build(
    shell: &Shell,
    delta: f64,
    eta: Option<f64>,
    n: usize,
    cfg: &BuildConfig,
) -> Result<TangentLabyrinth, LabyrinthError> {
    if n < 2 {
        return Err(LabyrinthError::BadInput(format!(
            "complex dimension {n} < 2"
        )));
    }
    if let Some(e) = eta {
        if !(e > 0.0) {
            return Err(LabyrinthError::BadInput(format!(
                "eta must be positive, got {e}"
            )));
        }
    }
    if !(cfg.c_gap > 0.0 && cfg.c_gap < 1.0 && cfg.r0_fraction > 0.0 && cfg.r0_fraction < 1.0) {
        return Err(LabyrinthError::BadInput(
            "c_gap and r0_fraction must lie in (0, 1)".into(),
        ));
    }
    let dim = 2 * n;
    let r0 = reduced_radius(shell, eta, cfg.r0_fraction);
    let mut best_length: Option<f64> = None;
    let mut last = (0, 0);
    for attempt in 0..=cfg.max_refinements {
        let levels = cfg.initial_levels.max(1) << attempt;
        let theta = cfg.initial_theta / (1u64 << attempt) as f64;
        let per_level = sphere_net(dim, theta).len();
        if levels.saturating_mul(per_level) > cfg.max_components {
            return Err(LabyrinthError::BuildBudgetExceeded {
                attempts: attempt,
                levels: last.0,
                components: last.1,
                best_length,
            });
        }
        let balls = layout(shell, r0, eta, dim, levels, theta, cfg);
        last = (levels, balls.len());
        let mut lab = TangentLabyrinth::from_components(*shell, r0, balls, delta, eta)?;
        if delta <= 0.0 {
            lab.certificate = Certificate::Trivial;
            return Ok(lab);
        }
        if shell.thickness() > delta {
            lab.certificate = Certificate::Thickness {
                thickness: shell.thickness(),
            };
            return Ok(lab);
        }
        let field = ObstacleField::new(lab.components(), cfg.certify.clearance, shell);
        let mut pcfg = cfg.certify.clone();
        pcfg.seed = derive_seed(cfg.seed, "certify", attempt as u64);
        let res = search(shell, dim, &field, &pcfg, Some(delta));
        match res.best_length() {
            Some(l) if l <= delta => {
                best_length = Some(best_length.map_or(l, |b: f64| b.max(l)));
            }
            found => {
                let warning = found.is_none().then(|| "no restart connected the shell; obstacles may disconnect the discretization".to_string());
                lab.certificate = Certificate::Search {
                    restarts: res.restarts.len(),
                    best_length: found,
                    warning,
                };
                return Ok(lab);
            }
        }
    }
    Err(LabyrinthError::BuildBudgetExceeded {
        attempts: cfg.max_refinements + 1,
        levels: last.0,
        components: last.1,
        best_length,
    })
}

/// Classification sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// A component meets `V` iff `min |h| < tol` on it.
    pub tol: f64,
    /// `min |h|` in `[tol, guard * tol)` is reported as ambiguous.
    pub guard: f64,
    pub samples_per_disc: usize,
    /// Newton polishing steps from the best sample.
    pub polish_steps: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            guard: 100.0,
            samples_per_disc: 256,
            polish_steps: 30,
            seed: 0,
        }
    }
}

/// Components meeting `V` and the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabyrinthSplit {
    #[serde(rename = "lambda_V")]
    pub lambda_v: Vec<usize>,
    pub lambda_0: Vec<usize>,
    pub tol: f64,
    pub guard: f64,
    pub samples_per_disc: usize,
    /// `min |h|` found on each component (zero for an empty divisor).
    pub min_abs_h: Vec<Option<f64>>,
}

/// Smallest `|h|` on a disc: dense ring samples, then projected Newton
/// steps toward `h = 0` inside the disc from the best sample.
pub fn min_abs_on_disc(
    h: &Divisor,
    ball: &TangentBall,
    samples: usize,
    polish: usize,
    seed: u64,
) -> f64 {
    use crate::geometry::to_complex;
    let pts = disc_points(ball, samples, seed);
    let (mut best_p, mut best) = pts
        .iter()
        .map(|p| (p.clone(), h.abs(&to_complex(p))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("disc sampling returns the center");
    let nrm = ball.normal();
    let x = ball.center().coords();
    let dim = x.len();
    for _ in 0..polish {
        if best == 0.0 {
            break;
        }
        // Real Jacobian of (Re h, Im h) restricted to the disc's plane.
        let z = to_complex(&best_p);
        let q = h.q();
        let mut jr = nalgebra::DMatrix::<f64>::zeros(2 * q, dim);
        for i in 0..q {
            for (k, g) in h.gradient(i, &z).iter().enumerate() {
                jr[(2 * i, 2 * k)] = g.re;
                jr[(2 * i, 2 * k + 1)] = -g.im;
                jr[(2 * i + 1, 2 * k)] = g.im;
                jr[(2 * i + 1, 2 * k + 1)] = g.re;
            }
        }
        let proj = nalgebra::DMatrix::<f64>::identity(dim, dim)
            - nalgebra::DMatrix::from_fn(dim, dim, |i, j| nrm[i] * nrm[j]);
        let jp = &jr * &proj;
        let v = h.eval(&z);
        let r = nalgebra::DVector::from_iterator(2 * q, v.iter().flat_map(|c| [c.re, c.im]));
        let Ok(pinv) = jp.clone().pseudo_inverse(1e-12) else {
            break;
        };
        let step = pinv * r;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let mut cand: Vec<f64> = best_p
                .iter()
                .zip(step.iter())
                .map(|(p, s)| p - t * s)
                .collect();
            clip_to_disc(ball, &mut cand);
            let val = h.abs(&to_complex(&cand));
            if val < best {
                best = val;
                best_p = cand;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Nearest point of the disc to `p`, written in place.
fn clip_to_disc(ball: &TangentBall, p: &mut [f64]) {
    let x = ball.center().coords();
    let n = ball.normal();
    let u: f64 = p
        .iter()
        .zip(x)
        .zip(&n)
        .map(|((pi, xi), ni)| (pi - xi) * ni)
        .sum();
    for i in 0..p.len() {
        p[i] -= u * n[i];
    }
    let w: Vec<f64> = p.iter().zip(x).map(|(pi, xi)| pi - xi).collect();
    let l = norm(&w);
    if l > ball.radius() {
        for i in 0..p.len() {
            p[i] = x[i] + w[i] * ball.radius() / l;
        }
    }
}

/// Splits components into those meeting `V` and the rest. With no divisor
/// (`v = None`) every component goes to `lambda_0`.
pub fn split(
    l: &TangentLabyrinth,
    v: Option<&Divisor>,
    cfg: &SplitConfig,
) -> Result<LabyrinthSplit, LabyrinthError> {
    use rayon::prelude::*;
    let mut out = LabyrinthSplit {
        lambda_v: Vec::new(),
        lambda_0: Vec::new(),
        tol: cfg.tol,
        guard: cfg.guard,
        samples_per_disc: cfg.samples_per_disc,
        min_abs_h: Vec::with_capacity(l.len()),
    };
    let Some(h) = v else {
        out.lambda_0 = (0..l.len()).collect();
        out.min_abs_h = vec![None; l.len()];
        return Ok(out);
    };
    let mins: Vec<f64> = l
        .components()
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            min_abs_on_disc(
                h,
                b,
                cfg.samples_per_disc,
                cfg.polish_steps,
                derive_seed(cfg.seed, "split", i as u64),
            )
        })
        .collect();
    for (i, &m) in mins.iter().enumerate() {
        if m < cfg.tol {
            out.lambda_v.push(i);
        } else if m < cfg.guard * cfg.tol {
            return Err(LabyrinthError::AmbiguousClassification {
                component: i,
                min_abs: m,
                tol: cfg.tol,
                upper: cfg.guard * cfg.tol,
            });
        } else {
            out.lambda_0.push(i);
        }
        out.min_abs_h.push(Some(m));
    }
    Ok(out)
}

/// Nearest point of a disc to `p`.
fn project_to_disc(ball: &TangentBall, p: &[f64]) -> Vec<f64> {
    let mut q = p.to_vec();
    clip_to_disc(ball, &mut q);
    q
}

/// Distance between two discs by alternating projections, starting from
/// the centers. The iterates converge to a closest pair for disjoint
/// convex sets; the returned value is the distance of the final pair.
pub fn disc_distance(a: &TangentBall, b: &TangentBall) -> f64 {
    let mut p = a.center().coords().to_vec();
    let mut q = project_to_disc(b, &p);
    let mut d = dist(&p, &q);
    for _ in 0..2000 {
        p = project_to_disc(a, &q);
        q = project_to_disc(b, &p);
        let nd = dist(&p, &q);
        if d - nd <= 1e-15 * d.max(1.0) {
            d = nd;
            break;
        }
        d = nd;
    }
    d
}

/// Inflation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InflateConfig {
    pub fraction: f64,
    pub floor: f64,
    /// Points of `V` sampled for the distance from `lambda_0` to `V`.
    pub v_samples: usize,
    pub samples_per_disc: usize,
    pub seed: u64,
}

impl Default for InflateConfig {
    fn default() -> Self {
        Self {
            fraction: 0.25,
            floor: 1e-12,
            v_samples: 2000,
            samples_per_disc: 256,
            seed: 0,
        }
    }
}

/// `dist(z, T) <= sigma mu` around one base component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflatedSet {
    pub component: usize,
    pub margin: f64,
}

/// The distances that bound the inflation margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginTerms {
    pub pairwise_gap: Option<f64>,
    pub to_ball: f64,
    pub to_v: Option<f64>,
    pub to_lambda_v: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflatedPair {
    pub mu: f64,
    pub delta1: Vec<InflatedSet>,
    pub delta2: Vec<InflatedSet>,
    pub terms: Option<MarginTerms>,
}

impl InflatedPair {
    pub fn empty() -> Self {
        Self {
            mu: 0.0,
            delta1: Vec::new(),
            delta2: Vec::new(),
            terms: None,
        }
    }
}

/// Chooses `mu` so that the `2 mu` inflations of the `lambda_0` components
/// stay pairwise disjoint and away from the inner ball, from `V` and from
/// `lambda_V`.
pub fn inflate(
    sp: &LabyrinthSplit,
    l: &TangentLabyrinth,
    v: Option<&Divisor>,
    r_ball: f64,
    cfg: &InflateConfig,
) -> Result<InflatedPair, LabyrinthError> {
    if sp.lambda_0.is_empty() {
        return Ok(InflatedPair::empty());
    }
    let comps = l.components();
    let zero: Vec<&TangentBall> = sp.lambda_0.iter().map(|&i| &comps[i]).collect();
    let on_v: Vec<&TangentBall> = sp.lambda_v.iter().map(|&i| &comps[i]).collect();

    let mut pairwise: Option<f64> = None;
    for i in 0..zero.len() {
        for j in i + 1..zero.len() {
            let lower = dist(zero[i].center().coords(), zero[j].center().coords())
                - zero[i].radius()
                - zero[j].radius();
            if pairwise.is_some_and(|g| lower >= g) {
                continue;
            }
            let d = disc_distance(zero[i], zero[j]);
            pairwise = Some(pairwise.map_or(d, |g: f64| g.min(d)));
        }
    }
    let to_ball = zero
        .iter()
        .map(|b| b.level() - r_ball)
        .fold(f64::INFINITY, f64::min);
    let to_v = v.map(|h| distance_to_divisor(h, &zero, l.shell().outer(), cfg));
    let mut to_lambda_v: Option<f64> = None;
    for a in &zero {
        for b in &on_v {
            let lower = dist(a.center().coords(), b.center().coords()) - a.radius() - b.radius();
            if to_lambda_v.is_some_and(|g| lower >= g) {
                continue;
            }
            let d = disc_distance(a, b);
            to_lambda_v = Some(to_lambda_v.map_or(d, |g: f64| g.min(d)));
        }
    }
    let m = [Some(to_ball), pairwise, to_v, to_lambda_v]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);
    let mu = cfg.fraction * m;
    if !(mu > cfg.floor) {
        return Err(LabyrinthError::DegenerateMargin {
            mu,
            floor: cfg.floor,
        });
    }
    Ok(InflatedPair {
        mu,
        delta1: sp
            .lambda_0
            .iter()
            .map(|&c| InflatedSet {
                component: c,
                margin: mu,
            })
            .collect(),
        delta2: sp
            .lambda_0
            .iter()
            .map(|&c| InflatedSet {
                component: c,
                margin: 2.0 * mu,
            })
            .collect(),
        terms: Some(MarginTerms {
            pairwise_gap: pairwise,
            to_ball,
            to_v,
            to_lambda_v,
        }),
    })
}

/// Sampled distance from a family of discs to `V`: the smaller of the
/// distance to projected samples of `V` and the first-order estimate
/// `|h| / |dh|` on disc samples.
fn distance_to_divisor(
    h: &Divisor,
    discs: &[&TangentBall],
    radius: f64,
    cfg: &InflateConfig,
) -> f64 {
    use crate::geometry::to_complex;
    use crate::holo::smallest_singular_value;
    let vs = sample_zero_set(
        h,
        radius,
        cfg.v_samples,
        derive_seed(cfg.seed, "v-samples", 0),
    );
    let mut best = f64::INFINITY;
    for b in discs {
        for p in &vs {
            best = best.min(b.dist_to(p));
        }
        for (k, p) in disc_points(
            b,
            cfg.samples_per_disc,
            derive_seed(cfg.seed, "v-disc", k_hash(b)),
        )
        .iter()
        .enumerate()
        {
            let _ = k;
            let z = to_complex(p);
            let g = smallest_singular_value(&h.jacobian(&z));
            if g > 0.0 {
                best = best.min(h.abs(&z) / g);
            }
        }
    }
    best
}

fn k_hash(b: &TangentBall) -> u64 {
    b.center()
        .coords()
        .iter()
        .fold(0u64, |acc, c| acc.rotate_left(7) ^ c.to_bits())
}

/// The `nu`-neighborhood of a labyrinth that later steps must keep free of
/// new zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceNeighborhood {
    pub components: Vec<TangentBall>,
    pub margin: f64,
}

impl AvoidanceNeighborhood {
    /// `nu = mu / 2`, capped so the inflation stays inside the open shell.
    /// Without `lambda_0` components only the shell cap applies.
    pub fn new(l: &TangentLabyrinth, inflated: &InflatedPair) -> Self {
        let shell = l.shell();
        let room = l
            .components()
            .iter()
            .map(|b| (b.level() - shell.inner()).min(shell.outer() - b.outermost_radius()))
            .fold(f64::INFINITY, f64::min);
        let cap = 0.5 * room;
        let margin = if inflated.mu > 0.0 {
            (inflated.mu / 2.0).min(cap)
        } else {
            cap
        };
        Self {
            components: l.components().to_vec(),
            margin,
        }
    }

    /// Whether `p` lies in the open `margin`-neighborhood.
    pub fn contains(&self, p: &[f64]) -> bool {
        self.components.iter().any(|b| b.dist_to(p) < self.margin)
    }
}

/// Labyrinth as written to run directories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabyrinthRecord {
    #[serde(flatten)]
    pub labyrinth: TangentLabyrinth,
    pub split: LabyrinthSplit,
    pub mu: f64,
    pub nu: f64,
}

/// Radii `s_0 < s_1 < ... < s_k` with `r_ball < s_0` and level `i`
/// (counted from one) strictly between the spheres of radii `s_{i-1}` and
/// `s_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestingCertificate {
    pub radii: Vec<f64>,
}

/// Nesting certificate of a labyrinth: `s_0` halfway between `r_ball` and
/// the first level, `s_i` halfway between the outermost reach of level `i`
/// and the next level (or the outer shell radius after the last level).
pub fn nesting_order(
    l: &TangentLabyrinth,
    r_ball: f64,
) -> Result<NestingCertificate, LabyrinthError> {
    nesting_order_of(l.components(), r_ball, l.shell().outer())
}

/// [`nesting_order`] for a bare tidy family of balls.
pub fn nesting_order_of(
    balls: &[TangentBall],
    r_ball: f64,
    outer: f64,
) -> Result<NestingCertificate, LabyrinthError> {
    if balls.is_empty() {
        return Ok(NestingCertificate { radii: Vec::new() });
    }
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut sorted: Vec<&TangentBall> = balls.iter().collect();
    sorted.sort_by(|a, b| a.level().total_cmp(&b.level()));
    for b in sorted {
        match levels.last_mut() {
            Some((rho, reach)) if (b.level() - *rho).abs() <= DEFAULT_TOL => {
                *reach = reach.max(b.outermost_radius())
            }
            _ => levels.push((b.level(), b.outermost_radius())),
        }
    }
    if !(r_ball < levels[0].0) {
        return Err(LabyrinthError::NoSeparation { lower: 0, upper: 1 });
    }
    let mut radii = vec![0.5 * (r_ball + levels[0].0)];
    for i in 0..levels.len() {
        let next = if i + 1 < levels.len() {
            levels[i + 1].0
        } else {
            outer
        };
        if !(levels[i].1 < next) {
            return Err(LabyrinthError::NoSeparation {
                lower: i + 1,
                upper: i + 2,
            });
        }
        radii.push(0.5 * (levels[i].1 + next));
    }
    Ok(NestingCertificate { radii })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holo::Divisor;

    fn ball(c: [f64; 4], a: f64) -> TangentBall {
        TangentBall::new(AmbientPoint::new(c.to_vec()).unwrap(), a).unwrap()
    }

    #[test]
    fn reduced_radius_example() {
        let shell = Shell::new(0.5, 0.9).unwrap();
        let bound = reduced_radius_bound(&shell, Some(0.2));
        assert!((bound - 0.26f64.sqrt()).abs() < 1e-15);
        assert!((bound - 0.509902).abs() < 1e-6);
        let r0 = reduced_radius(&shell, Some(0.2), 0.9);
        assert!((r0 - 0.509).abs() < 5e-4);
        assert!(r0 < bound);
        assert!((diameter_bound(0.5, 0.509) - 0.190589).abs() < 1e-6);
    }

    #[test]
    fn build_respects_reduced_shell_and_diameter() {
        let shell = Shell::new(0.5, 0.9).unwrap();
        let l = build(&shell, 0.3, Some(0.2), 2, &BuildConfig::default()).unwrap();
        let bound = diameter_bound(0.5, l.r0());
        assert!(l.r0() < 0.26f64.sqrt());
        for b in l.components() {
            assert!(b.outermost_radius() < l.r0());
            assert!(b.diameter() < bound && b.diameter() < 0.2);
        }
        assert!(matches!(l.certificate(), Certificate::Thickness { .. }));
    }

    #[test]
    fn zero_delta_accepts_one_level() {
        let shell = Shell::new(0.75, 0.78125).unwrap();
        let l = build(&shell, 0.0, Some(0.05625), 2, &BuildConfig::default()).unwrap();
        assert_eq!(l.tidy().level_count(), 1);
        assert_eq!(l.certificate(), &Certificate::Trivial);
    }

    #[test]
    fn split_examples() {
        let shell = Shell::new(0.75, 0.8).unwrap();
        let comps = vec![
            ball([0.0, 0.0, 0.77, 0.0], 0.01),
            ball([0.77, 0.0, 0.0, 0.0], 0.01),
        ];
        let l = TangentLabyrinth::from_components(shell, 0.79, comps, 0.0, None).unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let sp = split(&l, Some(&h), &SplitConfig::default()).unwrap();
        assert_eq!(sp.lambda_v, vec![0]);
        assert_eq!(sp.lambda_0, vec![1]);
        assert!((sp.min_abs_h[1].unwrap() - 0.77).abs() < 1e-12);
        let none = split(&l, None, &SplitConfig::default()).unwrap();
        assert!(none.lambda_v.is_empty());
        assert_eq!(none.lambda_0, vec![0, 1]);
    }

    #[test]
    fn split_polishes_off_center_intersections() {
        // Normal (0, 0, 1, 1)/sqrt(2); the disc meets z1 = 0 only away from
        // the center when the center has a small z1 component.
        let c = 0.77 / 2f64.sqrt();
        let shell = Shell::new(0.7, 0.9).unwrap();
        let b = ball([0.003, 0.0, c, c], 0.02);
        let l = TangentLabyrinth::from_components(shell, 0.85, vec![b], 0.0, None).unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let sp = split(
            &l,
            Some(&h),
            &SplitConfig {
                samples_per_disc: 64,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sp.lambda_v, vec![0]);
    }

    #[test]
    fn split_guard_band() {
        let shell = Shell::new(0.7, 0.9).unwrap();
        // Normal along e1: |z1| >= 0.77 on the disc; tol above that value
        // with a guard band straddling it.
        let l = TangentLabyrinth::from_components(
            shell,
            0.85,
            vec![ball([0.77, 0.0, 0.0, 0.0], 0.01)],
            0.0,
            None,
        )
        .unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let cfg = SplitConfig {
            tol: 0.5,
            guard: 2.0,
            ..Default::default()
        };
        assert!(matches!(
            split(&l, Some(&h), &cfg),
            Err(LabyrinthError::AmbiguousClassification { .. })
        ));
    }

    #[test]
    fn inflate_single_component_uses_ball_distance() {
        let shell = Shell::new(0.75, 0.8).unwrap();
        let l = TangentLabyrinth::from_components(
            shell,
            0.79,
            vec![ball([0.77, 0.0, 0.0, 0.0], 0.01)],
            0.0,
            None,
        )
        .unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let sp = split(&l, Some(&h), &SplitConfig::default()).unwrap();
        let inf = inflate(&sp, &l, Some(&h), 0.75, &InflateConfig::default()).unwrap();
        assert!((inf.mu - 0.25 * 0.02).abs() < 1e-12);
        assert_eq!(inf.delta2[0].margin, 2.0 * inf.mu);
    }

    #[test]
    fn inflate_two_components_at_gap() {
        // Two coplanar-level discs whose closest points are 0.04 apart.
        let shell = Shell::new(0.5, 2.0).unwrap();
        let rho: f64 = 1.0;
        let a = 0.05;
        // Same level, angle theta: the closest points lie on the rims, on
        // the great circle through both centers.
        let theta = 2.0 * ((a + 0.02) / rho).atan();
        let b1 = ball([rho, 0.0, 0.0, 0.0], a);
        let b2 = ball([rho * theta.cos(), rho * theta.sin(), 0.0, 0.0], a);
        let gap = disc_distance(&b1, &b2);
        // Rims at (rho, a) and its mirror: both at distance a from their
        // centers along the tangent directions meeting at angle theta/2.
        let p1 = [rho, a, 0.0, 0.0];
        let t = [-theta.sin(), theta.cos(), 0.0, 0.0];
        let p2: Vec<f64> = (0..4).map(|i| b2.center().coords()[i] - a * t[i]).collect();
        assert!((gap - dist(&p1, &p2)).abs() < 1e-9);
        let l = TangentLabyrinth::from_components(shell, 1.9, vec![b1, b2], 0.0, None).unwrap();
        let sp = split(&l, None, &SplitConfig::default()).unwrap();
        let inf = inflate(&sp, &l, None, 0.5, &InflateConfig::default()).unwrap();
        assert!((inf.mu - 0.25 * gap).abs() < 1e-12);

        // The example with gap exactly 0.04: shift the second disc along
        // the first disc's normal so the configuration is a pure offset.
        let b3 = ball([1.0, 0.0, 0.0, 0.0], 0.05);
        let b4 = ball([1.04, 0.0, 0.0, 0.0], 0.05);
        assert!((disc_distance(&b3, &b4) - 0.04).abs() < 1e-12);
        let l = TangentLabyrinth::from_components(shell, 1.9, vec![b3, b4], 0.0, None).unwrap();
        let sp = split(&l, None, &SplitConfig::default()).unwrap();
        let inf = inflate(&sp, &l, None, 0.5, &InflateConfig::default()).unwrap();
        assert!((inf.mu - 0.01).abs() < 1e-12);
    }

    #[test]
    fn inflate_empty_lambda_0() {
        let shell = Shell::new(0.75, 0.8).unwrap();
        let l = TangentLabyrinth::from_components(
            shell,
            0.79,
            vec![ball([0.0, 0.0, 0.77, 0.0], 0.01)],
            0.0,
            None,
        )
        .unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let sp = split(&l, Some(&h), &SplitConfig::default()).unwrap();
        let inf = inflate(&sp, &l, Some(&h), 0.75, &InflateConfig::default()).unwrap();
        assert_eq!(inf, InflatedPair::empty());
    }

    #[test]
    fn nesting_examples() {
        let one = [ball([0.77, 0.0, 0.0, 0.0], 0.05)];
        let c = nesting_order_of(&one, 0.75, 0.85).unwrap();
        assert_eq!(c.radii.len(), 2);
        assert!(0.75 < c.radii[0] && c.radii[0] < 0.77);
        assert!(one[0].outermost_radius() > 0.7716 && one[0].outermost_radius() < c.radii[1]);
        assert!(c.radii[1] < 0.85);
        assert!(nesting_order_of(&[], 0.75, 0.85).unwrap().radii.is_empty());
        let two = [
            ball([0.76, 0.0, 0.0, 0.0], 0.005),
            ball([0.0, 0.78, 0.0, 0.0], 0.005),
        ];
        let c = nesting_order_of(&two, 0.75, 0.8).unwrap();
        assert_eq!(c.radii.len(), 3);
        assert!(c.radii.windows(2).all(|w| w[0] < w[1]));
        assert!(c.radii[0] < 0.76 && two[0].outermost_radius() < c.radii[1] && c.radii[1] < 0.78);
        assert!(two[1].outermost_radius() < c.radii[2]);
        let bad = [
            ball([0.76, 0.0, 0.0, 0.0], 0.2),
            ball([0.0, 0.78, 0.0, 0.0], 0.005),
        ];
        assert!(matches!(
            nesting_order_of(&bad, 0.75, 0.9),
            Err(LabyrinthError::NoSeparation { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let shell = Shell::new(0.5, 0.9).unwrap();
        let l = build(&shell, 0.3, Some(0.2), 2, &BuildConfig::default()).unwrap();
        let v = serde_json::to_value(&l).unwrap();
        assert!(v["shell"]["R"].is_number());
        assert!(v["R0"].is_number());
        assert!(v["components"][0]["level"].is_number());
        let back: TangentLabyrinth = serde_json::from_value(v).unwrap();
        assert_eq!(back, l);
    }
}
