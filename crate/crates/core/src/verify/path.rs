//! Stochastic search for short shell-crossing polylines under a hard
//! feasibility constraint.
//!
//! Every returned polyline is feasible, so its length is an upper bound on
//! the true constrained minimum. A certificate "no crossing shorter than
//! `delta`" therefore means no counterexample was found.

use crate::geometry::{dist, norm, PointGrid, Shell, TangentBall};
use crate::holo::CandidateMap;
use crate::sampling::{complement_basis, derive_seed, random_unit, rng};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Knobs of the multi-restart search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathSearchConfig {
    pub restarts: usize,
    pub sweeps: usize,
    /// Minimum distance kept from every obstacle.
    pub clearance: f64,
    pub seed: u64,
    /// Initial perturbation size for local moves, as a fraction of the
    /// shell thickness.
    pub temperature: f64,
    /// Node budget of the tree search used when the obstacle walk does not
    /// apply or fails.
    pub tree_nodes: usize,
    /// Step cap of the obstacle walk.
    pub walk_steps: usize,
    /// Sampling step for pointwise constraints along a segment, as a
    /// fraction of the shell thickness.
    pub resolution: f64,
    /// Vertex cap during shortening.
    pub max_vertices: usize,
    /// Restarts run in batches of this size; the search stops after the
    /// first batch that found a crossing no longer than `stop_below`.
    pub batch: usize,
}

impl Default for PathSearchConfig {
    fn default() -> Self {
        Self {
            restarts: 100,
            sweeps: 200,
            clearance: 1e-4,
            seed: 0,
            temperature: 0.05,
            tree_nodes: 4000,
            walk_steps: 20_000,
            resolution: 0.01,
            max_vertices: 160,
            batch: 8,
        }
    }
}

/// A polygonal path with cached segment lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Polyline {
    points: Vec<Vec<f64>>,
    seg: Vec<f64>,
}

impl From<Vec<Vec<f64>>> for Polyline {
    fn from(points: Vec<Vec<f64>>) -> Self {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec<f64>> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        let seg = points.windows(2).map(|w| dist(&w[0], &w[1])).collect();
        Self { points, seg }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.seg
    }

    pub fn length(&self) -> f64 {
        self.seg.iter().sum()
    }

    /// Starts in the closed inner ball and ends outside the open outer ball.
    pub fn crosses(&self, shell: &Shell) -> bool {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => {
                norm(a) <= shell.inner() * (1.0 + 1e-12) && norm(b) >= shell.outer() * (1.0 - 1e-12)
            }
            _ => false,
        }
    }
}

/// A hard constraint on points and segments.
pub trait PathConstraint: Sync {
    fn point_ok(&self, p: &[f64]) -> bool;
    fn segment_ok(&self, a: &[f64], b: &[f64]) -> bool;

    /// First obstacle met when moving from `a` to `b`, with the segment
    /// parameter where the clearance is first violated. Constraints that
    /// are not made of discs return `None`, which disables the obstacle
    /// walk.
    fn first_blocker(&self, _a: &[f64], _b: &[f64]) -> Option<(usize, f64)> {
        None
    }

    /// Obstacle data for the walk: center and radius of disc `k`.
    fn disc(&self, _k: usize) -> Option<(&[f64], f64)> {
        None
    }

    fn supports_walk(&self) -> bool {
        false
    }
}

/// Keep at least `clearance` away from every tangent ball.
pub struct ObstacleField<'a> {
    balls: &'a [TangentBall],
    grid: PointGrid,
    clearance: f64,
}

impl<'a> ObstacleField<'a> {
    pub fn new(balls: &'a [TangentBall], clearance: f64, shell: &Shell) -> Self {
        let a_max = balls.iter().map(|b| b.radius()).fold(0.0, f64::max);
        let cell = (2.0 * (a_max + clearance))
            .max(shell.thickness() / 4.0)
            .max(1e-9);
        let mut grid = PointGrid::new(cell);
        for (i, b) in balls.iter().enumerate() {
            grid.insert_box(b.center().coords(), b.radius() + clearance, i as u32);
        }
        Self {
            balls,
            grid,
            clearance,
        }
    }

    fn candidates(&self, a: &[f64], b: &[f64], out: &mut Vec<u32>) {
        out.clear();
        let lo: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.min(*y)).collect();
        let hi: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.max(*y)).collect();
        self.grid.query_box(&lo, &hi, out);
        out.sort_unstable();
        out.dedup();
    }

    /// Pieces of at most one grid cell, so box queries stay small.
    fn pieces(&self, a: &[f64], b: &[f64]) -> usize {
        ((dist(a, b) / self.grid.cell_size()).ceil() as usize).max(1)
    }
}

/// Squared distance from `a + t (b - a)` to the disc, for `t` in `[0, 1]`.
struct SegmentDisc {
    u0: f64,
    du: f64,
    w0: Vec<f64>,
    dw: Vec<f64>,
    radius: f64,
}

impl SegmentDisc {
    fn new(ball: &TangentBall, a: &[f64], b: &[f64]) -> Self {
        let x = ball.center().coords();
        let r = ball.level();
        let n: Vec<f64> = x.iter().map(|c| c / r).collect();
        let pa: Vec<f64> = a.iter().zip(x).map(|(p, c)| p - c).collect();
        let d: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
        let u0 = crate::geometry::dot(&pa, &n);
        let du = crate::geometry::dot(&d, &n);
        let w0 = pa.iter().zip(&n).map(|(p, m)| p - u0 * m).collect();
        let dw = d.iter().zip(&n).map(|(p, m)| p - du * m).collect();
        Self {
            u0,
            du,
            w0,
            dw,
            radius: ball.radius(),
        }
    }

    fn f(&self, t: f64) -> f64 {
        let u = self.u0 + t * self.du;
        let rho = self
            .w0
            .iter()
            .zip(&self.dw)
            .map(|(w, d)| (w + t * d) * (w + t * d))
            .sum::<f64>()
            .sqrt();
        let e = (rho - self.radius).max(0.0);
        u * u + e * e
    }

    /// Minimizer of the convex function `f` on `[0, 1]`.
    fn argmin(&self) -> (f64, f64) {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = self.f(x1);
        let mut f2 = self.f(x2);
        for _ in 0..80 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = self.f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = self.f(x2);
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        let mut best = (0.5 * (lo + hi), self.f(0.5 * (lo + hi)));
        for t in [0.0, 1.0] {
            let v = self.f(t);
            if v < best.1 {
                best = (t, v);
            }
        }
        best
    }

    /// Smallest `t` with `f(t) <= c2`, if any.
    fn entry(&self, c2: f64) -> Option<f64> {
        if self.f(0.0) <= c2 {
            return Some(0.0);
        }
        let (tm, fm) = self.argmin();
        if fm > c2 {
            return None;
        }
        let (mut lo, mut hi) = (0.0, tm);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.f(mid) <= c2 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(lo)
    }
}

/// Distance from the center to the segment, a cheap lower-bound filter.
fn center_segment_dist(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let dd = crate::geometry::dot(&d, &d);
    let t = if dd > 0.0 {
        (x.iter()
            .zip(a)
            .zip(&d)
            .map(|((xi, ai), di)| (xi - ai) * di)
            .sum::<f64>()
            / dd)
            .clamp(0.0, 1.0)
    } else {
        0.0
    };
    x.iter()
        .zip(a)
        .zip(&d)
        .map(|((xi, ai), di)| (xi - ai - t * di).powi(2))
        .sum::<f64>()
        .sqrt()
}

impl PathConstraint for ObstacleField<'_> {
    fn point_ok(&self, p: &[f64]) -> bool {
        let mut c = Vec::new();
        self.grid.query(p, 0.0, &mut c);
        c.iter()
            .all(|&k| self.balls[k as usize].dist_to(p) > self.clearance)
    }

    fn segment_ok(&self, a: &[f64], b: &[f64]) -> bool {
        self.first_blocker(a, b).is_none()
    }

    fn first_blocker(&self, a: &[f64], b: &[f64]) -> Option<(usize, f64)> {
        let pieces = self.pieces(a, b);
        let c2 = self.clearance * self.clearance;
        let mut cand = Vec::new();
        let mut pa = a.to_vec();
        for s in 0..pieces {
            let t1 = (s + 1) as f64 / pieces as f64;
            let pb: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t1 * (y - x)).collect();
            self.candidates(&pa, &pb, &mut cand);
            let mut best: Option<(usize, f64)> = None;
            for &k in &cand {
                let ball = &self.balls[k as usize];
                if center_segment_dist(ball.center().coords(), &pa, &pb)
                    > ball.radius() + self.clearance
                {
                    continue;
                }
                if let Some(t) = SegmentDisc::new(ball, &pa, &pb).entry(c2) {
                    if best.is_none_or(|(_, bt)| t < bt) {
                        best = Some((k as usize, t));
                    }
                }
            }
            if let Some((k, t)) = best {
                let t0 = s as f64 / pieces as f64;
                return Some((k, t0 + t / pieces as f64));
            }
            pa = pb;
        }
        None
    }

    fn disc(&self, k: usize) -> Option<(&[f64], f64)> {
        self.balls.get(k).map(|b| (b.center().coords(), b.radius()))
    }

    fn supports_walk(&self) -> bool {
        true
    }
}

/// Keep `lambda <= |F| <= 1/lambda`, checked at a fixed spatial resolution.
pub struct BandField<'a> {
    pub map: &'a CandidateMap,
    pub lambda: f64,
    pub step: f64,
}

impl PathConstraint for BandField<'_> {
    fn point_ok(&self, p: &[f64]) -> bool {
        let v = self.map.abs(p);
        v >= self.lambda && v <= 1.0 / self.lambda
    }

    fn segment_ok(&self, a: &[f64], b: &[f64]) -> bool {
        let k = ((dist(a, b) / self.step).ceil() as usize).max(1);
        (0..=k).all(|i| {
            let t = i as f64 / k as f64;
            let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
            self.point_ok(&p)
        })
    }
}

/// Outcome of one restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub length: Option<f64>,
    pub feasible: bool,
}

/// All restarts of one search, with the best crossing found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSearchResult {
    pub best: Option<(f64, Polyline)>,
    pub restarts: Vec<RestartRecord>,
}

impl PathSearchResult {
    pub fn best_length(&self) -> Option<f64> {
        self.best.as_ref().map(|(l, _)| *l)
    }

    /// Best length among the first `k` restarts.
    pub fn best_within(&self, k: usize) -> Option<f64> {
        self.restarts
            .iter()
            .take(k)
            .filter_map(|r| r.length)
            .fold(None, |acc: Option<f64>, l| {
                Some(acc.map_or(l, |a| a.min(l)))
            })
    }

    /// `restart,length,feasible` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("restart,length,feasible\n");
        for r in &self.restarts {
            let l = r.length.map(|v| format!("{v:?}")).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", r.restart, l, r.feasible));
        }
        s
    }
}

/// Runs the multi-restart search. Restart `i` uses a seed that depends only
/// on `cfg.seed` and `i`, so the best length can only decrease as the
/// restart count grows.
///
/// `dim` is the real ambient dimension `2n`.
pub fn search(
    shell: &Shell,
    dim: usize,
    constraint: &dyn PathConstraint,
    cfg: &PathSearchConfig,
    stop_below: Option<f64>,
) -> PathSearchResult {
    let mut restarts = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(f64, Polyline)> = None;
    let batch = cfg.batch.max(1);
    let mut start = 0;
    while start < cfg.restarts {
        let end = (start + batch).min(cfg.restarts);
        let found: Vec<Option<Polyline>> = (start..end)
            .into_par_iter()
            .map(|i| one_restart(shell, dim, constraint, cfg, i))
            .collect();
        for (k, p) in found.into_iter().enumerate() {
            let len = p.as_ref().map(|p| p.length());
            restarts.push(RestartRecord {
                restart: start + k,
                length: len,
                feasible: p.is_some(),
            });
            if let (Some(p), Some(l)) = (p, len) {
                if best.as_ref().is_none_or(|(b, _)| l < *b) {
                    best = Some((l, p));
                }
            }
        }
        start = end;
        if let (Some(limit), Some((l, _))) = (stop_below, best.as_ref()) {
            if *l <= limit {
                break;
            }
        }
    }
    PathSearchResult { best, restarts }
}

/// Replays feasibility of a polyline against a constraint.
pub fn is_feasible(path: &Polyline, shell: &Shell, constraint: &dyn PathConstraint) -> bool {
    path.crosses(shell)
        && path.points().iter().all(|p| constraint.point_ok(p))
        && path
            .points()
            .windows(2)
            .all(|w| constraint.segment_ok(&w[0], &w[1]))
}

fn scaled(p: &[f64], r: f64) -> Vec<f64> {
    let l = norm(p);
    p.iter().map(|c| c * r / l).collect()
}

fn one_restart(
    shell: &Shell,
    d: usize,
    c: &dyn PathConstraint,
    cfg: &PathSearchConfig,
    i: usize,
) -> Option<Polyline> {
    let mut r = rng(derive_seed(cfg.seed, "restart", i as u64));
    let u = random_unit(d, &mut r);
    let p0 = scaled(&u, shell.inner());
    let p1 = scaled(&u, shell.outer());
    let mut pts = if c.point_ok(&p0) && c.point_ok(&p1) && c.segment_ok(&p0, &p1) {
        vec![p0, p1]
    } else {
        let walked = if c.supports_walk() && c.point_ok(&p0) {
            walk(shell, c, cfg, p0, &mut r)
        } else {
            None
        };
        match walked {
            Some(w) => w,
            None => tree(shell, d, c, cfg, &mut r)?,
        }
    };
    shorten(shell, c, cfg, &mut pts, &mut r);
    let path = Polyline::new(pts);
    is_feasible(&path, shell, c).then_some(path)
}

/// Radial ascent that slides to the rim of every disc it runs into.
fn walk(
    shell: &Shell,
    c: &dyn PathConstraint,
    cfg: &PathSearchConfig,
    start: Vec<f64>,
    r: &mut ChaCha8Rng,
) -> Option<Vec<Vec<f64>>> {
    let clear = cfg.clearance;
    let mut pts = vec![start];
    for _ in 0..cfg.walk_steps {
        let p = pts.last().unwrap().clone();
        if norm(&p) >= shell.outer() {
            return Some(pts);
        }
        let target = scaled(&p, shell.outer());
        let Some((k, t)) = c.first_blocker(&p, &target) else {
            pts.push(target);
            return Some(pts);
        };
        let len = dist(&p, &target);
        let back = (t - 2.0 * clear / len).max(0.0);
        let q: Vec<f64> = p
            .iter()
            .zip(&target)
            .map(|(a, b)| a + back * (b - a))
            .collect();
        if back > 0.0 {
            if !c.segment_ok(&p, &q) {
                return None;
            }
            pts.push(q.clone());
        }
        let (x, a) = c.disc(k)?;
        let rho = norm(x);
        let n: Vec<f64> = x.iter().map(|v| v / rho).collect();
        let u = q
            .iter()
            .zip(x)
            .zip(&n)
            .map(|((qi, xi), ni)| (qi - xi) * ni)
            .sum::<f64>();
        let w: Vec<f64> = q
            .iter()
            .zip(x)
            .zip(&n)
            .map(|((qi, xi), ni)| qi - xi - u * ni)
            .collect();
        let basis = complement_basis(&n);
        let mut moved = false;
        for attempt in 0..24 {
            let dir: Vec<f64> = if attempt == 0 && norm(&w) > 1e-12 && r.random::<f64>() < 0.7 {
                let l = norm(&w);
                w.iter().map(|v| v / l).collect()
            } else {
                let coef = random_unit(basis.len(), r);
                let mut v = vec![0.0; x.len()];
                for (cf, b) in coef.iter().zip(&basis) {
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi += cf * bi;
                    }
                }
                v
            };
            let off = u.min(-2.0 * clear);
            let e: Vec<f64> = x
                .iter()
                .zip(&dir)
                .zip(&n)
                .map(|((xi, di), ni)| xi + (a + 3.0 * clear) * di + off * ni)
                .collect();
            if c.point_ok(&e) && c.segment_ok(&q, &e) {
                pts.push(e);
                moved = true;
                break;
            }
        }
        if !moved {
            return None;
        }
    }
    None
}

/// Rapidly-exploring random tree from the inner sphere, with a greedy
/// radial connection attempt after every extension.
fn tree(
    shell: &Shell,
    d: usize,
    c: &dyn PathConstraint,
    cfg: &PathSearchConfig,
    r: &mut ChaCha8Rng,
) -> Option<Vec<Vec<f64>>> {
    let root = (0..2000)
        .map(|_| scaled(&random_unit(d, r), shell.inner()))
        .find(|p| c.point_ok(p))?;
    let step = shell.thickness() / 8.0;
    let mut nodes = vec![root];
    let mut parent = vec![usize::MAX];
    let finish =
        |nodes: &Vec<Vec<f64>>, parent: &Vec<usize>, mut k: usize, tail: Option<Vec<f64>>| {
            let mut out = Vec::new();
            if let Some(t) = tail {
                out.push(t);
            }
            while k != usize::MAX {
                out.push(nodes[k].clone());
                k = parent[k];
            }
            out.reverse();
            out
        };
    for _ in 0..cfg.tree_nodes {
        let dir = random_unit(d, r);
        let rad = if r.random::<f64>() < 0.5 {
            shell.outer()
        } else {
            shell.inner() + r.random::<f64>() * shell.thickness() * 1.05
        };
        let target = scaled(&dir, rad);
        let near = nodes
            .iter()
            .enumerate()
            .map(|(k, p)| (k, dist(p, &target)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)?;
        let from = &nodes[near];
        let l = dist(from, &target);
        if l < 1e-12 {
            continue;
        }
        let s = step.min(l);
        let new: Vec<f64> = from
            .iter()
            .zip(&target)
            .map(|(a, b)| a + s * (b - a) / l)
            .collect();
        if !(c.point_ok(&new) && c.segment_ok(from, &new)) {
            continue;
        }
        nodes.push(new.clone());
        parent.push(near);
        let k = nodes.len() - 1;
        if norm(&new) >= shell.outer() {
            return Some(finish(&nodes, &parent, k, None));
        }
        let out = scaled(&new, shell.outer());
        if c.point_ok(&out) && c.segment_ok(&new, &out) {
            return Some(finish(&nodes, &parent, k, Some(out)));
        }
    }
    None
}

fn local_len(pts: &[Vec<f64>], i: usize, p: &[f64]) -> f64 {
    dist(&pts[i - 1], p) + dist(p, &pts[i + 1])
}

/// Shortcutting, endpoint projection, subdivision and local moves. Every
/// accepted change keeps the path feasible and does not increase its length.
fn shorten(
    shell: &Shell,
    c: &dyn PathConstraint,
    cfg: &PathSearchConfig,
    pts: &mut Vec<Vec<f64>>,
    r: &mut ChaCha8Rng,
) {
    let thick = shell.thickness();
    let mut stale = 0;
    for sweep in 0..cfg.sweeps {
        let before: f64 = pts.windows(2).map(|w| dist(&w[0], &w[1])).sum();

        // Drop vertices that are already past an endpoint sphere.
        while pts.len() > 2 && norm(&pts[1]) <= shell.inner() {
            pts.remove(0);
        }
        while pts.len() > 2 && norm(&pts[pts.len() - 2]) >= shell.outer() {
            pts.pop();
        }
        // Move endpoints to the nearest points of the endpoint spheres.
        if norm(&pts[1]) > shell.inner() {
            let cand = scaled(&pts[1], shell.inner());
            if dist(&cand, &pts[1]) < dist(&pts[0], &pts[1])
                && c.point_ok(&cand)
                && c.segment_ok(&cand, &pts[1])
            {
                pts[0] = cand;
            }
        }
        let m = pts.len();
        if norm(&pts[m - 2]) < shell.outer() {
            let cand = scaled(&pts[m - 2], shell.outer());
            if dist(&cand, &pts[m - 2]) < dist(&pts[m - 1], &pts[m - 2])
                && c.point_ok(&cand)
                && c.segment_ok(&pts[m - 2], &cand)
            {
                pts[m - 1] = cand;
            }
        }

        // Greedy shortcuts.
        let mut i = 0;
        while i + 2 < pts.len() {
            let mut k = pts.len() - 1;
            while k > i + 1 && !c.segment_ok(&pts[i], &pts[k]) {
                k -= 1;
            }
            if k > i + 1 {
                pts.drain(i + 1..k);
            }
            i += 1;
        }

        // Subdivide the longest segments so local moves have room.
        if sweep % 10 == 0 && pts.len() < cfg.max_vertices {
            let mut out = Vec::with_capacity(pts.len() * 2);
            for w in pts.windows(2) {
                out.push(w[0].clone());
                if dist(&w[0], &w[1]) > thick / 16.0 && out.len() < cfg.max_vertices {
                    out.push(w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect());
                }
            }
            out.push(pts.last().unwrap().clone());
            *pts = out;
        }

        // Local moves: pull toward the neighbors' midpoint, then perturb.
        let temp =
            cfg.temperature * thick * (1.0 - sweep as f64 / cfg.sweeps.max(1) as f64).max(0.02);
        for i in 1..pts.len().saturating_sub(1) {
            let cur = local_len(pts, i, &pts[i]);
            let mid: Vec<f64> = pts[i - 1]
                .iter()
                .zip(&pts[i + 1])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let mut moved = false;
            for alpha in [1.0, 0.5, 0.25] {
                let cand: Vec<f64> = pts[i]
                    .iter()
                    .zip(&mid)
                    .map(|(p, m)| p + alpha * (m - p))
                    .collect();
                if local_len(pts, i, &cand) < cur - 1e-15
                    && c.point_ok(&cand)
                    && c.segment_ok(&pts[i - 1], &cand)
                    && c.segment_ok(&cand, &pts[i + 1])
                {
                    pts[i] = cand;
                    moved = true;
                    break;
                }
            }
            if !moved {
                let cand: Vec<f64> = pts[i]
                    .iter()
                    .map(|p| p + temp * r.sample::<f64, _>(StandardNormal))
                    .collect();
                if local_len(pts, i, &cand) < cur
                    && c.point_ok(&cand)
                    && c.segment_ok(&pts[i - 1], &cand)
                    && c.segment_ok(&cand, &pts[i + 1])
                {
                    pts[i] = cand;
                }
            }
        }

        let after: f64 = pts.windows(2).map(|w| dist(&w[0], &w[1])).sum();
        if after < before - 1e-12 * before.max(1.0) {
            stale = 0;
        } else {
            stale += 1;
            if stale >= 20 {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AmbientPoint;

    fn ball(c: [f64; 4], a: f64) -> TangentBall {
        TangentBall::new(AmbientPoint::new(c.to_vec()).unwrap(), a).unwrap()
    }

    #[test]
    fn segment_disc_distance_matches_sampling() {
        let b = ball([0.8, 0.0, 0.0, 0.0], 0.1);
        let a = [0.7, 0.2, 0.05, 0.0];
        let e = [0.9, 0.15, -0.02, 0.01];
        let sd = SegmentDisc::new(&b, &a, &e);
        let (_, f) = sd.argmin();
        let sampled = (0..=20000)
            .map(|i| {
                let t = i as f64 / 20000.0;
                let p: Vec<f64> = a.iter().zip(&e).map(|(x, y)| x + t * (y - x)).collect();
                b.dist_to(&p)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((f.sqrt() - sampled).abs() < 1e-6);
    }

    #[test]
    fn empty_field_gives_radial_segment() {
        let shell = Shell::new(0.75, 0.78125).unwrap();
        let field = ObstacleField::new(&[], 1e-4, &shell);
        let res = search(
            &shell,
            4,
            &field,
            &PathSearchConfig {
                restarts: 5,
                ..Default::default()
            },
            None,
        );
        let l = res.best_length().unwrap();
        assert!((l - shell.thickness()).abs() < 1e-12);
    }

    #[test]
    fn single_ball_detour_is_bounded() {
        let shell = Shell::new(0.75, 0.78).unwrap();
        let b = vec![ball([0.765, 0.0, 0.0, 0.0], 0.001)];
        let field = ObstacleField::new(&b, 1e-4, &shell);
        let res = search(
            &shell,
            4,
            &field,
            &PathSearchConfig {
                restarts: 10,
                ..Default::default()
            },
            None,
        );
        let (l, path) = res.best.unwrap();
        assert!(l <= shell.thickness() + std::f64::consts::PI * 0.001 + 1e-9);
        assert!(l >= shell.thickness() - 1e-12);
        assert!(is_feasible(&path, &shell, &field));
    }

    #[test]
    fn walk_slides_around_a_blocking_disc() {
        let shell = Shell::new(0.75, 0.78).unwrap();
        let b = vec![ball([0.765, 0.0, 0.0, 0.0], 0.05)];
        let field = ObstacleField::new(&b, 1e-4, &shell);
        let mut r = rng(3);
        let start = vec![0.75, 0.0, 0.0, 0.0];
        let cfg = PathSearchConfig::default();
        let pts = walk(&shell, &field, &cfg, start, &mut r).unwrap();
        let p = Polyline::new(pts);
        assert!(is_feasible(&p, &shell, &field));
        // The walk must leave the disc sideways: at least the disc radius.
        assert!(p.length() > 0.05);
    }

    #[test]
    fn band_constraint_on_baseline_is_radial() {
        let f =
            CandidateMap::initial(crate::holo::Divisor::coordinate_hyperplane(2), 2, true).unwrap();
        let shell = Shell::new(0.75, 0.78).unwrap();
        let band = BandField {
            map: &f,
            lambda: 0.5,
            step: 0.0003,
        };
        let res = search(
            &shell,
            4,
            &band,
            &PathSearchConfig {
                restarts: 20,
                ..Default::default()
            },
            None,
        );
        let l = res.best_length().unwrap();
        assert!((l - 0.03).abs() < 1e-9);
    }

    #[test]
    fn band_that_excludes_the_shell_is_infeasible() {
        let f =
            CandidateMap::initial(crate::holo::Divisor::coordinate_hyperplane(2), 2, true).unwrap();
        let shell = Shell::new(0.75, 0.78).unwrap();
        // |z1| <= 0.78 < lambda everywhere in the shell.
        let band = BandField {
            map: &f,
            lambda: 0.9,
            step: 0.003,
        };
        let cfg = PathSearchConfig {
            restarts: 4,
            tree_nodes: 200,
            ..Default::default()
        };
        assert!(search(&shell, 4, &band, &cfg, None).best.is_none());
    }

    #[test]
    fn best_length_is_monotone_in_restart_count() {
        let shell = Shell::new(0.75, 0.78).unwrap();
        let b = vec![
            ball([0.765, 0.0, 0.0, 0.0], 0.02),
            ball([0.0, 0.765, 0.0, 0.0], 0.02),
        ];
        let field = ObstacleField::new(&b, 1e-4, &shell);
        let cfg = PathSearchConfig {
            restarts: 12,
            ..Default::default()
        };
        let res = search(&shell, 4, &field, &cfg, None);
        let mut prev = f64::INFINITY;
        for k in 1..=12 {
            let l = res.best_within(k).unwrap_or(f64::INFINITY);
            assert!(l <= prev);
            prev = l;
        }
        let small = search(
            &shell,
            4,
            &field,
            &PathSearchConfig {
                restarts: 5,
                ..cfg.clone()
            },
            None,
        );
        assert_eq!(small.best_within(5), res.best_within(5));
    }
}
