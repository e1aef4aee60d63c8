//! Points, shells and tangent balls in `R^{2n}`, identified with `C^n` via
//! `z_k = x_{2k-1} + i x_{2k}`.
//!
//! A tangent ball is the closed `(2n-1)`-dimensional disc
//! `{y : <y - x, x> = 0, |y - x| <= a}`. It is stored as its center and radius
//! only; the supporting hyperplane is always recovered from the center.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Absolute tolerance used by containment and tidiness checks.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ambient coordinates must have even length 2n with n >= 2, got {0}")]
    BadDimension(usize),
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("shell radii must satisfy 0 < inner < outer, got inner={inner}, outer={outer}")]
    BadShell { inner: f64, outer: f64 },
    #[error("tangent ball needs a nonzero center and a positive radius (|x|={norm}, a={radius})")]
    BadTangentBall { norm: f64, radius: f64 },
    #[error("cannot certify an empty collection of tangent balls")]
    Empty,
    #[error(transparent)]
    Tidy(#[from] TidyViolation),
}

/// Euclidean inner product of two real coordinate slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm of a real coordinate slice.
#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two points.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Converts real coordinates `(x_1, ..., x_{2n})` to complex coordinates.
pub fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

/// Converts complex coordinates to interleaved real coordinates.
pub fn to_real(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// A point of `C^n ≡ R^{2n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AmbientPoint {
    coords: Vec<f64>,
}

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.len() < 4 || !coords.len().is_multiple_of(2) {
            return Err(GeometryError::BadDimension(coords.len()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { coords })
    }

    pub fn from_complex(z: &[Complex64]) -> Result<Self, GeometryError> {
        Self::new(to_real(z))
    }

    pub fn origin(n: usize) -> Result<Self, GeometryError> {
        Self::new(vec![0.0; 2 * n])
    }

    /// Complex dimension `n`.
    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    /// The complex coordinate `z_k` (zero based).
    pub fn z(&self, k: usize) -> Complex64 {
        Complex64::new(self.coords[2 * k], self.coords[2 * k + 1])
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        to_complex(&self.coords)
    }
}

impl TryFrom<Vec<f64>> for AmbientPoint {
    type Error = GeometryError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<AmbientPoint> for Vec<f64> {
    fn from(p: AmbientPoint) -> Self {
        p.coords
    }
}

impl AsRef<[f64]> for AmbientPoint {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// The open spherical shell `{inner < |z| < outer}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShellWire", into = "ShellWire")]
pub struct Shell {
    inner: f64,
    outer: f64,
}

#[derive(Serialize, Deserialize)]
struct ShellWire {
    inner: f64,
    outer: f64,
}

impl TryFrom<ShellWire> for Shell {
    type Error = GeometryError;
    fn try_from(w: ShellWire) -> Result<Self, Self::Error> {
        Shell::new(w.inner, w.outer)
    }
}

impl From<Shell> for ShellWire {
    fn from(s: Shell) -> Self {
        ShellWire {
            inner: s.inner,
            outer: s.outer,
        }
    }
}

impl Shell {
    pub fn new(inner: f64, outer: f64) -> Result<Self, GeometryError> {
        if !(inner.is_finite() && outer.is_finite() && inner > 0.0 && inner < outer) {
            return Err(GeometryError::BadShell { inner, outer });
        }
        Ok(Self { inner, outer })
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn thickness(&self) -> f64 {
        self.outer - self.inner
    }
}

/// A closed disc centered at `x`, lying in the hyperplane through `x`
/// orthogonal to `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TangentBallWire", into = "TangentBallWire")]
pub struct TangentBall {
    center: AmbientPoint,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct TangentBallWire {
    center: AmbientPoint,
    radius: f64,
}

impl TryFrom<TangentBallWire> for TangentBall {
    type Error = GeometryError;
    fn try_from(w: TangentBallWire) -> Result<Self, Self::Error> {
        TangentBall::new(w.center, w.radius)
    }
}

impl From<TangentBall> for TangentBallWire {
    fn from(t: TangentBall) -> Self {
        TangentBallWire {
            center: t.center,
            radius: t.radius,
        }
    }
}

impl TangentBall {
    /// Builds a tangent ball. A zero radius is allowed and gives the
    /// degenerate one-point ball.
    pub fn new(center: AmbientPoint, radius: f64) -> Result<Self, GeometryError> {
        let nrm = center.norm();
        if !(nrm > 0.0 && radius >= 0.0 && radius.is_finite()) {
            return Err(GeometryError::BadTangentBall { norm: nrm, radius });
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &AmbientPoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// `|x|`, the distance of the supporting hyperplane from the origin.
    pub fn level(&self) -> f64 {
        self.center.norm()
    }

    /// Unit normal `x / |x|` of the supporting hyperplane.
    pub fn normal(&self) -> Vec<f64> {
        let r = self.level();
        self.center.coords().iter().map(|c| c / r).collect()
    }

    /// Largest `|y|` over the disc: `sqrt(|x|^2 + a^2)`.
    pub fn outermost_radius(&self) -> f64 {
        self.level().hypot(self.radius)
    }

    /// Splits `p - x` into the signed normal offset `u` and the in-plane
    /// distance `rho` from the center.
    pub fn normal_and_planar(&self, p: &[f64]) -> (f64, f64) {
        let x = self.center.coords();
        let r = self.level();
        let mut u = 0.0;
        for (pi, xi) in p.iter().zip(x) {
            u += (pi - xi) * xi;
        }
        u /= r;
        let mut rho2 = 0.0;
        for (pi, xi) in p.iter().zip(x) {
            let w = (pi - xi) - u * xi / r;
            rho2 += w * w;
        }
        (u, rho2.sqrt())
    }

    /// Euclidean distance from `p` to the disc.
    pub fn dist_to(&self, p: &[f64]) -> f64 {
        let (u, rho) = self.normal_and_planar(p);
        u.hypot((rho - self.radius).max(0.0))
    }
}

/// Free-function form of [`TangentBall::dist_to`].
pub fn dist_to_tangent_ball(t: &TangentBall, p: &AmbientPoint) -> f64 {
    t.dist_to(p.coords())
}

/// Free-function form of [`TangentBall::outermost_radius`].
pub fn outermost_radius(t: &TangentBall) -> f64 {
    t.outermost_radius()
}

/// Which clause of the tidiness definition a pair of balls violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TidyRule {
    /// Two balls with the same center norm have different radii.
    EqualNormRadius,
    /// A ball at a lower level reaches beyond the center norm of a higher one.
    Nesting,
    /// Two balls at the same level intersect.
    Overlap,
    /// A ball is not strictly inside the shell.
    Shell,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("tidiness rule {rule:?} violated by balls {first} and {second}")]
pub struct TidyViolation {
    pub first: usize,
    pub second: usize,
    pub rule: TidyRule,
}

/// Level structure of a tidy collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TidyCertificate {
    /// Distinct center norms, increasing.
    pub radial_levels: Vec<f64>,
    /// The common radius of the balls on each level.
    pub per_level_radius: Vec<f64>,
    /// For each consecutive pair of levels, whether the lower level sits
    /// strictly inside the sphere through the centers of the upper one.
    pub nesting_ok: Vec<bool>,
}

impl TidyCertificate {
    pub fn level_count(&self) -> usize {
        self.radial_levels.len()
    }

    /// Index of the level whose norm matches `norm` within `tol`.
    pub fn level_of(&self, norm: f64, tol: f64) -> Option<usize> {
        let i = self.radial_levels.partition_point(|&l| l < norm - tol);
        (i < self.radial_levels.len() && (self.radial_levels[i] - norm).abs() <= tol).then_some(i)
    }
}

/// Checks the tidiness rules with the default tolerance.
pub fn validate_tidy(
    balls: &[TangentBall],
    shell: &Shell,
) -> Result<TidyCertificate, GeometryError> {
    validate_tidy_with(balls, shell, DEFAULT_TOL)
}

/// Checks the tidiness rules. Center norms within `tol` of each other are
/// treated as one level.
pub fn validate_tidy_with(
    balls: &[TangentBall],
    shell: &Shell,
    tol: f64,
) -> Result<TidyCertificate, GeometryError> {
    if balls.is_empty() {
        return Err(GeometryError::Empty);
    }
    for (i, b) in balls.iter().enumerate() {
        if b.level() <= shell.inner() + tol || b.outermost_radius() >= shell.outer() - tol {
            return Err(TidyViolation {
                first: i,
                second: i,
                rule: TidyRule::Shell,
            }
            .into());
        }
    }

    let mut order: Vec<usize> = (0..balls.len()).collect();
    order.sort_by(|&i, &j| balls[i].level().total_cmp(&balls[j].level()));

    // Group into levels; every member must share the radius of the first one.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if (balls[i].level() - balls[g[0]].level()).abs() <= tol => {
                if (balls[i].radius() - balls[g[0]].radius()).abs() > tol {
                    return Err(TidyViolation {
                        first: g[0],
                        second: i,
                        rule: TidyRule::EqualNormRadius,
                    }
                    .into());
                }
                g.push(i);
            }
            _ => groups.push(vec![i]),
        }
    }

    // Nesting only needs checking between consecutive levels: the widest
    // ball of a level is reached by all of its members, and level norms
    // increase.
    let mut nesting_ok = Vec::with_capacity(groups.len().saturating_sub(1));
    for w in groups.windows(2) {
        let lower = &balls[w[0][0]];
        let upper = &balls[w[1][0]];
        if lower.outermost_radius() >= upper.level() - tol {
            return Err(TidyViolation {
                first: w[0][0],
                second: w[1][0],
                rule: TidyRule::Nesting,
            }
            .into());
        }
        nesting_ok.push(true);
    }

    for g in &groups {
        check_same_level_disjoint(balls, g, tol)?;
    }

    Ok(TidyCertificate {
        radial_levels: groups.iter().map(|g| balls[g[0]].level()).collect(),
        per_level_radius: groups.iter().map(|g| balls[g[0]].radius()).collect(),
        nesting_ok,
    })
}

/// Two discs of radius `a` tangent to the sphere of radius `rho`, with
/// centers at angle `theta`, meet iff `a >= rho * tan(theta / 2)`.
/// They can only meet when the centers are closer than `2a`, so a grid of
/// cell size `2a` finds all candidates.
fn check_same_level_disjoint(
    balls: &[TangentBall],
    group: &[usize],
    tol: f64,
) -> Result<(), GeometryError> {
    if group.len() < 2 {
        return Ok(());
    }
    let a = balls[group[0]].radius();
    let rho = balls[group[0]].level();
    let reach = 2.0 * a + tol;
    let mut grid = PointGrid::new(reach.max(1e-12));
    for (k, &i) in group.iter().enumerate() {
        grid.insert(balls[i].center().coords(), k as u32);
    }
    let mut cand = Vec::new();
    for (k, &i) in group.iter().enumerate() {
        let ci = balls[i].center().coords();
        cand.clear();
        grid.query(ci, reach, &mut cand);
        for &m in &cand {
            let m = m as usize;
            if m <= k {
                continue;
            }
            let j = group[m];
            let cj = balls[j].center().coords();
            let cos = (dot(ci, cj) / (rho * balls[j].level())).clamp(-1.0, 1.0);
            let half = 0.5 * cos.acos();
            if a >= rho * half.tan() - tol {
                return Err(TidyViolation {
                    first: i,
                    second: j,
                    rule: TidyRule::Overlap,
                }
                .into());
            }
        }
    }
    Ok(())
}

/// Uniform hash grid over points of any dimension, used for neighbor
/// queries among ball centers.
#[derive(Clone, Debug)]
pub struct PointGrid {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<u32>>,
}

impl PointGrid {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell size must be positive");
        Self {
            cell,
            cells: HashMap::new(),
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|c| (c / self.cell).floor() as i64).collect()
    }

    /// Inserts `id` into the single cell containing `p`.
    pub fn insert(&mut self, p: &[f64], id: u32) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    /// Inserts `id` into every cell meeting the cube of half-width `r`
    /// around `p`.
    pub fn insert_box(&mut self, p: &[f64], r: f64, id: u32) {
        let lo: Vec<i64> = p
            .iter()
            .map(|c| ((c - r) / self.cell).floor() as i64)
            .collect();
        let hi: Vec<i64> = p
            .iter()
            .map(|c| ((c + r) / self.cell).floor() as i64)
            .collect();
        for_each_cell(&lo, &hi, |k| {
            self.cells.entry(k.to_vec()).or_default().push(id)
        });
    }

    /// Appends ids stored in cells meeting the cube of half-width `r`
    /// around `p`. Ids inserted with [`PointGrid::insert_box`] may repeat.
    pub fn query(&self, p: &[f64], r: f64, out: &mut Vec<u32>) {
        let lo: Vec<i64> = p
            .iter()
            .map(|c| ((c - r) / self.cell).floor() as i64)
            .collect();
        let hi: Vec<i64> = p
            .iter()
            .map(|c| ((c + r) / self.cell).floor() as i64)
            .collect();
        self.query_cells(&lo, &hi, out);
    }

    /// Appends ids stored in cells meeting the axis-aligned box `[lo, hi]`.
    pub fn query_box(&self, lo: &[f64], hi: &[f64], out: &mut Vec<u32>) {
        let lo: Vec<i64> = lo.iter().map(|c| (c / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = hi.iter().map(|c| (c / self.cell).floor() as i64).collect();
        self.query_cells(&lo, &hi, out);
    }

    fn query_cells(&self, lo: &[i64], hi: &[i64], out: &mut Vec<u32>) {
        for_each_cell(lo, hi, |k| {
            if let Some(ids) = self.cells.get(k) {
                out.extend_from_slice(ids);
            }
        });
    }
}

fn for_each_cell(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    let mut k = lo.to_vec();
    loop {
        f(&k);
        let mut d = 0;
        loop {
            if d == k.len() {
                return;
            }
            if k[d] < hi[d] {
                k[d] += 1;
                break;
            }
            k[d] = lo[d];
            d += 1;
        }
    }
}
