//! Continuation along a fiber `F = c` in the direction that increases `|z|`
//! fastest, with per-shell arclength accounting.

use crate::geometry::{dist, norm, Shell};
use crate::holo::CandidateMap;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("starting point is off the fiber: |F - c| = {0}")]
    OffFiber(f64),
    #[error("Jacobian lost rank on the fiber at |z| = {radius} (smallest singular value {sigma})")]
    RankLoss { radius: f64, sigma: f64 },
    #[error("Newton projection diverged at |z| = {0}")]
    ProjectionDiverged(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub step: f64,
    pub stop_radius: f64,
    pub max_steps: usize,
    pub tol: f64,
    pub newton_iters: usize,
    pub rank_floor: f64,
    /// Relative shortfall allowed when comparing arclengths with budgets.
    pub slack: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            stop_radius: 0.999,
            max_steps: 200_000,
            tol: 1e-10,
            newton_iters: 20,
            rank_floor: 1e-10,
            slack: 0.05,
        }
    }
}

/// Arclength accrued while `r <= |z| <= R` for one shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellLength {
    pub shell: usize,
    pub inner: f64,
    pub outer: f64,
    pub length: f64,
}

/// One accepted continuation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub radius: f64,
    pub shell: Option<usize>,
    pub cumlength: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLedger {
    pub c: Vec<Complex64>,
    pub points: Vec<Vec<f64>>,
    pub per_shell: Vec<ShellLength>,
    pub residual: f64,
    pub length: f64,
    pub reached_stop: bool,
    pub rows: Vec<TraceRow>,
}

impl TraceLedger {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,radius,shell,cumlength,residual\n");
        for r in &self.rows {
            let shell = r.shell.map(|k| k.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.radius, shell, r.cumlength, r.residual
            ));
        }
        s
    }

    pub fn shell_length(&self, shell: usize) -> Option<f64> {
        self.per_shell
            .iter()
            .find(|s| s.shell == shell)
            .map(|s| s.length)
    }
}

/// Real `2q x 2n` Jacobian of `x -> (Re F, Im F)`.
fn real_jacobian(j: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (q, n) = (j.nrows(), j.ncols());
    let mut r = DMatrix::zeros(2 * q, 2 * n);
    for i in 0..q {
        for k in 0..n {
            let g = j[(i, k)];
            r[(2 * i, 2 * k)] = g.re;
            r[(2 * i, 2 * k + 1)] = -g.im;
            r[(2 * i + 1, 2 * k)] = g.im;
            r[(2 * i + 1, 2 * k + 1)] = g.re;
        }
    }
    r
}

fn residual_vec(f: &CandidateMap, x: &[f64], c: &[Complex64]) -> DVector<f64> {
    let v = f.eval(x);
    DVector::from_iterator(
        2 * v.len(),
        v.iter().zip(c).flat_map(|(a, b)| [(a - b).re, (a - b).im]),
    )
}

/// Newton projection onto `F = c` with the Jacobian pseudo-inverse.
pub fn project(
    f: &CandidateMap,
    x: &[f64],
    c: &[Complex64],
    cfg: &TraceConfig,
) -> Option<(Vec<f64>, f64)> {
    let mut y = x.to_vec();
    for _ in 0..=cfg.newton_iters {
        let r = residual_vec(f, &y, c);
        let rn = r.norm();
        if rn < cfg.tol {
            return Some((y, rn));
        }
        let jr = real_jacobian(&f.jacobian(&y));
        let pinv = jr.pseudo_inverse(1e-14).ok()?;
        let d = pinv * r;
        for (yi, di) in y.iter_mut().zip(d.iter()) {
            *yi -= di;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let rn = residual_vec(f, &y, c).norm();
    (rn < cfg.tol).then_some((y, rn))
}

/// Unit tangent of the fiber at `x` maximizing the radial derivative. When
/// the radial direction is normal to the fiber, continues along `prev` (or
/// the first kernel vector at the start).
fn escape_direction(
    f: &CandidateMap,
    x: &[f64],
    prev: Option<&[f64]>,
    rank_floor: f64,
) -> Result<Vec<f64>, TraceError> {
    let jr = real_jacobian(&f.jacobian(x));
    let dim = x.len();
    let rows = jr.nrows();
    let eig = SymmetricEigen::new(jr.transpose() * &jr);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let sigma = eig.eigenvalues[order[dim - rows]].max(0.0).sqrt();
    if sigma < rank_floor {
        return Err(TraceError::RankLoss {
            radius: norm(x),
            sigma,
        });
    }
    let kernel: Vec<DVector<f64>> = order[..dim - rows]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let project = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for k in &kernel {
            let c: f64 = k.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 0..dim {
                out[i] += c * k[i];
            }
        }
        out
    };
    let r = norm(x);
    let radial: Vec<f64> = x.iter().map(|v| v / r.max(1e-300)).collect();
    let mut d = project(&radial);
    if norm(&d) < 1e-8 {
        d = match prev {
            Some(p) => project(p),
            None => kernel[0].iter().cloned().collect(),
        };
    }
    let l = norm(&d);
    Ok(d.iter().map(|v| v / l).collect())
}

/// Arclength split of a segment between shells, proportional to the part
/// of the radial interval `[|a|, |b|]` inside each shell.
fn credit(per_shell: &mut [ShellLength], a: &[f64], b: &[f64]) {
    let (ra, rb) = (norm(a), norm(b));
    let len = dist(a, b);
    let (lo, hi) = (ra.min(rb), ra.max(rb));
    for s in per_shell.iter_mut() {
        if hi - lo <= 1e-15 {
            if lo >= s.inner && lo <= s.outer {
                s.length += len;
            }
            continue;
        }
        let overlap = (hi.min(s.outer) - lo.max(s.inner)).max(0.0);
        s.length += len * overlap / (hi - lo);
    }
}

/// Follows the fiber through `z0` outward until `|z| = stop_radius`.
pub fn trace_fiber(
    f: &CandidateMap,
    c: &[Complex64],
    z0: &[f64],
    shells: &[Shell],
    cfg: &TraceConfig,
) -> Result<TraceLedger, TraceError> {
    let r0 = residual_vec(f, z0, c).norm();
    if r0 >= cfg.tol.max(1e-8) {
        return Err(TraceError::OffFiber(r0));
    }
    let mut per_shell: Vec<ShellLength> = shells
        .iter()
        .enumerate()
        .map(|(k, s)| ShellLength {
            shell: k + 1,
            inner: s.inner(),
            outer: s.outer(),
            length: 0.0,
        })
        .collect();
    let shell_of = |r: f64| {
        shells
            .iter()
            .position(|s| r >= s.inner() && r <= s.outer())
            .map(|k| k + 1)
    };
    let mut x = z0.to_vec();
    let mut points = vec![x.clone()];
    let mut rows = vec![TraceRow {
        step: 0,
        radius: norm(&x),
        shell: shell_of(norm(&x)),
        cumlength: 0.0,
        residual: r0,
    }];
    let mut residual = r0;
    let mut length = 0.0;
    let mut prev: Option<Vec<f64>> = None;
    let mut reached = norm(&x) >= cfg.stop_radius;
    let mut k = 0;
    while !reached && k < cfg.max_steps {
        k += 1;
        let d = escape_direction(f, &x, prev.as_deref(), cfg.rank_floor)?;
        let mut h = cfg.step;
        let mut next = None;
        for _ in 0..30 {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            if let Some(p) = project(f, &y, c, cfg) {
                if dist(&p.0, &x) < 4.0 * h {
                    next = Some(p);
                    break;
                }
            }
            h *= 0.5;
        }
        let (mut y, mut ry) = next.ok_or(TraceError::ProjectionDiverged(norm(&x)))?;
        if norm(&y) >= cfg.stop_radius {
            // Bisect the step length so the last point lands on the stop sphere.
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let t: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + mid * b).collect();
                match project(f, &t, c, cfg) {
                    Some((p, rp)) if norm(&p) >= cfg.stop_radius => {
                        hi = mid;
                        y = p;
                        ry = rp;
                    }
                    Some(_) => lo = mid,
                    None => break,
                }
            }
            reached = true;
        }
        credit(&mut per_shell, &x, &y);
        length += dist(&x, &y);
        residual = residual.max(ry);
        let dir: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        prev = Some(dir);
        x = y;
        rows.push(TraceRow {
            step: k,
            radius: norm(&x),
            shell: shell_of(norm(&x)),
            cumlength: length,
            residual: ry,
        });
        points.push(x.clone());
    }
    Ok(TraceLedger {
        c: c.to_vec(),
        points,
        per_shell,
        residual,
        length,
        reached_stop: reached,
        rows,
    })
}

/// A point of the fiber `F = c` near `guess`.
pub fn fiber_point(
    f: &CandidateMap,
    c: &[Complex64],
    guess: &[f64],
    cfg: &TraceConfig,
) -> Option<Vec<f64>> {
    project(f, guess, c, cfg).map(|p| p.0)
}
