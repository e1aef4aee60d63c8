//! Multi-start search for zeros of the extra factor `G = 1 + h^{s-1} W`,
//! whose zeros are exactly the zeros of a pinned map off `V`.

use crate::geometry::{norm, to_complex, to_real, TangentBall};
use crate::holo::CandidateMap;
use crate::sampling::{ball_points, derive_seed};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroScanConfig {
    pub starts: usize,
    pub radius: f64,
    /// Minimizers with `|G|` below this value count as zeros.
    pub floor: f64,
    /// Points with `|h|` below this value count as lying on `V`.
    pub v_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ZeroScanConfig {
    fn default() -> Self {
        Self {
            starts: 1000,
            radius: 0.875,
            floor: 1e-6,
            v_tol: 1e-8,
            max_iters: 60,
            seed: 0,
        }
    }
}

/// A region the scan must find free of extra zeros: the open `margin`
/// neighborhood of some labyrinth components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub step: usize,
    pub components: Vec<TangentBall>,
    pub margin: f64,
}

impl Neighborhood {
    pub fn contains(&self, p: &[f64]) -> bool {
        self.components.iter().any(|b| b.dist_to(p) < self.margin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroHit {
    pub point: Vec<f64>,
    pub value: f64,
    pub h_abs: f64,
    /// Steps whose neighborhood contains the point.
    pub inside: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroScan {
    pub starts: usize,
    pub min_value: f64,
    /// Minimizers below the floor, deduplicated.
    pub zeros: Vec<ZeroHit>,
    /// Zeros inside a protected neighborhood.
    pub violations: usize,
    /// `false` for maps whose zero set is not pinned to `V`.
    pub applicable: bool,
}

impl ZeroScan {
    /// No zero found inside any protected neighborhood.
    pub fn passes(&self) -> bool {
        self.violations == 0
    }

    /// No zero found anywhere in the explored ball.
    pub fn zero_free(&self) -> bool {
        self.zeros.is_empty()
    }
}

/// `|G|` and the complex gradient of `G` at `z` (first component of `F`
/// with the smallest value when `q > 1`).
fn factor(f: &CandidateMap, z: &[Complex64]) -> (Complex64, Vec<Complex64>) {
    f.extra_zero_factor(z)
        .into_iter()
        .min_by(|a, b| a.0.norm().total_cmp(&b.0.norm()))
        .expect("q >= 1")
}

/// Damped Newton descent on `|G|` restricted to the closed ball: the step
/// `-G conj(grad G) / |grad G|^2` zeroes the linearization of the
/// holomorphic `G`; the step is halved until `|G|` decreases, and iterates
/// leaving the ball are pulled back radially.
pub fn local_min(f: &CandidateMap, start: &[f64], radius: f64, iters: usize) -> (Vec<f64>, f64) {
    let mut z = to_complex(start);
    let (mut g, mut grad) = factor(f, &z);
    for _ in 0..iters {
        let gn: f64 = grad.iter().map(|c| c.norm_sqr()).sum();
        if g.norm() == 0.0 || gn == 0.0 {
            break;
        }
        let dir: Vec<Complex64> = grad.iter().map(|c| -g * c.conj() / gn).collect();
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let mut cand: Vec<Complex64> = z.iter().zip(&dir).map(|(a, d)| a + d * t).collect();
            let r = norm(&to_real(&cand));
            if r > radius {
                cand.iter_mut().for_each(|c| *c *= radius / r);
            }
            let (g2, grad2) = factor(f, &cand);
            if g2.norm() < g.norm() {
                z = cand;
                g = g2;
                grad = grad2;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (to_real(&z), g.norm())
}

/// Multi-start scan for zeros of `G` inside the ball of radius
/// `cfg.radius`. Every zero is checked against the protected
/// neighborhoods; zeros on `V` itself are ignored.
pub fn zero_avoidance(
    f: &CandidateMap,
    protected: &[Neighborhood],
    cfg: &ZeroScanConfig,
) -> ZeroScan {
    if !f.is_pinned() {
        return ZeroScan {
            starts: 0,
            min_value: f64::INFINITY,
            zeros: Vec::new(),
            violations: 0,
            applicable: false,
        };
    }
    let starts = ball_points(
        f.n(),
        cfg.radius,
        cfg.starts,
        derive_seed(cfg.seed, "zero-scan", 0),
    );
    let mins: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|s| local_min(f, s, cfg.radius, cfg.max_iters))
        .collect();
    let min_value = mins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let mut zeros: Vec<ZeroHit> = Vec::new();
    for (p, v) in mins {
        if v >= cfg.floor {
            continue;
        }
        let h_abs = f.divisor().abs(&to_complex(&p));
        if h_abs < cfg.v_tol {
            continue;
        }
        if zeros
            .iter()
            .any(|z| crate::geometry::dist(&z.point, &p) < 1e-6)
        {
            continue;
        }
        let inside = protected
            .iter()
            .filter(|o| o.contains(&p))
            .map(|o| o.step)
            .collect();
        zeros.push(ZeroHit {
            point: p,
            value: v,
            h_abs,
            inside,
        });
    }
    let violations = zeros.iter().filter(|z| !z.inside.is_empty()).count();
    ZeroScan {
        starts: cfg.starts,
        min_value,
        zeros,
        violations,
        applicable: true,
    }
}
