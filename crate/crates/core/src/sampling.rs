//! Deterministic point sets: Halton-based ball and sphere samples,
//! concentric-ring disc samples, spherical nets, random rotations and
//! per-purpose seed derivation.

use crate::geometry::{dot, norm, TangentBall};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{PI, TAU};

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named purpose and index from a run seed.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    // FNV-1a over the purpose tag keeps the derivation stable across builds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix(mix(seed ^ h).wrapping_add(index))
}

/// Seeded generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton sequence with a seeded Cranley-Patterson shift.
#[derive(Clone, Debug)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(
            dim <= PRIMES.len(),
            "Halton dimension {dim} exceeds the prime table"
        );
        let mut r = rng(seed);
        Self {
            shift: (0..dim).map(|_| r.random::<f64>()).collect(),
            index: 1,
        }
    }

    /// Writes the next point of `[0,1)^dim` into `out`.
    pub fn next_into(&mut self, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            let v = radical_inverse(self.index, PRIMES[d]) + self.shift[d];
            *o = v - v.floor();
        }
        self.index += 1;
    }
}

/// Maps `n - 1` uniforms to a point uniformly distributed on the standard
/// simplex in `R^n` by inverse-CDF stick breaking.
fn simplex_from_uniforms(u: &[f64], t: &mut [f64]) {
    let n = t.len();
    let mut rest = 1.0;
    for k in 0..n - 1 {
        let m = (n - 1 - k) as f64;
        let frac = 1.0 - (1.0 - u[k]).powf(1.0 / m);
        t[k] = rest * frac;
        rest -= t[k];
    }
    t[n - 1] = rest.max(0.0);
}

/// Maps `2n - 1` uniforms to the unit sphere of `C^n`. With
/// `z_k = sqrt(t_k) e^{i xi_k}`, `t` uniform on the simplex and the phases
/// uniform, the image measure is the uniform measure on the sphere.
fn sphere_from_uniforms(n: usize, u: &[f64], out: &mut [f64]) {
    let mut t = vec![0.0; n];
    simplex_from_uniforms(&u[..n - 1], &mut t);
    for k in 0..n {
        let r = t[k].sqrt();
        let xi = TAU * u[n - 1 + k];
        out[2 * k] = r * xi.cos();
        out[2 * k + 1] = r * xi.sin();
    }
}

/// Low-discrepancy points on the sphere of radius `radius` in `C^n`.
pub fn sphere_points(n: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut h = Halton::new(2 * n - 1, seed);
    let mut u = vec![0.0; 2 * n - 1];
    (0..count)
        .map(|_| {
            h.next_into(&mut u);
            let mut p = vec![0.0; 2 * n];
            sphere_from_uniforms(n, &u, &mut p);
            p.iter_mut().for_each(|c| *c *= radius);
            p
        })
        .collect()
}

/// Low-discrepancy points filling the closed ball of radius `radius` in
/// `C^n`. The set contains the origin, a quarter of the points on the
/// boundary sphere and the rest spread through the interior.
pub fn ball_points(n: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if count == 0 {
        return Vec::new();
    }
    let mut pts = vec![vec![0.0; 2 * n]];
    let on_sphere = (count - 1) / 4;
    pts.extend(sphere_points(n, radius, on_sphere, seed ^ 0x5a5a));
    let mut h = Halton::new(2 * n, seed);
    let mut u = vec![0.0; 2 * n];
    while pts.len() < count {
        h.next_into(&mut u);
        let mut p = vec![0.0; 2 * n];
        sphere_from_uniforms(n, &u[..2 * n - 1], &mut p);
        let r = radius * u[2 * n - 1].powf(1.0 / (2 * n) as f64);
        p.iter_mut().for_each(|c| *c *= r);
        pts.push(p);
    }
    pts
}

/// Unit vectors in `R^d`: a Fibonacci lattice for `d = 3`, normalized
/// Gaussian draws otherwise.
pub fn unit_vectors(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if d == 1 {
        return (0..count)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect();
    }
    if d == 3 {
        let golden = PI * (3.0 - 5f64.sqrt());
        let offset = rng(seed).random::<f64>() * TAU;
        return (0..count)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - y * y).max(0.0).sqrt();
                let phi = golden * i as f64 + offset;
                vec![r * phi.cos(), y, r * phi.sin()]
            })
            .collect();
    }
    let mut r = rng(seed);
    (0..count).map(|_| random_unit(d, &mut r)).collect()
}

/// A uniformly distributed unit vector in `R^d`.
pub fn random_unit(d: usize, r: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let l = norm(&v);
        if l > 1e-12 {
            return v.into_iter().map(|c| c / l).collect();
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the unit vector `u`,
/// read off the Householder reflection that maps `e_1` to `u`.
pub fn complement_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let d = u.len();
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    // v = u + s e_1 reflects u onto -s e_1; columns 2..d of the reflection
    // span u's complement.
    let mut v = u.to_vec();
    v[0] += s;
    let vv = dot(&v, &v);
    (1..d)
        .map(|k| {
            (0..d)
                .map(|i| {
                    let e = if i == k { 1.0 } else { 0.0 };
                    e - 2.0 * v[i] * v[k] / vv
                })
                .collect()
        })
        .collect()
}

/// Concentric-ring samples of a tangent ball: the center, then `rings`
/// spheres of radii `a k / rings` inside the disc's hyperplane with point
/// counts growing like `k^{d-1}`, `d = 2n - 1`. The outermost ring lies on
/// the boundary of the disc. Returns at least `count` points when
/// `count >= 1`.
pub fn disc_points(ball: &TangentBall, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let x = ball.center().coords();
    let dim = x.len();
    let d = dim - 1;
    let basis = complement_basis(&ball.normal());
    let mut out = vec![x.to_vec()];
    if count <= 1 || ball.radius() == 0.0 {
        return out;
    }
    let rings = ((count as f64).powf(1.0 / d as f64).ceil() as usize).max(1);
    let weights: Vec<f64> = (1..=rings).map(|k| (k as f64).powi(d as i32 - 1)).collect();
    let total: f64 = weights.iter().sum();
    for (k, w) in weights.iter().enumerate() {
        let m = ((count - 1) as f64 * w / total).ceil().max(1.0) as usize;
        let s = ball.radius() * (k + 1) as f64 / rings as f64;
        for dir in unit_vectors(d, m, derive_seed(seed, "ring", k as u64)) {
            let mut p = x.to_vec();
            for (c, b) in dir.iter().zip(&basis) {
                for i in 0..dim {
                    p[i] += s * c * b[i];
                }
            }
            out.push(p);
        }
    }
    out
}

/// Haar-random rotation of `R^d` from the QR factorization of a Gaussian
/// matrix with the sign convention that makes `R` have a positive diagonal.
pub fn random_rotation(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..d {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Applies a rotation to a point.
pub fn rotate(m: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    (0..p.len())
        .map(|i| (0..p.len()).map(|j| m[(i, j)] * p[j]).sum())
        .collect()
}

/// A net on the unit sphere `S^{d-1}` with angular step about `theta`,
/// built recursively in hyperspherical coordinates: polar angles in steps
/// of at most `theta`, and on each parallel a net of the lower sphere with
/// step `theta / sin(phi)`. The poles are single points.
pub fn sphere_net(d: usize, theta: f64) -> Vec<Vec<f64>> {
    assert!(d >= 2, "sphere net needs dimension at least 2");
    assert!(theta > 0.0, "angular step must be positive");
    if d == 2 {
        let k = ((TAU / theta).ceil() as usize).max(3);
        return (0..k)
            .map(|i| {
                let a = TAU * i as f64 / k as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let m = ((PI / theta).ceil() as usize).max(2);
    let mut out = Vec::new();
    for i in 0..=m {
        let phi = PI * i as f64 / m as f64;
        let (s, c) = phi.sin_cos();
        if s < 1e-12 {
            let mut p = vec![0.0; d];
            p[0] = c.signum();
            out.push(p);
            continue;
        }
        for q in sphere_net(d - 1, (theta / s).min(PI)) {
            let mut p = Vec::with_capacity(d);
            p.push(c);
            p.extend(q.iter().map(|v| v * s));
            out.push(p);
        }
    }
    out
}

/// Smallest angle between two distinct unit vectors of `pts`, found with a
/// neighbor grid sized by the angular resolution `theta` used to build them.
pub fn min_separation_angle(pts: &[Vec<f64>], theta: f64) -> f64 {
    use crate::geometry::PointGrid;
    if pts.len() < 2 {
        return PI;
    }
    // Chord length for angle theta is below theta, so neighbors closer than
    // the net step fall in adjacent cells.
    let cell = theta.min(2.0);
    let mut grid = PointGrid::new(cell);
    for (i, p) in pts.iter().enumerate() {
        grid.insert(p, i as u32);
    }
    let mut best = f64::INFINITY;
    let mut cand = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        cand.clear();
        grid.query(p, cell, &mut cand);
        for &j in &cand {
            if j as usize > i {
                let c = dot(p, &pts[j as usize]).clamp(-1.0, 1.0);
                best = best.min(c.acos());
            }
        }
    }
    if best.is_finite() {
        best
    } else {
        // Every pair is farther than one cell: bound by the net step.
        theta
    }
}
