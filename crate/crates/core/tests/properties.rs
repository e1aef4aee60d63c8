//! Randomized checks of the invariants each module promises.

use fibrelab_core::geometry::{
    dist, dist_to_tangent_ball, norm, outermost_radius, validate_tidy, AmbientPoint, Shell,
    TangentBall,
};
use fibrelab_core::holo::{sample_zero_set, CandidateMap, Divisor, EpsilonBudget};
use fibrelab_core::induction::{Ambient, Schedule};
use fibrelab_core::labyrinth::{
    build, disc_distance, inflate, split, BuildConfig, InflateConfig, SplitConfig, TangentLabyrinth,
};
use fibrelab_core::sampling::complement_basis;
use fibrelab_core::verify::{
    is_feasible, search, trace_fiber, ObstacleField, PathSearchConfig, TraceConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(v: [f64; 4]) -> Vec<f64> {
    let n = norm(&v);
    v.iter().map(|x| x / n).collect()
}

/// Nearest disc point to `p` by dense sampling in the disc coordinates,
/// refined by shrinking coordinate search. Uses only the disc definition.
fn brute_force_distance(t: &TangentBall, p: &[f64], samples: usize, seed: u64) -> f64 {
    let x = t.center().coords();
    let basis = complement_basis(&unit([x[0], x[1], x[2], x[3]]));
    let a = t.radius();
    let point = |w: &[f64; 3]| -> Vec<f64> {
        (0..4)
            .map(|i| x[i] + (0..3).map(|k| w[k] * basis[k][i]).sum::<f64>())
            .collect()
    };
    let inside = |w: &[f64; 3]| w.iter().map(|v| v * v).sum::<f64>() <= a * a;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = [0.0; 3];
    let mut best_d = dist(&point(&best), p);
    for _ in 0..samples {
        let w = [
            rng.random_range(-a..=a),
            rng.random_range(-a..=a),
            rng.random_range(-a..=a),
        ];
        if inside(&w) {
            let d = dist(&point(&w), p);
            if d < best_d {
                best_d = d;
                best = w;
            }
        }
    }
    let mut h = a / 50.0;
    while h > 1e-12 {
        let mut moved = false;
        for k in 0..3 {
            for s in [-1.0, 1.0] {
                let mut w = best;
                w[k] += s * h;
                if !inside(&w) {
                    let r = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                    w.iter_mut().for_each(|v| *v *= a / r);
                }
                let d = dist(&point(&w), p);
                if d < best_d {
                    best_d = d;
                    best = w;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    best_d
}

fn coords() -> impl Strategy<Value = [f64; 4]> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tangent_ball_distance_matches_brute_force(
        c in coords(), p in coords(), rho in 0.3f64..0.9, a in 0.01f64..0.2, seed in any::<u64>()
    ) {
        prop_assume!(norm(&c) > 1e-3);
        let x: Vec<f64> = unit(c).iter().map(|v| v * rho).collect();
        let t = TangentBall::new(AmbientPoint::new(x).unwrap(), a).unwrap();
        let q = AmbientPoint::new(p.to_vec()).unwrap();
        let exact = dist_to_tangent_ball(&t, &q);
        let oracle = brute_force_distance(&t, &p, 100_000, seed);
        prop_assert!((exact - oracle).abs() < 1e-6, "{exact} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outermost_radius_dominates_center_norm(c in coords(), a in 0.0f64..0.5) {
        prop_assume!(norm(&c) > 1e-3);
        let t = TangentBall::new(AmbientPoint::new(c.to_vec()).unwrap(), a).unwrap();
        let r = outermost_radius(&t);
        let x = norm(&c);
        prop_assert!(r >= x);
        prop_assert_eq!(r == x, a == 0.0);
    }

    #[test]
    fn epsilon_budget_halves(first in 1e-6f64..1.0, ratios in prop::collection::vec(0.01f64..0.499, 0..12)) {
        let mut b = EpsilonBudget::new(first).unwrap();
        let mut last = first;
        for r in ratios {
            last *= r;
            b.push(last).unwrap();
        }
        prop_assert!(b.halving_flags().iter().all(|&f| f));
        prop_assert!(b.push(last * 0.75).is_err());
    }

    #[test]
    fn default_schedules_interlace(steps in 1usize..24) {
        prop_assert!(Schedule::default_ball(steps).validate(Ambient::Ball).is_ok());
        prop_assert!(Schedule::default_full_space(steps).validate(Ambient::FullSpace).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn built_labyrinths_are_tidy_with_small_components(
        r in 0.3f64..0.8, t in 0.05f64..0.15, eta in 0.05f64..0.3, seed in any::<u64>()
    ) {
        let shell = Shell::new(r, r + t).unwrap();
        let cfg = BuildConfig { seed, ..Default::default() };
        // delta below the thickness: the build returns its first layout.
        let lab = build(&shell, t / 2.0, Some(eta), 2, &cfg).unwrap();
        prop_assert!(validate_tidy(lab.components(), &shell).is_ok());
        prop_assert!(lab.components().iter().all(|b| b.diameter() < eta));
    }

    #[test]
    fn inflated_sets_are_separated(seed in any::<u64>()) {
        let shell = Shell::new(0.5, 0.9).unwrap();
        let cfg = BuildConfig { seed, ..Default::default() };
        let lab = build(&shell, 0.1, Some(0.2), 2, &cfg).unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let sp = split(&lab, Some(&h), &SplitConfig::default()).unwrap();
        let inf = inflate(&sp, &lab, Some(&h), 0.5, &InflateConfig::default()).unwrap();
        let comps = lab.components();
        let two = 2.0 * inf.mu;
        for (i, a) in inf.delta2.iter().enumerate() {
            prop_assert_eq!(a.margin, two);
            let ta = &comps[a.component];
            for b in &inf.delta2[i + 1..] {
                prop_assert!(disc_distance(ta, &comps[b.component]) > 2.0 * two);
            }
            // Every point of the disc is at least its level from the origin.
            prop_assert!(ta.level() - 0.5 > two);
            for v in sample_zero_set(&h, 0.95, 400, seed) {
                prop_assert!(ta.dist_to(&v) > two);
            }
        }
    }

    #[test]
    fn split_is_stable_under_refinement(seed in any::<u64>()) {
        let shell = Shell::new(0.5, 0.9).unwrap();
        let cfg = BuildConfig { seed, ..Default::default() };
        let lab = build(&shell, 0.1, Some(0.2), 2, &cfg).unwrap();
        let h = Divisor::coordinate_hyperplane(2);
        let coarse = SplitConfig::default();
        let fine = SplitConfig { samples_per_disc: 2 * coarse.samples_per_disc, ..coarse.clone() };
        let a = split(&lab, Some(&h), &coarse).unwrap();
        let b = split(&lab, Some(&h), &fine).unwrap();
        for &i in &a.lambda_0 {
            if a.min_abs_h[i].is_some_and(|m| m > coarse.guard * coarse.tol) {
                prop_assert!(b.lambda_0.contains(&i));
            }
        }
    }

    #[test]
    fn returned_crossings_replay_as_feasible(c in coords(), a in 0.005f64..0.03, seed in any::<u64>()) {
        prop_assume!(norm(&c) > 1e-3);
        let shell = Shell::new(0.75, 0.8).unwrap();
        let x: Vec<f64> = unit(c).iter().map(|v| v * 0.775).collect();
        let balls = vec![TangentBall::new(AmbientPoint::new(x).unwrap(), a).unwrap()];
        let lab = TangentLabyrinth::from_components(shell, 0.79, balls, 0.0, None).unwrap();
        let cfg = PathSearchConfig { restarts: 4, seed, ..Default::default() };
        let field = ObstacleField::new(lab.components(), cfg.clearance, &shell);
        let res = search(&shell, 4, &field, &cfg, None);
        let (_, path) = res.best.expect("a single disc never blocks the shell");
        prop_assert!(is_feasible(&path, &shell, &field));
    }

    #[test]
    fn flat_fiber_trace_residual_stays_below_tol(re in -0.5f64..0.5, im in -0.5f64..0.5, y in -0.3f64..0.3) {
        let f = CandidateMap::initial(Divisor::coordinate_hyperplane(2), 2, true).unwrap();
        let c = Complex64::new(re, im);
        let cfg = TraceConfig::default();
        let shells = [Shell::new(0.75, 0.8125).unwrap()];
        let ledger = trace_fiber(&f, &[c], &[re, im, y, 0.0], &shells, &cfg).unwrap();
        prop_assert!(ledger.residual <= cfg.tol);
        prop_assert!(ledger.reached_stop);
    }
}

#[test]
fn brute_force_oracle_reproduces_the_oblique_example() {
    let t = TangentBall::new(AmbientPoint::new(vec![0.8, 0.0, 0.0, 0.0]).unwrap(), 0.1).unwrap();
    let d = brute_force_distance(&t, &[0.85, 0.15, 0.0, 0.0], 100_000, 3);
    assert!((d - 0.05f64.hypot(0.05)).abs() < 1e-6);
}

#[test]
fn degenerate_tangent_balls_are_rejected() {
    assert!(TangentBall::new(AmbientPoint::new(vec![0.0; 4]).unwrap(), 0.1).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    assert!(TangentBall::new(AmbientPoint::new(v).unwrap(), -0.1).is_err());
}
