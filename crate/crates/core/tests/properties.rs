use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use saddle_escape::flow::{
    self, classify_abc, deterministic_exit_time, descent_time_bound, estimate_kappa, integrate, AbcClass, DomainSpec,
};
use saddle_escape::landscape::{
    builtin_bowl, builtin_quadratic_form, builtin_quadratic_saddle, builtin_saddle_chain, classify_critical_point,
    finite_difference_check, verify_strict_saddle_property, Classification, Landscape,
};
use saddle_escape::saddle_analysis::{q_max, shell_edge, shell_exit_bound, shell_of_distance, LinearSaddle, Shell};
use saddle_escape::sde::{simulate_path, stopping_sequence, SdeConfig};

fn builtins() -> Vec<Landscape> {
    vec![
        builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap(),
        builtin_quadratic_saddle(&[2.0, 2.0], &[1.0]).unwrap(),
        builtin_bowl(&[1.0, 3.0]).unwrap(),
        builtin_saddle_chain(1, 2.0, 2.0, 1.0).unwrap(),
        builtin_saddle_chain(2, 2.0, 2.0, 1.0).unwrap(),
        builtin_saddle_chain(3, 1.5, 2.5, 0.7).unwrap(),
    ]
}

#[test]
fn stored_classification_matches_classifier() {
    for land in builtins() {
        for c in land.critical_points() {
            let got = classify_critical_point(&c.eigenvalues, land.gamma1(), land.gamma3()).unwrap();
            assert_eq!(got, c.classification, "{} at {:?}", land.name(), c.location);
        }
    }
}

#[test]
fn finite_differences_on_all_builtins() {
    for land in builtins() {
        for x in land.region().grid(12) {
            let err = finite_difference_check(&land, &x, 1e-5).unwrap();
            assert!(err <= 1e-5, "{} at {x:?}: {err:e}", land.name());
        }
    }
}

#[test]
fn strict_saddle_holds_on_all_builtins() {
    for land in builtins() {
        let report = verify_strict_saddle_property(&land, &land.region().grid(30));
        assert!(report.violations.is_empty(), "{}: {:?}", land.name(), &report.violations[..1]);
    }
}

/// Largest `|dF/dt + |grad F|^2|` along a recorded trajectory, using forward differences.
fn lyapunov_residual(land: &Landscape, dt: f64) -> f64 {
    let traj = integrate(land, &[-1.2, 0.35], dt, 3.0, None).unwrap();
    traj.states
        .windows(2)
        .zip(traj.f_values.windows(2))
        .map(|(s, f)| {
            let g = land.gradient_vec(&s[0]);
            ((f[1] - f[0]) / dt + g.iter().map(|v| v * v).sum::<f64>()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn lyapunov_residual_is_first_order() {
    for land in [builtin_saddle_chain(2, 2.0, 2.0, 1.0).unwrap(), builtin_bowl(&[1.0, 3.0]).unwrap()] {
        let (a, b) = (lyapunov_residual(&land, 2e-3), lyapunov_residual(&land, 1e-3));
        let ratio = a / b;
        assert!((ratio - 2.0).abs() < 0.1, "{}: ratio {ratio}", land.name());
    }
}

#[test]
fn zero_noise_paths_follow_the_flow() {
    let land = builtin_saddle_chain(2, 2.0, 2.0, 1.0).unwrap();
    let x0 = land.chain().unwrap().start_before_first(&land, 0.5);
    let x0 = vec![x0[0], x0[1] + 0.05];
    let gap = |dt: f64| {
        let path = simulate_path(&land, &SdeConfig::new(0.0, dt, 4.0, 0), &x0).unwrap();
        let traj = integrate(&land, &x0, dt, 4.0, None).unwrap();
        path.iter()
            .zip(&traj.states)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    };
    let (g1, g2) = (gap(2e-3), gap(1e-3));
    assert!(g1 < 0.05 && g2 < 0.03, "{g1} {g2}");
    assert!((g1 / g2 - 2.0).abs() < 0.25, "ratio {}", g1 / g2);
}

#[test]
fn abc_partition_of_the_ball() {
    let land = builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap();
    let saddle = land.critical_points()[0].clone();
    let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);
    let n = 41;
    let (mut a1, mut total) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            let x = [-1.0 + 2.0 * i as f64 / (n - 1) as f64 + 1e-3, -1.0 + 2.0 * j as f64 / (n - 1) as f64];
            if x[0].hypot(x[1]) >= 1.0 {
                continue;
            }
            total += 1;
            match classify_abc(&land, &x, &ball, &saddle, 1e-2, 40.0).unwrap() {
                AbcClass::A1 => a1 += 1,
                AbcClass::Origin | AbcClass::A2 | AbcClass::A3 => {}
                AbcClass::Undetermined(why) => panic!("{x:?}: {why}"),
            }
        }
    }
    // Shifted off the stable axis, no grid point lies in A1.
    assert_eq!(a1, 0);
    assert!(total > 1000);
}

#[test]
fn descent_bound_covers_band_crossings() {
    let land = builtin_bowl(&[1.0, 3.0]).unwrap();
    let band = DomainSpec::SublevelBand { f_low: 0.1, f_high: 1.0 };
    let kappa = estimate_kappa(&land, &band, 101, &[]).unwrap();
    let bound = descent_time_bound(1.0, 0.1, kappa).unwrap();
    for i in 0..100 {
        let a = 2.0 * std::f64::consts::PI * i as f64 / 100.0;
        // Point on F = 1.
        let x = [a.cos() * 2f64.sqrt(), a.sin() * (2.0 / 3.0f64).sqrt()];
        let traj = integrate(&land, &x, 1e-3, bound + 1.0, None).unwrap();
        let t = traj.times[traj.f_values.iter().position(|f| *f <= 0.1).unwrap()];
        assert!(t <= bound, "start {x:?}: {t} > {bound}");
    }
}

#[test]
fn stopping_sequences_on_many_seeds() {
    let land = builtin_saddle_chain(2, 2.0, 2.0, 1.0).unwrap();
    let x0 = land.chain().unwrap().start_before_first(&land, 0.75);
    let h = flow::default_h(&land).unwrap();
    let levels: Vec<f64> = land.saddles().iter().map(|s| s.f_value).collect();
    for seed in 0..40 {
        let cfg = SdeConfig::new(3e-2, 1e-3, 60.0, seed);
        let seq = stopping_sequence(&land, h, &cfg, &x0, 3).unwrap();
        assert!(seq.windows(2).all(|w| w[0].time <= w[1].time), "seed {seed}");
        for (i, r) in seq.iter().enumerate().filter(|(_, r)| !r.truncated) {
            let (prefix, shift) = if i % 2 == 0 { ("tau_", 0.5 * h) } else { ("sigma_", -h) };
            assert!(r.label.starts_with(prefix), "seed {seed}: {}", r.label);
            let j: usize = r.label[prefix.len()..].parse().unwrap();
            assert!((r.f_value - (levels[j - 1] + shift)).abs() < 1e-8, "seed {seed}: {r:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn shells_tile_the_unit_interval(dist in 0.0f64..1.0, log_eps in -9.0f64..-0.5) {
        let eps = 10f64.powf(log_eps);
        let s = shell_of_distance(dist, eps, 6).unwrap();
        let inside = |k: u32| match k {
            0 => dist < eps,
            k => shell_edge(eps, k - 1) <= dist && dist < shell_edge(eps, k),
        };
        let members: Vec<u32> = (0..=6).filter(|k| inside(*k)).collect();
        match s {
            Shell::Index(k) => prop_assert_eq!(members, vec![k]),
            Shell::Beyond => {
                prop_assert!(members.is_empty());
                prop_assert!(dist >= shell_edge(eps, 6));
            }
        }
    }
}

proptest! {
    #[test]
    fn classifier_truth_table(a in -5.0f64..5.0, b in -5.0f64..5.0, g1 in 0.1f64..3.0, g3 in 0.1f64..3.0) {
        let c = classify_critical_point(&[a.min(b), a.max(b)], g1, g3).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let expected = if lo == 0.0 || hi == 0.0 {
            Classification::Degenerate
        } else if lo >= g1 {
            Classification::LocalMin
        } else if lo <= -g1 {
            if lo.abs() >= g3 && hi.abs() >= g3 { Classification::StrongSaddle } else { Classification::StrictOnlySaddle }
        } else {
            Classification::Degenerate
        };
        prop_assert_eq!(c, expected);
    }

    #[test]
    fn chain_values_strictly_ordered(k in 1usize..5, lu in 0.5f64..4.0, ls in 0.5f64..4.0, drop in 0.2f64..3.0) {
        let land = builtin_saddle_chain(k, lu, ls, drop).unwrap();
        let cps = land.critical_points();
        for w in cps.windows(2) {
            prop_assert!(w[0].f_value > w[1].f_value);
        }
        // Exact up to the roundoff of mapping x* back to base coordinates.
        prop_assert!(cps.last().unwrap().f_value.abs() < 1e-12);
    }

    #[test]
    fn unstable_axis_exit_closed_form(lambda in 0.3f64..3.0, xu in 0.05f64..0.9) {
        let land = builtin_quadratic_saddle(&[lambda], &[1.0]).unwrap();
        let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);
        let t = deterministic_exit_time(&land, &[xu, 0.0], &ball, 1e-2, 40.0).unwrap().finite().unwrap();
        prop_assert!((t - (1.0 / xu).ln() / lambda).abs() < 1e-3);
    }

    #[test]
    fn shell_bounds_non_increasing(lambda in 0.2f64..4.0, r in 0.0f64..1.0, log_eps in -8.0f64..-0.5) {
        let eps = 10f64.powf(log_eps);
        let b: Vec<f64> = (1..=6).map(|k| shell_exit_bound(Shell::Index(k), lambda, r, eps).unwrap()).collect();
        prop_assert!(b.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn qmax_invariant_under_stable_rotation(theta in 0.0f64..6.3, s1 in 0.2f64..3.0, s2 in 0.2f64..3.0) {
        let mut h = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, s1, s2]));
        let plain = LinearSaddle::from_hessian(vec![0.0; 3], &h).unwrap();
        let (c, s) = (theta.cos(), theta.sin());
        let rot = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c]);
        h = &rot * h * rot.transpose();
        let rotated = LinearSaddle::from_hessian(vec![0.0; 3], &h).unwrap();
        let mut a = q_max(&plain, 1.0).unwrap().points().unwrap();
        let mut b = q_max(&rotated, 1.0).unwrap().points().unwrap();
        a.sort_by(|p, q| p[0].total_cmp(&q[0]));
        b.sort_by(|p, q| p[0].total_cmp(&q[0]));
        for (p, q) in a.iter().zip(&b) {
            for (u, v) in p.iter().zip(q) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quadratic_form_gradient_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, d in -3.0f64..3.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        prop_assume!((a * d - b * b).abs() > 1e-3);
        let h = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
        let land = builtin_quadratic_form(&h).unwrap();
        let g = land.gradient_vec(&[x, y]);
        prop_assert!((g[0] - (a * x + b * y)).abs() < 1e-12);
        prop_assert!((g[1] - (b * x + d * y)).abs() < 1e-12);
    }
}
