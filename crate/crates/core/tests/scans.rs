use saddle_escape::experiments::{
    exit_time_scan, multi_saddle_scan, LandscapeSpec, ScanConfig, ScanReport, StartRule,
};
use saddle_escape::flow::DomainSpec;
use saddle_escape::landscape::builtin_quadratic_saddle;
use saddle_escape::sde::{sample_tau, SdeConfig};

fn base(replicas: usize) -> ScanConfig {
    ScanConfig {
        epsilon_grid: vec![1e-2, 1e-3, 1e-4],
        replicas,
        dt: Some(1e-3),
        ..ScanConfig::default()
    }
}

fn slope(report: &ScanReport) -> (f64, f64) {
    let fit = &report.fits[0].1;
    (fit.slope, 0.5 * (fit.slope_ci.1 - fit.slope_ci.0))
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn doubling_lambda_halves_the_slope() {
    let one = exit_time_scan(&base(500), &StartRule::AtSaddle).unwrap();
    let cfg = ScanConfig {
        landscape: LandscapeSpec::QuadraticSaddle {
            unstable: vec![2.0],
            stable: vec![1.0],
        },
        ..base(500)
    };
    let two = exit_time_scan(&cfg, &StartRule::AtSaddle).unwrap();
    let ((s1, h1), (s2, h2)) = (slope(&one), slope(&two));
    assert!((s1 - 2.0 * s2).abs() <= (h1 * h1 + 4.0 * h2 * h2).sqrt(), "{s1} vs 2 x {s2}");
}

#[test]
fn chain_slope_grows_with_the_number_of_saddles() {
    let slopes: Vec<(f64, f64)> = (1..=3)
        .map(|k| {
            let cfg = ScanConfig {
                landscape: LandscapeSpec::SaddleChain {
                    k,
                    lambda_u: 2.0,
                    lambda_s: 2.0,
                    drop: 1.0,
                },
                ..base(300)
            };
            let report = multi_saddle_scan(&cfg).unwrap();
            assert!(report.all_passed(), "k = {k}: {:?}", report.verdicts);
            slope(&report)
        })
        .collect();
    for w in slopes.windows(2) {
        let ((a, ha), (b, hb)) = (w[0], w[1]);
        assert!(a <= b + (ha * ha + hb * hb).sqrt(), "{slopes:?}");
    }
}

#[test]
fn bowl_has_no_logarithmic_growth() {
    let cfg = ScanConfig {
        landscape: LandscapeSpec::Bowl {
            eigenvalues: vec![1.0, 2.0],
        },
        x0: Some(vec![1.0, 0.5]),
        e: 0.05,
        ..base(300)
    };
    let report = multi_saddle_scan(&cfg).unwrap();
    let fit = &report.fits[0].1;
    assert!(fit.slope_ci_contains(0.0), "{fit:?}");
    assert!(report.all_passed(), "{:?}", report.verdicts);
}

#[test]
fn ci_width_scales_with_inverse_root_replicas() {
    let land = builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap();
    let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);
    let cfg = SdeConfig::new(1e-3, 1e-3, 100.0, 5);
    let ci = |n| sample_tau(&land, &ball, &cfg, &[0.0, 0.0], n).unwrap().stats().ci;
    let (c1, c2, c4) = (ci(1000), ci(2000), ci(4000));
    assert!((c1 / c4 - 2.0).abs() < 0.2, "quadrupling: {}", c1 / c4);
    assert!((c1 / c2 - 2f64.sqrt()).abs() < 0.15, "doubling: {}", c1 / c2);
}

#[test]
fn rows_do_not_depend_on_worker_count() {
    let cfg = ScanConfig {
        landscape: LandscapeSpec::SaddleChain {
            k: 1,
            lambda_u: 2.0,
            lambda_s: 2.0,
            drop: 1.0,
        },
        ..base(150)
    };
    let a = with_pool(1, || multi_saddle_scan(&cfg).unwrap());
    let b = with_pool(4, || multi_saddle_scan(&cfg).unwrap());
    let bits = |r: &ScanReport| r.rows.iter().map(|x| (x.mean.to_bits(), x.ci.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}
