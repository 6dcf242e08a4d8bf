// Exit of the perturbed flow from the unit ball around a linear saddle.
//
// The mean exit time from the saddle grows like `ln(1/eps) / lambda_1`; starts off the
// stable axis leave in the deterministic time `t(x)` instead.

use saddle_escape::flow::{deterministic_exit_time, DomainSpec};
use saddle_escape::landscape::builtin_quadratic_saddle;
use saddle_escape::saddle_analysis::{linear_exit_oracle, LinearSaddle};
use saddle_escape::sde::{sample_tau, SdeConfig};

pub fn run_example() {
    let land = builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap();
    let lin = LinearSaddle::from_critical_point(&land.critical_points()[0]).unwrap();
    let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);

    println!("{:>8} {:>10} {:>10} {:>10}", "eps", "mean tau", "ci", "ln(1/eps)");
    let mut means = Vec::new();
    for (i, eps) in [1e-2, 1e-4].into_iter().enumerate() {
        let cfg = SdeConfig::new(eps, 1e-3, 100.0, 10 + i as u64);
        let stats = sample_tau(&land, &ball, &cfg, &[0.0, 0.0], 300).unwrap().stats();
        let oracle = linear_exit_oracle(&lin, eps).unwrap();
        println!("{eps:>8.0e} {:>10.4} {:>10.4} {oracle:>10.4}", stats.mean, stats.ci);
        means.push(stats.mean);
    }
    // Two decades of eps add about ln(100) = 4.6 to the mean.
    let gain = means[1] - means[0];
    println!("gain over two decades: {gain:.3}");
    assert!((gain - 100f64.ln()).abs() < 0.6);

    let x = [0.3, 0.2];
    let t = deterministic_exit_time(&land, &x, &ball, 1e-3, 50.0).unwrap().finite().unwrap();
    let cfg = SdeConfig::new(1e-4, 1e-3, 50.0, 3);
    let stats = sample_tau(&land, &ball, &cfg, &x, 200).unwrap().stats();
    println!("start {x:?}: t(x) = {t:.4}, mean tau = {:.4}", stats.mean);
    assert!((stats.mean - t).abs() < 0.01 * t);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
