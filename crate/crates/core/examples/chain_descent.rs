// Descent through a chain of two saddles to the minimizer: the hitting time T of
// `F <= F(x*) + e` and the alternating stopping times at the saddle levels.

use saddle_escape::flow::default_h;
use saddle_escape::landscape::builtin_saddle_chain;
use saddle_escape::sde::{sample_t, stopping_sequence, SdeConfig};

pub fn run_example() {
    let land = builtin_saddle_chain(2, 2.0, 2.0, 1.0).unwrap();
    let info = land.chain().unwrap().clone();
    let x_star = land.global_minimizer().unwrap().clone();
    let x0 = info.start_before_first(&land, 0.75);
    println!("saddles at F = {:?}, x* at {:?}", land.saddles().iter().map(|s| s.f_value).collect::<Vec<_>>(), x_star.location);

    let mut means = Vec::new();
    for (i, eps) in [1e-2, 1e-4].into_iter().enumerate() {
        let cfg = SdeConfig::new(eps, 1e-3, 200.0, 40 + i as u64);
        let stats = sample_t(&land, &x_star, 0.5, &cfg, &x0, 200).unwrap().stats();
        println!("eps = {eps:e}: mean T = {:.3} +- {:.3}", stats.mean, stats.ci);
        assert_eq!(stats.truncated_fraction, 0.0);
        means.push(stats.mean);
    }
    // Two saddles at rate 2 allow at most about k / gamma_1 = 1 per unit of ln(1/eps).
    let slope = (means[1] - means[0]) / 100f64.ln();
    println!("slope over two decades: {slope:.3}");
    assert!(slope > 0.5 && slope < 1.3);

    let h = default_h(&land).unwrap();
    let cfg = SdeConfig::new(1e-2, 1e-3, 200.0, 7);
    let seq = stopping_sequence(&land, h, &cfg, &x0, 4).unwrap();
    for r in &seq {
        println!("{:>8} t = {:8.3} F = {:.3}", r.label, r.time, r.f_value);
    }
    assert!(seq.windows(2).all(|w| w[0].time <= w[1].time));
}

#[allow(dead_code)]
fn main() {
    run_example();
}
