// Where exits land: the fraction of exit points within `mu` of `Q_max` (enlarged by
// the deterministic exit images of a small start neighbourhood) approaches one as the
// noise shrinks.

use saddle_escape::flow::DomainSpec;
use saddle_escape::landscape::builtin_quadratic_saddle;
use saddle_escape::saddle_analysis::{LinearSaddle, QMuSet};
use saddle_escape::sde::{sample_tau, SdeConfig};

pub fn run_example() {
    let land = builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap();
    let lin = LinearSaddle::from_critical_point(&land.critical_points()[0]).unwrap();
    let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);
    let target = QMuSet::from_flow_images(&land, &lin, 1.0, 0.05, 11, 1e-3, 60.0).unwrap();
    let mu = 0.1;

    let mut fractions = Vec::new();
    for eps in [3e-1, 1e-4] {
        let cfg = SdeConfig::new(eps, 1e-3, 100.0, 9);
        let set = sample_tau(&land, &ball, &cfg, &[0.0, 0.0], 400).unwrap();
        let hits = set.records.iter().filter(|r| target.contains(&r.record.state, mu)).count();
        let frac = hits as f64 / set.records.len() as f64;
        println!("eps = {eps:e}: fraction in Q^mu = {frac:.3}");
        fractions.push(frac);
    }
    assert!(fractions[1] >= 0.95);
    assert!(fractions[0] < fractions[1]);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
