// Deterministic flow around a saddle: the A1/A2/A3 decomposition of a ball, exit times
// and a check that exits are regular.

use saddle_escape::flow::{classify_abc, exit_manner_probe, integrate, AbcClass, DomainSpec};
use saddle_escape::landscape::builtin_quadratic_saddle;

pub fn run_example() {
    let land = builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap();
    let saddle = land.critical_points()[0].clone();
    let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);

    let cases: [([f64; 2], AbcClass); 4] = [
        ([0.0, 0.0], AbcClass::Origin),
        ([0.0, 0.5], AbcClass::A1),
        ([0.5, 0.0], AbcClass::A2),
        ([0.3, 0.2], AbcClass::A3),
    ];
    for (x, expected) in cases {
        let class = classify_abc(&land, &x, &ball, &saddle, 1e-3, 40.0).unwrap();
        println!("{x:?} -> {class:?}");
        assert_eq!(class, expected);
    }

    let traj = integrate(&land, &[0.3, 0.2], 1e-3, 10.0, Some(&ball)).unwrap();
    let exit = traj.exit.as_ref().unwrap();
    println!("t(0.3, 0.2) = {:.5}, exit state {:?}", exit.time, exit.state);
    assert!((exit.state[0].hypot(exit.state[1]) - 1.0).abs() < 1e-6);

    let samples = vec![vec![0.3, 0.2], vec![-0.4, 0.1], vec![0.1, -0.6]];
    let probe = exit_manner_probe(&land, &ball, &samples, 1e-3, 40.0, 0.1).unwrap();
    println!("regular exits {:?}, t0 = {:.3}, c = {:.4}", probe.regular, probe.t0, probe.c);
    assert!(probe.regular.iter().all(|r| *r));
}

#[allow(dead_code)]
fn main() {
    run_example();
}
