// Builtin landscapes and their registries: critical-point classification, gradient and
// Hessian checks against finite differences, and the strict saddle property on a grid.

use saddle_escape::landscape::{
    builtin_bowl, builtin_quadratic_saddle, builtin_saddle_chain, finite_difference_check,
    verify_strict_saddle_property, Classification,
};

pub fn run_example() {
    let lands = [
        builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap(),
        builtin_bowl(&[1.0, 3.0]).unwrap(),
        builtin_saddle_chain(3, 2.0, 2.0, 1.0).unwrap(),
    ];
    for land in &lands {
        println!("{} (gamma = {:.3}, {:.3}, {:.3})", land.name(), land.gamma1(), land.gamma2(), land.gamma3());
        for c in land.critical_points() {
            println!("  {:?} F = {:.3} eig = {:?} {:?}", c.location, c.f_value, c.eigenvalues, c.classification);
        }
        let grid = land.region().grid(15);
        let worst = grid
            .iter()
            .map(|x| finite_difference_check(land, x, 1e-5).unwrap())
            .fold(0.0, f64::max);
        let report = verify_strict_saddle_property(land, &grid);
        println!("  finite-difference error {worst:.2e}, strict-saddle violations {}", report.violations.len());
        assert!(worst <= 1e-5);
        assert!(report.violations.is_empty());
    }
    let chain = &lands[2];
    assert_eq!(
        chain.critical_points().iter().filter(|c| c.classification == Classification::StrongSaddle).count(),
        3
    );
}

#[allow(dead_code)]
fn main() {
    run_example();
}
