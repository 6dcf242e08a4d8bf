// Distance shells around the stable axis of a linear saddle and the exit-time bound
// attached to each shell, compared with simulated means.

use saddle_escape::flow::DomainSpec;
use saddle_escape::landscape::builtin_quadratic_saddle;
use saddle_escape::saddle_analysis::{
    q_max, shell_exit_bound, shell_index, shell_representative, LinearSaddle, Shell, DEFAULT_SHELL_CAP,
};
use saddle_escape::sde::{sample_tau, SdeConfig};

pub fn run_example() {
    let land = builtin_quadratic_saddle(&[1.0], &[1.0]).unwrap();
    let lin = LinearSaddle::from_critical_point(&land.critical_points()[0]).unwrap();
    let ball = DomainSpec::ball(vec![0.0, 0.0], 1.0);
    let eps = 1e-4;
    let r = 0.2;

    let qm = q_max(&lin, 1.0).unwrap();
    println!("Q_max = {:?}", qm.points().unwrap());

    for shell in [Shell::Index(0), Shell::Index(1), Shell::Index(2), Shell::Index(4)] {
        let dist = shell_representative(shell, eps, DEFAULT_SHELL_CAP, 0.5);
        let x0 = lin.point_along(dist, 0.3);
        assert_eq!(shell_index(&x0, &lin, eps).unwrap(), shell);
        let cfg = SdeConfig::new(eps, 1e-3, 100.0, 20);
        let mean = sample_tau(&land, &ball, &cfg, &x0, 200).unwrap().stats().mean;
        let bound = shell_exit_bound(shell, 1.0, r, eps).unwrap();
        println!("{shell:>8} dist {dist:.2e}: mean {mean:.3} <= bound {bound:.3}");
        assert!(mean <= bound);
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
