macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example();
        }
    };
}

example!(quadratic_saddle_exit);
example!(flow_classification);
example!(chain_descent);
example!(sgd_rescaling);
example!(shell_bounds);
example!(exit_distribution);
example!(landscape_validation);
example!(scan_from_config);
