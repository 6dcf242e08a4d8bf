// A scan driven by a TOML config, as the command-line tool runs it: strict parsing,
// the output bundle and verdicts recomputed from the saved rows.

use saddle_escape::cli::{parse_config, reverify, run, Command, Overrides};

const CONFIG: &str = r#"
[landscape]
name = "quadratic_saddle"
unstable = [2.0]
stable = [1.0]

[scan]
epsilon_grid = [1e-2, 1e-3, 1e-4]
replicas = 300
dt = 1e-3
seed = 11
"#;

pub fn run_example() {
    let err = parse_config("[scan]\nepsilonn = [1e-2]\n").unwrap_err();
    println!("typo is rejected: {err}");

    let config = parse_config(CONFIG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let overrides = Overrides {
        workers: Some(2),
        out: Some(dir.path().to_path_buf()),
        seed: None,
    };
    let outcome = run(Command::ExitTimeScan, &config, &overrides).unwrap();
    for v in &outcome.verdicts {
        println!("{} {} measured {:.4} ({})", if v.passed { "PASS" } else { "FAIL" }, v.name, v.measured, v.criterion);
    }
    print!("{}", std::fs::read_to_string(dir.path().join("results.csv")).unwrap());
    assert_eq!(outcome.status(), 0);

    let again = reverify(Command::ExitTimeScan, &config, &dir.path().join("results.csv")).unwrap();
    assert_eq!(
        serde_json::to_string(&again).unwrap(),
        serde_json::to_string(&outcome.verdicts).unwrap()
    );
}

#[allow(dead_code)]
fn main() {
    run_example();
}
