//! Temporary measurement probe; not part of the suite.

use std::time::Instant;

use distaudit::experiments::{run_experiment, ExperimentConfig};

fn show(name: &str, cfg: &ExperimentConfig) {
    let t0 = Instant::now();
    let r = run_experiment(name, cfg).unwrap();
    println!("== {name}  ({:.1}s)", t0.elapsed().as_secs_f64());
    for (k, v) in &r.scalars {
        println!("   {k} = {v:.4}");
    }
}

#[test]
#[ignore]
fn probe_private_profile() {
    show("private-student", &ExperimentConfig::default());
}
