//! Stability by induction: pin the tail, solve the head.
//!
//! For a monotone control the recursion classifies one class at a time.
//! At each stage the not-yet-classified classes are pinned at infinity,
//! the already-stable prefix keeps its own stationary behavior, and the
//! candidate class compares its offered load against the limiting average
//! service the prefix leaves it. On the switching trio the stage values
//! come out in closed form: 1, 1 - nu, 1 - 2 nu, so the verdict flips
//! exactly at nu = 1/3.
//!
//! Run with `cargo run --example classify_recursion`.

use psnet::classifier::{classify, ClassifyParams, StationaryMethod, Verdict};
use psnet::control::{ControlLaw, ControlSpec};
use psnet::NetworkSpec;
use std::sync::Arc;

fn trio(nu: f64) -> NetworkSpec {
    NetworkSpec::new(
        vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        vec![1.0; 3],
        vec![nu; 3],
        vec![1.0; 3],
    )
    .unwrap()
}

fn main() {
    // Walk the stages at one stable rate.
    let nu = 0.30;
    let spec = trio(nu);
    let law: Arc<dyn ControlLaw> = Arc::new(ControlSpec::SwitchingMax.compile(&spec).unwrap());
    let params = ClassifyParams::singleton_order(
        &[0, 1, 2],
        StationaryMethod::Matrix { level_cap: 127 },
    );
    let out = classify(&spec, law, &params).unwrap();
    println!("switching trio at nu = {nu}:");
    for stage in &out.stages {
        println!(
            "  stage {:?}: limiting service {:.4} vs offered {:.4} -> {:?}",
            stage.stage,
            stage.expected_rate.map_or(f64::NAN, |e| e.mean),
            stage.offered.unwrap_or(f64::NAN),
            stage.verdict
        );
    }
    println!("  verdict: {:?}\n", out.verdict);

    // Sweep across the boundary. The exact solver leaves a vanishing error
    // band, so everything off the knife edge resolves.
    println!("{:>6}  {:>14}", "nu", "verdict");
    for nu in [0.25, 0.30, 0.33, 0.34, 0.36, 0.42] {
        let spec = trio(nu);
        let law: Arc<dyn ControlLaw> =
            Arc::new(ControlSpec::SwitchingMax.compile(&spec).unwrap());
        let out = classify(&spec, law, &params).unwrap();
        println!("{nu:>6.2}  {:>14}", format!("{:?}", out.verdict));
    }

    // The same machinery with simulated reduced chains instead of exact
    // solves: verdicts come with error bands, and a load inside its band
    // honestly reports Indeterminate rather than guessing.
    let sim_params = ClassifyParams::singleton_order(
        &[0, 1, 2],
        StationaryMethod::Simulation {
            events: 400_000,
            reps: 2,
            seed: 17,
        },
    );
    let spec = trio(1.0 / 3.0);
    let law: Arc<dyn ControlLaw> = Arc::new(ControlSpec::SwitchingMax.compile(&spec).unwrap());
    let out = classify(&spec, law, &sim_params).unwrap();
    let knife = out
        .stages
        .iter()
        .find(|s| s.verdict != Verdict::Stable)
        .unwrap_or_else(|| out.stages.last().unwrap());
    println!(
        "\nsimulated recursion at nu = 1/3: {:?} (stage {:?} saw {:.4} +- {:.4} vs {:.4})",
        out.verdict,
        knife.stage,
        knife.expected_rate.map_or(f64::NAN, |e| e.mean),
        knife.expected_rate.map_or(f64::NAN, |e| e.se),
        knife.offered.unwrap_or(f64::NAN)
    );
}
