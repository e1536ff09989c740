//! Capacity is not stability: a priority rule starves a fed class.
//!
//! Two classes share a fast link of capacity 2; class 1 also needs a unit
//! private link. Offered loads (1.0, 0.6) leave slack everywhere, yet
//! strict priority for class 0 entrains class 1 to class 0's idle periods:
//! class 1 can only run while class 0 is empty, which happens half the
//! time, and half is less than 0.6. The queue of class 1 grows forever on
//! a network with spare capacity.
//!
//! Run with `cargo run --example priority_entrainment`.

use psnet::classifier::{classify, ClassifyParams, StationaryMethod};
use psnet::control::ControlSpec;
use psnet::net::capacity_condition;
use psnet::sim::{simulate, NetworkModel, SimConfig};
use psnet::NetworkSpec;
use std::sync::Arc;

fn main() {
    let spec = NetworkSpec::new(
        vec![vec![1, 1], vec![0, 1]],
        vec![2.0, 1.0],
        vec![1.0, 0.6],
        vec![1.0, 1.0],
    )
    .unwrap();
    let (ok, _) = capacity_condition(&spec);
    println!("capacity condition holds: {ok}");

    let control = ControlSpec::priority(vec![vec![0], vec![1]]);
    let law: Arc<dyn psnet::control::ControlLaw> =
        Arc::new(control.compile(&spec).unwrap());

    // The recursion makes the starvation quantitative: with class 1 pinned
    // far away, class 0 is a service-rate-2 queue at load 1/2, so the
    // leftover the priority rule grants class 1 averages exactly 1/2.
    let params = ClassifyParams::singleton_order(
        &[0, 1],
        StationaryMethod::Matrix { level_cap: 400 },
    );
    let out = classify(&spec, law, &params).unwrap();
    for stage in &out.stages {
        let rate = stage.expected_rate.map_or(f64::NAN, |e| e.mean);
        println!(
            "  stage {:?}: limiting service {:.4} vs offered {:.4} -> {:?}",
            stage.stage,
            rate,
            stage.offered.unwrap_or(f64::NAN),
            stage.verdict
        );
    }
    println!("verdict: {:?}", out.verdict);

    // The sample path agrees: class 0 clears its load, class 1 is served
    // at 1/2 and its backlog grows roughly linearly.
    let model = NetworkModel::new(&spec, &control).unwrap();
    let stats = simulate(&model, &SimConfig::events(vec![0, 0], 400_000, 7)).unwrap();
    for r in 0..2 {
        let s = stats.avg_service(r);
        println!(
            "  class {r}: offered {:.2}, served {:.4} +- {:.4}",
            spec.kappa(r),
            s.mean,
            s.se
        );
    }
    let end = stats.end_states.last().unwrap();
    println!("final state after 400k events: {end:?}");
}
