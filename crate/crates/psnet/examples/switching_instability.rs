//! A maximally greedy rule that wastes two thirds of the network.
//!
//! Three classes sit on a cycle of unit resources and each class needs the
//! two resources it does not name, so any two classes conflict and at most
//! one can run at a time. The switching rule always serves the
//! lowest-indexed nonzero class at full speed. It is work conserving and
//! maximal, yet because only one class runs at a time the total queue
//! drifts at 3 nu - 1 at every nonzero state: the system is unstable for
//! nu > 1/3 even though the per-resource capacity condition allows any
//! nu < 1/2.
//!
//! The sample path shows who pays: class 0 is served whenever present, and
//! class 1 whenever class 0 is empty, so both behave like stable queues.
//! Class 2 only runs when both others are empty, which happens too rarely,
//! and its queue absorbs the whole instability.
//!
//! Run with `cargo run --example switching_instability`.

use psnet::control::ControlSpec;
use psnet::lyapunov::{drift, instability_evidence, LyapunovFn, Region, ScanConfig};
use psnet::sim::{simulate, NetworkModel, SimConfig};
use psnet::{NetworkSpec, State};

fn main() {
    let nu = 0.42;
    let spec = NetworkSpec::new(
        vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        vec![1.0; 3],
        vec![nu; 3],
        vec![1.0; 3],
    )
    .unwrap();
    let law = ControlSpec::SwitchingMax.compile(&spec).unwrap();
    let f = LyapunovFn::Linear { weights: None };

    // The linear drift is the same at every nonzero state.
    for state in [[1, 0, 0], [0, 4, 7], [5, 5, 5]] {
        let d = drift(&spec, &law, &f, &State::new(state.to_vec())).unwrap();
        println!("drift of the total at {state:?}: {d:+.4} (3 nu - 1 = {:+.4})", 3.0 * nu - 1.0);
    }

    // Uniform upward drift over a box, origin exempt, is transience
    // evidence: the total dominates a random walk with positive bias.
    let report = instability_evidence(
        &spec,
        &law,
        &f,
        &ScanConfig {
            bounds: vec![8, 8, 8],
            epsilon: 0.1,
            exclude: Region::Empty,
        },
    )
    .unwrap();
    println!(
        "upward-drift evidence at nu = {nu}: passed = {} over {} states\n",
        report.passed, report.states_checked
    );

    // Long simulation from empty: services against offered loads.
    let model = NetworkModel::new(&spec, &ControlSpec::SwitchingMax).unwrap();
    let stats = simulate(&model, &SimConfig::events(vec![0, 0, 0], 600_000, 11)).unwrap();
    for r in 0..3 {
        let s = stats.avg_service(r);
        println!(
            "class {r}: offered {:.2}, served {:.4} +- {:.4}",
            nu, s.mean, s.se
        );
    }
    let end = stats.end_states.last().unwrap();
    println!("final state after 600k events: {end:?}");
    println!("only the last class starves; the first two ride their own stable queues");
}
