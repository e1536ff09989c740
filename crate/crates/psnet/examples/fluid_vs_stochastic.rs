//! The fluid path as the large-state shadow of the Markov chain.
//!
//! Scaling states and time together turns the jump chain into the ODE
//! dx/dt = nu - mu b(x). For the switching trio started deep in the
//! interior the ODE is exact and trivial: one class drains at capacity,
//! so the total moves at 3 nu - 1 until a coordinate hits zero. The
//! stochastic path started at the matching state tracks that slope with
//! fluctuations of square-root size.
//!
//! At the faces the bang-bang rule chatters and the clipped Euler path
//! stops being meaningful, so the comparison is only drawn while all
//! coordinates stay positive. A single-class network has no faces to
//! chatter on: there the fluid drain time is exact all the way down.
//!
//! Run with `cargo run --example fluid_vs_stochastic`.

use psnet::control::ControlSpec;
use psnet::sim::{fluid_integrate, simulate, FluidConfig, NetworkModel, SimConfig};
use psnet::NetworkSpec;

fn main() {
    let nu = 0.40;
    let spec = NetworkSpec::new(
        vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        vec![1.0; 3],
        vec![nu; 3],
        vec![1.0; 3],
    )
    .unwrap();
    let law = ControlSpec::SwitchingMax.compile(&spec).unwrap();

    // Fluid path from (200, 100, 100): class 0 drains at 1 - nu while the
    // others fill at nu; the total grows at 3 nu - 1 = 0.2.
    let initial = vec![200.0, 100.0, 100.0];
    let path = fluid_integrate(
        &spec,
        &law,
        &FluidConfig {
            initial: initial.clone(),
            dt: 1e-3,
            horizon: 200.0,
        },
    )
    .unwrap();
    println!("fluid path of the switching trio at nu = {nu}:");
    let total = |s: &[f64]| s.iter().sum::<f64>();
    for t in [0.0, 50.0, 100.0, 200.0] {
        let i = path.times.iter().position(|&u| u >= t).unwrap();
        let s = &path.states[i];
        println!(
            "  t = {:>4.0}: state ({:>6.2}, {:>6.2}, {:>6.2}), total {:>7.2}",
            t,
            s[0],
            s[1],
            s[2],
            total(s)
        );
    }
    println!("  interior slope of the total: 3 nu - 1 = {:+.2}\n", 3.0 * nu - 1.0);

    // One stochastic trajectory from the same corner, read off at the
    // same times through its checkpoints.
    let model = NetworkModel::new(&spec, &ControlSpec::SwitchingMax).unwrap();
    let stats = simulate(
        &model,
        &SimConfig::time(vec![200, 100, 100], 200.0, 23),
    )
    .unwrap();
    println!("one stochastic path from the matching state:");
    for t in [0.0, 50.0, 100.0, 200.0] {
        let (u, s) = stats
            .checkpoints
            .iter()
            .find(|(u, _)| *u >= t)
            .expect("horizon covers t");
        println!(
            "  t = {:>6.2}: state ({:>3}, {:>3}, {:>3}), total {:>4}",
            u,
            s[0],
            s[1],
            s[2],
            s.iter().sum::<u64>()
        );
    }

    // No conflicting classes, no chatter: the fluid drain time of a lone
    // queue matches initial / (1 - nu) exactly.
    let single = NetworkSpec::new(vec![vec![1]], vec![1.0], vec![0.3], vec![1.0]).unwrap();
    let law = ControlSpec::priority(vec![vec![0]]).compile(&single).unwrap();
    let path = fluid_integrate(
        &single,
        &law,
        &FluidConfig {
            initial: vec![7.0],
            dt: 1e-3,
            horizon: 20.0,
        },
    )
    .unwrap();
    println!(
        "\nsingle queue from 7.0 at load 0.3: fluid drains at t = {:.2} (exact 7 / 0.7 = 10)",
        path.drain_time.unwrap_or(f64::NAN)
    );
}
