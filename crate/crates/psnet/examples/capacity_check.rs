//! Strict capacity condition on the offered loads.
//!
//! A class may hold several resources at once, so the load a resource
//! carries is the sum of the offered loads of every class that touches it.
//! The strict capacity condition asks for positive slack at every
//! resource; without it no control can be stable, and with it some control
//! always is (though not every reasonable-looking one, as the other
//! examples show).
//!
//! Run with `cargo run --example capacity_check`.

use psnet::lyapunov::capacity_slack_deltas;
use psnet::net::capacity_condition;
use psnet::NetworkSpec;

fn print_network(name: &str, spec: &NetworkSpec) {
    println!("{name}");
    let (ok, slacks) = capacity_condition(spec);
    for j in 0..spec.num_resources() {
        let load: f64 = spec.types_of(j).iter().map(|&r| spec.kappa(r)).sum();
        println!(
            "  resource {j}: capacity {:>4}, offered load {:.2}, slack {:+.2}",
            spec.capacity(j),
            load,
            slacks[j]
        );
    }
    match capacity_slack_deltas(spec) {
        Ok((delta, delta_prime)) => println!(
            "  condition holds: {ok}, drift margins delta = {delta:.2}, delta' = {delta_prime:.2}"
        ),
        Err(e) => println!("  condition holds: {ok} ({e})"),
    }
    println!();
}

fn main() {
    // Two classes on a shared link; class 1 also holds a private link for
    // the whole of its service.
    let nested = NetworkSpec::new(
        vec![vec![1, 1], vec![0, 1]],
        vec![1.0, 1.0],
        vec![0.5, 0.3],
        vec![1.0, 1.0],
    )
    .unwrap();
    print_network("nested pair, loads (0.50, 0.30)", &nested);

    // The same topology pushed past the shared link's capacity: the
    // condition fails and no scheduling discipline can rescue it.
    let jammed = NetworkSpec::new(
        vec![vec![1, 1], vec![0, 1]],
        vec![1.0, 1.0],
        vec![0.5, 0.55],
        vec![1.0, 1.0],
    )
    .unwrap();
    print_network("nested pair, loads (0.50, 0.55)", &jammed);

    // Three classes on a cycle: each needs the two resources it does not
    // name, so every resource carries two loads and the symmetric
    // condition reads 2 nu < 1, not 3 nu < 1. Simultaneous possession is
    // what later makes nu = 0.4 unstable anyway.
    let trio = NetworkSpec::new(
        vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        vec![1.0; 3],
        vec![0.4; 3],
        vec![1.0; 3],
    )
    .unwrap();
    print_network("cyclic trio, loads (0.40, 0.40, 0.40)", &trio);
}
