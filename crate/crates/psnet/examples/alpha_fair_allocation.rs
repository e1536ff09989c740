//! One occupancy, the whole fairness family.
//!
//! Three classes share a link of capacity 2 and each holds a unit private
//! link at the same time. At a lopsided occupancy the allocation moves
//! smoothly across the family: alpha = 0 maximizes raw throughput (after
//! lexicographic tie-breaking), alpha = 1 splits the shared link in
//! proportion to queue lengths, alpha -> infinity flattens everyone to the
//! max-min point, and private links cap the winners throughout.
//!
//! Run with `cargo run --example alpha_fair_allocation`.

use psnet::fairshare::{solve_alpha_fair, Alpha, AlphaFairParams};
use psnet::NetworkSpec;

fn main() {
    let spec = NetworkSpec::new(
        vec![vec![1, 1, 1], vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]],
        vec![2.0, 1.0, 1.0, 1.0],
        vec![0.45; 3],
        vec![1.0; 3],
    )
    .unwrap();
    let n = vec![8.0, 3.0, 1.0];
    println!("occupancy {n:?}, shared capacity 2, private capacity 1 each\n");
    println!(
        "{:>8}  {:>22}  {:>10}  {:>8}",
        "alpha", "allocation", "residual", "binding"
    );

    for alpha in [
        Alpha::Finite(0.0),
        Alpha::Finite(0.5),
        Alpha::Finite(1.0),
        Alpha::Finite(2.0),
        Alpha::Finite(8.0),
        Alpha::Infinite,
    ] {
        let sol = solve_alpha_fair(
            &spec,
            &n,
            &AlphaFairParams::unweighted(alpha, 3),
            1e-8,
        )
        .unwrap();
        let b = sol.allocation.bandwidths();
        let name = match alpha {
            Alpha::Finite(v) => format!("{v}"),
            Alpha::Infinite => "inf".to_string(),
        };
        println!(
            "{name:>8}  ({:.4}, {:.4}, {:.4})  {:>10.1e}  {:?}",
            b[0], b[1], b[2], sol.kkt_residual, sol.binding_resources
        );
    }

    // Proportional fairness against its closed form on the shared link:
    // with every private cap slack the split is n_r / sum(n).
    let sol = solve_alpha_fair(
        &spec,
        &[4.0, 3.0, 3.0],
        &AlphaFairParams::unweighted(Alpha::Finite(1.0), 3),
        1e-8,
    )
    .unwrap();
    let b = sol.allocation.bandwidths();
    println!(
        "\nproportional split at (4, 3, 3): ({:.4}, {:.4}, {:.4}) vs closed form (0.8, 0.6, 0.6)",
        b[0], b[1], b[2]
    );
}
