//! Repairing an entrained priority rule with one threshold.
//!
//! On the nested pair at loads (0.5, 0.3) strict priority for class 0 is
//! unstable: class 1 sees the shared link only while class 0 idles. The
//! repair keeps the base rule almost everywhere but flips the priority to
//! class 1 while class 0's queue sits below a threshold a. Class 0 then
//! pays a bounded price (its queue hovers near a) and class 1 collects
//! service often enough to clear its load.
//!
//! The certificate is a drift scan: a Lyapunov function quadratic in the
//! first coordinate below a and linear beyond, with the finite strip
//! below the threshold exempt. The search returns the smallest width a
//! whose scan passes; the same scan on the unmodified rule fails at every
//! state where class 0 hogs the link.
//!
//! Run with `cargo run --example threshold_rescue`.

use psnet::classifier::{classify, ClassifyParams, StationaryMethod};
use psnet::control::{threshold_modify, ControlLaw, ControlSpec, ThresholdFamily};
use psnet::lyapunov::{
    capacity_slack_deltas, find_threshold_a, foster_scan, LyapunovFn, Region, ScanConfig,
};
use psnet::NetworkSpec;
use std::sync::Arc;

fn main() {
    let spec = NetworkSpec::new(
        vec![vec![1, 1], vec![0, 1]],
        vec![1.0, 1.0],
        vec![0.5, 0.3],
        vec![1.0, 1.0],
    )
    .unwrap();
    let base = || ControlSpec::priority(vec![vec![0], vec![1]]);
    let (delta, delta_prime) = capacity_slack_deltas(&spec).unwrap();
    let epsilon = delta.min(delta_prime) / 2.0;
    println!("capacity slacks give drift margin epsilon = {epsilon:.2}");

    // The unmodified rule fails its own scan: above the threshold strip
    // the first class is served at capacity and the smoothed function
    // still rises wherever class 1's queue is large.
    let exclude = |a: u64| Region::Intersection {
        parts: vec![
            Region::CoordBelow { r: 0, bound: a },
            Region::CoordBelow { r: 1, bound: 1 },
        ],
    };
    let plain = base().compile(&spec).unwrap();
    let scan = foster_scan(
        &spec,
        &plain,
        &LyapunovFn::SmoothedFirst { a: 5 },
        &ScanConfig {
            bounds: vec![120, 120],
            epsilon,
            exclude: exclude(5),
        },
    )
    .unwrap();
    println!(
        "unmodified priority: scan passed = {}, {} violations, first at {:?}",
        scan.passed,
        scan.violation_count,
        scan.violations.first().map(|v| v.state.clone())
    );

    // Search the threshold family for the smallest certified width.
    let cert = find_threshold_a(
        &spec,
        |a| {
            let modified = threshold_modify(&spec, base(), ThresholdFamily::NestedPair, a)?;
            Ok(Box::new(modified.compile(&spec)?) as Box<dyn ControlLaw>)
        },
        |a| LyapunovFn::SmoothedFirst { a },
        exclude,
        &[120, 120],
        epsilon,
        50,
    )
    .unwrap()
    .expect("some width below 50 certifies");
    println!(
        "smallest certified threshold: a = {} ({} states checked, worst drift {:+.4})",
        cert.a,
        cert.report.states_checked,
        cert.report.worst.as_ref().map_or(f64::NAN, |w| w.drift)
    );

    // The empirical recursion agrees with the certificate.
    let modified = threshold_modify(&spec, base(), ThresholdFamily::NestedPair, cert.a).unwrap();
    let law: Arc<dyn ControlLaw> = Arc::new(modified.compile(&spec).unwrap());
    let params = ClassifyParams::singleton_order(
        &[0, 1],
        StationaryMethod::Matrix { level_cap: 400 },
    );
    let out = classify(&spec, law, &params).unwrap();
    println!("classification of the modified rule: {:?}", out.verdict);
}
