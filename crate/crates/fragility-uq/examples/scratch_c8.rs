// Scratch: calibrate criterion 8 at full sizes.

use fragility_uq::acceptance::{run_criterion, Profile};
use std::time::Instant;

fn main() {
    let id: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(8);
    let t0 = Instant::now();
    let res = run_criterion(Profile::Full, 0, id).unwrap();
    println!(
        "criterion {} [{}]: {} - {} ({:.0}s)",
        res.id,
        res.name,
        if res.passed { "PASS" } else { "FAIL" },
        res.detail,
        t0.elapsed().as_secs_f64()
    );
}
