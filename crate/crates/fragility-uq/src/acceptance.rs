//! Acceptance suite: end-to-end checks of the whole chain on the
//! synthetic testbed, runnable through `fragility-uq validate` and the
//! `acceptance` integration test.

mod criteria;

pub use criteria::Ctx;

use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Reduced sizes; exercises every code path quickly.
    Quick,
    /// Full pinned sizes.
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceReport {
    pub profile: &'static str,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

fn checks() -> Vec<fn(&Ctx) -> CriterionResult> {
    vec![
        criteria::gp_correctness,
        criteria::surrogate_quality,
        criteria::fragility_convergence,
        criteria::psi2_consistency,
        criteria::bilevel_bands,
        criteria::sobol_oracle_agreement,
        criteria::interaction_contrast,
        criteria::variance_split,
        criteria::betak_structure,
    ]
}

/// Run criteria 1-9 in order. Timing goes to stderr and the returned
/// vector only, never into the report, so report files stay
/// byte-identical across reruns.
pub fn run_timed(profile: Profile, seed: u64) -> (AcceptanceReport, Vec<f64>) {
    let ctx = Ctx::new(profile, seed);
    let mut results = Vec::new();
    let mut timings = Vec::new();
    for check in checks() {
        let t0 = Instant::now();
        let res = check(&ctx);
        let elapsed = t0.elapsed().as_secs_f64();
        eprintln!(
            "criterion {:>2} [{}] took {elapsed:.1}s",
            res.id, res.name
        );
        timings.push(elapsed);
        results.push(res);
    }
    let report = AcceptanceReport {
        profile: match profile {
            Profile::Quick => "quick",
            Profile::Full => "full",
        },
        seed,
        criteria: results,
    };
    (report, timings)
}

pub fn run(profile: Profile, seed: u64) -> AcceptanceReport {
    run_timed(profile, seed).0
}

/// Run a single criterion by id (1-9); shared setup (fitted surrogates)
/// is rebuilt as needed.
pub fn run_criterion(profile: Profile, seed: u64, id: usize) -> Option<CriterionResult> {
    let ctx = Ctx::new(profile, seed);
    checks().into_iter().nth(id.checked_sub(1)?).map(|f| f(&ctx))
}
