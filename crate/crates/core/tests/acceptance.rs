//! The ten end-to-end criteria at their fixed tolerances, one PASS/FAIL line
//! each. A criterion listed in `KNOWN_FAILURES` is reported but does not
//! fail the run. Runs without the libtest harness so the lines always print.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;

const KNOWN_FAILURES: &[&str] = &["view consistency"];

fn check(name: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> (String, bool) {
    let start = Instant::now();
    let o = run();
    let took = start.elapsed();
    let pass = o.pass && took <= budget;
    let line = format!(
        "{} {name}: {} [{:.1}s, budget {}s]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    println!("{line}");
    (line, pass)
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let bin = Path::new(env!("CARGO_BIN_EXE_redistill"));
    let secs = Duration::from_secs;
    let results = vec![
        ("gradients", check("gradients", secs(30), criterion_gradients)),
        ("score oracle", check("score oracle", secs(10), criterion_score)),
        ("kernel velocity", check("kernel velocity", secs(10), criterion_kernel)),
        ("zeta estimator", check("zeta estimator", secs(60), criterion_zeta)),
        ("retrieval exactness", check("retrieval exactness", secs(30), criterion_retrieval)),
        ("orientation alignment", check("orientation alignment", secs(60), criterion_alignment)),
        ("mode selection", check("mode selection", secs(300), criterion_mode_selection)),
        ("debias", check("debias", secs(120), criterion_debias)),
        (
            "view consistency",
            check("view consistency", secs(600), || criterion_view_consistency(&scratch.path().join("suite"))),
        ),
        ("determinism", check("determinism", secs(120), || criterion_determinism(bin, scratch.path()))),
    ];
    let passed = results.iter().filter(|(_, (_, p))| *p).count();
    println!("{passed}/{} criteria pass", results.len());
    let unexpected: Vec<&String> =
        results.iter().filter(|(n, (_, p))| !p && !KNOWN_FAILURES.contains(n)).map(|(_, (l, _))| l).collect();
    for (n, (_, p)) in &results {
        if *p && KNOWN_FAILURES.contains(n) {
            println!("note: {n} is listed as a known failure but passed");
        }
    }
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:#?}");
        std::process::exit(1);
    }
}
