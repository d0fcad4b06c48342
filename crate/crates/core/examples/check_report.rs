//! Runs every check with default parameters and prints failures and
//! informational records.
//!
//! ```text
//! cargo run --release -p branching-flow --example check_report -- [SEED]
//! ```

use branching_flow::harness::{run_checks, CheckId, ExperimentSpec, Gate};

fn main() -> branching_flow::Result<()> {
    let seed = match std::env::args().nth(1) {
        Some(s) => s
            .parse()
            .map_err(|_| branching_flow::Error::InvalidArgument(format!("bad seed {s:?}")))?,
        None => 20240601,
    };
    let spec = ExperimentSpec::new(seed);
    for check in CheckId::ALL {
        let report = run_checks(&spec, &[check])?;
        let s = &report.checks[0];
        let verdict = if s.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {check}: {} comparisons, {} failures ({:.1?})",
            s.comparisons, s.failures, report.runtime[0].1
        );
        for r in report.failures() {
            println!(
                "    fail {} statistic={} oracle={:?} bound={:?} se={:?}",
                r.id, r.statistic, r.oracle, r.bound, r.se
            );
        }
        for r in report.records.iter().filter(|r| r.gate == Gate::Info) {
            println!("    info {} = {}", r.id, r.statistic);
        }
    }
    Ok(())
}
