//! Build a report from a solve: ranked CSV, human table, correctness grid
//! and a lineout through the center row.
//!
//! ```text
//! cargo run --release --example run_report
//! ```

use anyhow::Result;
use matid::report::{lineout, Report};
use matid::simulate::{make_analog, simulate_radiograph, AnalogOptions};
use matid::solver::{solve_top_n, Problem, SearchConfig};

fn main() -> Result<()> {
    let opts = AnalogOptions { grid_px: 64, bins: 31, sigma: 0.005, ..Default::default() };
    let spec = make_analog("al-cu-cu-shells", &opts)?.remove(0);
    let sim = simulate_radiograph(&spec)?;
    let problem = Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &sim.table, q: &sim.q };
    let config = SearchConfig { top_n: 6, ..Default::default() };
    let result = solve_top_n(&problem, &config)?;

    let mut report = Report::new(&result, &sim.table, &config, false);
    report.lineout = Some(lineout(&sim.radiograph, &result, 2, 32, &sim.paths, &sim.table, &sim.q)?);
    println!("{}", report.table(Some(&spec.truth)));
    println!("{}", report.ranked_csv());
    println!("{}", report.correctness_csv(&spec.truth)?);
    let lineouts = report.lineout_csv().unwrap_or_default();
    for line in lineouts.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
