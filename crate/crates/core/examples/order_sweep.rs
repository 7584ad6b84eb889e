//! Sweep the scatter polynomial order from 0 to 10 on the three-shell scene
//! with out-of-model scatter and print the rank-versus-order CSV.
//!
//! ```text
//! cargo run --release --example order_sweep > order_sweep.csv
//! ```

use anyhow::Result;
use matid::analysis::order_sweep;
use matid::simulate::{make_analog, simulate_radiograph, AnalogOptions};
use matid::solver::{Problem, DEFAULT_EXHAUSTIVE_BUDGET};

fn main() -> Result<()> {
    let opts = AnalogOptions { grid_px: 48, bins: 21, sigma: 0.005, ..Default::default() };
    let spec = make_analog("order-sweep", &opts)?.remove(0);
    let sim = simulate_radiograph(&spec)?;
    let problem = Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &sim.table, q: &sim.q };
    let sweep = order_sweep(&problem, &sim.truth, 0..=10, 10, DEFAULT_EXHAUSTIVE_BUDGET)?;
    print!("{}", sweep.to_csv());
    eprintln!("monotonicity violations: {}", sweep.monotonicity_violations(1e-12).len());
    Ok(())
}
