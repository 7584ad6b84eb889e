//! Rank of the five-shell truth as the shell thickness grows, over several
//! noise seeds.
//!
//! ```text
//! cargo run --release --example thickness_sweep [-- <seeds>]
//! ```

use anyhow::Result;
use matid::analysis::{mean_ranks, run_thickness_sweep, thickness_sweep_csv};
use matid::simulate::{AnalogOptions, SWEEP_THICKNESSES_CM};
use matid::solver::SearchConfig;

fn main() -> Result<()> {
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let opts = AnalogOptions { grid_px: 48, bins: 31, sigma: 0.005, ..Default::default() };
    let rows = run_thickness_sweep(&SWEEP_THICKNESSES_CM, 0..seeds, &opts, &SearchConfig::default())?;
    print!("{}", thickness_sweep_csv(&rows));
    for (t, r) in mean_ranks(&rows) {
        eprintln!("{t:>4} cm: mean rank {r:.2}");
    }
    Ok(())
}
