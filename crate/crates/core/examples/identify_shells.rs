//! Rank material assignments for the nested-shell scenes with branch and
//! bound and compare against exhaustive enumeration.
//!
//! ```text
//! cargo run --release --example identify_shells [-- al-cu-cu-shells]
//! ```

use anyhow::Result;
use matid::simulate::{make_analog, simulate_radiograph, AnalogOptions};
use matid::solver::{solve_exhaustive, solve_top_n, Problem, SearchConfig, DEFAULT_EXHAUSTIVE_BUDGET};

fn main() -> Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "al-cu-shells".into());
    let opts = AnalogOptions { grid_px: 96, bins: 41, sigma: 0.005, ..Default::default() };
    let spec = make_analog(&name, &opts)?.remove(0);
    let sim = simulate_radiograph(&spec)?;
    let problem = Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &sim.table, q: &sim.q };

    let config = SearchConfig::default();
    let bb = solve_top_n(&problem, &config)?;
    println!("{name}: truth {}", spec.truth.join(", "));
    for (k, r) in bb.ranked.iter().take(5).enumerate() {
        println!("{:>3}  {:<36} rmse {:.4e}", k + 1, r.assignment.names(&sim.table).join(", "), r.fit.rmse);
    }
    println!("truth rank: {:?}", bb.rank_of(&sim.truth));
    let s = &bb.stats;
    println!(
        "branch and bound: {} full, {} bound evaluations, {} pruned, {:.2} s",
        s.full_evaluations, s.bound_evaluations, s.pruned_subtrees, s.wall_time_s
    );

    let ex = solve_exhaustive(&problem, config.top_n, config.order, DEFAULT_EXHAUSTIVE_BUDGET)?;
    let same = ex.ranked.iter().zip(&bb.ranked).all(|(a, b)| a.assignment == b.assignment);
    println!(
        "exhaustive: {} evaluations, {:.2} s, same ranking: {same}",
        ex.stats.full_evaluations, ex.stats.wall_time_s
    );
    Ok(())
}
