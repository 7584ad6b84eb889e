//! Eight disjoint slabs, 20 candidate materials: branch and bound with and
//! without a lithium/tin/uranium warm start.
//!
//! ```text
//! cargo run --release --example warm_start_cubes [-- <grid px>]
//! ```

use anyhow::Result;
use matid::simulate::{make_analog, simulate_radiograph, AnalogOptions};
use matid::solver::{solve_top_n, Problem, SearchConfig};

fn main() -> Result<()> {
    let grid_px = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(64);
    let opts = AnalogOptions { grid_px, sigma: 0.005, ..Default::default() };
    let spec = make_analog("eight-cubes", &opts)?.remove(0);
    let sim = simulate_radiograph(&spec)?;
    let problem = Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &sim.table, q: &sim.q };
    let total = (sim.table.len() as f64).powi(sim.paths.len() as i32);

    let warm = SearchConfig {
        warm_start_materials: Some(vec!["lithium".into(), "tin".into(), "uranium".into()]),
        ..Default::default()
    };
    for (label, config) in [("cold", SearchConfig::default()), ("warm", warm)] {
        let r = solve_top_n(&problem, &config)?;
        let s = &r.stats;
        println!(
            "{label}: {} full evaluations ({:.2e} of {total:.2e}), {} bound, {:.1} s, truth rank {:?}",
            s.full_evaluations,
            s.full_evaluations as f64 / total,
            s.bound_evaluations,
            s.wall_time_s,
            r.rank_of(&sim.truth)
        );
        if let Some(w) = &r.warm_start_stats {
            println!("      warm-start pass: {} full, {} bound", w.full_evaluations, w.bound_evaluations);
        }
    }
    Ok(())
}
