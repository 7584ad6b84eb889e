//! Evaluate the forward model for the right and a wrong assignment and fit
//! gain and scatter to a simulated radiograph.
//!
//! ```text
//! cargo run --release --example forward_fit
//! ```

use anyhow::Result;
use matid::forward::{direct, fit_gain_scatter, loss, Assignment};
use matid::simulate::{make_analog, simulate_radiograph, AnalogOptions};

fn main() -> Result<()> {
    let spec = make_analog("al-cu-shells", &AnalogOptions { grid_px: 96, ..Default::default() })?.remove(0);
    let sim = simulate_radiograph(&spec)?;

    let d = direct(&sim.truth, &sim.paths, &sim.table, &sim.q)?;
    let fit = fit_gain_scatter(&sim.radiograph, &d, 2, None)?;
    println!("truth {}: alpha {:.5}, rmse {:.3e}", spec.truth.join("/"), fit.alpha, fit.rmse);
    for ((i, j), c) in fit.theta_terms() {
        println!("  u^{i} v^{j}: {c:+.5}");
    }

    for names in [["aluminum", "iron"], ["copper", "aluminum"], ["lead", "lead"]] {
        let x = Assignment::from_names(&names, &sim.table)?;
        for order in [0, 2, 4] {
            let f = loss(&x, &sim.radiograph, &sim.paths, &sim.table, &sim.q, order)?;
            println!("{:>16} P={order}: rmse {:.3e}", names.join("/"), f.rmse);
        }
    }
    Ok(())
}
