//! Recover spectrum-response weights from a radiograph of known materials,
//! starting from a flat guess.
//!
//! ```text
//! cargo run --release --example spectrum_calibration
//! ```

use anyhow::Result;
use matid::calibrate::{calibrate_spectrum, SpectrumCalibrationOptions};
use matid::materials::SpectrumResponse;
use matid::simulate::{make_analog, simulate_radiograph, AnalogOptions};

fn main() -> Result<()> {
    let opts = AnalogOptions { grid_px: 64, bins: 8, sigma: 0.0, ..Default::default() };
    let spec = make_analog("al-cu-cu-shells", &opts)?.remove(0);
    let sim = simulate_radiograph(&spec)?;
    let n = sim.q.len();
    let (q0, _) = SpectrumResponse::normalized(sim.q.grid().clone(), vec![1.0; n])?;

    let options = SpectrumCalibrationOptions { iterations: 2000, ..Default::default() };
    let (q, cal) = calibrate_spectrum(&sim.radiograph, &sim.paths, &sim.table, &sim.truth, &q0, &options)?;
    println!("J: {:.4e} -> {:.4e} in {} iterations", cal.initial_loss, cal.final_loss, cal.iterations);
    if let Some(w) = &cal.warning {
        println!("warning: {w}");
    }
    println!("{:>8} {:>8} {:>8} {:>8}", "MeV", "start", "fitted", "true");
    for (i, e) in sim.q.grid().energies().iter().enumerate() {
        println!("{e:>8.3} {:>8.4} {:>8.4} {:>8.4}", q0.weights()[i], q.weights()[i], sim.q.weights()[i]);
    }
    Ok(())
}
