//! Synthesize dark and flat frames with a known detector, fit per-pixel
//! gain, dark rate and offset, and normalize an object exposure.
//!
//! ```text
//! cargo run --release --example pixel_calibration
//! ```

use anyhow::Result;
use matid::calibrate::{fit_pixel_calibration, preprocess, ExposureSet, DEFAULT_R2_THRESHOLD};
use matid::simulate::{make_analog, simulate_radiograph, synthesize_frames, AnalogOptions, DetectorSpec};

fn main() -> Result<()> {
    let mut spec = make_analog("al-cu-shells", &AnalogOptions { grid_px: 64, sigma: 0.0, ..Default::default() })?.remove(0);
    let detector = DetectorSpec {
        gain_counts_per_s: 2000.0,
        gain_falloff: 0.2,
        dark_rate_counts_per_s: 15.0,
        offset_counts: 100.0,
        dark_times_s: vec![1.0, 4.0, 16.0],
        flat_times_s: vec![1.0, 2.0, 4.0, 8.0],
        object_time_s: 8.0,
        read_noise_counts: 0.0,
    };
    spec.detector = Some(detector.clone());
    let sim = simulate_radiograph(&spec)?;
    let mut frames = synthesize_frames(&spec, &sim)?;
    let (_, object) = frames.pop().expect("object frame is last");

    let set = ExposureSet::new(frames.into_iter().map(|(_, f)| f).collect())?;
    let cal = fit_pixel_calibration(&set, DEFAULT_R2_THRESHOLD)?;
    let truth_gain = detector.gain_profile(set.dim());
    let gain_err = (&cal.gain_profile - &truth_gain).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    println!("valid pixels: {}", cal.valid.iter().filter(|&&v| v).count());
    println!("max gain error: {gain_err:.3e} counts/s");

    let t = preprocess(&object.image, object.exposure_s, &cal)?;
    let err = (t.values() - sim.radiograph.values()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    println!("max preprocess error against the simulated radiograph: {err:.3e}");
    Ok(())
}
