//! Regenerate the files under `data/`: attenuation tables and spectra for
//! the cobalt-60 and 7 MeV sources, simulation specs, and an identify config.
//!
//! ```text
//! cargo run --example generate_data [-- <out dir>]
//! ```

use std::path::PathBuf;

use anyhow::Result;
use matid::cli::IdentifyConfig;
use matid::materials::synthetic;
use matid::simulate::{make_analog, AnalogOptions, DetectorSpec, SourceSpec};

fn main() -> Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    std::fs::create_dir_all(&out)?;

    let (table, q) = synthetic::co60();
    table.save(out.join("materials_co60.csv"))?;
    q.save(out.join("spectrum_co60.csv"))?;
    let (table, q) = synthetic::bremsstrahlung(7.0, 101)?;
    table.save(out.join("materials_brem7.csv"))?;
    q.save(out.join("spectrum_brem7.csv"))?;

    let opts = AnalogOptions { grid_px: 128, sigma: 0.002, ..Default::default() };
    let mut shells = make_analog("al-cu-shells", &opts)?.remove(0);
    shells.source = SourceSpec::Files {
        materials: "materials_co60.csv".into(),
        spectrum: "spectrum_co60.csv".into(),
    };
    std::fs::write(out.join("al_cu_shells.json"), shells.to_json_string())?;

    let mut frames = make_analog("al-cu-shells", &AnalogOptions { grid_px: 64, sigma: 0.0, ..Default::default() })?.remove(0);
    frames.detector = Some(DetectorSpec {
        gain_counts_per_s: 2000.0,
        gain_falloff: 0.2,
        dark_rate_counts_per_s: 15.0,
        offset_counts: 100.0,
        dark_times_s: vec![1.0, 4.0, 16.0],
        flat_times_s: vec![1.0, 2.0, 4.0, 8.0],
        object_time_s: 8.0,
        read_noise_counts: 0.0,
    });
    std::fs::write(out.join("al_cu_shells_frames.json"), frames.to_json_string())?;

    let mut config = IdentifyConfig::default();
    config.search.warm_start_materials = Some(vec!["lithium".into(), "tin".into(), "uranium".into()]);
    config.diagnostics = 2;
    std::fs::write(out.join("identify.json"), serde_json::to_string_pretty(&config)? + "\n")?;

    println!("wrote data files to {}", out.display());
    Ok(())
}
