//! Trace path-length images for nested spherical shells and print the
//! chord through the center row, in both cone and parallel beam.
//!
//! ```text
//! cargo run --example trace_shells
//! ```

use anyhow::Result;
use matid::geometry::{trace_scene, Beam, DetectorGrid, Scene, SceneObject, SphericalShell};

fn main() -> Result<()> {
    let inch = 2.54;
    let shell = |inner: f64, outer: f64| {
        SceneObject::Shell(SphericalShell { center_cm: [0.0, 0.0, 82.5], inner_radius_cm: inner, outer_radius_cm: outer })
    };
    let scene = Scene {
        grid: DetectorGrid::new(33, 33, 0.5),
        source_to_detector_cm: 100.0,
        beam: Beam::Cone,
        objects: vec![shell(2.0 * inch, 2.5 * inch), shell(1.75 * inch, 2.0 * inch)],
    };
    for beam in [Beam::Cone, Beam::Parallel] {
        let paths = trace_scene(&scene, beam)?;
        println!("{beam:?} beam, center row (cm):");
        for (n, img) in paths.images().iter().enumerate() {
            let row: Vec<String> = img.row(16).iter().step_by(2).map(|l| format!("{l:.2}")).collect();
            println!("  object {}: {}", n + 1, row.join(" "));
        }
    }
    let paths = scene.trace()?;
    println!(
        "central chords: {:.4} cm and {:.4} cm (walls of 1 in and 0.5 in)",
        paths.get(0)[(16, 16)],
        paths.get(1)[(16, 16)]
    );
    Ok(())
}
