//! Load an attenuation table and spectrum from CSV and print the expected
//! transmission of a few materials at several thicknesses.
//!
//! ```text
//! cargo run --example attenuation_table [-- materials.csv spectrum.csv]
//! ```

use std::path::PathBuf;

use anyhow::Result;
use matid::materials::{load_material_table, load_spectrum_response};
use matid::simulate::contrast_table;

fn main() -> Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut args = std::env::args().skip(1);
    let materials = args.next().map(PathBuf::from).unwrap_or_else(|| data.join("materials_brem7.csv"));
    let spectrum = args.next().map(PathBuf::from).unwrap_or_else(|| data.join("spectrum_brem7.csv"));

    let table = load_material_table(&materials)?;
    let (q, scale) = load_spectrum_response(&spectrum, table.grid())?;
    println!(
        "{} materials on {} energies, spectrum normalized by {scale:.4}",
        table.len(),
        table.grid().len()
    );

    let names = ["lithium", "aluminum", "iron", "tin", "lead", "uranium"];
    let lengths = [0.5, 1.0, 2.0, 5.0];
    let idx = table.indices_of(&names)?;
    let c = contrast_table(&idx, &lengths, &q, &table)?;
    print!("{:>10}", "cm");
    for l in lengths {
        print!("{l:>9}");
    }
    println!();
    for (i, name) in names.iter().enumerate() {
        print!("{name:>10}");
        for v in c.row(i) {
            print!("{v:>9.4}");
        }
        println!();
    }
    Ok(())
}
