//! Physics-shaped synthetic attenuation data for tests, examples, and the
//! shipped sample tables.
//!
//! Mass attenuation is modeled as Klein–Nishina Compton scattering plus
//! crude photoelectric (`Z^4 E^-2.5`) and pair-production (`Z^2 ln(E/2mc²)`)
//! terms, anchored to lead at 1 and 5 MeV. Values land within roughly 10%
//! of tabulated data in the 0.5–7 MeV range for mid- and high-Z materials,
//! which is enough for realistic contrast between materials. Real work
//! should import measured coefficients through the CSV format instead.

use crate::error::Result;
use crate::materials::{EnergyGrid, MaterialTable, SpectrumResponse};

/// Bulk properties used by the attenuation model.
#[derive(Debug, Clone, Copy)]
pub struct MaterialSpec {
    pub name: &'static str,
    /// g/cm³
    pub density: f64,
    /// electrons per nucleon
    pub z_over_a: f64,
    /// effective atomic number for photoelectric and pair terms
    pub z_eff: f64,
}

const fn spec(name: &'static str, density: f64, z: f64, a: f64) -> MaterialSpec {
    MaterialSpec {
        name,
        density,
        z_over_a: z / a,
        z_eff: z,
    }
}

/// The twenty candidate materials, alphabetical.
pub const CANDIDATES: [MaterialSpec; 20] = [
    MaterialSpec { name: "air", density: 0.001205, z_over_a: 0.4992, z_eff: 7.6 },
    spec("aluminum", 2.699, 13.0, 26.982),
    spec("beryllium", 1.848, 4.0, 9.012),
    spec("bismuth", 9.747, 83.0, 208.98),
    spec("boron", 2.37, 5.0, 10.81),
    spec("carbon", 2.0, 6.0, 12.011),
    spec("copper", 8.96, 29.0, 63.546),
    spec("gold", 19.32, 79.0, 196.97),
    // HMX, C4H8N8O8
    MaterialSpec { name: "high explosive", density: 1.85, z_over_a: 0.5135, z_eff: 7.2 },
    spec("iron", 7.874, 26.0, 55.845),
    spec("lead", 11.35, 82.0, 207.2),
    spec("lithium", 0.534, 3.0, 6.94),
    spec("molybdenum", 10.22, 42.0, 95.95),
    spec("plutonium", 19.84, 94.0, 244.0),
    // C16H14O3
    MaterialSpec { name: "polycarbonate", density: 1.20, z_over_a: 0.5276, z_eff: 6.0 },
    spec("tantalum", 16.69, 73.0, 180.95),
    spec("tin", 7.31, 50.0, 118.71),
    spec("titanium", 4.506, 22.0, 47.867),
    spec("tungsten", 19.3, 74.0, 183.84),
    spec("uranium", 19.1, 92.0, 238.03),
];

const GADOX: MaterialSpec = MaterialSpec { name: "gadox", density: 7.44, z_over_a: 0.4205, z_eff: 59.0 };

const AVOGADRO: f64 = 6.022_140_76e23;
const ELECTRON_RADIUS_SQ_CM2: f64 = 7.940_787_5e-26;
const ELECTRON_MASS_MEV: f64 = 0.510_998_95;
const PHOTOELECTRIC_K: f64 = 8.3e-8;
const PAIR_K: f64 = 4.8e-4;

/// Klein–Nishina total cross-section per electron (cm²).
pub fn klein_nishina(e_mev: f64) -> f64 {
    let k = e_mev / ELECTRON_MASS_MEV;
    let l = (1.0 + 2.0 * k).ln();
    let a = (1.0 + k) / (k * k) * (2.0 * (1.0 + k) / (1.0 + 2.0 * k) - l / k);
    let b = l / (2.0 * k) - (1.0 + 3.0 * k) / ((1.0 + 2.0 * k) * (1.0 + 2.0 * k));
    2.0 * std::f64::consts::PI * ELECTRON_RADIUS_SQ_CM2 * (a + b)
}

/// Mass attenuation coefficient (cm²/g).
pub fn mass_attenuation(m: &MaterialSpec, e_mev: f64) -> f64 {
    let compton = AVOGADRO * m.z_over_a * klein_nishina(e_mev);
    let photo = PHOTOELECTRIC_K * m.z_over_a * m.z_eff.powi(3) * e_mev.powf(-2.5);
    let pair_threshold = 2.0 * ELECTRON_MASS_MEV;
    let pair = if e_mev > pair_threshold {
        PAIR_K * m.z_over_a * m.z_eff * (e_mev / pair_threshold).ln()
    } else {
        0.0
    };
    compton + photo + pair
}

/// Linear attenuation coefficient (cm⁻¹).
pub fn linear_attenuation(m: &MaterialSpec, e_mev: f64) -> f64 {
    m.density * mass_attenuation(m, e_mev)
}

/// Synthetic table of all [`CANDIDATES`] on `grid`.
pub fn table(grid: &EnergyGrid) -> MaterialTable {
    let names = CANDIDATES.iter().map(|m| m.name.to_string()).collect();
    let mu = CANDIDATES
        .iter()
        .map(|m| grid.energies().iter().map(|&e| linear_attenuation(m, e)).collect())
        .collect();
    MaterialTable::new(grid.clone(), names, mu).expect("synthetic table is valid by construction")
}

/// Cobalt-60: two equally weighted lines at 1.17 and 1.33 MeV.
pub fn co60() -> (MaterialTable, SpectrumResponse) {
    let grid = EnergyGrid::new(vec![1.17, 1.33]).expect("static grid");
    let q = SpectrumResponse::normalized(grid.clone(), vec![0.5, 0.5]).expect("static spectrum").0;
    (table(&grid), q)
}

/// Bremsstrahlung source behind 0.2 cm tungsten and 1 cm aluminum, seen by a
/// 0.4 mm gadox scintillator weighting by deposited energy.
pub fn bremsstrahlung_weights(grid: &EnergyGrid, endpoint_mev: f64) -> Vec<f64> {
    let tungsten = &CANDIDATES[18];
    let aluminum = &CANDIDATES[1];
    grid.energies()
        .iter()
        .map(|&e| {
            if e >= endpoint_mev {
                return 0.0;
            }
            let photons = (endpoint_mev - e) / e;
            let filter = (-linear_attenuation(tungsten, e) * 0.2 - linear_attenuation(aluminum, e) * 1.0).exp();
            let absorbed = 1.0 - (-linear_attenuation(&GADOX, e) * 0.04).exp();
            photons * filter * absorbed * e
        })
        .collect()
}

/// Table and normalized response for a Bremsstrahlung source on a uniform grid.
pub fn bremsstrahlung(endpoint_mev: f64, bins: usize) -> Result<(MaterialTable, SpectrumResponse)> {
    let grid = EnergyGrid::uniform(endpoint_mev, bins)?;
    let weights = bremsstrahlung_weights(&grid, endpoint_mev);
    let (q, _) = SpectrumResponse::normalized(grid.clone(), weights)?;
    Ok((table(&grid), q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lead_near_tabulated_values() {
        let lead = &CANDIDATES[10];
        // tabulated mass attenuation of lead: 0.0710 at 1 MeV, 0.0427 at 5 MeV
        assert!((mass_attenuation(lead, 1.0) - 0.0710).abs() / 0.0710 < 0.1);
        assert!((mass_attenuation(lead, 5.0) - 0.0427).abs() / 0.0427 < 0.15);
    }

    #[test]
    fn klein_nishina_at_one_mev() {
        // 0.2112 barn per electron
        assert!((klein_nishina(1.0) / 1e-24 - 0.2112).abs() < 1e-3);
    }

    #[test]
    fn table_has_twenty_candidates() {
        let (t, q) = co60();
        assert_eq!(t.len(), 20);
        assert_eq!(t.name(0), "air");
        assert_eq!(t.name(19), "uranium");
        assert_eq!(q.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn bremsstrahlung_is_normalized_with_zero_free_interior() {
        let (t, q) = bremsstrahlung(7.0, 101).unwrap();
        assert_eq!(t.grid().len(), 101);
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.weights().iter().all(|&w| w > 0.0));
    }
}
