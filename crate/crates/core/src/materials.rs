//! Energy grid, per-material linear attenuation coefficients, and the
//! normalized source-spectrum × detector-response weights.
//!
//! Attenuation coefficients are linear (cm⁻¹), not mass coefficients, so the
//! optical depth of a ray is simply `mu * length_cm`.
//!
//! File formats (UTF-8, LF line endings, decimal text):
//!
//! ```text
//! energy_MeV,air,aluminum,...      energy_MeV,weight
//! 1.17,7.4e-5,0.1500,...           1.17,0.5
//! 1.33,6.9e-5,0.1410,...           1.33,0.5
//! ```

pub mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Relative tolerance when matching a spectrum file's energies to a table grid.
pub const GRID_MATCH_RTOL: f64 = 1e-9;

/// Ascending photon energies in MeV.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    energies: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::invalid("energy grid must contain at least one energy"));
        }
        for (i, &e) in energies.iter().enumerate() {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::invalid(format!("energy #{i} = {e} is not a positive finite value")));
            }
            if i > 0 && e <= energies[i - 1] {
                return Err(Error::invalid(format!(
                    "energy grid not strictly increasing at #{i} ({} then {e})",
                    energies[i - 1]
                )));
            }
        }
        Ok(Self { energies })
    }

    /// `bins` energies at the centers of equal-width bins spanning (0, endpoint].
    pub fn uniform(endpoint_mev: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("uniform grid needs at least one bin"));
        }
        let width = endpoint_mev / bins as f64;
        Self::new((0..bins).map(|i| (i as f64 + 0.5) * width).collect())
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// True when both grids have the same length and agree within [`GRID_MATCH_RTOL`].
    pub fn matches(&self, other: &EnergyGrid) -> bool {
        self.energies.len() == other.energies.len()
            && self
                .energies
                .iter()
                .zip(&other.energies)
                .all(|(a, b)| (a - b).abs() <= GRID_MATCH_RTOL * a.abs().max(b.abs()))
    }
}

/// Named materials and their linear attenuation coefficients on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    grid: EnergyGrid,
    names: Vec<String>,
    mu: Vec<Vec<f64>>,
}

impl MaterialTable {
    pub fn new(grid: EnergyGrid, names: Vec<String>, mu: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("material table has no materials"));
        }
        if names.len() != mu.len() {
            return Err(Error::invalid(format!(
                "{} names but {} coefficient vectors",
                names.len(),
                mu.len()
            )));
        }
        let mut seen = HashSet::new();
        for (m, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::invalid(format!("material #{m} has an empty name")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate material name `{name}`")));
            }
            if mu[m].len() != grid.len() {
                return Err(Error::invalid(format!(
                    "material `{name}` has {} coefficients, grid has {}",
                    mu[m].len(),
                    grid.len()
                )));
            }
            if let Some((e, v)) = mu[m].iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "material `{name}` energy #{e}: attenuation {v} must be finite and >= 0"
                )));
            }
        }
        Ok(Self { grid, names, mu })
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, m: usize) -> &str {
        &self.names[m]
    }

    /// Attenuation vector (cm⁻¹) of material `m` over the grid.
    pub fn mu(&self, m: usize) -> &[f64] {
        &self.mu[m]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownMaterial(name.to_string()))
    }

    /// Resolve a list of names to material indices.
    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n.as_ref())).collect()
    }

    /// Restrict the table to the named materials, in the given order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<MaterialTable> {
        let idx = self.indices_of(names)?;
        MaterialTable::new(
            self.grid.clone(),
            idx.iter().map(|&m| self.names[m].clone()).collect(),
            idx.iter().map(|&m| self.mu[m].clone()).collect(),
        )
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse("line 1", e.to_string()))?
            .clone();
        if header.get(0) != Some("energy_MeV") {
            return Err(Error::parse("line 1 column 1", "header must start with `energy_MeV`"));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::parse("line 1", "no material columns"));
        }
        let mut seen = HashSet::new();
        for (i, n) in names.iter().enumerate() {
            if !seen.insert(n.as_str()) {
                return Err(Error::parse(format!("line 1 column {}", i + 2), format!("duplicate material name `{n}`")));
            }
        }
        let mut energies = Vec::new();
        let mut mu = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(format!("line {line}"), e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != names.len() + 1 {
                return Err(Error::parse(
                    format!("line {line}"),
                    format!("expected {} fields, found {}", names.len() + 1, record.len()),
                ));
            }
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::parse(format!("line {line} column {}", col + 1), format!("`{field}` is not a number"))
                })?;
                if col == 0 {
                    energies.push(v);
                    continue;
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::parse(
                        format!("line {line} column {} (`{}`)", col + 1, names[col - 1]),
                        format!("attenuation {v} must be finite and >= 0"),
                    ));
                }
                mu[col - 1].push(v);
            }
        }
        let grid = EnergyGrid::new(energies)?;
        MaterialTable::new(grid, names, mu)
    }

    /// Serialize with shortest round-trip float formatting.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("energy_MeV");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (e, energy) in self.grid.energies().iter().enumerate() {
            out.push_str(&energy.to_string());
            for m in 0..self.names.len() {
                out.push(',');
                out.push_str(&self.mu[m][e].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Load an attenuation CSV (`energy_MeV,<name1>,<name2>,...`).
pub fn load_material_table(path: impl AsRef<Path>) -> Result<MaterialTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MaterialTable::from_csv_str(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::parse(format!("{}: {location}", path.display()), message),
        other => other,
    })
}

/// Per-energy weights `q[e] = Is[e] * resp[e]`, nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResponse {
    grid: EnergyGrid,
    q: Vec<f64>,
}

/// Normalization tolerance on `sum(q)`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

impl SpectrumResponse {
    /// Build from raw weights, renormalizing to unit sum.
    ///
    /// Returns the response and the factor the raw weights were divided by.
    pub fn normalized(grid: EnergyGrid, weights: Vec<f64>) -> Result<(Self, f64)> {
        if weights.len() != grid.len() {
            return Err(Error::invalid(format!(
                "spectrum has {} weights, grid has {}",
                weights.len(),
                grid.len()
            )));
        }
        if let Some((e, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!("spectrum weight #{e} = {w} must be finite and >= 0")));
        }
        let factor: f64 = weights.iter().sum();
        if factor <= 0.0 {
            return Err(Error::invalid("spectrum weights are all zero"));
        }
        let q = weights.iter().map(|w| w / factor).collect();
        Ok((Self { grid, q }, factor))
    }

    /// Single-energy spectrum on a one-point grid.
    pub fn monoenergetic(energy_mev: f64) -> Result<Self> {
        Ok(Self::normalized(EnergyGrid::new(vec![energy_mev])?, vec![1.0])?.0)
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn from_csv_str(text: &str, grid: &EnergyGrid) -> Result<(Self, f64)> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse("line 1", e.to_string()))?
            .clone();
        if header.len() != 2 || &header[0] != "energy_MeV" || &header[1] != "weight" {
            return Err(Error::parse("line 1", "header must be `energy_MeV,weight`"));
        }
        let mut energies = Vec::new();
        let mut weights = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(format!("line {line}"), e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let num = |col: usize| -> Result<f64> {
                record[col]
                    .parse()
                    .map_err(|_| Error::parse(format!("line {line} column {}", col + 1), format!("`{}` is not a number", &record[col])))
            };
            energies.push(num(0)?);
            weights.push(num(1)?);
        }
        let file_grid = EnergyGrid::new(energies)?;
        if !file_grid.matches(grid) {
            return Err(Error::invalid(format!(
                "spectrum energies ({} values) do not match the material grid ({} values) within {GRID_MATCH_RTOL} relative",
                file_grid.len(),
                grid.len()
            )));
        }
        Self::normalized(grid.clone(), weights)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("energy_MeV,weight\n");
        for (e, w) in self.grid.energies().iter().zip(&self.q) {
            out.push_str(&format!("{e},{w}\n"));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Load a spectrum CSV onto `grid`, returning the normalized response and the
/// factor the file's weights were divided by.
pub fn load_spectrum_response(path: impl AsRef<Path>, grid: &EnergyGrid) -> Result<(SpectrumResponse, f64)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SpectrumResponse::from_csv_str(&text, grid)
}
