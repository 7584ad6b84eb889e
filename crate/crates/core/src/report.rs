//! Result documents for an identification run: JSON report, ranked CSV,
//! lineouts, a correctness grid against known truth, and a plain-text table.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{direct, normalized_coord, Assignment, FitResult, Radiograph};
use crate::geometry::PathLengthSet;
use crate::materials::{MaterialTable, SpectrumResponse};
use crate::pfm;
use crate::solver::{SearchConfig, SearchStats, SolveResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub materials: Vec<String>,
    pub indices: Vec<usize>,
    pub sse: f64,
    pub rmse: f64,
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub degenerate: bool,
}

/// Measured and modeled values along one detector row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineout {
    pub row: usize,
    /// Normalized horizontal coordinate in `[-1, 1]`.
    pub u: Vec<f64>,
    /// `None` where the pixel is masked out.
    pub measured: Vec<Option<f64>>,
    /// `alpha * d + s` for the leading ranked assignments.
    pub models: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: SearchConfig,
    pub exhaustive: bool,
    pub complete: bool,
    pub n_objects: usize,
    pub n_pixels: usize,
    pub materials: Vec<String>,
    pub ranked: Vec<RankedEntry>,
    pub stats: SearchStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start_stats: Option<SearchStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineout: Option<Lineout>,
}

impl Report {
    pub fn new(result: &SolveResult, table: &MaterialTable, config: &SearchConfig, exhaustive: bool) -> Self {
        let ranked = result
            .ranked
            .iter()
            .enumerate()
            .map(|(i, r)| RankedEntry {
                rank: i + 1,
                materials: r.assignment.names(table),
                indices: r.assignment.materials().unwrap_or_default(),
                sse: r.fit.sse,
                rmse: r.fit.rmse,
                alpha: r.fit.alpha,
                theta: r.fit.theta.clone(),
                degenerate: r.fit.degenerate,
            })
            .collect::<Vec<_>>();
        Report {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            exhaustive,
            complete: result.complete,
            n_objects: result.ranked.first().map_or(0, |r| r.assignment.len()),
            n_pixels: result.ranked.first().map_or(0, |r| r.fit.n_pixels),
            materials: table.names().to_vec(),
            ranked,
            stats: result.stats.clone(),
            warm_start_stats: result.warm_start_stats.clone(),
            lineout: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// 1-based rank of an assignment given by material names.
    pub fn rank_of(&self, truth: &[String]) -> Option<usize> {
        self.ranked.iter().find(|e| e.materials == truth).map(|e| e.rank)
    }

    /// `rank,assignment,rmse,sse,alpha`; materials joined by `/`.
    pub fn ranked_csv(&self) -> String {
        let mut out = String::from("rank,assignment,rmse,sse,alpha\n");
        for e in &self.ranked {
            writeln!(out, "{},{},{:?},{:?},{:?}", e.rank, e.materials.join("/"), e.rmse, e.sse, e.alpha).unwrap();
        }
        out
    }

    /// Human-readable ranking at four significant digits.
    pub fn table(&self, truth: Option<&[String]>) -> String {
        let headers = ["rank", "assignment", "rmse", "alpha"];
        let rows: Vec<[String; 4]> = self
            .ranked
            .iter()
            .map(|e| {
                let mark = if truth == Some(e.materials.as_slice()) { " *" } else { "" };
                [e.rank.to_string(), e.materials.join(", ") + mark, sig4(e.rmse), sig4(e.alpha)]
            })
            .collect();
        let mut width = headers.map(str::len);
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: [&str; 4]| {
            writeln!(
                out,
                "{:>w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2],
                w3 = width[3]
            )
            .unwrap();
        };
        line(&mut out, headers);
        for r in &rows {
            line(&mut out, [&r[0], &r[1], &r[2], &r[3]]);
        }
        if let Some(truth) = truth {
            match self.rank_of(truth) {
                Some(k) => writeln!(out, "truth: rank {k}").unwrap(),
                None => writeln!(out, "truth: not in top {}", self.ranked.len()).unwrap(),
            }
        }
        if !self.complete {
            out.push_str("search stopped at the node limit; ranking may be incomplete\n");
        }
        out
    }

    /// One row per ranked entry, one column per object: 1 when the material
    /// matches the truth, 0 otherwise.
    pub fn correctness_grid(&self, truth: &[String]) -> Result<Vec<Vec<bool>>> {
        if truth.len() != self.n_objects {
            return Err(Error::invalid(format!(
                "truth has {} objects, report has {}",
                truth.len(),
                self.n_objects
            )));
        }
        Ok(self
            .ranked
            .iter()
            .map(|e| e.materials.iter().zip(truth).map(|(a, b)| a == b).collect())
            .collect())
    }

    /// `rank,object_1,...,object_K,n_correct`
    pub fn correctness_csv(&self, truth: &[String]) -> Result<String> {
        let grid = self.correctness_grid(truth)?;
        let mut out = String::from("rank");
        for k in 1..=truth.len() {
            write!(out, ",object_{k}").unwrap();
        }
        out.push_str(",n_correct\n");
        for (e, row) in self.ranked.iter().zip(&grid) {
            write!(out, "{}", e.rank).unwrap();
            for &ok in row {
                write!(out, ",{}", u8::from(ok)).unwrap();
            }
            writeln!(out, ",{}", row.iter().filter(|&&b| b).count()).unwrap();
        }
        Ok(out)
    }

    /// `u,measured,model_1,model_2,...`; masked pixels leave `measured` empty.
    pub fn lineout_csv(&self) -> Option<String> {
        let l = self.lineout.as_ref()?;
        let mut out = String::from("u,measured");
        for k in 1..=l.models.len() {
            write!(out, ",model_{k}").unwrap();
        }
        out.push('\n');
        for (i, u) in l.u.iter().enumerate() {
            write!(out, "{u:?},").unwrap();
            if let Some(m) = l.measured[i] {
                write!(out, "{m:?}").unwrap();
            }
            for m in &l.models {
                write!(out, ",{:?}", m[i]).unwrap();
            }
            out.push('\n');
        }
        Some(out)
    }
}

/// Format with four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-3..4).contains(&mag) {
        format!("{:.*}", (3 - mag).max(0) as usize, x)
    } else {
        format!("{x:.3e}")
    }
}

/// Modeled transmission `alpha * d + s` for a fitted assignment.
pub fn model_image(
    x: &Assignment,
    fit: &FitResult,
    paths: &PathLengthSet,
    table: &MaterialTable,
    q: &SpectrumResponse,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = direct(x, paths, table, q)?;
    let s = fit.scatter_image(paths.dim());
    Ok((d, s))
}

/// Lineout across `row` for the first `n_models` ranked assignments.
pub fn lineout(
    t: &Radiograph,
    result: &SolveResult,
    n_models: usize,
    row: usize,
    paths: &PathLengthSet,
    table: &MaterialTable,
    q: &SpectrumResponse,
) -> Result<Lineout> {
    let (h, w) = t.dim();
    if row >= h {
        return Err(Error::invalid(format!("lineout row {row} outside image of height {h}")));
    }
    let u = (0..w).map(|i| normalized_coord(i, w)).collect();
    let measured = (0..w).map(|j| t.valid()[(row, j)].then(|| t.values()[(row, j)])).collect();
    let mut models = Vec::new();
    for r in result.ranked.iter().take(n_models) {
        let (d, s) = model_image(&r.assignment, &r.fit, paths, table, q)?;
        models.push((0..w).map(|j| r.fit.alpha * d[(row, j)] + s[(row, j)]).collect());
    }
    Ok(Lineout { row, u, measured, models })
}

/// Write `d_k.pfm`, `s_k.pfm` and `residual_k.pfm` for the first `n` ranked
/// assignments; residuals are zero outside the fitted mask.
pub fn write_diagnostics(
    dir: &Path,
    t: &Radiograph,
    result: &SolveResult,
    n: usize,
    paths: &PathLengthSet,
    table: &MaterialTable,
    q: &SpectrumResponse,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for (k, r) in result.ranked.iter().take(n).enumerate() {
        let (d, s) = model_image(&r.assignment, &r.fit, paths, table, q)?;
        let mut res = t.values() - &(&d * r.fit.alpha + &s);
        ndarray::Zip::from(&mut res).and(t.valid()).for_each(|v, &ok| {
            if !ok {
                *v = 0.0;
            }
        });
        for (stem, img) in [("d", &d), ("s", &s), ("residual", &res)] {
            let path = dir.join(format!("{stem}_{}.pfm", k + 1));
            pfm::write(&path, img)?;
            written.push(path);
        }
    }
    Ok(written)
}
