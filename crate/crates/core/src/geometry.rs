//! Analytic scene descriptions and per-object path-length maps.
//!
//! Coordinates: the source sits at the origin and the optical axis is +z.
//! The detector plane is `z = source_to_detector_cm`. Pixel `(row v, col u)`
//! has its center at `x = (u - u0) * pitch`, `y = (v - v0) * pitch`, with
//! `u` increasing rightward and `v` downward. A shell center is given as
//! `[x, y, z]` in the same frame (z = distance from the source).
//!
//! Scene JSON uses unit-suffixed field names:
//!
//! ```json
//! {
//!   "grid": { "height_px": 256, "width_px": 256, "pitch_cm": 0.08 },
//!   "source_to_detector_cm": 100.0,
//!   "beam": "cone",
//!   "objects": [
//!     { "kind": "shell", "center_cm": [0, 0, 82.5], "inner_radius_cm": 5.08, "outer_radius_cm": 6.35 },
//!     { "kind": "slab", "thickness_cm": 2.54,
//!       "region": { "kind": "rect", "row_px": 10, "col_px": 20, "height_px": 30, "width_px": 30 } }
//!   ]
//! }
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detector pixel layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorGrid {
    pub height_px: usize,
    pub width_px: usize,
    pub pitch_cm: f64,
    /// Optical-axis column; defaults to the grid center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_u_px: Option<f64>,
    /// Optical-axis row; defaults to the grid center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_v_px: Option<f64>,
}

impl DetectorGrid {
    pub fn new(height_px: usize, width_px: usize, pitch_cm: f64) -> Self {
        Self {
            height_px,
            width_px,
            pitch_cm,
            axis_u_px: None,
            axis_v_px: None,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height_px, self.width_px)
    }

    pub fn axis(&self) -> (f64, f64) {
        (
            self.axis_u_px.unwrap_or((self.width_px as f64 - 1.0) / 2.0),
            self.axis_v_px.unwrap_or((self.height_px as f64 - 1.0) / 2.0),
        )
    }

    /// Detector-plane position (cm) of a pixel center.
    pub fn pixel_xy(&self, v: usize, u: usize) -> (f64, f64) {
        let (u0, v0) = self.axis();
        ((u as f64 - u0) * self.pitch_cm, (v as f64 - v0) * self.pitch_cm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height_px == 0 || self.width_px == 0 {
            return Err(Error::invalid("detector grid must be at least 1x1"));
        }
        if !(self.pitch_cm.is_finite() && self.pitch_cm > 0.0) {
            return Err(Error::invalid(format!("pixel pitch {} must be > 0", self.pitch_cm)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beam {
    Parallel,
    #[default]
    Cone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalShell {
    pub center_cm: [f64; 3],
    pub inner_radius_cm: f64,
    pub outer_radius_cm: f64,
}

impl SphericalShell {
    /// Chord length through the shell for a ray whose closest approach to
    /// the center is `b` (given as `b²`).
    pub fn chord(&self, b_sq: f64) -> f64 {
        let ro2 = self.outer_radius_cm * self.outer_radius_cm;
        if b_sq >= ro2 {
            return 0.0;
        }
        let ri2 = self.inner_radius_cm * self.inner_radius_cm;
        let outer = (ro2 - b_sq).sqrt();
        let inner = (ri2 - b_sq).max(0.0).sqrt();
        (2.0 * (outer - inner)).max(0.0)
    }

    /// True when the point lies in the shell material (`r_in <= r <= r_out`).
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let d2: f64 = (0..3).map(|i| (p[i] - self.center_cm[i]).powi(2)).sum();
        d2 <= self.outer_radius_cm.powi(2) && d2 >= self.inner_radius_cm.powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PixelRegion {
    /// Axis-aligned rectangle of pixels.
    Rect {
        row_px: usize,
        col_px: usize,
        height_px: usize,
        width_px: usize,
    },
    /// Explicit `[row, col]` pixel list.
    Pixels { pixels_px: Vec<[usize; 2]> },
}

impl PixelRegion {
    pub fn to_mask(&self, grid: &DetectorGrid) -> Result<Array2<bool>> {
        let (rows, cols) = grid.shape();
        let mut mask = Array2::from_elem((rows, cols), false);
        match self {
            PixelRegion::Rect { row_px, col_px, height_px, width_px } => {
                if row_px + height_px > rows || col_px + width_px > cols {
                    return Err(Error::invalid(format!(
                        "slab rectangle rows {row_px}..{} cols {col_px}..{} exceeds the {rows}x{cols} grid",
                        row_px + height_px,
                        col_px + width_px
                    )));
                }
                mask.slice_mut(ndarray::s![*row_px..row_px + height_px, *col_px..col_px + width_px])
                    .fill(true);
            }
            PixelRegion::Pixels { pixels_px } => {
                for &[r, c] in pixels_px {
                    if r >= rows || c >= cols {
                        return Err(Error::invalid(format!("slab pixel ({r}, {c}) outside the {rows}x{cols} grid")));
                    }
                    mask[[r, c]] = true;
                }
            }
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("slab region is empty"));
        }
        Ok(mask)
    }
}

/// Constant path length over a pixel region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSlab {
    pub region: PixelRegion,
    pub thickness_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneObject {
    Shell(SphericalShell),
    Slab(ConstantSlab),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub grid: DetectorGrid,
    pub source_to_detector_cm: f64,
    #[serde(default)]
    pub beam: Beam,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let sdd = self.source_to_detector_cm;
        if !(sdd.is_finite() && sdd > 0.0) {
            return Err(Error::invalid(format!("source_to_detector_cm {sdd} must be > 0")));
        }
        if self.objects.is_empty() {
            return Err(Error::invalid("scene has no objects"));
        }
        for (n, obj) in self.objects.iter().enumerate() {
            match obj {
                SceneObject::Shell(s) => {
                    if !(s.inner_radius_cm >= 0.0 && s.outer_radius_cm > s.inner_radius_cm && s.outer_radius_cm.is_finite()) {
                        return Err(Error::invalid(format!(
                            "object {n}: need 0 <= inner radius < outer radius, got {} and {}",
                            s.inner_radius_cm, s.outer_radius_cm
                        )));
                    }
                    if s.center_cm.iter().any(|c| !c.is_finite()) {
                        return Err(Error::invalid(format!("object {n}: non-finite center")));
                    }
                    let z = s.center_cm[2];
                    if z - s.outer_radius_cm <= 0.0 || z + s.outer_radius_cm >= sdd {
                        return Err(Error::invalid(format!(
                            "object {n}: shell spanning z = {}..{} cm must lie strictly between source and detector (0..{sdd})",
                            z - s.outer_radius_cm,
                            z + s.outer_radius_cm
                        )));
                    }
                }
                SceneObject::Slab(slab) => {
                    if !(slab.thickness_cm.is_finite() && slab.thickness_cm > 0.0) {
                        return Err(Error::invalid(format!("object {n}: slab thickness must be > 0")));
                    }
                    slab.region.to_mask(&self.grid).map_err(|e| Error::invalid(format!("object {n}: {e}")))?;
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Trace every object with the scene's own beam model.
    pub fn trace(&self) -> Result<PathLengthSet> {
        trace_scene(self, self.beam)
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scene::from_json_str(&text)
}

/// Per-object path-length images (cm), in scene object order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLengthSet {
    images: Vec<Array2<f64>>,
}

impl PathLengthSet {
    pub fn new(images: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = images.first() else {
            return Err(Error::invalid("path-length set needs at least one object"));
        };
        let dim = first.dim();
        for (n, img) in images.iter().enumerate() {
            if img.dim() != dim {
                return Err(Error::Shape { expected: dim, found: img.dim() });
            }
            if img.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
                return Err(Error::invalid(format!("object {n}: path lengths must be finite and >= 0")));
            }
        }
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.images[0].dim()
    }

    pub fn get(&self, n: usize) -> &Array2<f64> {
        &self.images[n]
    }

    pub fn images(&self) -> &[Array2<f64>] {
        &self.images
    }

    /// Pixels where object `n` is present.
    pub fn support(&self, n: usize) -> Array2<bool> {
        self.images[n].mapv(|l| l > 0.0)
    }
}

/// Path length through one shell at every pixel.
pub fn trace_shell(shell: &SphericalShell, scene: &Scene, beam: Beam) -> Array2<f64> {
    let grid = &scene.grid;
    let sdd = scene.source_to_detector_cm;
    let [cx, cy, cz] = shell.center_cm;
    let (rows, cols) = grid.shape();
    let mut out = Array2::zeros((rows, cols));
    out.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(v, mut row)| {
            for u in 0..cols {
                let (x, y) = grid.pixel_xy(v, u);
                let b_sq = match beam {
                    Beam::Parallel => (x - cx).powi(2) + (y - cy).powi(2),
                    Beam::Cone => {
                        // |C x P|^2 / |P|^2 with P the detector point
                        let c1 = cy * sdd - cz * y;
                        let c2 = cz * x - cx * sdd;
                        let c3 = cx * y - cy * x;
                        (c1 * c1 + c2 * c2 + c3 * c3) / (x * x + y * y + sdd * sdd)
                    }
                };
                row[u] = shell.chord(b_sq);
            }
        });
    out
}

/// Constant path length inside the slab region, zero elsewhere.
pub fn trace_slab(slab: &ConstantSlab, scene: &Scene) -> Result<Array2<f64>> {
    let mask = slab.region.to_mask(&scene.grid)?;
    Ok(mask.mapv(|m| if m { slab.thickness_cm } else { 0.0 }))
}

/// Trace all objects, preserving scene order.
pub fn trace_scene(scene: &Scene, beam: Beam) -> Result<PathLengthSet> {
    scene.validate()?;
    let images = scene
        .objects
        .iter()
        .map(|obj| match obj {
            SceneObject::Shell(s) => Ok(trace_shell(s, scene, beam)),
            SceneObject::Slab(s) => trace_slab(s, scene),
        })
        .collect::<Result<Vec<_>>>()?;
    PathLengthSet::new(images)
}
