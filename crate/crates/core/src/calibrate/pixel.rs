//! Per-pixel gain, dark rate and offset from dark and flat exposures.
//!
//! A raw frame at exposure `t` is modeled as
//! `raw = t * gain * tot + t * dark_rate + offset`, where `gain` folds the
//! pixel gain and the open-beam profile together and `tot = 1` for flats,
//! `0` for darks.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SVD};
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Radiograph;
use crate::pfm;

/// Default minimum R² for a pixel to be kept.
pub const DEFAULT_R2_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Dark,
    Flat,
}

/// One raw exposure.
#[derive(Debug, Clone)]
pub struct Frame {
    pub image: Array2<f64>,
    pub exposure_s: f64,
    pub kind: FrameKind,
    /// Where the frame came from, for provenance.
    pub source: Option<String>,
}

/// Entry of a frames manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// PFM path, relative to the manifest's directory.
    pub path: String,
    pub exposure_s: f64,
    pub kind: FrameKind,
}

/// `{"frames": [{"path": ..., "exposure_s": ..., "kind": "dark" | "flat"}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesManifest {
    pub frames: Vec<FrameRecord>,
}

/// Dark and flat frames sharing one detector shape.
#[derive(Debug, Clone)]
pub struct ExposureSet {
    frames: Vec<Frame>,
}

fn design_row(f: &Frame) -> [f64; 3] {
    match f.kind {
        FrameKind::Dark => [0.0, f.exposure_s, 1.0],
        FrameKind::Flat => [f.exposure_s, f.exposure_s, 1.0],
    }
}

impl ExposureSet {
    /// Validate shapes, exposure times and the rank of the design.
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::invalid("no calibration frames"))?;
        let dim = first.image.dim();
        for f in &frames {
            if f.image.dim() != dim {
                return Err(Error::Shape { expected: dim, found: f.image.dim() });
            }
            if !(f.exposure_s.is_finite() && f.exposure_s > 0.0) {
                return Err(Error::invalid(format!("exposure time {} s must be > 0", f.exposure_s)));
            }
        }
        let darks = frames.iter().filter(|f| f.kind == FrameKind::Dark).count();
        let flats = frames.len() - darks;
        if darks == 0 {
            return Err(Error::RankDeficient("no dark frames: dark rate and gain cannot be separated".into()));
        }
        if flats == 0 {
            return Err(Error::RankDeficient("no flat frames: gain is unobservable".into()));
        }
        let set = Self { frames };
        if matrix_rank(&set.design()) < 3 {
            return Err(Error::RankDeficient(
                "exposure times do not vary: need two distinct dark times, or two distinct flat times".into(),
            ));
        }
        Ok(set)
    }

    /// Read the frames listed in a manifest.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: FramesManifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let frames = manifest
            .frames
            .iter()
            .map(|r| {
                Ok(Frame {
                    image: pfm::read(base.join(&r.path))?,
                    exposure_s: r.exposure_s,
                    kind: r.kind,
                    source: Some(r.path.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn dim(&self) -> (usize, usize) {
        self.frames[0].image.dim()
    }

    fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.frames.len(), 3, |i, j| design_row(&self.frames[i])[j])
    }
}

fn matrix_rank(a: &DMatrix<f64>) -> usize {
    let s = SVD::new(a.clone(), false, false).singular_values;
    let tol = s.max() * 1e-12 * a.nrows().max(a.ncols()) as f64;
    s.iter().filter(|&&v| v > tol).count()
}

/// Per-pixel detector model.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCalibration {
    /// Gain times open-beam profile, counts/s at full transmission.
    pub gain_profile: Array2<f64>,
    /// counts/s
    pub dark_rate: Array2<f64>,
    /// counts
    pub offset: Array2<f64>,
    pub r2: Array2<f64>,
    pub valid: Array2<bool>,
    pub threshold: f64,
    /// Provenance of the frames used.
    pub frames: Vec<FrameRecord>,
}

/// Least-squares fit of the detector model at every pixel.
///
/// Pixels with R² below `r2_threshold`, constant raw values, or a
/// nonpositive gain are marked invalid. Errors if none remain.
pub fn fit_pixel_calibration(set: &ExposureSet, r2_threshold: f64) -> Result<PixelCalibration> {
    let a = set.design();
    let pinv = a
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    let dim = set.dim();
    let nf = set.frames.len();
    let mut gain = Array2::zeros(dim);
    let mut dark = Array2::zeros(dim);
    let mut offset = Array2::zeros(dim);
    let mut r2 = Array2::zeros(dim);
    let rows: Vec<[f64; 3]> = set.frames.iter().map(design_row).collect();
    Zip::indexed(&mut gain)
        .and(&mut dark)
        .and(&mut offset)
        .and(&mut r2)
        .par_for_each(|ix, g, b, c, r| {
            let y: Vec<f64> = set.frames.iter().map(|f| f.image[ix]).collect();
            let mut coef = [0.0; 3];
            for (k, slot) in coef.iter_mut().enumerate() {
                *slot = (0..nf).map(|i| pinv[(k, i)] * y[i]).sum();
            }
            let mean = y.iter().sum::<f64>() / nf as f64;
            let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = rows
                .iter()
                .zip(&y)
                .map(|(row, v)| (v - row.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()).powi(2))
                .sum();
            *g = coef[0];
            *b = coef[1];
            *c = coef[2];
            *r = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
        });
    let valid = Zip::from(&gain)
        .and(&r2)
        .map_collect(|&g: &f64, &r: &f64| r >= r2_threshold && g > 0.0 && g.is_finite());
    if !valid.iter().any(|&v| v) {
        return Err(Error::Numerical(format!("no valid pixels at R² threshold {r2_threshold}")));
    }
    let frames = set
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| FrameRecord {
            path: f.source.clone().unwrap_or_else(|| format!("frame{i}")),
            exposure_s: f.exposure_s,
            kind: f.kind,
        })
        .collect();
    Ok(PixelCalibration { gain_profile: gain, dark_rate: dark, offset, r2, valid, threshold: r2_threshold, frames })
}

/// Remove dark current and offset, divide out gain and exposure.
pub fn preprocess(raw: &Array2<f64>, exposure_s: f64, cal: &PixelCalibration) -> Result<Radiograph> {
    if !(exposure_s.is_finite() && exposure_s > 0.0) {
        return Err(Error::invalid(format!("exposure time {exposure_s} s must be > 0")));
    }
    if raw.dim() != cal.gain_profile.dim() {
        return Err(Error::Shape { expected: cal.gain_profile.dim(), found: raw.dim() });
    }
    if !cal.valid.iter().any(|&v| v) {
        return Err(Error::invalid("calibration has no valid pixels"));
    }
    let values = Zip::from(raw)
        .and(&cal.gain_profile)
        .and(&cal.dark_rate)
        .and(&cal.offset)
        .map_collect(|&r, &g, &b, &c| (r - exposure_s * b - c) / (exposure_s * g));
    let valid = Zip::from(&cal.valid).and(&values).map_collect(|&v, x: &f64| v && x.is_finite());
    Radiograph::new(values, valid)
}

const CAL_FILES: [&str; 5] = ["gain_profile.pfm", "dark_rate.pfm", "offset.pfm", "r2.pfm", "valid.pfm"];

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationManifest {
    threshold: f64,
    frames: Vec<FrameRecord>,
    files: Vec<String>,
    n_valid: usize,
}

impl PixelCalibration {
    /// Write PFM images and `calibration.json` into `dir`. Returns the paths
    /// written.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let valid_f = self.valid.mapv(|v| if v { 1.0 } else { 0.0 });
        let images = [&self.gain_profile, &self.dark_rate, &self.offset, &self.r2, &valid_f];
        let mut written = Vec::new();
        for (name, img) in CAL_FILES.iter().zip(images) {
            let p = dir.join(name);
            pfm::write(&p, img)?;
            written.push(p);
        }
        let manifest = CalibrationManifest {
            threshold: self.threshold,
            frames: self.frames.clone(),
            files: CAL_FILES.iter().map(|s| s.to_string()).collect(),
            n_valid: self.valid.iter().filter(|&&v| v).count(),
        };
        let p = dir.join("calibration.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(written)
    }

    /// Read a directory written by [`PixelCalibration::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let p = dir.join("calibration.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let manifest: CalibrationManifest = serde_json::from_str(&text)?;
        let img = |name: &str| pfm::read(dir.join(name));
        let valid = img("valid.pfm")?.mapv(|v| v > 0.5);
        Ok(Self {
            gain_profile: img("gain_profile.pfm")?,
            dark_rate: img("dark_rate.pfm")?,
            offset: img("offset.pfm")?,
            r2: img("r2.pfm")?,
            valid,
            threshold: manifest.threshold,
            frames: manifest.frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn truth(dim: (usize, usize)) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let g = Array2::from_shape_fn(dim, |(v, u)| 800.0 + 10.0 * v as f64 + 3.0 * u as f64);
        let b = Array2::from_shape_fn(dim, |(v, u)| 2.0 + 0.1 * (v + u) as f64);
        let c = Array2::from_shape_fn(dim, |(v, u)| 100.0 + (v * u) as f64);
        (g, b, c)
    }

    fn frame(kind: FrameKind, t: f64, g: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>) -> Frame {
        let tot = if kind == FrameKind::Flat { 1.0 } else { 0.0 };
        let image = Zip::from(g).and(b).and(c).map_collect(|&g, &b, &c| t * g * tot + t * b + c);
        Frame { image, exposure_s: t, kind, source: None }
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let dim = (6, 5);
        let (g, b, c) = truth(dim);
        let mut frames = Vec::new();
        for t in [1.0, 10.0, 100.0] {
            frames.push(frame(FrameKind::Dark, t, &g, &b, &c));
            frames.push(frame(FrameKind::Flat, t, &g, &b, &c));
        }
        let cal = fit_pixel_calibration(&ExposureSet::new(frames).unwrap(), DEFAULT_R2_THRESHOLD).unwrap();
        for (est, tr) in [(&cal.gain_profile, &g), (&cal.dark_rate, &b), (&cal.offset, &c)] {
            for (e, t) in est.iter().zip(tr.iter()) {
                assert!((e - t).abs() <= 1e-9 * t.abs(), "{e} vs {t}");
            }
        }
        assert!(cal.valid.iter().all(|&v| v));
    }

    #[test]
    fn preprocess_inverts_raw_model() {
        let dim = (4, 4);
        let (g, b, c) = truth(dim);
        let frames = vec![
            frame(FrameKind::Dark, 1.0, &g, &b, &c),
            frame(FrameKind::Dark, 5.0, &g, &b, &c),
            frame(FrameKind::Flat, 2.0, &g, &b, &c),
        ];
        let cal = fit_pixel_calibration(&ExposureSet::new(frames).unwrap(), 0.9).unwrap();
        let tot = Array2::from_shape_fn(dim, |(v, u)| 0.1 + 0.05 * (v + u) as f64);
        let t = 3.0;
        let raw = Zip::from(&g).and(&b).and(&c).and(&tot).map_collect(|&g, &b, &c, &x| t * g * x + t * b + c);
        let prep = preprocess(&raw, t, &cal).unwrap();
        for (p, x) in prep.values().iter().zip(tot.iter()) {
            assert!((p - x).abs() < 1e-12);
        }
        let dark = frame(FrameKind::Dark, t, &g, &b, &c).image;
        assert!(preprocess(&dark, t, &cal).unwrap().values().iter().all(|v| v.abs() < 1e-12));
        let flat = frame(FrameKind::Flat, t, &g, &b, &c).image;
        assert!(preprocess(&flat, t, &cal).unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(preprocess(&raw, 0.0, &cal).is_err());
    }

    #[test]
    fn stuck_and_negative_pixels_are_invalid() {
        let dim = (3, 3);
        let (g, b, c) = truth(dim);
        let mut frames: Vec<Frame> = [1.0, 4.0]
            .iter()
            .flat_map(|&t| [frame(FrameKind::Dark, t, &g, &b, &c), frame(FrameKind::Flat, t, &g, &b, &c)])
            .collect();
        for f in &mut frames {
            f.image[[0, 0]] = 500.0;
        }
        // flat below dark: negative gain
        for f in frames.iter_mut().filter(|f| f.kind == FrameKind::Flat) {
            f.image[[1, 1]] = 0.0;
        }
        let cal = fit_pixel_calibration(&ExposureSet::new(frames).unwrap(), DEFAULT_R2_THRESHOLD).unwrap();
        assert!(!cal.valid[[0, 0]]);
        assert_eq!(cal.r2[[0, 0]], 0.0);
        assert!(!cal.valid[[1, 1]]);
        assert!(cal.valid[[2, 2]]);
    }

    #[test]
    fn rank_deficient_designs_are_named() {
        let dim = (2, 2);
        let (g, b, c) = truth(dim);
        let only_flats = vec![frame(FrameKind::Flat, 1.0, &g, &b, &c), frame(FrameKind::Flat, 2.0, &g, &b, &c)];
        let e = ExposureSet::new(only_flats).unwrap_err();
        assert!(e.to_string().contains("no dark frames"));
        let same_times = vec![
            frame(FrameKind::Dark, 1.0, &g, &b, &c),
            frame(FrameKind::Dark, 1.0, &g, &b, &c),
            frame(FrameKind::Flat, 1.0, &g, &b, &c),
        ];
        assert!(matches!(ExposureSet::new(same_times), Err(Error::RankDeficient(_))));
        let no_flat = vec![frame(FrameKind::Dark, 1.0, &g, &b, &c), frame(FrameKind::Dark, 3.0, &g, &b, &c)];
        assert!(ExposureSet::new(no_flat).unwrap_err().to_string().contains("no flat frames"));
    }

    #[test]
    fn threshold_above_one_rejects_everything() {
        let dim = (2, 2);
        let (g, b, c) = truth(dim);
        let frames = vec![
            frame(FrameKind::Dark, 1.0, &g, &b, &c),
            frame(FrameKind::Dark, 2.0, &g, &b, &c),
            frame(FrameKind::Flat, 1.0, &g, &b, &c),
        ];
        let e = fit_pixel_calibration(&ExposureSet::new(frames).unwrap(), 1.1).unwrap_err();
        assert!(e.to_string().contains("no valid pixels"));
    }

    #[test]
    fn noisy_recovery_within_propagated_bounds() {
        let dim = (40, 40);
        let (g, b, c) = truth(dim);
        let times = [1.0, 2.0, 5.0, 10.0, 20.0];
        let flat_level = 800.0 * 10.0;
        let sigma = 0.01 * flat_level;
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut frames = Vec::new();
        for &t in &times {
            for kind in [FrameKind::Dark, FrameKind::Flat] {
                let mut f = frame(kind, t, &g, &b, &c);
                f.image.mapv_inplace(|v| v + normal.sample(&mut rng));
                frames.push(f);
            }
        }
        let set = ExposureSet::new(frames).unwrap();
        let cal = fit_pixel_calibration(&set, 0.0).unwrap();
        // independent covariance: sigma² (AᵀA)⁻¹
        let a = set.design();
        let cov = (a.transpose() * &a).try_inverse().unwrap() * sigma * sigma;
        let sd: Vec<f64> = (0..3).map(|k| cov[(k, k)].sqrt()).collect();
        let n = (dim.0 * dim.1) as f64;
        for (k, (est, tr)) in [(&cal.gain_profile, &g), (&cal.dark_rate, &b), (&cal.offset, &c)].iter().enumerate() {
            let ok = est.iter().zip(tr.iter()).filter(|(e, t)| (*e - *t).abs() <= 3.0 * sd[k]).count();
            assert!(ok as f64 >= 0.99 * n, "coefficient {k}: {ok} of {n}");
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dim = (3, 4);
        let (g, b, c) = truth(dim);
        let frames = vec![
            frame(FrameKind::Dark, 1.0, &g, &b, &c),
            frame(FrameKind::Dark, 2.0, &g, &b, &c),
            frame(FrameKind::Flat, 1.0, &g, &b, &c),
        ];
        let cal = fit_pixel_calibration(&ExposureSet::new(frames).unwrap(), 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = cal.save(dir.path()).unwrap();
        assert_eq!(written.len(), 6);
        let back = PixelCalibration::load(dir.path()).unwrap();
        assert_eq!(back.valid, cal.valid);
        assert_eq!(back.threshold, 0.5);
        for (x, y) in back.gain_profile.iter().zip(cal.gain_profile.iter()) {
            assert_eq!(*x, (*y as f32) as f64);
        }
    }
}
