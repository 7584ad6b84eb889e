//! File-level commands behind the `matid` binary.
//!
//! Each command reads its inputs from disk, writes its outputs plus a
//! `manifest.json` recording hashes of both, and returns the text to print.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{
    calibrate_spectrum, fit_pixel_calibration, preprocess, ExposureSet, FrameRecord, FramesManifest,
    PixelCalibration, SpectrumCalibrationOptions,
};
use crate::error::{Error, Result};
use crate::forward::{rect_mask, Assignment, Radiograph};
use crate::geometry::{load_scene, PathLengthSet};
use crate::manifest::{FileDigest, ManifestBuilder};
use crate::materials::{load_material_table, load_spectrum_response, MaterialTable, SpectrumResponse};
use crate::pfm;
use crate::report::{lineout, write_diagnostics, Report};
use crate::simulate::{
    make_analog, simulate_radiograph_in, synthesize_frames, AnalogOptions, NoiseSpec, ScatterSpec, SimSpec,
};
use crate::solver::{
    solve_exhaustive, solve_top_n, BranchOrder, Problem, SearchConfig, SearchOrdering, DEFAULT_EXHAUSTIVE_BUDGET,
};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Ground truth written next to a simulated radiograph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub truth: Vec<String>,
    pub alpha: f64,
    pub scatter: ScatterSpec,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Exposure time of `frames/object.pfm`, when raw frames were written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_exposure_s: Option<f64>,
}

/// Material names from a truth sidecar (`*.json`) or a comma-separated list.
pub fn parse_truth(arg: &str) -> Result<Vec<String>> {
    if arg.ends_with(".json") {
        let text = fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?;
        let sidecar: TruthSidecar = serde_json::from_str(&text)?;
        return Ok(sidecar.truth);
    }
    let names: Vec<String> = arg.split(',').map(|s| s.trim().to_string()).collect();
    if names.iter().any(String::is_empty) {
        return Err(Error::invalid(format!("empty material name in `{arg}`")));
    }
    Ok(names)
}

/// Where a simulation comes from.
#[derive(Debug, Clone)]
pub enum SimSource {
    SpecFile(PathBuf),
    Analog { name: String, options: AnalogOptions },
}

/// Simulate one or more radiographs into `out`.
///
/// Writes `radiograph.pfm`, `scene.json`, `materials.csv`, `spectrum.csv`,
/// `truth.json`, `spec.json`, raw frames under `frames/` when the spec has a
/// detector block, and `manifest.json`. Analogs that expand to several specs
/// get one subdirectory each.
pub fn cmd_simulate(source: &SimSource, out: &Path) -> Result<String> {
    let (specs, base, input) = match source {
        SimSource::SpecFile(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let spec = SimSpec::from_json_str(&text)?;
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            (vec![("".to_string(), spec)], base, Some(path.clone()))
        }
        SimSource::Analog { name, options } => {
            let specs = make_analog(name, options)?;
            let labelled = if specs.len() == 1 {
                specs.into_iter().map(|s| (String::new(), s)).collect()
            } else {
                specs
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| (format!("{name}_{i}"), s))
                    .collect()
            };
            (labelled, PathBuf::from("."), None)
        }
    };
    let mut summary = String::new();
    for (label, spec) in &specs {
        let dir = if label.is_empty() { out.to_path_buf() } else { out.join(label) };
        simulate_one(spec, &base, input.as_deref(), &dir)?;
        summary.push_str(&format!("{}: truth {}\n", dir.display(), spec.truth.join(", ")));
    }
    Ok(summary)
}

fn simulate_one(spec: &SimSpec, base: &Path, input: Option<&Path>, dir: &Path) -> Result<()> {
    let mut manifest = ManifestBuilder::new("simulate", spec)?;
    manifest.seed(spec.seed);
    if let Some(input) = input {
        manifest.input(input)?;
    }
    let sim = simulate_radiograph_in(spec, base)?;
    create_dir(dir)?;
    let mut outputs = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let path = dir.join(name);
        write_text(&path, text)?;
        outputs.push(path);
        Ok(())
    };
    put("spec.json", &spec.to_json_string())?;
    put("scene.json", &spec.scene.to_json_string())?;
    put("materials.csv", &sim.table.to_csv_string())?;
    put("spectrum.csv", &sim.q.to_csv_string())?;
    let sidecar = TruthSidecar {
        truth: spec.truth.clone(),
        alpha: spec.alpha,
        scatter: spec.scatter.clone(),
        noise: spec.noise.clone(),
        seed: spec.seed,
        object_exposure_s: spec.detector.as_ref().map(|d| d.object_time_s),
    };
    put("truth.json", &(serde_json::to_string_pretty(&sidecar)? + "\n"))?;
    let radiograph = dir.join("radiograph.pfm");
    sim.radiograph.save_pfm(&radiograph)?;
    outputs.push(radiograph);

    if spec.detector.is_some() {
        let frames_dir = dir.join("frames");
        create_dir(&frames_dir)?;
        let mut records = Vec::new();
        for (name, frame) in synthesize_frames(spec, &sim)? {
            let path = frames_dir.join(&name);
            pfm::write(&path, &frame.image)?;
            outputs.push(path);
            if name != "object.pfm" {
                records.push(FrameRecord { path: name, exposure_s: frame.exposure_s, kind: frame.kind });
            }
        }
        let path = frames_dir.join("frames.json");
        write_text(&path, &(serde_json::to_string_pretty(&FramesManifest { frames: records })? + "\n"))?;
        outputs.push(path);
    }
    for path in &outputs {
        manifest.output(path)?;
    }
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(())
}

/// Pixel rectangle `row,col,height,width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl std::str::FromStr for Crop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("crop `{s}` must be row,col,height,width")))?;
        match v[..] {
            [row, col, height, width] if height > 0 && width > 0 => Ok(Crop { row, col, height, width }),
            _ => Err(Error::invalid(format!("crop `{s}` must be row,col,height,width with nonzero size"))),
        }
    }
}

/// Identification settings; the JSON config file deserializes into this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    #[serde(flatten)]
    pub search: SearchConfig,
    /// Enumerate every assignment instead of branch and bound.
    pub exhaustive: bool,
    /// Largest enumeration `--exhaustive` accepts.
    pub budget: u64,
    pub crop: Option<Crop>,
    /// Write `d_k`, `s_k` and `residual_k` images for this many ranks.
    pub diagnostics: usize,
    /// Detector row for the lineout; the middle row when unset.
    pub lineout_row: Option<usize>,
    pub lineout_models: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            exhaustive: false,
            budget: DEFAULT_EXHAUSTIVE_BUDGET,
            crop: None,
            diagnostics: 0,
            lineout_row: None,
            lineout_models: 2,
        }
    }
}

/// Command-line values that replace config-file values when present.
#[derive(Debug, Clone, Default)]
pub struct IdentifyOverrides {
    pub top_n: Option<usize>,
    pub order: Option<usize>,
    pub warm_start: Option<Vec<String>>,
    pub exhaustive: bool,
    pub crop: Option<Crop>,
    pub parallel: Option<usize>,
    pub ordering: Option<SearchOrdering>,
    pub branch_order: Option<BranchOrder>,
    pub node_limit: Option<u64>,
    pub budget: Option<u64>,
    pub diagnostics: Option<usize>,
}

impl IdentifyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn with_overrides(mut self, o: &IdentifyOverrides) -> Self {
        let s = &mut self.search;
        if let Some(v) = o.top_n {
            s.top_n = v;
        }
        if let Some(v) = o.order {
            s.order = v;
        }
        if let Some(v) = &o.warm_start {
            s.warm_start_materials = Some(v.clone());
        }
        if let Some(v) = o.parallel {
            s.parallel_width = v;
        }
        if let Some(v) = o.ordering {
            s.ordering = v;
        }
        if let Some(v) = o.branch_order {
            s.branch_order = v;
        }
        if let Some(v) = o.node_limit {
            s.node_limit = Some(v);
        }
        self.exhaustive |= o.exhaustive;
        if let Some(v) = o.crop {
            self.crop = Some(v);
        }
        if let Some(v) = o.budget {
            self.budget = v;
        }
        if let Some(v) = o.diagnostics {
            self.diagnostics = v;
        }
        self
    }
}

/// Input files shared by `identify` and `calibrate-spectrum`.
#[derive(Debug, Clone)]
pub struct ProblemFiles {
    pub radiograph: PathBuf,
    pub scene: PathBuf,
    pub materials: PathBuf,
    pub spectrum: PathBuf,
}

struct LoadedProblem {
    radiograph: Radiograph,
    paths: PathLengthSet,
    table: MaterialTable,
    q: SpectrumResponse,
}

impl ProblemFiles {
    fn load(&self, crop: Option<Crop>) -> Result<LoadedProblem> {
        let mut radiograph = Radiograph::load_pfm(&self.radiograph)?;
        let paths = load_scene(&self.scene)?.trace()?;
        if paths.dim() != radiograph.dim() {
            return Err(Error::Shape { expected: paths.dim(), found: radiograph.dim() });
        }
        if let Some(c) = crop {
            let (h, w) = radiograph.dim();
            if c.row + c.height > h || c.col + c.width > w {
                return Err(Error::invalid(format!("crop {c:?} exceeds the {h}x{w} radiograph")));
            }
            radiograph = radiograph.cropped(&rect_mask((h, w), c.row, c.col, c.height, c.width))?;
        }
        let table = load_material_table(&self.materials)?;
        let (q, _) = load_spectrum_response(&self.spectrum, table.grid())?;
        Ok(LoadedProblem { radiograph, paths, table, q })
    }

    fn record(&self, manifest: &mut ManifestBuilder) -> Result<()> {
        for p in [&self.radiograph, &self.scene, &self.materials, &self.spectrum] {
            manifest.input(p)?;
        }
        Ok(())
    }
}

/// Rank material assignments and write `report.json`, `ranked.csv`,
/// `lineouts.csv`, optional diagnostic images and the manifest.
pub fn cmd_identify(files: &ProblemFiles, config: &IdentifyConfig, truth: Option<&[String]>, out: &Path) -> Result<(Report, String)> {
    let mut manifest = ManifestBuilder::new("identify", config)?;
    files.record(&mut manifest)?;
    let lp = files.load(config.crop)?;
    let problem = Problem { radiograph: &lp.radiograph, paths: &lp.paths, table: &lp.table, q: &lp.q };
    let result = if config.exhaustive {
        solve_exhaustive(&problem, config.search.top_n, config.search.order, config.budget)?
    } else {
        solve_top_n(&problem, &config.search)?
    };
    let mut report = Report::new(&result, &lp.table, &config.search, config.exhaustive);
    let row = config.lineout_row.unwrap_or(lp.radiograph.dim().0 / 2);
    report.lineout =
        Some(lineout(&lp.radiograph, &result, config.lineout_models, row, &lp.paths, &lp.table, &lp.q)?);

    create_dir(out)?;
    let mut outputs = Vec::new();
    for (name, text) in [
        ("report.json", report.to_json_string()),
        ("ranked.csv", report.ranked_csv()),
        ("lineouts.csv", report.lineout_csv().unwrap_or_default()),
    ] {
        let path = out.join(name);
        write_text(&path, &text)?;
        outputs.push(path);
    }
    if let Some(truth) = truth {
        let path = out.join("correctness.csv");
        write_text(&path, &report.correctness_csv(truth)?)?;
        outputs.push(path);
    }
    if config.diagnostics > 0 {
        let diag = out.join("diagnostics");
        create_dir(&diag)?;
        outputs.extend(write_diagnostics(
            &diag,
            &lp.radiograph,
            &result,
            config.diagnostics,
            &lp.paths,
            &lp.table,
            &lp.q,
        )?);
    }
    for p in &outputs {
        manifest.output(p)?;
    }
    manifest.summary(serde_json::json!({
        "top": report.ranked.first().map(|e| e.materials.clone()),
        "truth_rank": truth.map(|t| report.rank_of(t)),
        "full_evaluations": report.stats.full_evaluations,
        "bound_evaluations": report.stats.bound_evaluations,
    }))?;
    manifest.finish(&out.join("manifest.json"))?;
    let text = report.table(truth);
    Ok((report, text))
}

/// Re-render a saved report: prints the table and writes `table.txt`,
/// `ranked.csv`, `lineouts.csv` and, given truth, `correctness.csv`.
pub fn cmd_report(result: &Path, truth: Option<&[String]>, out: Option<&Path>) -> Result<String> {
    let report = Report::load(result)?;
    let table = report.table(truth);
    let correctness = truth.map(|t| report.correctness_csv(t)).transpose()?;
    if let Some(out) = out {
        let mut manifest = ManifestBuilder::new("report", serde_json::json!({ "truth": truth }))?;
        manifest.input(result)?;
        create_dir(out)?;
        let mut files = vec![("table.txt", table.clone()), ("ranked.csv", report.ranked_csv())];
        if let Some(l) = report.lineout_csv() {
            files.push(("lineouts.csv", l));
        }
        if let Some(c) = &correctness {
            files.push(("correctness.csv", c.clone()));
        }
        for (name, text) in files {
            let path = out.join(name);
            write_text(&path, &text)?;
            manifest.output(&path)?;
        }
        manifest.finish(&out.join("manifest.json"))?;
    }
    let mut text = table;
    if let (Some(truth), Some(_)) = (truth, &correctness) {
        text.push('\n');
        text.push_str(&check_grid(&report, truth)?);
    }
    Ok(text)
}

/// Checkmark grid: one row per rank, one column per object.
fn check_grid(report: &Report, truth: &[String]) -> Result<String> {
    let grid = report.correctness_grid(truth)?;
    let mut out = String::from("rank ");
    for k in 1..=truth.len() {
        out.push_str(&format!(" {k:>2}"));
    }
    out.push('\n');
    for (e, row) in report.ranked.iter().zip(grid) {
        out.push_str(&format!("{:>4} ", e.rank));
        for ok in row {
            out.push_str(if ok { "  ✓" } else { "  ." });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Fit per-pixel gain, dark rate and offset from a frames manifest.
pub fn cmd_calibrate_pixels(frames: &Path, threshold: f64, out: &Path) -> Result<String> {
    let mut manifest = ManifestBuilder::new("calibrate-pixels", serde_json::json!({ "threshold": threshold }))?;
    let set = ExposureSet::load_manifest(frames)?;
    manifest.input(frames)?;
    let base = frames.parent().unwrap_or(Path::new("."));
    for f in set.frames() {
        if let Some(src) = &f.source {
            manifest.input(base.join(src))?;
        }
    }
    let cal = fit_pixel_calibration(&set, threshold)?;
    create_dir(out)?;
    for p in cal.save(out)? {
        manifest.output(p)?;
    }
    let n_valid = cal.valid.iter().filter(|&&v| v).count();
    manifest.summary(serde_json::json!({ "valid_pixels": n_valid, "pixels": cal.valid.len() }))?;
    manifest.finish(&out.join("manifest.json"))?;
    Ok(format!("{n_valid} of {} pixels valid at R² ≥ {threshold}\n", cal.valid.len()))
}

/// Apply a pixel calibration to one raw frame.
pub fn cmd_preprocess(raw: &Path, exposure_s: f64, calibration: &Path, out: &Path) -> Result<String> {
    let mut manifest = ManifestBuilder::new("preprocess", serde_json::json!({ "exposure_s": exposure_s }))?;
    manifest.input(raw)?;
    let cal = PixelCalibration::load(calibration)?;
    for p in cal_files(calibration) {
        manifest.input(p)?;
    }
    let t = preprocess(&pfm::read(raw)?, exposure_s, &cal)?;
    t.save_pfm(out)?;
    manifest.output(out)?;
    manifest.finish(&out.with_extension("manifest.json"))?;
    Ok(format!("{} valid pixels written to {}\n", t.n_valid(), out.display()))
}

fn cal_files(dir: &Path) -> Vec<PathBuf> {
    ["calibration.json", "gain_profile.pfm", "dark_rate.pfm", "offset.pfm", "r2.pfm", "valid.pfm"]
        .iter()
        .map(|n| dir.join(n))
        .filter(|p| p.exists())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct SpectrumRun<'a> {
    truth: &'a [String],
    crop: Option<Crop>,
    options: &'a SpectrumCalibrationOptions,
}

/// Refine the spectrum-response weights against a known assignment; writes
/// `spectrum.csv`, `calibration.json` and the manifest with `J` before and
/// after.
pub fn cmd_calibrate_spectrum(
    files: &ProblemFiles,
    truth: &[String],
    crop: Option<Crop>,
    opts: &SpectrumCalibrationOptions,
    out: &Path,
) -> Result<String> {
    let mut manifest = ManifestBuilder::new("calibrate-spectrum", SpectrumRun { truth, crop, options: opts })?;
    files.record(&mut manifest)?;
    let lp = files.load(crop)?;
    let x = Assignment::from_names(truth, &lp.table)?;
    let (q, cal) = calibrate_spectrum(&lp.radiograph, &lp.paths, &lp.table, &x, &lp.q, opts)?;
    create_dir(out)?;
    let spectrum = out.join("spectrum.csv");
    q.save(&spectrum)?;
    let report = out.join("calibration.json");
    write_text(&report, &(serde_json::to_string_pretty(&cal)? + "\n"))?;
    manifest.output(&spectrum)?.output(&report)?;
    manifest.summary(serde_json::json!({
        "initial_loss": cal.initial_loss,
        "final_loss": cal.final_loss,
        "iterations": cal.iterations,
        "warning": cal.warning,
    }))?;
    manifest.finish(&out.join("manifest.json"))?;
    let mut text = format!("J: {:e} -> {:e} after {} iterations\n", cal.initial_loss, cal.final_loss, cal.iterations);
    if let Some(w) = &cal.warning {
        text.push_str(&format!("warning: {w}\n"));
    }
    Ok(text)
}

/// Digest of every regular file under `dir` except manifests, sorted by path.
pub fn tree_digest(dir: &Path) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with("manifest.json") {
                let mut digest = FileDigest::of(&path)?;
                digest.path = path.strip_prefix(dir).unwrap_or(&path).to_path_buf();
                out.push(digest);
            }
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
