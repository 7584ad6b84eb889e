use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use matid::calibrate::{SpectrumCalibrationOptions, DEFAULT_R2_THRESHOLD};
use matid::cli::{self, Crop, IdentifyConfig, IdentifyOverrides, ProblemFiles, SimSource};
use matid::simulate::AnalogOptions;
use matid::solver::{BranchOrder, SearchOrdering};

#[derive(Parser)]
#[command(name = "matid", version, about = "Identify object materials from a single radiograph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a radiograph (and raw frames) with known ground truth.
    Simulate {
        /// Simulation spec (JSON).
        spec: Option<PathBuf>,
        /// Built-in scene instead of a spec file.
        #[arg(long, conflicts_with = "spec")]
        analog: Option<String>,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 101)]
        bins: usize,
        /// Noise level as a fraction of the open beam.
        #[arg(long, default_value_t = 0.002)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank material assignments for a radiograph.
    Identify {
        #[command(flatten)]
        files: FileArgs,
        #[arg(short = 'N', long = "top")]
        top_n: Option<usize>,
        /// Scatter polynomial order.
        #[arg(short = 'P', long = "order")]
        order: Option<usize>,
        /// Materials for the warm-start pass, comma separated.
        #[arg(long, value_delimiter = ',')]
        warm_start: Option<Vec<String>>,
        #[arg(long)]
        exhaustive: bool,
        /// Fit only inside `row,col,height,width`.
        #[arg(long)]
        crop: Option<Crop>,
        /// Concurrent sibling evaluations.
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long)]
        ordering: Option<Ordering>,
        #[arg(long)]
        branch_order: Option<Branching>,
        #[arg(long)]
        node_limit: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
        /// Write d, s and residual images for this many ranks.
        #[arg(long)]
        diagnostics: Option<usize>,
        /// JSON config; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Truth sidecar or comma-separated material names.
        #[arg(long)]
        truth: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-pixel gain, dark rate and offset from dark and flat frames.
    CalibratePixels {
        /// Frames manifest (JSON).
        frames: PathBuf,
        #[arg(long, default_value_t = DEFAULT_R2_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a raw frame to a normalized radiograph.
    Preprocess {
        raw: PathBuf,
        #[arg(long)]
        exposure: f64,
        /// Pixel calibration directory.
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine the spectrum-response weights against a known assignment.
    CalibrateSpectrum {
        #[command(flatten)]
        files: FileArgs,
        /// Truth sidecar or comma-separated material names.
        #[arg(long)]
        truth: String,
        #[arg(long)]
        crop: Option<Crop>,
        #[arg(short = 'P', long = "order", default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 40)]
        patience: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a saved identification report.
    Report {
        result: PathBuf,
        #[arg(long)]
        truth: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FileArgs {
    #[arg(long)]
    radiograph: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    materials: PathBuf,
    #[arg(long)]
    spectrum: PathBuf,
}

impl From<FileArgs> for ProblemFiles {
    fn from(a: FileArgs) -> Self {
        ProblemFiles { radiograph: a.radiograph, scene: a.scene, materials: a.materials, spectrum: a.spectrum }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Ordering {
    SortedDepthFirst,
    DepthFirst,
    BestFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum Branching {
    Scene,
    SupportArea,
}

fn truth_names(arg: Option<&str>) -> anyhow::Result<Option<Vec<String>>> {
    arg.map(cli::parse_truth).transpose().context("reading truth")
}

fn run(command: Command) -> anyhow::Result<String> {
    Ok(match command {
        Command::Simulate { spec, analog, grid, bins, sigma, seed, out } => {
            let source = match (spec, analog) {
                (Some(path), _) => SimSource::SpecFile(path),
                (None, Some(name)) => SimSource::Analog {
                    name,
                    options: AnalogOptions { grid_px: grid, bins, sigma, seed, ..Default::default() },
                },
                (None, None) => anyhow::bail!(matid::Error::Invalid("give a spec file or --analog".into())),
            };
            cli::cmd_simulate(&source, &out)?
        }
        Command::Identify {
            files,
            top_n,
            order,
            warm_start,
            exhaustive,
            crop,
            parallel,
            ordering,
            branch_order,
            node_limit,
            budget,
            diagnostics,
            config,
            truth,
            out,
        } => {
            let base = match &config {
                Some(path) => IdentifyConfig::load(path)?,
                None => IdentifyConfig::default(),
            };
            let overrides = IdentifyOverrides {
                top_n,
                order,
                warm_start,
                exhaustive,
                crop,
                parallel,
                ordering: ordering.map(|o| match o {
                    Ordering::SortedDepthFirst => SearchOrdering::SortedDepthFirst,
                    Ordering::DepthFirst => SearchOrdering::DepthFirst,
                    Ordering::BestFirst => SearchOrdering::BestFirst,
                }),
                branch_order: branch_order.map(|b| match b {
                    Branching::Scene => BranchOrder::Scene,
                    Branching::SupportArea => BranchOrder::SupportArea,
                }),
                node_limit,
                budget,
                diagnostics,
            };
            let truth = truth_names(truth.as_deref())?;
            let (report, text) =
                cli::cmd_identify(&files.into(), &base.with_overrides(&overrides), truth.as_deref(), &out)?;
            let s = &report.stats;
            format!(
                "{text}{} full evaluations, {} bound evaluations, {} pruned subtrees\n",
                s.full_evaluations, s.bound_evaluations, s.pruned_subtrees
            )
        }
        Command::CalibratePixels { frames, threshold, out } => cli::cmd_calibrate_pixels(&frames, threshold, &out)?,
        Command::Preprocess { raw, exposure, calibration, out } => {
            cli::cmd_preprocess(&raw, exposure, &calibration, &out)?
        }
        Command::CalibrateSpectrum { files, truth, crop, order, step, iterations, patience, out } => {
            let truth = cli::parse_truth(&truth)?;
            let opts = SpectrumCalibrationOptions { order, step, iterations, patience };
            cli::cmd_calibrate_spectrum(&files.into(), &truth, crop, &opts, &out)?
        }
        Command::Report { result, truth, out } => {
            let truth = truth_names(truth.as_deref())?;
            cli::cmd_report(&result, truth.as_deref(), out.as_deref())?
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<matid::Error>()).map_or(2, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
