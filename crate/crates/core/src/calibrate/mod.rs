//! Detector and spectrum calibration.

mod pixel;
mod spectrum;

pub use pixel::{
    fit_pixel_calibration, preprocess, ExposureSet, Frame, FrameKind, FrameRecord, FramesManifest, PixelCalibration,
    DEFAULT_R2_THRESHOLD,
};
pub use spectrum::{calibrate_spectrum, SpectrumCalibration, SpectrumCalibrationOptions, SpectrumObjective};
