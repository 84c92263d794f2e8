//! One walk from detections to gait parameters: fit, detect, measure.

use serde::Serialize;

use crate::config::RunConfig;
use crate::events::{detect, Detection, EventError};
use crate::optimizer::{optimize, OptimizeError, OptimizedSequence};
use crate::params::{compute_report, GaitReport, ParamsError};
use crate::pose_io::PoseIoError;
use crate::skeleton::{derive_anatomy, SkeletonError, SkeletonSequence};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Input(#[from] PoseIoError),
    #[error(transparent)]
    Anatomy(#[from] SkeletonError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Events(#[from] EventError),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

impl PipelineError {
    /// Short stable name of the failure, used in report rows.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Input(e) => match e {
                PoseIoError::MalformedDocument(_) => "MalformedDocument",
                PoseIoError::UnknownJoint { .. } => "UnknownJoint",
                PoseIoError::NonMonotonicFrames { .. } => "NonMonotonicFrames",
                PoseIoError::MissingHeaderField(_) => "MissingHeaderField",
                PoseIoError::InvalidSequence(_) => "InvalidSequence",
                PoseIoError::Csv(_) => "Csv",
            },
            PipelineError::Anatomy(e) => match e {
                SkeletonError::OutOfRangeHeight(_) => "OutOfRangeHeight",
                SkeletonError::ImplausibleRatios { .. } => "ImplausibleRatios",
                _ => "InvalidAnatomy",
            },
            PipelineError::Optimize(e) => match e {
                OptimizeError::MissingModality(_) => "MissingModality",
                OptimizeError::DegenerateInput { .. } => "DegenerateInput",
                OptimizeError::EmptySequence => "EmptySequence",
                OptimizeError::DidNotConverge => "DidNotConverge",
                OptimizeError::ProjectionBehindCamera => "ProjectionBehindCamera",
                _ => "OptimizerError",
            },
            PipelineError::Events(e) | PipelineError::Params(ParamsError::Event(e)) => match e {
                EventError::EmptySequence => "EmptySequence",
                EventError::MissingJoint { .. } => "MissingJoint",
                EventError::SignalTooShort(_) => "SignalTooShort",
                EventError::NoStepsDetected { .. } => "NoStepsDetected",
                EventError::AmbiguousWalkingDirection { .. } => "AmbiguousWalkingDirection",
                EventError::InvalidConfig(_) => "InvalidConfig",
            },
            PipelineError::Params(ParamsError::TooFewSteps(_)) => "TooFewSteps",
            PipelineError::Params(ParamsError::NonIncreasingEvents) => "NonIncreasingEvents",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WalkAnalysis {
    pub optimized: OptimizedSequence,
    pub detection: Detection,
    pub report: GaitReport,
}

/// Fit summary kept in per-walk JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_energy: f64,
    pub final_energy: f64,
}

impl WalkAnalysis {
    pub fn fit_summary(&self) -> FitSummary {
        FitSummary {
            iterations: self.optimized.iterations,
            converged: self.optimized.converged,
            initial_energy: self.optimized.initial_energy.total,
            final_energy: self.optimized.energy.total,
        }
    }
}

/// Fits the anatomy, detects steps and computes the walk's parameters. The
/// camera stored in the walk document takes precedence over the configured one.
pub fn analyze_sequence(seq: &SkeletonSequence, cfg: &RunConfig) -> Result<WalkAnalysis, PipelineError> {
    let ratios = cfg.anatomy.ratio_table()?;
    let anatomy = derive_anatomy(seq.subject.height_m, &ratios)?;
    let camera = match seq.camera {
        Some(c) => c,
        None => cfg.camera.model()?,
    };
    let optimized = optimize(seq, &anatomy, &camera, &cfg.energy)?;
    analyze_fitted(optimized, cfg)
}

/// Step detection and parameters for an already fitted sequence.
pub fn analyze_fitted(optimized: OptimizedSequence, cfg: &RunConfig) -> Result<WalkAnalysis, PipelineError> {
    let detection = detect(&optimized, &cfg.detector)?;
    let report = compute_report(&optimized, &detection.events)?;
    Ok(WalkAnalysis {
        optimized,
        detection,
        report,
    })
}
