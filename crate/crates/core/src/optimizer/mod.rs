//! Anatomically constrained fitting of a skeleton sequence.
//!
//! The skeleton is parameterized as a kinematic tree with fixed bone lengths
//! (root translation plus one rotation per articulated joint and frame), so
//! the anatomy is a hard constraint. The whole sequence is fitted jointly by
//! damped Gauss-Newton on the energy in [`energy`](self::energy).

mod band;
pub mod energy;
pub mod kinematics;
mod solver;

use nalgebra::{Isometry3, Vector2, Vector3};

pub use band::{BandCholesky, BandMatrix};
pub use energy::{EnergyBreakdown, EnergyConfig, FitProblem, FrameObservation, FramePose, PoseParams};
pub use kinematics::{KinematicTree, Pose};
pub use solver::{initialize_params, SolveReport};

use crate::skeleton::{
    AnatomyProfile, CameraModel, JointId, SkeletonFrame3D, SkeletonSequence, SubjectInfo, JOINT_COUNT,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("sequence lacks {0} frames")]
    MissingModality(&'static str),
    #[error("parameters cover {params} frames but the sequence has {frames}")]
    FrameCountMismatch { params: usize, frames: usize },
    #[error("frame {frame} has no detected joints")]
    DegenerateInput { frame: usize },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("optimization hit the iteration cap without meeting the tolerance")]
    DidNotConverge,
    #[error("a projected model joint lies behind the camera")]
    ProjectionBehindCamera,
    #[error("observation or parameter arrays do not match the kinematic tree")]
    ObservationShape,
    #[error("energy config: {0}")]
    InvalidConfig(String),
}

/// Detections of a sequence re-indexed for the canonical tree. Both
/// modalities must be present.
pub fn observations(seq: &SkeletonSequence) -> Result<Vec<FrameObservation>, OptimizeError> {
    if !seq.has_2d() {
        return Err(OptimizeError::MissingModality("2D"));
    }
    if !seq.has_3d() {
        return Err(OptimizeError::MissingModality("3D"));
    }
    if seq.frames2d.len() != seq.frames3d.len() {
        return Err(OptimizeError::FrameCountMismatch {
            params: seq.frames2d.len(),
            frames: seq.frames3d.len(),
        });
    }
    Ok(seq
        .frames2d
        .iter()
        .zip(&seq.frames3d)
        .map(|(f2, f3)| FrameObservation {
            points3d: f3.joints.to_vec(),
            points2d: f2
                .joints
                .iter()
                .map(|k| k.map(|k| (Vector2::new(k.position.x, k.position.y), k.confidence)))
                .collect(),
        })
        .collect())
}

pub fn energy(
    params: &PoseParams,
    seq: &SkeletonSequence,
    anatomy: &AnatomyProfile,
    cam: &CameraModel,
    cfg: &EnergyConfig,
) -> Result<EnergyBreakdown, OptimizeError> {
    let obs = observations(seq)?;
    let tree = KinematicTree::skeleton(anatomy);
    FitProblem::new(&tree, &obs, cam, cfg)?.energy(params)
}

/// Gradient of [`energy`] with respect to [`PoseParams::to_vec`].
pub fn energy_gradient(
    params: &PoseParams,
    seq: &SkeletonSequence,
    anatomy: &AnatomyProfile,
    cam: &CameraModel,
    cfg: &EnergyConfig,
) -> Result<Vec<f64>, OptimizeError> {
    let obs = observations(seq)?;
    let tree = KinematicTree::skeleton(anatomy);
    FitProblem::new(&tree, &obs, cam, cfg)?.gradient(params)
}

pub fn initialize(
    seq: &SkeletonSequence,
    anatomy: &AnatomyProfile,
    cam: &CameraModel,
) -> Result<PoseParams, OptimizeError> {
    let obs = observations(seq)?;
    initialize_params(&KinematicTree::skeleton(anatomy), &obs, cam)
}

/// Fits the anatomy to the sequence, starting from the closed-form
/// initialization.
pub fn optimize(
    seq: &SkeletonSequence,
    anatomy: &AnatomyProfile,
    cam: &CameraModel,
    cfg: &EnergyConfig,
) -> Result<OptimizedSequence, OptimizeError> {
    let init = initialize(seq, anatomy, cam)?;
    optimize_from(seq, anatomy, cam, cfg, &init)
}

pub fn optimize_from(
    seq: &SkeletonSequence,
    anatomy: &AnatomyProfile,
    cam: &CameraModel,
    cfg: &EnergyConfig,
    init: &PoseParams,
) -> Result<OptimizedSequence, OptimizeError> {
    if seq.is_empty() {
        return Err(OptimizeError::EmptySequence);
    }
    let obs = observations(seq)?;
    if let Some(frame) = obs.iter().position(FrameObservation::is_empty) {
        return Err(OptimizeError::DegenerateInput { frame });
    }
    let tree = KinematicTree::skeleton(anatomy);
    let report = FitProblem::new(&tree, &obs, cam, cfg)?.solve(init)?;
    let poses = report.params.forward(&tree);
    let frames: Vec<SkeletonFrame3D> = poses
        .iter()
        .zip(&seq.frames3d)
        .map(|(pose, src)| {
            let joints: [Vector3<f64>; JOINT_COUNT] = std::array::from_fn(|k| pose.positions[k]);
            SkeletonFrame3D::full(src.index, src.time, joints)
        })
        .collect();
    Ok(OptimizedSequence {
        root_distance: report.params.frames.iter().map(|f| f.translation.norm()).collect(),
        frames,
        fps: seq.fps,
        subject: seq.subject.clone(),
        walk_id: seq.walk_id.clone(),
        source: seq.source.clone(),
        energy: report.energy,
        initial_energy: report.initial,
        energy_history: report.history,
        iterations: report.iterations,
        converged: report.converged,
        params: Some(report.params),
    })
}

/// An anatomically consistent 3D skeleton per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedSequence {
    pub frames: Vec<SkeletonFrame3D>,
    /// Distance from the camera center to the root joint, per frame (m).
    pub root_distance: Vec<f64>,
    pub fps: f64,
    pub subject: SubjectInfo,
    pub walk_id: Option<String>,
    pub source: Option<String>,
    pub energy: EnergyBreakdown,
    pub initial_energy: EnergyBreakdown,
    pub energy_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub params: Option<PoseParams>,
}

impl OptimizedSequence {
    /// Wraps complete 3D frames that did not come out of the optimizer,
    /// e.g. ground truth or externally fitted skeletons.
    pub fn from_frames(frames: Vec<SkeletonFrame3D>, fps: f64, subject: SubjectInfo) -> Self {
        let root_distance = frames
            .iter()
            .map(|f| f.get(JointId::ROOT).map_or(f64::NAN, |p| p.norm()))
            .collect();
        OptimizedSequence {
            frames,
            root_distance,
            fps,
            subject,
            walk_id: None,
            source: None,
            energy: EnergyBreakdown::default(),
            initial_energy: EnergyBreakdown::default(),
            energy_history: Vec::new(),
            iterations: 0,
            converged: true,
            params: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn require_converged(&self) -> Result<&Self, OptimizeError> {
        if self.converged {
            Ok(self)
        } else {
            Err(OptimizeError::DidNotConverge)
        }
    }

    /// Same sequence with every joint moved by `motion`.
    pub fn transformed(&self, motion: &Isometry3<f64>) -> Self {
        let mut out = self.clone();
        for frame in &mut out.frames {
            for p in frame.joints.iter_mut().flatten() {
                *p = motion.transform_point(&(*p).into()).coords;
            }
        }
        out.root_distance = out
            .frames
            .iter()
            .map(|f| f.get(JointId::ROOT).map_or(f64::NAN, |p| p.norm()))
            .collect();
        out.params = None;
        out
    }

    /// Same sequence played backwards, timestamps mirrored about the end.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        let end = self.frames.last().map_or(0.0, |f| f.time);
        let start = self.frames.first().map_or(0.0, |f| f.time);
        out.frames.reverse();
        out.root_distance.reverse();
        for (i, f) in out.frames.iter_mut().enumerate() {
            f.index = i;
            f.time = end + start - f.time;
        }
        out.params = None;
        out
    }
}
