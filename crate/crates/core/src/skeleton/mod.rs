//! Skeleton topology, frames, anthropometry and the pinhole camera.
//!
//! Conventions shared by the whole crate: 3D points are camera-anchored and
//! metric, with x right, y up and z the depth away from the camera. Image
//! coordinates are pixels with x right and y down.

mod anatomy;
mod camera;
mod frame;
mod joint;

pub use anatomy::{derive_anatomy, AnatomyProfile, RatioTable, CHAIN_SANITY_BOUND, HEIGHT_RANGE};
pub use camera::{project, CameraModel};
pub use frame::{Keypoint2D, SkeletonFrame2D, SkeletonFrame3D, SkeletonSequence, SubjectInfo};
pub use joint::{Canonical, Foot, JointArray, JointId, UnknownJointName, JOINT_COUNT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SkeletonError {
    #[error("height {0} m outside the accepted range (0.5, 2.5)")]
    OutOfRangeHeight(f64),
    #[error("ratio table has no entry for bone ending at {0}")]
    IncompleteRatioTable(JointId),
    #[error("ratio {ratio} for {joint} must lie in (0, 1)")]
    InvalidRatio { joint: JointId, ratio: f64 },
    #[error("head-to-ankle chain of {chain_m:.4} m deviates more than 10% from height {height_m} m")]
    ImplausibleRatios { chain_m: f64, height_m: f64 },
    #[error("ratio table: {0}")]
    RatioTable(String),
    #[error("camera: {0}")]
    InvalidCamera(String),
    #[error("frame {index}: {joint} has non-positive depth")]
    NonPositiveDepth { index: usize, joint: JointId },
    #[error("frame {index}: {joint} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize, joint: JointId },
    #[error("frame {index}: confidence {confidence} of {joint} outside [0, 1]")]
    InvalidConfidence {
        index: usize,
        joint: JointId,
        confidence: f64,
    },
    #[error("frame {index}: invalid timestamp {time}")]
    InvalidTimestamp { index: usize, time: f64 },
    #[error("frames are not strictly increasing at frame {index}")]
    NonMonotonicFrames { index: usize },
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
    #[error("2D and 3D frame lists cover different frames")]
    ModalityMismatch,
}
