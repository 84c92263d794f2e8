use nalgebra::{Vector2, Vector3};

use super::joint::{JointArray, JointId, JOINT_COUNT};
use super::SkeletonError;

/// A detected image-space joint (pixels, x right, y down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint2D {
    pub position: Vector2<f64>,
    pub confidence: f64,
}

impl Keypoint2D {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint2D {
            position: Vector2::new(x, y),
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame2D {
    pub index: usize,
    pub time: f64,
    pub joints: JointArray<Option<Keypoint2D>>,
}

impl SkeletonFrame2D {
    pub fn empty(index: usize, time: f64) -> Self {
        SkeletonFrame2D {
            index,
            time,
            joints: [None; JOINT_COUNT],
        }
    }

    pub fn get(&self, joint: JointId) -> Option<&Keypoint2D> {
        self.joints[joint.index()].as_ref()
    }

    pub fn set(&mut self, joint: JointId, point: Keypoint2D) {
        self.joints[joint.index()] = Some(point);
    }

    pub fn present(&self) -> impl Iterator<Item = (JointId, &Keypoint2D)> {
        JointId::ALL
            .into_iter()
            .filter_map(|j| self.joints[j.index()].as_ref().map(|p| (j, p)))
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(SkeletonError::InvalidTimestamp {
                index: self.index,
                time: self.time,
            });
        }
        for (joint, p) in self.present() {
            if !(p.position.x.is_finite() && p.position.y.is_finite()) {
                return Err(SkeletonError::NonFiniteCoordinate {
                    index: self.index,
                    joint,
                });
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(SkeletonError::InvalidConfidence {
                    index: self.index,
                    joint,
                    confidence: p.confidence,
                });
            }
        }
        Ok(())
    }
}

/// Camera-anchored metric joints (x right, y up, z depth away from camera).
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame3D {
    pub index: usize,
    pub time: f64,
    pub joints: JointArray<Option<Vector3<f64>>>,
}

impl SkeletonFrame3D {
    pub fn empty(index: usize, time: f64) -> Self {
        SkeletonFrame3D {
            index,
            time,
            joints: [None; JOINT_COUNT],
        }
    }

    pub fn full(index: usize, time: f64, joints: JointArray<Vector3<f64>>) -> Self {
        SkeletonFrame3D {
            index,
            time,
            joints: joints.map(Some),
        }
    }

    pub fn get(&self, joint: JointId) -> Option<&Vector3<f64>> {
        self.joints[joint.index()].as_ref()
    }

    pub fn set(&mut self, joint: JointId, p: Vector3<f64>) {
        self.joints[joint.index()] = Some(p);
    }

    pub fn present(&self) -> impl Iterator<Item = (JointId, &Vector3<f64>)> {
        JointId::ALL
            .into_iter()
            .filter_map(|j| self.joints[j.index()].as_ref().map(|p| (j, p)))
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(SkeletonError::InvalidTimestamp {
                index: self.index,
                time: self.time,
            });
        }
        for (joint, p) in self.present() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(SkeletonError::NonFiniteCoordinate {
                    index: self.index,
                    joint,
                });
            }
            if p.z <= 0.0 {
                return Err(SkeletonError::NonPositiveDepth {
                    index: self.index,
                    joint,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectInfo {
    pub id: Option<String>,
    pub height_m: f64,
}

/// A recorded walk: per-frame 2D and/or 3D skeletons plus metadata.
///
/// Either modality may be absent (empty list). When both are present they
/// cover exactly the same frame indices, position for position.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub fps: f64,
    pub subject: SubjectInfo,
    pub walk_id: Option<String>,
    pub source: Option<String>,
    pub camera: Option<super::CameraModel>,
    pub frames2d: Vec<SkeletonFrame2D>,
    pub frames3d: Vec<SkeletonFrame3D>,
}

impl SkeletonSequence {
    pub fn new(
        fps: f64,
        subject: SubjectInfo,
        frames2d: Vec<SkeletonFrame2D>,
        frames3d: Vec<SkeletonFrame3D>,
    ) -> Result<Self, SkeletonError> {
        let seq = SkeletonSequence {
            fps,
            subject,
            walk_id: None,
            source: None,
            camera: None,
            frames2d,
            frames3d,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames2d.len().max(self.frames3d.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_2d(&self) -> bool {
        !self.frames2d.is_empty()
    }

    pub fn has_3d(&self) -> bool {
        !self.frames3d.is_empty()
    }

    /// Frame timestamps, taken from whichever modality is present.
    pub fn times(&self) -> Vec<f64> {
        if self.has_3d() {
            self.frames3d.iter().map(|f| f.time).collect()
        } else {
            self.frames2d.iter().map(|f| f.time).collect()
        }
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SkeletonError::InvalidFps(self.fps));
        }
        if !(self.subject.height_m.is_finite() && self.subject.height_m > 0.0) {
            return Err(SkeletonError::OutOfRangeHeight(self.subject.height_m));
        }
        if self.has_2d() && self.has_3d() {
            if self.frames2d.len() != self.frames3d.len() {
                return Err(SkeletonError::ModalityMismatch);
            }
            for (a, b) in self.frames2d.iter().zip(&self.frames3d) {
                if a.index != b.index || a.time != b.time {
                    return Err(SkeletonError::ModalityMismatch);
                }
            }
        }
        for f in &self.frames2d {
            f.validate()?;
        }
        for f in &self.frames3d {
            f.validate()?;
        }
        let keys: Vec<(usize, f64)> = if self.has_3d() {
            self.frames3d.iter().map(|f| (f.index, f.time)).collect()
        } else {
            self.frames2d.iter().map(|f| (f.index, f.time)).collect()
        };
        for w in keys.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(SkeletonError::NonMonotonicFrames { index: w[1].0 });
            }
        }
        Ok(())
    }
}
