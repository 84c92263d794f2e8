use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::frame::{Keypoint2D, SkeletonFrame2D, SkeletonFrame3D};
use super::SkeletonError;

/// Distortion-free pinhole intrinsics.
///
/// Points are camera-anchored with y up, pixels have y down, so
/// `u = cx + fx·x/z` and `v = cy − fy·y/z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, SkeletonError> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered principal point and focal length equal to the image diagonal,
    /// used when no intrinsics are known.
    pub fn from_image_size(width: u32, height: u32) -> Result<Self, SkeletonError> {
        let diag = (f64::from(width).powi(2) + f64::from(height).powi(2)).sqrt();
        Self::new(
            diag,
            diag,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(SkeletonError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        let inside = |c: f64, extent: u32| c.is_finite() && c >= 0.0 && c <= f64::from(extent);
        if self.width == 0 || self.height == 0 || !inside(self.cx, self.width) || !inside(self.cy, self.height) {
            return Err(SkeletonError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Mean focal length, the scale used to normalize pixel residuals.
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if !(p.z > 0.0) {
            return None;
        }
        Some(Vector2::new(
            self.cx + self.fx * p.x / p.z,
            self.cy - self.fy * p.y / p.z,
        ))
    }

    /// Jacobian of [`project_point`](Self::project_point) with respect to the 3D point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            -self.fy * iz,
            self.fy * p.y * iz2,
        )
    }

    /// Back-projects a pixel to the point at the given depth.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) * depth / self.fx,
            -(pixel.y - self.cy) * depth / self.fy,
            depth,
        )
    }
}

pub fn project(frame: &SkeletonFrame3D, cam: &CameraModel) -> Result<SkeletonFrame2D, SkeletonError> {
    let mut out = SkeletonFrame2D::empty(frame.index, frame.time);
    for (joint, p) in frame.present() {
        let px = cam
            .project_point(p)
            .ok_or(SkeletonError::NonPositiveDepth {
                index: frame.index,
                joint,
            })?;
        out.set(joint, Keypoint2D::new(px.x, px.y, 1.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::JointId;
    use approx::assert_abs_diff_eq;

    fn phone() -> CameraModel {
        CameraModel::new(1000.0, 1000.0, 540.0, 960.0, 1080, 1920).unwrap()
    }

    fn single(joint: JointId, p: Vector3<f64>) -> SkeletonFrame3D {
        let mut f = SkeletonFrame3D::empty(0, 0.0);
        f.set(joint, p);
        f
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let out = project(&single(JointId::Neck, Vector3::new(0.0, 0.0, 2.0)), &phone()).unwrap();
        let k = out.get(JointId::Neck).unwrap();
        assert_eq!(k.position, Vector2::new(540.0, 960.0));
        assert_eq!(k.confidence, 1.0);
    }

    #[test]
    fn lateral_offset() {
        let out = project(&single(JointId::Neck, Vector3::new(1.0, 0.0, 2.0)), &phone()).unwrap();
        assert_eq!(out.get(JointId::Neck).unwrap().position, Vector2::new(1040.0, 960.0));
    }

    #[test]
    fn sample_neck_joint() {
        // (2.5, 1.9, 6.0) m through fx = fy = 1000, c = (540, 960):
        // u = 540 + 1000 * 2.5 / 6 = 956.666..., v = 960 - 1000 * 1.9 / 6 = 643.333...
        let out = project(&single(JointId::Neck, Vector3::new(2.5, 1.9, 6.0)), &phone()).unwrap();
        let p = out.get(JointId::Neck).unwrap().position;
        assert_abs_diff_eq!(p.x, 956.666_666_666_666_7, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 643.333_333_333_333_3, epsilon = 1e-9);
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let f = single(JointId::Head, Vector3::new(0.0, 0.0, 0.0));
        assert!(matches!(
            project(&f, &phone()),
            Err(SkeletonError::NonPositiveDepth { joint: JointId::Head, .. })
        ));
    }

    #[test]
    fn scale_about_camera_center_keeps_pixels() {
        let p = Vector3::new(0.3, -0.7, 4.1);
        let a = phone().project_point(&p).unwrap();
        for s in [0.1, 0.5, 3.0, 17.0] {
            let b = phone().project_point(&(p * s)).unwrap();
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn default_intrinsics_from_diagonal() {
        let cam = CameraModel::from_image_size(1080, 1920).unwrap();
        assert_abs_diff_eq!(cam.fx, (1080.0f64.powi(2) + 1920.0f64.powi(2)).sqrt(), epsilon = 1e-12);
        assert_eq!((cam.cx, cam.cy), (540.0, 960.0));
    }

    #[test]
    fn invalid_intrinsics() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraModel::new(1.0, 1.0, 11.0, 1.0, 10, 10).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cam = phone();
        let p = Vector3::new(0.4, 0.9, 3.3);
        let j = cam.project_jacobian(&p);
        let h = 1e-6;
        for k in 0..3 {
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let d = (cam.project_point(&a).unwrap() - cam.project_point(&b).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(d.x, j[(0, k)], epsilon = 1e-4);
            assert_abs_diff_eq!(d.y, j[(1, k)], epsilon = 1e-4);
        }
    }

    #[test]
    fn unproject_inverts_projection() {
        let cam = phone();
        let p = Vector3::new(-0.4, 1.1, 5.0);
        let px = cam.project_point(&p).unwrap();
        assert_abs_diff_eq!((cam.unproject(&px, 5.0) - p).norm(), 0.0, epsilon = 1e-12);
    }
}
