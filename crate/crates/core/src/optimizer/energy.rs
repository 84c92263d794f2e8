//! The four-term fitting energy and its linearization.
//!
//! For a sequence of frames with root translations `t_f` and joint
//! rotations, forward kinematics gives model joints `p_{f,k}`. The energy is
//!
//! ```text
//! E = w_ik     Σ_f Σ_k |p_{f,k} − X_{f,k}|²                (detected 3D joints X)
//!   + w_proj   Σ_f Σ_k c_{f,k} |π(p_{f,k}) − x_{f,k}|² / s² (detected 2D joints x, confidence c)
//!   + w_smooth Σ_f Σ_k |p_{f−1,k} − 2 p_{f,k} + p_{f+1,k}|²
//!   + w_depth  Σ_f (t_{f+1,z} − t_{f,z})²
//! ```
//!
//! where `π` is the pinhole projection and `s` is the focal length when
//! pixel residuals are normalized (1 otherwise). Missing detections
//! contribute nothing.

use nalgebra::{Matrix2x3, Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::band::{NormalEquations, ResidualBlock};
use super::kinematics::{exp_map, log_map, right_jacobian, skew, KinematicTree, Pose};
use super::OptimizeError;
use crate::skeleton::CameraModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub w_ik: f64,
    pub w_proj: f64,
    pub w_smooth: f64,
    pub w_depth: f64,
    /// Divide pixel residuals by the mean focal length so that the
    /// projection term is measured in normalized image units.
    pub normalize_projection: bool,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the energy by no more than this.
    pub tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Lower bound on the damping. Keeps the directions the energy cannot
    /// see (twist of single-child joints) well conditioned.
    pub min_damping: f64,
    /// Damping beyond which no descent direction is considered to exist.
    pub max_damping: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            w_ik: 1.0,
            w_proj: 1.0,
            w_smooth: 0.1,
            w_depth: 0.1,
            normalize_projection: true,
            max_iterations: 100,
            tolerance: 1e-10,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            min_damping: 1e-6,
            max_damping: 1e12,
        }
    }
}

impl EnergyConfig {
    /// Checks the configuration, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |field: &str, why: &str| Err(OptimizeError::InvalidConfig(format!("{field} {why}")));
        for (name, w) in [
            ("w_ik", self.w_ik),
            ("w_proj", self.w_proj),
            ("w_smooth", self.w_smooth),
            ("w_depth", self.w_depth),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(name, "must be a finite non-negative number");
            }
        }
        if self.w_ik + self.w_proj + self.w_smooth + self.w_depth <= 0.0 {
            return bad("w_ik", "and the other weights cannot all be zero");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be at least 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance", "must be positive");
        }
        if !(self.initial_damping > 0.0) {
            return bad("initial_damping", "must be positive");
        }
        if !(self.damping_increase > 1.0) {
            return bad("damping_increase", "must exceed 1");
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return bad("damping_decrease", "must lie in (0, 1)");
        }
        if !(self.min_damping > 0.0 && self.min_damping <= self.initial_damping) {
            return bad("min_damping", "must lie in (0, initial_damping]");
        }
        if !(self.max_damping > self.initial_damping) {
            return bad("max_damping", "must exceed initial_damping");
        }
        Ok(())
    }

    /// Same configuration with all four weights multiplied by `s`.
    pub fn scaled_weights(&self, s: f64) -> Self {
        EnergyConfig {
            w_ik: self.w_ik * s,
            w_proj: self.w_proj * s,
            w_smooth: self.w_smooth * s,
            w_depth: self.w_depth * s,
            ..*self
        }
    }
}

/// Root translation and axis-angle joint rotations for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose {
    pub translation: Vector3<f64>,
    /// One exponential-map rotation per articulated joint, in slot order.
    pub rotations: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub frames: Vec<FramePose>,
}

impl PoseParams {
    /// Identity rotations with all roots at `translation`.
    pub fn rest(tree: &KinematicTree, frames: usize, translation: Vector3<f64>) -> Self {
        PoseParams {
            frames: vec![
                FramePose {
                    translation,
                    rotations: vec![Vector3::zeros(); tree.slot_count()],
                };
                frames
            ],
        }
    }

    /// Flattened parameters, frame by frame: `[t, θ_0, θ_1, ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for f in &self.frames {
            out.extend(f.translation.iter());
            for r in &f.rotations {
                out.extend(r.iter());
            }
        }
        out
    }

    pub fn from_vec(tree: &KinematicTree, values: &[f64]) -> Self {
        let per = tree.params_per_frame();
        assert_eq!(values.len() % per, 0, "parameter vector length");
        let frames = values
            .chunks(per)
            .map(|c| FramePose {
                translation: Vector3::new(c[0], c[1], c[2]),
                rotations: c[3..].chunks(3).map(|r| Vector3::new(r[0], r[1], r[2])).collect(),
            })
            .collect();
        PoseParams { frames }
    }

    pub fn forward(&self, tree: &KinematicTree) -> Vec<Pose> {
        self.frames
            .iter()
            .map(|f| {
                let local: Vec<_> = f.rotations.iter().map(exp_map).collect();
                tree.forward(&f.translation, &local)
            })
            .collect()
    }
}

/// Detections for one frame, indexed by tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub points3d: Vec<Option<Vector3<f64>>>,
    /// Pixel position and confidence.
    pub points2d: Vec<Option<(Vector2<f64>, f64)>>,
}

impl FrameObservation {
    pub fn empty(nodes: usize) -> Self {
        FrameObservation {
            points3d: vec![None; nodes],
            points2d: vec![None; nodes],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points3d.iter().all(Option::is_none) && self.points2d.iter().all(Option::is_none)
    }
}

/// Unweighted term values and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub ik: f64,
    pub proj: f64,
    pub smooth: f64,
    pub depth: f64,
    pub total: f64,
}

/// Solver-side frame state: rotations kept as matrices so steps can be
/// applied as local perturbations `R ← R · exp(δ)`.
#[derive(Debug, Clone)]
pub(crate) struct FrameState {
    pub translation: Vector3<f64>,
    pub rotations: Vec<Rotation3<f64>>,
}

impl FrameState {
    pub fn from_pose(f: &FramePose) -> Self {
        FrameState {
            translation: f.translation,
            rotations: f.rotations.iter().map(exp_map).collect(),
        }
    }

    pub fn to_pose(&self) -> FramePose {
        FramePose {
            translation: self.translation,
            rotations: self.rotations.iter().map(log_map).collect(),
        }
    }
}

/// A fitting problem: tree, detections, camera and weights.
#[derive(Debug, Clone, Copy)]
pub struct FitProblem<'a> {
    pub tree: &'a KinematicTree,
    pub observations: &'a [FrameObservation],
    pub camera: &'a CameraModel,
    pub config: &'a EnergyConfig,
}

type Blocks = Vec<(usize, Matrix3<f64>)>;

impl<'a> FitProblem<'a> {
    pub fn new(
        tree: &'a KinematicTree,
        observations: &'a [FrameObservation],
        camera: &'a CameraModel,
        config: &'a EnergyConfig,
    ) -> Result<Self, OptimizeError> {
        config.validate()?;
        for obs in observations {
            if obs.points3d.len() != tree.len() || obs.points2d.len() != tree.len() {
                return Err(OptimizeError::ObservationShape);
            }
        }
        Ok(FitProblem {
            tree,
            observations,
            camera,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.observations.len()
    }

    pub fn dim(&self) -> usize {
        self.frames() * self.tree.params_per_frame()
    }

    fn pixel_scale(&self) -> f64 {
        if self.config.normalize_projection {
            1.0 / self.camera.focal()
        } else {
            1.0
        }
    }

    fn check_params(&self, params: &PoseParams) -> Result<(), OptimizeError> {
        if params.frames.len() != self.frames() {
            return Err(OptimizeError::FrameCountMismatch {
                params: params.frames.len(),
                frames: self.frames(),
            });
        }
        if params.frames.iter().any(|f| f.rotations.len() != self.tree.slot_count()) {
            return Err(OptimizeError::ObservationShape);
        }
        Ok(())
    }

    pub fn energy(&self, params: &PoseParams) -> Result<EnergyBreakdown, OptimizeError> {
        self.check_params(params)?;
        self.evaluate_poses(&params.forward(self.tree), |f| params.frames[f].translation)
            .ok_or(OptimizeError::ProjectionBehindCamera)
    }

    /// Gradient with respect to the flattened parameters of [`PoseParams::to_vec`].
    pub fn gradient(&self, params: &PoseParams) -> Result<Vec<f64>, OptimizeError> {
        self.check_params(params)?;
        let states: Vec<_> = params.frames.iter().map(FrameState::from_pose).collect();
        let (ne, _) = self
            .linearize(&states, false)
            .ok_or(OptimizeError::ProjectionBehindCamera)?;
        let per = self.tree.params_per_frame();
        let mut grad: Vec<f64> = ne.gradient.iter().map(|g| 2.0 * g).collect();
        for (f, frame) in params.frames.iter().enumerate() {
            for (s, theta) in frame.rotations.iter().enumerate() {
                let at = f * per + 3 + 3 * s;
                let local = Vector3::new(grad[at], grad[at + 1], grad[at + 2]);
                let mapped = right_jacobian(theta).transpose() * local;
                grad[at..at + 3].copy_from_slice(mapped.as_slice());
            }
        }
        Ok(grad)
    }

    pub(crate) fn evaluate(&self, states: &[FrameState]) -> Option<EnergyBreakdown> {
        let poses: Vec<_> = states
            .iter()
            .map(|s| self.tree.forward(&s.translation, &s.rotations))
            .collect();
        self.evaluate_poses(&poses, |f| states[f].translation)
    }

    fn evaluate_poses(
        &self,
        poses: &[Pose],
        translation: impl Fn(usize) -> Vector3<f64>,
    ) -> Option<EnergyBreakdown> {
        let scale = self.pixel_scale();
        let mut e = EnergyBreakdown::default();
        for (pose, obs) in poses.iter().zip(self.observations) {
            for (k, p) in pose.positions.iter().enumerate() {
                if let Some(x) = &obs.points3d[k] {
                    e.ik += (p - x).norm_squared();
                }
                if let Some((px, c)) = &obs.points2d[k] {
                    let proj = self.camera.project_point(p)?;
                    e.proj += c * ((proj - px) * scale).norm_squared();
                }
            }
        }
        for w in poses.windows(3) {
            for k in 0..self.tree.len() {
                let acc = w[0].positions[k] - 2.0 * w[1].positions[k] + w[2].positions[k];
                e.smooth += acc.norm_squared();
            }
        }
        for f in 1..poses.len() {
            e.depth += (translation(f).z - translation(f - 1).z).powi(2);
        }
        let c = self.config;
        e.total = c.w_ik * e.ik + c.w_proj * e.proj + c.w_smooth * e.smooth + c.w_depth * e.depth;
        Some(e)
    }

    /// Jacobian blocks of every joint position with respect to the local
    /// perturbation of its frame's parameters.
    fn joint_jacobians(&self, frame: usize, pose: &Pose) -> Vec<Blocks> {
        let base = frame * self.tree.params_per_frame();
        (0..self.tree.len())
            .map(|k| {
                let mut blocks = vec![(base, Matrix3::identity())];
                for j in self.tree.ancestors(k) {
                    let slot = self.tree.slot(j).expect("ancestors are articulated");
                    let arm = pose.positions[k] - pose.positions[j];
                    blocks.push((base + 3 + 3 * slot, -skew(&arm) * pose.globals[j]));
                }
                blocks
            })
            .collect()
    }

    /// Builds `Σ w JᵀJ` (optional) and `Σ w Jᵀr` in local perturbation
    /// coordinates, together with the energy at `states`.
    pub(crate) fn linearize(
        &self,
        states: &[FrameState],
        with_hessian: bool,
    ) -> Option<(NormalEquations, EnergyBreakdown)> {
        let cfg = self.config;
        let per = self.tree.params_per_frame();
        let n = self.dim();
        let bandwidth = if with_hessian { (3 * per).saturating_sub(1) } else { 0 };
        let mut ne = NormalEquations::new(n, bandwidth);
        let add = |ne: &mut NormalEquations, group: ResidualBlock<'_>| {
            if with_hessian {
                ne.add(&group);
            } else {
                for (c, m) in group.blocks {
                    let g = m.transpose() * group.residual * group.weight;
                    for i in 0..3 {
                        ne.gradient[c + i] += g[i];
                    }
                }
            }
        };

        let poses: Vec<_> = states
            .iter()
            .map(|s| self.tree.forward(&s.translation, &s.rotations))
            .collect();
        let energy = self.evaluate_poses(&poses, |f| states[f].translation)?;
        let jacobians: Vec<_> = poses
            .iter()
            .enumerate()
            .map(|(f, pose)| self.joint_jacobians(f, pose))
            .collect();

        let scale = self.pixel_scale();
        for (f, (pose, obs)) in poses.iter().zip(self.observations).enumerate() {
            for k in 0..self.tree.len() {
                let p = &pose.positions[k];
                if let Some(x) = &obs.points3d[k] {
                    if cfg.w_ik > 0.0 {
                        add(&mut ne, ResidualBlock {
                            residual: p - x,
                            blocks: &jacobians[f][k],
                            weight: cfg.w_ik,
                        });
                    }
                }
                if let Some((px, c)) = &obs.points2d[k] {
                    if cfg.w_proj > 0.0 && *c > 0.0 {
                        let proj = self.camera.project_point(p)?;
                        let r = (proj - px) * scale;
                        let jp = pad_rows(&(self.camera.project_jacobian(p) * scale));
                        let blocks: Blocks = jacobians[f][k].iter().map(|(col, m)| (*col, jp * m)).collect();
                        add(&mut ne, ResidualBlock {
                            residual: Vector3::new(r.x, r.y, 0.0),
                            blocks: &blocks,
                            weight: cfg.w_proj * c,
                        });
                    }
                }
            }
        }

        if cfg.w_smooth > 0.0 {
            for f in 1..poses.len().saturating_sub(1) {
                for k in 0..self.tree.len() {
                    let r = poses[f - 1].positions[k] - 2.0 * poses[f].positions[k] + poses[f + 1].positions[k];
                    let blocks: Blocks = jacobians[f - 1][k]
                        .iter()
                        .copied()
                        .chain(jacobians[f][k].iter().map(|(c, m)| (*c, m * -2.0)))
                        .chain(jacobians[f + 1][k].iter().copied())
                        .collect();
                    add(&mut ne, ResidualBlock {
                        residual: r,
                        blocks: &blocks,
                        weight: cfg.w_smooth,
                    });
                }
            }
        }

        if cfg.w_depth > 0.0 {
            let mut pick_z = Matrix3::zeros();
            pick_z[(0, 2)] = 1.0;
            for f in 1..states.len() {
                let r = states[f].translation.z - states[f - 1].translation.z;
                let blocks = [(f * per, pick_z), ((f - 1) * per, -pick_z)];
                add(&mut ne, ResidualBlock {
                    residual: Vector3::new(r, 0.0, 0.0),
                    blocks: &blocks,
                    weight: cfg.w_depth,
                });
            }
        }
        Some((ne, energy))
    }
}

fn pad_rows(m: &Matrix2x3<f64>) -> Matrix3<f64> {
    let mut out = Matrix3::zeros();
    out.fixed_view_mut::<2, 3>(0, 0).copy_from(m);
    out
}
