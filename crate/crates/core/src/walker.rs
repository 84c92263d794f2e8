//! Synthetic walking skeletons with exactly known gait parameters.
//!
//! The walker places joints directly rather than simulating dynamics. Feet
//! alternate between stance (fixed on the ground) and a cycloidal swing that
//! advances them by two step lengths, both ankles staying on the line of
//! progression. The pelvis moves at constant speed with a small vertical bob
//! and the knees follow from two-link inverse kinematics, so every bone has
//! exactly the anatomical length.
//!
//! Gait time is measured from the touchdown of the left foot at the origin of
//! the walking line; touchdown `k` happens at `k·T` at distance `k·L`. The
//! recording runs from mid-swing of step 1 to mid-swing of step `N + 1`, so
//! it contains exactly `N` touchdowns.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::skeleton::{
    derive_anatomy, project, AnatomyProfile, CameraModel, Foot, JointArray, JointId, Keypoint2D, RatioTable,
    SkeletonFrame3D, SkeletonSequence, SubjectInfo, JOINT_COUNT,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WalkerError {
    #[error("{field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("inconsistent gait triple: {0}")]
    InconsistentSpec(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> WalkerError {
    WalkerError::InvalidSpec {
        field,
        reason: reason.into(),
    }
}

/// Independent Gaussian perturbations per modality plus 2D dropout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Isotropic standard deviation of 3D joint noise (m).
    pub sigma_3d: f64,
    /// Isotropic standard deviation of 2D joint noise (px).
    pub sigma_2d: f64,
    /// Probability that a 2D joint is removed.
    pub dropout: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), WalkerError> {
        if !(self.sigma_3d.is_finite() && self.sigma_3d >= 0.0) {
            return Err(invalid("noise.sigma_3d", "must be finite and non-negative"));
        }
        if !(self.sigma_2d.is_finite() && self.sigma_2d >= 0.0) {
            return Err(invalid("noise.sigma_2d", "must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(invalid("noise.dropout", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerSpec {
    pub walk_id: String,
    pub subject_id: Option<String>,
    pub source: String,
    /// Gait speed (m/s). Any two of speed, step length and cadence fix the
    /// third; with none given the walker uses 1.4 m/s at 0.7 m.
    pub speed: Option<f64>,
    /// Step length (m).
    pub step_length: Option<f64>,
    /// Cadence (steps/min).
    pub cadence: Option<f64>,
    pub height_m: f64,
    /// Distance covered by the recorded steps (m), rounded to whole steps.
    pub walk_distance: f64,
    pub fps: f64,
    /// Ground position `[x, z]` of the pelvis in the first frame, in camera
    /// coordinates (m).
    pub start: [f64; 2],
    /// Walking direction in degrees: 0 walks straight away from the camera,
    /// 180 toward it, 90 to the camera's right.
    pub heading_deg: f64,
    /// Height of the camera above the ground (m).
    pub camera_height: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Fraction of each step time with both feet on the ground.
    pub double_support: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for WalkerSpec {
    fn default() -> Self {
        WalkerSpec {
            walk_id: "synthetic".into(),
            subject_id: None,
            source: "synthetic".into(),
            speed: None,
            step_length: None,
            cadence: None,
            height_m: 1.75,
            walk_distance: 4.2,
            fps: 30.0,
            start: [0.0, 2.5],
            heading_deg: 0.0,
            camera_height: 1.0,
            image_width: 1080,
            image_height: 1920,
            double_support: 0.2,
            noise: NoiseModel::default(),
            seed: 0,
        }
    }
}

/// Reconciled speed, step length and cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitTriple {
    pub speed: f64,
    pub step_length: f64,
    pub cadence: f64,
}

impl GaitTriple {
    pub fn step_time(&self) -> f64 {
        60.0 / self.cadence
    }
}

impl WalkerSpec {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Completes the speed / step length / cadence triple.
    pub fn gait(&self) -> Result<GaitTriple, WalkerError> {
        for (field, v) in [("speed", self.speed), ("step_length", self.step_length), ("cadence", self.cadence)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(field, "must be a positive number"));
                }
            }
        }
        let (speed, step_length, cadence) = match (self.speed, self.step_length, self.cadence) {
            (None, None, None) => (1.4, 0.7, 120.0),
            (Some(v), Some(l), None) => (v, l, 60.0 * v / l),
            (Some(v), None, Some(c)) => (v, 60.0 * v / c, c),
            (None, Some(l), Some(c)) => (l * c / 60.0, l, c),
            (Some(v), Some(l), Some(c)) => {
                let implied = l * c / 60.0;
                if (v - implied).abs() > 1e-9 {
                    return Err(WalkerError::InconsistentSpec(format!(
                        "speed {v} m/s differs from step_length × cadence / 60 = {implied} m/s"
                    )));
                }
                (v, l, 60.0 * v / l)
            }
            _ => {
                return Err(invalid(
                    "speed",
                    "give at least two of speed, step_length and cadence",
                ))
            }
        };
        Ok(GaitTriple {
            speed,
            step_length,
            cadence,
        })
    }

    /// Number of recorded touchdowns.
    pub fn step_count(&self) -> Result<usize, WalkerError> {
        let gait = self.gait()?;
        let n = (self.walk_distance / gait.step_length).round();
        if !(n >= 2.0) {
            return Err(invalid("walk_distance", "must cover at least two steps"));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), WalkerError> {
        if !(self.fps.is_finite() && self.fps >= 10.0) {
            return Err(invalid("fps", format!("must be at least 10 Hz, got {}", self.fps)));
        }
        if !(self.walk_distance.is_finite() && self.walk_distance > 0.0) {
            return Err(invalid("walk_distance", "must be positive"));
        }
        if !(0.0..=0.4).contains(&self.double_support) {
            return Err(invalid("double_support", "must lie in [0, 0.4]"));
        }
        if !(self.start.iter().all(|v| v.is_finite()) && self.heading_deg.is_finite()) {
            return Err(invalid("start", "start and heading must be finite"));
        }
        if !self.camera_height.is_finite() {
            return Err(invalid("camera_height", "must be finite"));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(invalid("image_width", "image size must be positive"));
        }
        self.noise.validate()?;
        derive_anatomy(self.height_m, &RatioTable::default_table())
            .map_err(|e| invalid("height_m", e.to_string()))?;
        self.step_count()?;
        Ok(())
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel::from_image_size(self.image_width, self.image_height).expect("validated image size")
    }
}

/// One scheduled touchdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthStep {
    pub foot: Foot,
    /// Touchdown time in recording time (s).
    pub time: f64,
    /// Forward distance between the two ankles after touchdown (m).
    pub length: f64,
    /// Ankle position at touchdown, camera frame (m).
    pub position: [f64; 3],
}

/// Exact parameters of a generated walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub walk_id: String,
    pub subject_id: Option<String>,
    pub source: String,
    /// m/s
    pub speed: f64,
    /// steps/min
    pub cadence: f64,
    /// m
    pub step_length: f64,
    /// s
    pub step_time: f64,
    pub steps: Vec<TruthStep>,
    /// Noiseless 3D frames.
    #[serde(skip)]
    pub clean: Vec<SkeletonFrame3D>,
}

/// Joint placement for one instant of the walk.
struct Body<'a> {
    anatomy: &'a AnatomyProfile,
    yaw: Matrix3<f64>,
    forward: Vector3<f64>,
}

impl Body<'_> {
    fn offset(&self, j: JointId) -> Vector3<f64> {
        j.rest_direction().expect("non-root") * self.anatomy.bone_length(j)
    }

    fn ankle_height(&self) -> f64 {
        -self.offset(JointId::LeftFootTip).y
    }

    /// Lateral and vertical hip offsets from the pelvis in the body frame.
    fn hip_offset(&self) -> Vector3<f64> {
        self.offset(JointId::RightHip)
    }

    fn leg_length(&self) -> f64 {
        self.anatomy.bone_length(JointId::LeftKnee) + self.anatomy.bone_length(JointId::LeftAnkle)
    }

    /// Places all joints given pelvis and ankle positions plus arm and head phase.
    fn pose(
        &self,
        pelvis: Vector3<f64>,
        ankles: [Vector3<f64>; 2],
        arm_swing: f64,
        elbow_bend: f64,
        nod: f64,
    ) -> JointArray<Vector3<f64>> {
        use JointId::*;
        let mut p = [Vector3::zeros(); JOINT_COUNT];
        let g = self.yaw;
        p[Pelvis.index()] = pelvis;
        for j in [MidSpine, Spine, Neck] {
            p[j.index()] = p[j.parent().unwrap().index()] + g * self.offset(j);
        }
        let head_frame = g * pitch(nod);
        p[Head.index()] = p[Neck.index()] + head_frame * self.offset(Head);

        for (side, swing) in [([LeftShoulder, LeftElbow, LeftWrist, LeftHand], arm_swing), (
            [RightShoulder, RightElbow, RightWrist, RightHand],
            -arm_swing,
        )] {
            let [shoulder, elbow, wrist, hand] = side;
            p[shoulder.index()] = p[Spine.index()] + g * self.offset(shoulder);
            let upper = g * pitch(-swing);
            p[elbow.index()] = p[shoulder.index()] + upper * self.offset(elbow);
            let lower = upper * pitch(-elbow_bend);
            p[wrist.index()] = p[elbow.index()] + lower * self.offset(wrist);
            p[hand.index()] = p[wrist.index()] + lower * self.offset(hand);
        }

        for (legs, ankle_pos) in [([LeftHip, LeftKnee, LeftAnkle, LeftFootTip], ankles[0]), (
            [RightHip, RightKnee, RightAnkle, RightFootTip],
            ankles[1],
        )] {
            let [hip, knee, ankle, toe] = legs;
            p[hip.index()] = pelvis + g * self.offset(hip);
            p[knee.index()] = self.knee(&p[hip.index()], &ankle_pos);
            p[ankle.index()] = ankle_pos;
            p[toe.index()] = ankle_pos + g * self.offset(toe);
        }
        p
    }

    /// Knee on the circle of valid positions, bent forward.
    fn knee(&self, hip: &Vector3<f64>, ankle: &Vector3<f64>) -> Vector3<f64> {
        let thigh = self.anatomy.bone_length(JointId::LeftKnee);
        let shank = self.anatomy.bone_length(JointId::LeftAnkle);
        let axis = ankle - hip;
        let d = axis.norm();
        let u = axis / d;
        let along = (thigh * thigh - shank * shank + d * d) / (2.0 * d);
        let out = (thigh * thigh - along * along).max(0.0).sqrt();
        let bend = (self.forward - u * self.forward.dot(&u)).normalize();
        hip + u * along + bend * out
    }
}

/// Rotation about the body's right axis; positive pitch tips a downward
/// vector backward.
fn pitch(angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), angle).matrix()
}

struct Schedule {
    gait: GaitTriple,
    ds: f64,
    lift: f64,
}

impl Schedule {
    fn period(&self) -> f64 {
        self.gait.step_time()
    }

    /// Forward position and lift of a foot at gait time `t`.
    fn foot(&self, foot: Foot, t: f64) -> (f64, f64) {
        let period = self.period();
        let parity = match foot {
            Foot::Left => 0.0,
            Foot::Right => 1.0,
        };
        let k0 = 2.0 * ((t / period - parity) / 2.0).floor() + parity;
        let lift_off = (k0 + 1.0 + self.ds) * period;
        let l = self.gait.step_length;
        if t < lift_off {
            return (k0 * l, 0.0);
        }
        let tau = ((t - lift_off) / ((1.0 - self.ds) * period)).min(1.0);
        let x = k0 * l + 2.0 * l * (tau - (TAU * tau).sin() / TAU);
        let lift = self.lift * (1.0 - (TAU * tau).cos()) / 2.0;
        (x, lift)
    }

    /// Forward position of the pelvis: midway between the feet at the
    /// middle of every double-support phase.
    fn pelvis(&self, t: f64) -> f64 {
        self.gait.speed * (t - self.ds * self.period() / 2.0) - self.gait.step_length / 2.0
    }

    /// Vertical bob phase in [0, 1]: 0 at the middle of double support.
    fn bob(&self, t: f64) -> f64 {
        (1.0 - (TAU * (t - self.ds * self.period() / 2.0) / self.period()).cos()) / 2.0
    }

    fn recording_start(&self) -> f64 {
        self.period() * (1.0 + self.ds) / 2.0
    }
}

/// Generates the walk described by `spec`: noisy 2D and 3D detections plus
/// the exact ground truth.
pub fn generate(spec: &WalkerSpec) -> Result<(SkeletonSequence, GroundTruth), WalkerError> {
    spec.validate()?;
    let gait = spec.gait()?;
    let steps = spec.step_count()?;
    let anatomy = derive_anatomy(spec.height_m, &RatioTable::default_table()).expect("validated height");
    let camera = spec.camera();

    let heading = spec.heading_deg.to_radians();
    let forward = Vector3::new(heading.sin(), 0.0, heading.cos());
    let up = Vector3::y();
    let right = up.cross(&forward);
    let body = Body {
        anatomy: &anatomy,
        yaw: Matrix3::from_columns(&[right, up, forward]),
        forward,
    };

    let scale = spec.height_m / 1.75;
    let schedule = Schedule {
        gait,
        ds: spec.double_support,
        lift: 0.08 * scale,
    };
    let period = schedule.period();
    let bob = 0.01 * scale;

    // Lowest pelvis height that keeps the leg within reach at the widest
    // stance, which occurs at the edges of double support.
    let hip = body.hip_offset();
    let reach = 0.97 * body.leg_length();
    let widest = (1.0 + schedule.ds) * gait.step_length / 2.0;
    let drop2 = reach * reach - widest * widest - hip.x * hip.x;
    if drop2 <= 0.0 {
        return Err(invalid(
            "step_length",
            format!("{} m is too long for a subject of {} m", gait.step_length, spec.height_m),
        ));
    }
    let ground = -spec.camera_height;
    let ankle_height = body.ankle_height();
    let pelvis_low = ground + ankle_height + drop2.sqrt() - hip.y;

    let t0 = schedule.recording_start();
    let origin = Vector3::new(spec.start[0], 0.0, spec.start[1]) - forward * schedule.pelvis(t0);
    let at = |s: f64, y: f64| origin + forward * s + up * y;

    let frame_count = ((steps as f64) * period * spec.fps + 1e-9).floor() as usize + 1;
    let mut clean = Vec::with_capacity(frame_count);
    for i in 0..frame_count {
        let time = i as f64 / spec.fps;
        let t = t0 + time;
        let pelvis = at(schedule.pelvis(t), pelvis_low + bob * schedule.bob(t));
        let ankles = [Foot::Left, Foot::Right].map(|foot| {
            let (s, lift) = schedule.foot(foot, t);
            at(s, ground + ankle_height + lift)
        });
        // Left arm swings forward while the right foot leads.
        let arm = 0.3 * (PI * (t - period) / period).cos();
        let elbow = 0.3 + 0.1 * (TAU * t / period).sin();
        let nod = 0.05 * (TAU * t / period).sin();
        let joints = body.pose(pelvis, ankles, arm, elbow, nod);
        if let Some(j) = joints.iter().position(|p| !(p.z > 0.0)) {
            return Err(invalid(
                "start",
                format!(
                    "{} reaches depth {:.3} m at t = {time:.3} s; the subject must stay in front of the camera",
                    JointId::ALL[j],
                    joints[j].z
                ),
            ));
        }
        clean.push(SkeletonFrame3D::full(i, time, joints));
    }

    let truth_steps = (1..=steps)
        .map(|k| {
            let foot = if k % 2 == 1 { Foot::Right } else { Foot::Left };
            let touchdown = k as f64 * period;
            let (s, _) = schedule.foot(foot, touchdown);
            let p = at(s, ground + ankle_height);
            TruthStep {
                foot,
                time: touchdown - t0,
                length: gait.step_length,
                position: [p.x, p.y, p.z],
            }
        })
        .collect();

    let frames2d = clean
        .iter()
        .map(|f| project(f, &camera).expect("joints in front of the camera"))
        .collect();
    let subject = SubjectInfo {
        id: spec.subject_id.clone(),
        height_m: spec.height_m,
    };
    let mut seq = SkeletonSequence::new(spec.fps, subject, frames2d, clean.clone()).expect("valid synthetic sequence");
    seq.walk_id = Some(spec.walk_id.clone());
    seq.source = Some(spec.source.clone());
    seq.camera = Some(camera);
    let seq = inject_noise(&seq, &spec.noise, spec.seed);

    let truth = GroundTruth {
        walk_id: spec.walk_id.clone(),
        subject_id: spec.subject_id.clone(),
        source: spec.source.clone(),
        speed: gait.speed,
        cadence: gait.cadence,
        step_length: gait.step_length,
        step_time: period,
        steps: truth_steps,
        clean,
    };
    Ok((seq, truth))
}

/// A subject standing still at the spec's start position for `seconds`.
pub fn standing(spec: &WalkerSpec, seconds: f64) -> Result<SkeletonSequence, WalkerError> {
    spec.validate()?;
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(invalid("duration", "must be positive"));
    }
    let anatomy = derive_anatomy(spec.height_m, &RatioTable::default_table()).expect("validated height");
    let camera = spec.camera();
    let heading = spec.heading_deg.to_radians();
    let forward = Vector3::new(heading.sin(), 0.0, heading.cos());
    let right = Vector3::y().cross(&forward);
    let body = Body {
        anatomy: &anatomy,
        yaw: Matrix3::from_columns(&[right, Vector3::y(), forward]),
        forward,
    };
    let hip = body.hip_offset();
    let ground = -spec.camera_height;
    let ankle_height = body.ankle_height();
    let drop = 0.99 * body.leg_length();
    let base = Vector3::new(spec.start[0], 0.0, spec.start[1]);
    let pelvis = base + Vector3::y() * (ground + ankle_height + drop - hip.y);
    let ankles = [-hip.x, hip.x].map(|x| base + right * x + Vector3::y() * (ground + ankle_height));
    let joints = body.pose(pelvis, ankles, 0.0, 0.2, 0.0);

    let count = (seconds * spec.fps).floor() as usize + 1;
    let clean: Vec<_> = (0..count)
        .map(|i| SkeletonFrame3D::full(i, i as f64 / spec.fps, joints))
        .collect();
    let frames2d = clean
        .iter()
        .map(|f| project(f, &camera).map_err(|e| invalid("start", e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let subject = SubjectInfo {
        id: spec.subject_id.clone(),
        height_m: spec.height_m,
    };
    let mut seq = SkeletonSequence::new(spec.fps, subject, frames2d, clean).expect("valid synthetic sequence");
    seq.walk_id = Some(spec.walk_id.clone());
    seq.source = Some(spec.source.clone());
    seq.camera = Some(camera);
    Ok(inject_noise(&seq, &spec.noise, spec.seed))
}

/// Adds seeded Gaussian noise to every present joint and drops 2D joints
/// with the model's probability. The 3D and 2D modalities draw from
/// separate streams, so changing one noise level leaves the other intact.
pub fn inject_noise(seq: &SkeletonSequence, noise: &NoiseModel, seed: u64) -> SkeletonSequence {
    let mut out = seq.clone();
    if noise.sigma_3d > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let normal = Normal::new(0.0, noise.sigma_3d).expect("valid sigma");
        for frame in &mut out.frames3d {
            for p in frame.joints.iter_mut().flatten() {
                *p += Vector3::from_fn(|_, _| normal.sample(&mut rng));
            }
        }
    }
    if noise.sigma_2d > 0.0 || noise.dropout > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, noise.sigma_2d).expect("valid sigma");
        for frame in &mut out.frames2d {
            for slot in frame.joints.iter_mut() {
                let Some(k) = slot else { continue };
                let drop = rng.random::<f64>() < noise.dropout;
                let dx = normal.sample(&mut rng);
                let dy = normal.sample(&mut rng);
                *slot = (!drop).then(|| Keypoint2D::new(k.position.x + dx, k.position.y + dy, k.confidence));
            }
        }
    }
    out
}

/// Walks with speed rising linearly from 0.8 to 2.0 m/s and cadence from 90
/// to 150 steps/min, over a spread of subject heights. Walk `i` gets seed
/// `seed + i`.
pub fn speed_sweep(count: usize, noise: NoiseModel, seed: u64) -> Vec<WalkerSpec> {
    let at = |lo: f64, hi: f64, i: usize| {
        if count < 2 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    };
    (0..count)
        .map(|i| WalkerSpec {
            walk_id: format!("walk{:03}", i + 1),
            subject_id: Some(format!("subject{:02}", i / 3 + 1)),
            speed: Some(at(0.8, 2.0, i)),
            cadence: Some(at(90.0, 150.0, i)),
            height_m: [1.62, 1.70, 1.78, 1.86][i % 4],
            noise,
            seed: seed + i as u64,
            ..WalkerSpec::default()
        })
        .collect()
}
