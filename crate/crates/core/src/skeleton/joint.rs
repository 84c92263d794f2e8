use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

/// Number of joints in the canonical skeleton.
pub const JOINT_COUNT: usize = 21;

/// Canonical joints, pelvis first. The discriminant doubles as the array index
/// used by every per-joint table in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum JointId {
    Pelvis = 0,
    MidSpine,
    Spine,
    Neck,
    Head,
    LeftShoulder,
    LeftElbow,
    LeftWrist,
    LeftHand,
    RightShoulder,
    RightElbow,
    RightWrist,
    RightHand,
    LeftHip,
    LeftKnee,
    LeftAnkle,
    LeftFootTip,
    RightHip,
    RightKnee,
    RightAnkle,
    RightFootTip,
}

impl JointId {
    pub const ALL: [JointId; JOINT_COUNT] = [
        JointId::Pelvis,
        JointId::MidSpine,
        JointId::Spine,
        JointId::Neck,
        JointId::Head,
        JointId::LeftShoulder,
        JointId::LeftElbow,
        JointId::LeftWrist,
        JointId::LeftHand,
        JointId::RightShoulder,
        JointId::RightElbow,
        JointId::RightWrist,
        JointId::RightHand,
        JointId::LeftHip,
        JointId::LeftKnee,
        JointId::LeftAnkle,
        JointId::LeftFootTip,
        JointId::RightHip,
        JointId::RightKnee,
        JointId::RightAnkle,
        JointId::RightFootTip,
    ];

    pub const ROOT: JointId = JointId::Pelvis;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        Self::ALL.get(index).copied()
    }

    /// Display name used in pose documents and config files.
    pub fn name(self) -> &'static str {
        match self {
            JointId::Pelvis => "Pelvis",
            JointId::MidSpine => "Mid Spine",
            JointId::Spine => "Spine",
            JointId::Neck => "Neck",
            JointId::Head => "Head",
            JointId::LeftShoulder => "Left Shoulder",
            JointId::LeftElbow => "Left Elbow",
            JointId::LeftWrist => "Left Wrist",
            JointId::LeftHand => "Left Hand",
            JointId::RightShoulder => "Right Shoulder",
            JointId::RightElbow => "Right Elbow",
            JointId::RightWrist => "Right Wrist",
            JointId::RightHand => "Right Hand",
            JointId::LeftHip => "Left Hip",
            JointId::LeftKnee => "Left Knee",
            JointId::LeftAnkle => "Left Ankle",
            JointId::LeftFootTip => "Left Foot Tip",
            JointId::RightHip => "Right Hip",
            JointId::RightKnee => "Right Knee",
            JointId::RightAnkle => "Right Ankle",
            JointId::RightFootTip => "Right Foot Tip",
        }
    }

    pub fn parent(self) -> Option<JointId> {
        use JointId::*;
        Some(match self {
            Pelvis => return None,
            MidSpine => Pelvis,
            Spine => MidSpine,
            Neck => Spine,
            Head => Neck,
            LeftShoulder | RightShoulder => Spine,
            LeftElbow => LeftShoulder,
            LeftWrist => LeftElbow,
            LeftHand => LeftWrist,
            RightElbow => RightShoulder,
            RightWrist => RightElbow,
            RightHand => RightWrist,
            LeftHip | RightHip => Pelvis,
            LeftKnee => LeftHip,
            LeftAnkle => LeftKnee,
            LeftFootTip => LeftAnkle,
            RightKnee => RightHip,
            RightAnkle => RightKnee,
            RightFootTip => RightAnkle,
        })
    }

    pub fn children(self) -> impl Iterator<Item = JointId> {
        Self::ALL.into_iter().filter(move |j| j.parent() == Some(self))
    }

    pub fn is_leaf(self) -> bool {
        self.children().next().is_none()
    }

    /// Unit direction of the bone ending at this joint, expressed in the
    /// parent's frame when the skeleton stands in its rest pose
    /// (x = subject's right, y = up, z = forward). `None` for the root.
    pub fn rest_direction(self) -> Option<Vector3<f64>> {
        use JointId::*;
        let raw = match self {
            Pelvis => return None,
            MidSpine | Spine | Neck | Head => Vector3::new(0.0, 1.0, 0.0),
            LeftShoulder => Vector3::new(-0.1295, 0.058, 0.0),
            RightShoulder => Vector3::new(0.1295, 0.058, 0.0),
            LeftElbow | LeftWrist | LeftHand | RightElbow | RightWrist | RightHand => {
                Vector3::new(0.0, -1.0, 0.0)
            }
            LeftHip => Vector3::new(-0.0955, -0.03, 0.0),
            RightHip => Vector3::new(0.0955, -0.03, 0.0),
            LeftKnee | LeftAnkle | RightKnee | RightAnkle => Vector3::new(0.0, -1.0, 0.0),
            LeftFootTip | RightFootTip => Vector3::new(0.0, -0.039, 0.12),
        };
        Some(raw.normalize())
    }

    /// Non-root joints; each names the bone from its parent to itself.
    pub fn edges() -> impl Iterator<Item = JointId> {
        Self::ALL.into_iter().filter(|j| j.parent().is_some())
    }

    /// Joints from head down to the left ankle, used for the height sanity bound.
    pub fn head_to_ankle_chain() -> [JointId; 8] {
        use JointId::*;
        [Head, Neck, Spine, MidSpine, Pelvis, LeftHip, LeftKnee, LeftAnkle]
    }

    /// Canonical name lookup with the aliases commonly emitted by 2D and 3D
    /// detectors. Matching ignores case, spaces, underscores and hyphens.
    pub fn canonicalize(name: &str) -> Canonical {
        let key: String = name
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-' | '.'))
            .flat_map(char::to_lowercase)
            .collect();
        for joint in Self::ALL {
            let own: String = joint
                .name()
                .chars()
                .filter(|c| *c != ' ')
                .flat_map(char::to_lowercase)
                .collect();
            if own == key {
                return Canonical::Joint(joint);
            }
        }
        use JointId::*;
        let joint = match key.as_str() {
            "root" | "midhip" | "hipcenter" | "pelvis" => Pelvis,
            "spine1" | "torso" | "abdomen" => MidSpine,
            "chest" | "thorax" | "spine2" | "spine3" => Spine,
            "headtop" | "tophead" => Head,
            "lshoulder" => LeftShoulder,
            "lelbow" => LeftElbow,
            "lwrist" => LeftWrist,
            "lhand" => LeftHand,
            "rshoulder" => RightShoulder,
            "relbow" => RightElbow,
            "rwrist" => RightWrist,
            "rhand" => RightHand,
            "lhip" => LeftHip,
            "lknee" => LeftKnee,
            "lankle" => LeftAnkle,
            "ltoe" | "lefttoe" | "lbigtoe" | "leftbigtoe" | "lfoot" | "leftfoot" => LeftFootTip,
            "rhip" => RightHip,
            "rknee" => RightKnee,
            "rankle" => RightAnkle,
            "rtoe" | "righttoe" | "rbigtoe" | "rightbigtoe" | "rfoot" | "rightfoot" => {
                RightFootTip
            }
            "nose" | "leye" | "lefteye" | "reye" | "righteye" | "lear" | "leftear" | "rear"
            | "rightear" | "lsmalltoe" | "leftsmalltoe" | "rsmalltoe" | "rightsmalltoe"
            | "lheel" | "leftheel" | "rheel" | "rightheel" => return Canonical::Dropped,
            _ => return Canonical::Unknown,
        };
        Canonical::Joint(joint)
    }
}

/// Outcome of mapping a detector joint name onto the canonical skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Canonical {
    Joint(JointId),
    /// A joint of a larger detector model that has no canonical counterpart.
    Dropped,
    Unknown,
}

/// A foot, named after the ankle that carries it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub fn ankle(self) -> JointId {
        match self {
            Foot::Left => JointId::LeftAnkle,
            Foot::Right => JointId::RightAnkle,
        }
    }

    pub fn other(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Foot::Left => "left",
            Foot::Right => "right",
        }
    }
}

impl fmt::Display for Foot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown joint name `{0}`")]
pub struct UnknownJointName(pub String);

impl FromStr for JointId {
    type Err = UnknownJointName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match Self::canonicalize(s) {
            Canonical::Joint(j) => Ok(j),
            _ => Err(UnknownJointName(s.to_string())),
        }
    }
}

impl serde::Serialize for JointId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for JointId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// Fixed-size per-joint table.
pub type JointArray<T> = [T; JOINT_COUNT];
