use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::joint::{JointArray, JointId, JOINT_COUNT};
use super::SkeletonError;

const DEFAULT_RATIOS: &str = include_str!("../../config/anatomy_ratios.toml");

/// Accepted subject heights, exclusive bounds (m).
pub const HEIGHT_RANGE: (f64, f64) = (0.5, 2.5);

/// Allowed relative gap between the head-to-ankle chain and standing height.
pub const CHAIN_SANITY_BOUND: f64 = 0.10;

/// Bone lengths as fractions of standing height, keyed by the bone's child joint.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub version: u32,
    ratios: JointArray<Option<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RatioFile {
    version: u32,
    ratios: BTreeMap<String, f64>,
}

impl RatioTable {
    pub fn empty() -> Self {
        RatioTable {
            version: 1,
            ratios: [None; JOINT_COUNT],
        }
    }

    /// The shipped anthropometric table.
    pub fn default_table() -> Self {
        Self::from_toml(DEFAULT_RATIOS).expect("bundled ratio table is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, SkeletonError> {
        let file: RatioFile =
            toml::from_str(text).map_err(|e| SkeletonError::RatioTable(e.to_string()))?;
        Self::from_named(file.version, &file.ratios)
    }

    pub fn from_named(version: u32, named: &BTreeMap<String, f64>) -> Result<Self, SkeletonError> {
        let mut table = RatioTable {
            version,
            ratios: [None; JOINT_COUNT],
        };
        for (name, &ratio) in named {
            let joint: JointId = name
                .parse()
                .map_err(|_| SkeletonError::RatioTable(format!("unknown bone `{name}`")))?;
            if joint.parent().is_none() {
                return Err(SkeletonError::RatioTable(format!(
                    "`{name}` is the root and has no bone"
                )));
            }
            table.ratios[joint.index()] = Some(ratio);
        }
        Ok(table)
    }

    pub fn to_named(&self) -> BTreeMap<String, f64> {
        JointId::edges()
            .filter_map(|j| self.get(j).map(|r| (j.name().to_string(), r)))
            .collect()
    }

    pub fn get(&self, child: JointId) -> Option<f64> {
        self.ratios[child.index()]
    }

    pub fn set(&mut self, child: JointId, ratio: f64) {
        self.ratios[child.index()] = Some(ratio);
    }
}

impl Default for RatioTable {
    fn default() -> Self {
        Self::default_table()
    }
}

/// Subject height and the bone lengths derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyProfile {
    pub height_m: f64,
    /// Length of the bone ending at each joint (0 for the root).
    lengths: JointArray<f64>,
    pub ratios: RatioTable,
}

impl AnatomyProfile {
    pub fn bone_length(&self, child: JointId) -> f64 {
        self.lengths[child.index()]
    }

    pub fn lengths(&self) -> &JointArray<f64> {
        &self.lengths
    }

    pub fn head_to_ankle_length(&self) -> f64 {
        // The chain lists joints head-first; every bone except the last
        // (ankle) end is counted once by walking child joints.
        let chain = JointId::head_to_ankle_chain();
        chain
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                if a.parent() == Some(b) {
                    self.bone_length(a)
                } else {
                    self.bone_length(b)
                }
            })
            .sum()
    }
}

pub fn derive_anatomy(height_m: f64, ratios: &RatioTable) -> Result<AnatomyProfile, SkeletonError> {
    if !(height_m > HEIGHT_RANGE.0 && height_m < HEIGHT_RANGE.1) {
        return Err(SkeletonError::OutOfRangeHeight(height_m));
    }
    let mut lengths = [0.0; JOINT_COUNT];
    for joint in JointId::edges() {
        let ratio = ratios
            .get(joint)
            .ok_or(SkeletonError::IncompleteRatioTable(joint))?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(SkeletonError::InvalidRatio { joint, ratio });
        }
        lengths[joint.index()] = height_m * ratio;
    }
    let profile = AnatomyProfile {
        height_m,
        lengths,
        ratios: ratios.clone(),
    };
    let chain = profile.head_to_ankle_length();
    if ((chain - height_m) / height_m).abs() > CHAIN_SANITY_BOUND {
        return Err(SkeletonError::ImplausibleRatios {
            chain_m: chain,
            height_m,
        });
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn femur_length_is_height_times_ratio() {
        let profile = derive_anatomy(1.80, &RatioTable::default_table()).unwrap();
        assert_abs_diff_eq!(profile.bone_length(JointId::LeftKnee), 0.4410, epsilon = 1e-12);
    }

    #[test]
    fn rejects_zero_and_out_of_range_heights() {
        let table = RatioTable::default_table();
        for h in [0.0, 0.5, 2.5, -1.0, f64::NAN] {
            assert!(matches!(
                derive_anatomy(h, &table),
                Err(SkeletonError::OutOfRangeHeight(_))
            ));
        }
    }

    #[test]
    fn default_table_at_170_cm() {
        // Hand sum of the shipped head-to-ankle ratios:
        // 0.070 + 0.100 + 0.100 + 0.100 + 0.100 + 0.245 + 0.246 = 0.961.
        let profile = derive_anatomy(1.70, &RatioTable::default_table()).unwrap();
        assert_eq!(JointId::edges().filter(|j| profile.bone_length(*j) > 0.0).count(), 20);
        assert_abs_diff_eq!(profile.head_to_ankle_length(), 0.961 * 1.70, epsilon = 1e-12);
        assert_abs_diff_eq!(profile.head_to_ankle_length(), 1.6337, epsilon = 1e-12);
    }

    #[test]
    fn missing_ratio_is_reported() {
        let mut named = RatioTable::default_table().to_named();
        named.remove("Right Wrist");
        let table = RatioTable::from_named(1, &named).unwrap();
        assert!(matches!(
            derive_anatomy(1.7, &table),
            Err(SkeletonError::IncompleteRatioTable(JointId::RightWrist))
        ));
    }

    #[test]
    fn ratio_outside_unit_interval_is_rejected() {
        let mut table = RatioTable::default_table();
        table.set(JointId::Neck, 1.2);
        assert!(matches!(
            derive_anatomy(1.7, &table),
            Err(SkeletonError::InvalidRatio { .. })
        ));
    }

    #[test]
    fn chain_sanity_bound_catches_long_legs() {
        let mut table = RatioTable::default_table();
        table.set(JointId::LeftKnee, 0.45);
        assert!(matches!(
            derive_anatomy(1.7, &table),
            Err(SkeletonError::ImplausibleRatios { .. })
        ));
    }

    #[test]
    fn lengths_scale_linearly_with_height() {
        let table = RatioTable::default_table();
        let a = derive_anatomy(0.9, &table).unwrap();
        let b = derive_anatomy(1.8, &table).unwrap();
        for j in JointId::edges() {
            assert_eq!(b.bone_length(j), 2.0 * a.bone_length(j));
        }
    }

    #[test]
    fn unknown_bone_name_in_file() {
        let err = RatioTable::from_toml("version = 1\n[ratios]\nTail = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("Tail"));
    }
}
