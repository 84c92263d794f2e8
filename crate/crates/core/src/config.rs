//! Run configuration shared by the command-line tools.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::events::DetectorConfig;
use crate::optimizer::EnergyConfig;
use crate::skeleton::{derive_anatomy, CameraModel, RatioTable, SkeletonError};
use crate::stats::{AgreementConfig, MIN_RESAMPLES};

/// A configuration problem, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnatomyConfig {
    /// Overrides of the bundled bone-to-height ratios, keyed by child joint.
    pub ratios: BTreeMap<String, f64>,
}

impl AnatomyConfig {
    pub fn ratio_table(&self) -> Result<RatioTable, SkeletonError> {
        let mut named = RatioTable::default_table().to_named();
        named.extend(self.ratios.iter().map(|(k, v)| (k.clone(), *v)));
        RatioTable::from_named(RatioTable::default_table().version, &named)
    }
}

/// Intrinsics used when a walk document carries none. Missing focal
/// lengths and principal point fall back to the image-size defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width: 1080,
            height: 1920,
            fx: None,
            fy: None,
            cx: None,
            cy: None,
        }
    }
}

impl CameraConfig {
    pub fn model(&self) -> Result<CameraModel, SkeletonError> {
        let base = CameraModel::from_image_size(self.width, self.height)?;
        CameraModel::new(
            self.fx.unwrap_or(base.fx),
            self.fy.unwrap_or(base.fy),
            self.cx.unwrap_or(base.cx),
            self.cy.unwrap_or(base.cy),
            self.width,
            self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Name of the reference method in matched-walk files.
    pub reference: String,
}

impl Default for StatsConfig {
    fn default() -> Self {
        let a = AgreementConfig::default();
        StatsConfig {
            resamples: a.resamples,
            level: a.level,
            seed: a.seed,
            reference: "reference".into(),
        }
    }
}

impl StatsConfig {
    pub fn agreement(&self) -> AgreementConfig {
        AgreementConfig {
            resamples: self.resamples,
            level: self.level,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub anatomy: AnatomyConfig,
    pub camera: CameraConfig,
    pub energy: EnergyConfig,
    pub detector: DetectorConfig,
    pub stats: StatsConfig,
    pub paths: PathsConfig,
}

fn strip_prefix(message: &str) -> &str {
    // Section validators prefix the field name; keep only the reason.
    message.split_once(' ').map_or(message, |(_, rest)| rest)
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e.span().map_or_else(|| "config".into(), |s| key_at(text, s.start));
            ConfigError::new(key, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section with its owning module's rules.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let table = self
            .anatomy
            .ratio_table()
            .map_err(|e| ConfigError::new("anatomy.ratios", e.to_string()))?;
        derive_anatomy(1.75, &table).map_err(|e| ConfigError::new("anatomy.ratios", e.to_string()))?;
        self.camera
            .model()
            .map_err(|e| ConfigError::new("camera", e.to_string()))?;
        self.energy.validate().map_err(|e| {
            let msg = e.to_string();
            let body = msg.trim_start_matches("energy config: ");
            let field = body.split(' ').next().unwrap_or("");
            ConfigError::new(format!("energy.{field}"), strip_prefix(body))
        })?;
        self.detector.validate().map_err(|e| {
            let msg = e.to_string();
            let field = DETECTOR_FIELDS.iter().find(|f| msg.contains(*f)).copied().unwrap_or("");
            ConfigError::new(format!("detector.{field}").trim_end_matches('.').to_string(), msg)
        })?;
        if self.stats.resamples < MIN_RESAMPLES {
            return Err(ConfigError::new(
                "stats.resamples",
                format!("must be at least {MIN_RESAMPLES}"),
            ));
        }
        if !(self.stats.level > 0.0 && self.stats.level < 1.0) {
            return Err(ConfigError::new("stats.level", "must lie in (0, 1)"));
        }
        if self.stats.reference.trim().is_empty() {
            return Err(ConfigError::new("stats.reference", "must not be empty"));
        }
        Ok(())
    }
}

/// Dotted key path of the assignment or table header containing `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("").trim();
    if let Some(header) = line.strip_prefix('[') {
        return header.trim_end_matches(']').trim().to_string();
    }
    let key = line.split('=').next().unwrap_or("").trim().trim_matches('"');
    let section = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    match (section, key.is_empty()) {
        (Some(s), false) => format!("{s}.{key}"),
        (Some(s), true) => s.to_string(),
        (None, false) => key.to_string(),
        (None, true) => "config".into(),
    }
}

const DETECTOR_FIELDS: [&str; 6] = [
    "reference",
    "min_prominence",
    "min_separation",
    "cluster_window",
    "value_tolerance",
    "min_travel",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.stats.resamples, 10_000);
        let cam = cfg.camera.model().unwrap();
        assert_eq!((cam.cx, cam.cy), (540.0, 960.0));
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            [anatomy.ratios]
            "Left Knee" = 0.25
            [camera]
            fx = 1500.0
            [energy]
            w_smooth = 0.5
            [detector]
            min_prominence = 0.04
            [stats]
            seed = 9
            reference = "truth"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.energy.w_smooth, 0.5);
        assert_eq!(cfg.camera.model().unwrap().fx, 1500.0);
        assert_eq!(cfg.detector.min_prominence, 0.04);
        assert_eq!(cfg.stats.agreement().seed, 9);
        assert_eq!(cfg.anatomy.ratio_table().unwrap().get(crate::skeleton::JointId::LeftKnee), Some(0.25));
    }

    #[test]
    fn errors_name_the_key_path() {
        let key = |text: &str| RunConfig::from_toml(text).unwrap_err().key;
        assert_eq!(key("[energy]\nw_ik = -1.0\n"), "energy.w_ik");
        assert_eq!(key("[energy]\nmax_iterations = 0\n"), "energy.max_iterations");
        assert_eq!(key("[stats]\nresamples = 10\n"), "stats.resamples");
        assert_eq!(key("[stats]\nlevel = 1.5\n"), "stats.level");
        assert_eq!(key("[detector]\nmin_prominence = -0.1\n"), "detector.min_prominence");
        assert_eq!(key("[camera]\nwidth = 0\n"), "camera");
        assert_eq!(key("[anatomy.ratios]\n\"Left Knee\" = 1.5\n"), "anatomy.ratios");
        assert_eq!(key("[anatomy.ratios]\nTail = 0.1\n"), "anatomy.ratios");
        let unknown = RunConfig::from_toml("[energy]\nw_foo = 1.0\n").unwrap_err();
        assert_eq!(unknown.key, "energy.w_foo", "{unknown}");
        assert_eq!(key("[stats]\nseed = \"x\"\n"), "stats.seed");
        assert_eq!(key("[cameras]\nwidth = 1\n"), "cameras");
    }
}
