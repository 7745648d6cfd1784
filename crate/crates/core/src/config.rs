//! Run configuration, read from TOML.
//!
//! Every table and key is optional and falls back to its default; unknown
//! keys are rejected. Command-line flags override values read here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::demo::DemoConfig;
use crate::error::{Error, Result};
use crate::grouping::{FilterParams, GroupingParams};
use crate::manip::TrajectoryConfig;
use crate::posefit::{InlierThreshold, RansacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Metres per raw depth unit.
    pub depth_scale: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { depth_scale: 0.001 }
    }
}

/// Input and output files; each may instead be given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub depth: Option<PathBuf>,
    pub color: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub npcs: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub parts: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub grouping: GroupingParams,
    pub filter: FilterParams,
    pub ransac: RansacConfig,
    pub trajectory: TrajectoryConfig,
    pub adversarial: DemoConfig,
    pub paths: Paths,
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ingest.depth_scale > 0.0 && self.ingest.depth_scale.is_finite()) {
            return Err(Error::Config("ingest.depth_scale must be positive".into()));
        }
        if !(self.grouping.radius > 0.0 && self.grouping.radius.is_finite()) {
            return Err(Error::Config("grouping.radius must be positive".into()));
        }
        unit_interval("filter.fg_thresh", self.filter.fg_thresh)?;
        unit_interval("filter.score_thresh", self.filter.score_thresh)?;
        unit_interval("filter.nms_iou", self.filter.nms_iou)?;
        if self.ransac.iterations == 0 {
            return Err(Error::Config("ransac.iterations must be at least 1".into()));
        }
        let (InlierThreshold::Absolute(t) | InlierThreshold::Relative(t)) = self.ransac.threshold;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config("ransac.threshold must be positive".into()));
        }
        self.trajectory.validate()?;
        self.adversarial.validate()
    }
}

/// Parses and validates a TOML document; `path` is used in messages only.
pub fn parse_config(path: &Path, text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                format!("line {line}, column {col}")
            }
            None => "unknown".into(),
        };
        Error::Parse {
            path: path.display().to_string(),
            location,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        let cfg = parse_config(Path::new("c.toml"), "").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grouping.radius, 0.03);
        assert_eq!(cfg.filter.nms_iou, 0.3);
        assert_eq!(cfg.adversarial.lambda, 0.3);
    }

    #[test]
    fn partial_tables() {
        let text = "[filter]\nscore_thresh = 0.2\n\n[ransac]\nthreshold = { absolute = 0.01 }\n";
        let cfg = parse_config(Path::new("c.toml"), text).unwrap();
        assert_eq!(cfg.filter.score_thresh, 0.2);
        assert_eq!(cfg.filter.fg_thresh, 0.4);
        assert_eq!(cfg.ransac.threshold, InlierThreshold::Absolute(0.01));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = "[grouping]\nradius = 0.03\nradiuss = 0.05\n";
        let e = parse_config(Path::new("c.toml"), text).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(parse_config(Path::new("c.toml"), "[nope]\n").is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            parse_config(Path::new("c.toml"), "[filter]\nnms_iou = 1.5\n"),
            Err(Error::Config(_))
        ));
    }
}
