//! Pipeline configuration file (TOML). Every section is optional; an empty
//! file yields the defaults.
//!
//! ```toml
//! [grid]
//! cell_size = 0.05
//! forward_range = 35.0
//!
//! [codec]
//! mode = "ratio"        # or "literal"
//! n_bins = 12
//! [codec.references.Car]
//! h_ref = 1.53
//! z_ref = -0.965
//!
//! [nms]
//! iou_threshold = 0.3
//!
//! [eval]
//! ap_mode = "40"        # or "11"
//!
//! [dataset]
//! root = "/data/kitti/training"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorConfig;
use crate::bev::GridConfig;
use crate::codec::{CodecConfig, ReferenceTable};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::post::DEFAULT_NMS_IOU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsConfig {
    pub iou_threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_NMS_IOU,
        }
    }
}

/// KITTI directory layout, relative to `root` unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    pub root: PathBuf,
    pub velodyne: PathBuf,
    pub calib: PathBuf,
    pub labels: PathBuf,
}

impl Default for DatasetPaths {
    fn default() -> Self {
        Self {
            root: PathBuf::from("."),
            velodyne: PathBuf::from("velodyne"),
            calib: PathBuf::from("calib"),
            labels: PathBuf::from("label_2"),
        }
    }
}

impl DatasetPaths {
    pub fn scan(&self, id: &str) -> PathBuf {
        self.root.join(&self.velodyne).join(format!("{id}.bin"))
    }

    pub fn calib(&self, id: &str) -> PathBuf {
        self.root.join(&self.calib).join(format!("{id}.txt"))
    }

    pub fn label(&self, id: &str) -> PathBuf {
        self.root.join(&self.labels).join(format!("{id}.txt"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub anchors: AnchorConfig,
    pub codec: CodecConfig,
    pub nms: NmsConfig,
    pub eval: EvalConfig,
    pub dataset: DatasetPaths,
}

impl PipelineConfig {
    /// Parses and validates. Reference boxes not given explicitly are
    /// placed on the configured ground plane.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let has_refs = raw
            .get("codec")
            .and_then(|c| c.as_table())
            .is_some_and(|c| c.contains_key("references"));
        if !has_refs {
            cfg.codec.references = ReferenceTable::with_ground(cfg.grid.ground_z);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.anchors.validate()?;
        self.codec.validate()?;
        self.eval.validate()?;
        if !(0.0..=1.0).contains(&self.nms.iou_threshold) {
            return Err(Error::Config("nms.iou_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
