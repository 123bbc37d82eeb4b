//! Pipeline configuration, loaded from a JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active_learning::DEFAULT_RELABEL_CUTOFF;
use crate::annotation::{AliasTable, AnnotationError, ClassIdTable};
use crate::detection::{DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_NMS_IOU_THRESHOLD};
use crate::scoring::{FrameScoring, QualityLabel, QualityRules};

/// Environment variable consulted when no config path is given.
pub const CONFIG_ENV: &str = "TRIAGE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0} must lie in [0, 1]")]
    OutOfRange(&'static str),
    #[error(transparent)]
    Tables(#[from] AnnotationError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    pub quality_min: Option<QualityLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelabelConfig {
    pub quality_cutoff: QualityLabel,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig {
            quality_cutoff: DEFAULT_RELABEL_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Origins allowed by CORS; empty disables the CORS layer.
    pub cors_origins: Vec<String>,
    /// When set, every API request must carry `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    pub quality: QualityRules,
    pub summary: SummaryConfig,
    pub relabel: RelabelConfig,
    /// JSON array of the eight class names in wire-id order.
    pub class_id_table: Option<PathBuf>,
    /// JSON map of lowercase alias to class name, for XML annotations.
    pub class_aliases: Option<PathBuf>,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            nms_iou_threshold: DEFAULT_NMS_IOU_THRESHOLD,
            quality: QualityRules::default(),
            summary: SummaryConfig::default(),
            relabel: RelabelConfig::default(),
            class_id_table: None,
            class_aliases: None,
            service: ServiceConfig::default(),
        }
    }
}

/// Id and name tables used to read and write annotation files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FormatTables {
    pub ids: ClassIdTable,
    pub aliases: AliasTable,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(ConfigError::OutOfRange("confidence_threshold"));
        }
        if !(0.0..=1.0).contains(&self.nms_iou_threshold) {
            return Err(ConfigError::OutOfRange("nms_iou_threshold"));
        }
        Ok(())
    }

    /// Relative table paths are taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.class_id_table, &mut cfg.class_aliases].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, else the file named by `TRIAGE_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn frame_scoring(&self) -> FrameScoring {
        FrameScoring {
            confidence_threshold: self.confidence_threshold,
            nms_iou_threshold: self.nms_iou_threshold,
            quality: self.quality,
        }
    }

    pub fn tables(&self) -> Result<FormatTables, ConfigError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let ids = match &self.class_id_table {
            Some(p) => ClassIdTable::from_json(&read(p)?)?,
            None => ClassIdTable::canonical(),
        };
        let aliases = match &self.class_aliases {
            Some(p) => AliasTable::from_json(&read(p)?)?,
            None => AliasTable::default(),
        };
        Ok(FormatTables { ids, aliases })
    }
}
