//! Annotation and detection file formats, class tables and the study manifest.

mod label;
mod manifest;
mod voc;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::detection::{DetectionError, LandmarkClass};

pub use label::{parse_label_file, write_label_file, LabelKind, CLAMP_TOLERANCE};
pub use manifest::{load_manifest, FrameRecord, ProbeType, StudyManifest, VideoRecord};
pub use voc::{parse_voc_xml, write_voc_xml, VocAnnotation, VocBox, VocObject, VocSize};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Label { line: usize, message: String },
    #[error("malformed XML annotation: {0}")]
    Xml(String),
    #[error("XML annotation has no <size> element")]
    MissingSize,
    #[error("unmapped class name {0:?}")]
    UnmappedClass(String),
    #[error("invalid object {index} in XML annotation: {source}")]
    XmlObject {
        index: usize,
        #[source]
        source: DetectionError,
    },
    #[error("invalid class table: {0}")]
    ClassTable(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AnnotationError {
    pub(crate) fn label(line: usize, message: impl Into<String>) -> Self {
        AnnotationError::Label {
            line,
            message: message.into(),
        }
    }
}

/// Mapping between integer class ids on the wire and landmark classes.
///
/// The canonical table is alphabetical (`ALines = 0` .. `Shadow = 7`); a
/// config file may supply another permutation as a JSON array of eight
/// canonical class names, position = id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIdTable {
    by_id: [LandmarkClass; 8],
}

impl Default for ClassIdTable {
    fn default() -> Self {
        ClassIdTable::canonical()
    }
}

impl ClassIdTable {
    pub fn canonical() -> Self {
        ClassIdTable {
            by_id: LandmarkClass::ALL,
        }
    }

    pub fn from_order(order: [LandmarkClass; 8]) -> Result<Self, AnnotationError> {
        let mut seen = [false; 8];
        for c in order {
            if std::mem::replace(&mut seen[c.id() as usize], true) {
                return Err(AnnotationError::ClassTable(format!("class {c} listed more than once")));
            }
        }
        Ok(ClassIdTable { by_id: order })
    }

    pub fn from_json(text: &str) -> Result<Self, AnnotationError> {
        let names: Vec<String> = serde_json::from_str(text).map_err(|e| AnnotationError::ClassTable(e.to_string()))?;
        if names.len() != 8 {
            return Err(AnnotationError::ClassTable(format!(
                "expected 8 class names, found {}",
                names.len()
            )));
        }
        let mut order = LandmarkClass::ALL;
        for (slot, name) in order.iter_mut().zip(&names) {
            *slot = name
                .parse()
                .map_err(|e: DetectionError| AnnotationError::ClassTable(e.to_string()))?;
        }
        ClassIdTable::from_order(order)
    }

    pub fn class(&self, id: i64) -> Option<LandmarkClass> {
        usize::try_from(id).ok().and_then(|i| self.by_id.get(i).copied())
    }

    pub fn id(&self, class: LandmarkClass) -> u8 {
        self.by_id
            .iter()
            .position(|c| *c == class)
            .expect("table is a permutation") as u8
    }
}

/// Lowercase name → class lookup used for XML object names.
///
/// Lookups lowercase the input. The canonical names are always present;
/// configured aliases are added on top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    names: BTreeMap<String, LandmarkClass>,
}

impl Default for AliasTable {
    fn default() -> Self {
        use LandmarkClass::*;
        let mut table = AliasTable::canonical();
        for (alias, class) in [
            ("a-lines", ALines),
            ("a lines", ALines),
            ("a_lines", ALines),
            ("b-lines", BLines),
            ("b lines", BLines),
            ("b_lines", BLines),
            ("b-patch", BPatch),
            ("b patch", BPatch),
            ("b_patch", BPatch),
            ("air bronchogram", AirBronchogram),
            ("air bronchograms", AirBronchogram),
            ("air-bronchogram", AirBronchogram),
            ("air_bronchogram", AirBronchogram),
            ("consolidations", Consolidation),
            ("ribs", Rib),
        ] {
            table.names.insert(alias.to_string(), class);
        }
        table
    }
}

impl AliasTable {
    /// Only the eight canonical names.
    pub fn canonical() -> Self {
        AliasTable {
            names: LandmarkClass::ALL
                .into_iter()
                .map(|c| (c.name().to_lowercase(), c))
                .collect(),
        }
    }

    /// Canonical names plus a JSON map of `"alias": "CanonicalName"`.
    pub fn from_json(text: &str) -> Result<Self, AnnotationError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| AnnotationError::ClassTable(e.to_string()))?;
        let mut table = AliasTable::canonical();
        for (alias, canonical) in raw {
            let class: LandmarkClass = canonical
                .parse()
                .map_err(|e: DetectionError| AnnotationError::ClassTable(e.to_string()))?;
            table.names.insert(alias.to_lowercase(), class);
        }
        Ok(table)
    }

    pub fn insert(&mut self, alias: &str, class: LandmarkClass) {
        self.names.insert(alias.to_lowercase(), class);
    }

    pub fn lookup(&self, name: &str) -> Option<LandmarkClass> {
        self.names.get(&name.trim().to_lowercase()).copied()
    }
}
