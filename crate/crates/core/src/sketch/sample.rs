use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::raster::RasterSketch;
use super::vector::VectorSketch;
use crate::error::{Error, Result};

/// Coarse abstraction level, tied one-to-one to the data source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Abstraction {
    /// Edgemaps.
    Low,
    /// Freehand sketches (TU-Berlin style).
    Medium,
    /// Quick doodles (QuickDraw style).
    High,
}

impl Abstraction {
    pub const ALL: [Abstraction; 3] = [Abstraction::Low, Abstraction::Medium, Abstraction::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Short dataset tag: EM, TU or QD.
    pub fn source_tag(self) -> &'static str {
        match self {
            Abstraction::Low => "EM",
            Abstraction::Medium => "TU",
            Abstraction::High => "QD",
        }
    }

    pub fn has_vector_data(self) -> bool {
        self != Abstraction::Low
    }
}

impl fmt::Display for Abstraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Abstraction::Low => "low",
            Abstraction::Medium => "medium",
            Abstraction::High => "high",
        };
        f.write_str(s)
    }
}

impl FromStr for Abstraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "em" | "edgemap" => Ok(Abstraction::Low),
            "medium" | "tu" | "tu-berlin" => Ok(Abstraction::Medium),
            "high" | "qd" | "quickdraw" => Ok(Abstraction::High),
            other => Err(Error::InvalidInput(format!("unknown abstraction level `{other}`"))),
        }
    }
}

/// Where a sample was read from, so manifests can reload it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub path: PathBuf,
    pub record: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub id: String,
    pub category: String,
    pub category_index: usize,
    pub abstraction: Abstraction,
    pub raster: RasterSketch,
    pub vector: Option<VectorSketch>,
    pub origin: Option<Origin>,
}

impl LabeledSample {
    /// Checks that vector data is present exactly for non-edgemap sources.
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        category_index: usize,
        abstraction: Abstraction,
        raster: RasterSketch,
        vector: Option<VectorSketch>,
    ) -> Result<Self> {
        let id = id.into();
        if abstraction.has_vector_data() != vector.is_some() {
            return Err(Error::InvalidInput(format!(
                "sample `{id}`: {abstraction} abstraction {} vector data",
                if vector.is_some() { "must not carry" } else { "requires" }
            )));
        }
        Ok(Self {
            id,
            category: category.into(),
            category_index,
            abstraction,
            raster,
            vector,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = Some(origin);
        self
    }
}
