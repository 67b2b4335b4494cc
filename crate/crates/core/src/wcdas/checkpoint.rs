use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wcdas::head::{Head, HeadKind, LogitScale};

pub const HEAD_FORMAT_VERSION: u32 = 1;

/// JSON document for a classifier head. Weights are row-major, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadCheckpoint {
    pub format_version: u32,
    pub kind: HeadKind,
    #[serde(default)]
    pub logit_scale: LogitScale,
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `w_ρ` for wrapped Cauchy heads, `ln κ` for von Mises–Fisher heads.
    pub w_rho: Vec<f64>,
    pub s: f64,
}

impl From<&Head> for HeadCheckpoint {
    fn from(h: &Head) -> Self {
        Self {
            format_version: HEAD_FORMAT_VERSION,
            kind: h.kind,
            logit_scale: h.logit_scale,
            classes: h.classes(),
            dim: h.dim(),
            weights: h.weights.iter().copied().collect(),
            w_rho: h.w_conc.to_vec(),
            s: h.s,
        }
    }
}

impl TryFrom<HeadCheckpoint> for Head {
    type Error = Error;

    fn try_from(c: HeadCheckpoint) -> Result<Self> {
        if c.format_version != HEAD_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported head format version {}",
                c.format_version
            )));
        }
        let weights = Array2::from_shape_vec((c.classes, c.dim), c.weights)
            .map_err(|e| Error::Format(format!("weights do not match {}×{}: {e}", c.classes, c.dim)))?;
        let head = Head::new(c.kind, weights, Array1::from(c.w_rho), c.s)?;
        Ok(head.with_logit_scale(c.logit_scale))
    }
}

impl Head {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&HeadCheckpoint::from(self)).expect("head serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: HeadCheckpoint =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Head::try_from(ckpt)
    }
}
