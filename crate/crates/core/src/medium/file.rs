//! JSON medium files.
//!
//! ```json
//! {"type":"grid","dimension":1,"grid":[4],"a":[1,2,2,1],"rho":[1,1,1,1]}
//! {"type":"layered","layers":[{"width":0.5,"a":1,"rho":1},{"width":0.5,"a":4,"rho":1}]}
//! {"type":"homogeneous","dimension":2,"a":[1,0,0,1],"rho":1}
//! ```

use serde::{Deserialize, Serialize};

use super::Layer;

/// A symmetric matrix written either as a bare scalar (1D) or as a flat
/// row-major list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Scalar(f64),
    Flat(Vec<f64>),
}

impl MatrixEntry {
    pub fn flat(&self) -> Vec<f64> {
        match self {
            MatrixEntry::Scalar(v) => vec![*v],
            MatrixEntry::Flat(v) => v.clone(),
        }
    }

    pub(crate) fn from_flat(values: &[f64]) -> Self {
        if values.len() == 1 {
            MatrixEntry::Scalar(values[0])
        } else {
            MatrixEntry::Flat(values.to_vec())
        }
    }
}

fn default_exact_steps() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MediumDescriptor {
    Grid {
        dimension: usize,
        grid: Vec<usize>,
        a: Vec<MatrixEntry>,
        rho: Vec<f64>,
    },
    Layered {
        layers: Vec<Layer>,
        #[serde(default = "default_exact_steps")]
        exact_steps: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
    Homogeneous {
        dimension: usize,
        a: MatrixEntry,
        rho: f64,
    },
}
