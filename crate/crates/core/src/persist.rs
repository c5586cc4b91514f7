//! JSON model files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "n_states": 2, "n_vars": 1, "max_lag": 1,
//!   "transition": [0.9, 0.1, 0.2, 0.8],
//!   "initial": [0.5, 0.5],
//!   "states": [
//!     {"variables": [{"parents": [], "lags": 1, "coefficients": [0.1, 0.5], "variance": 1.0}]},
//!     {"variables": [{"parents": [], "lags": 0, "coefficients": [3.0], "variance": 2.0}]}
//!   ]
//! }
//! ```
//!
//! `transition` is row-major. Floats are written in shortest round-trip form,
//! so a load after a save reproduces every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearGaussian, Model};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct VariableDoc {
    parents: Vec<usize>,
    lags: usize,
    coefficients: Vec<f64>,
    variance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateDoc {
    variables: Vec<VariableDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: u32,
    n_states: usize,
    n_vars: usize,
    max_lag: usize,
    transition: Vec<f64>,
    initial: Vec<f64>,
    states: Vec<StateDoc>,
}

pub fn to_json(model: &Model) -> Result<String> {
    let doc = ModelDoc {
        schema_version: SCHEMA_VERSION,
        n_states: model.n_states,
        n_vars: model.n_vars,
        max_lag: model.max_lag,
        transition: model.transition.iter().flatten().copied().collect(),
        initial: model.initial.clone(),
        states: model
            .emissions
            .iter()
            .map(|vars| StateDoc {
                variables: vars
                    .iter()
                    .map(|e| VariableDoc {
                        parents: e.parents.clone(),
                        lags: e.lags,
                        coefficients: e.coefficients.clone(),
                        variance: e.variance,
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::InvalidModel("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: SCHEMA_VERSION,
        });
    }
    let doc: ModelDoc = serde_json::from_value(value)?;
    let n = doc.n_states;
    if doc.transition.len() != n * n {
        return Err(Error::InvalidModel(format!(
            "transition has {} entries, expected {}",
            doc.transition.len(),
            n * n
        )));
    }
    if doc.states.len() != n {
        return Err(Error::InvalidModel(format!("{} states listed, expected {n}", doc.states.len())));
    }
    let model = Model {
        n_states: n,
        n_vars: doc.n_vars,
        max_lag: doc.max_lag,
        transition: doc.transition.chunks(n.max(1)).map(<[f64]>::to_vec).collect(),
        initial: doc.initial,
        emissions: doc
            .states
            .into_iter()
            .map(|s| {
                s.variables
                    .into_iter()
                    .map(|v| LinearGaussian {
                        parents: v.parents,
                        lags: v.lags,
                        coefficients: v.coefficients,
                        variance: v.variance,
                    })
                    .collect()
            })
            .collect(),
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    from_json(&std::fs::read_to_string(path)?)
}
