//! JSON checkpoints for fitted models.
//!
//! ```json
//! { "format": "afape-checkpoint/1", "kind": "policy", "schema_hash": "…", "model": { … } }
//! ```
//!
//! The schema hash is checked on load so a model is never applied to data
//! with a different superfeature layout.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::SuperfeatureSchema;
use crate::error::{AfapeError, Result};

pub const FORMAT: &str = "afape-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub kind: String,
    pub schema_hash: String,
    pub model: T,
}

impl<T> Checkpoint<T> {
    pub fn new(kind: &str, schema: &SuperfeatureSchema, model: T) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            kind: kind.into(),
            schema_hash: schema.fingerprint(),
            model,
        }
    }
}

pub fn to_json<T: Serialize>(kind: &str, schema: &SuperfeatureSchema, model: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Checkpoint::new(kind, schema, model))?)
}

pub fn from_json<T: DeserializeOwned>(text: &str, kind: &str, schema: &SuperfeatureSchema) -> Result<T> {
    let ck: Checkpoint<T> = serde_json::from_str(text)?;
    if ck.format != FORMAT {
        return Err(AfapeError::Data(format!("unsupported checkpoint format {:?}", ck.format)));
    }
    if ck.kind != kind {
        return Err(AfapeError::Data(format!("checkpoint holds a {:?}, expected {kind:?}", ck.kind)));
    }
    if ck.schema_hash != schema.fingerprint() {
        return Err(AfapeError::Data("checkpoint was written for a different schema".into()));
    }
    Ok(ck.model)
}

pub fn save<T: Serialize>(path: impl AsRef<Path>, kind: &str, schema: &SuperfeatureSchema, model: &T) -> Result<()> {
    fs::write(path, to_json(kind, schema, model)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>, kind: &str, schema: &SuperfeatureSchema) -> Result<T> {
    from_json(&fs::read_to_string(path)?, kind, schema)
}
