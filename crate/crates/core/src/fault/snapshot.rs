use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::weights;
use crate::model::ModelState;

/// Bit-exact frozen copy of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    bytes: Vec<u8>,
}

impl Snapshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// SHA-256 of the snapshot bytes, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

pub fn snapshot(model: &ModelState) -> Snapshot {
    Snapshot { bytes: weights::encode(model) }
}

pub fn restore(snapshot: &Snapshot) -> Result<ModelState> {
    weights::decode(&snapshot.bytes)
}

/// SHA-256 over the canonical serialization of `model`.
pub fn model_digest(model: &ModelState) -> String {
    snapshot(model).digest()
}
