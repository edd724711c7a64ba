//! Fault-injection campaigns against Real NVP anomaly detectors.
//!
//! The crate covers deterministic binary32 inference ([`numeric`],
//! [`model`]), parameter and activation corruption ([`fault`]), outcome
//! scoring ([`metrics`]), campaign execution ([`campaign`]) and file
//! formats ([`io`]).

pub mod campaign;
pub mod error;
pub mod fault;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod rng;

pub use error::{Error, Result};
pub use model::{ModelDefinition, ModelState};
pub use rng::{derive_stream, RandomStream};
