//! Model files, datasets, the synthetic generator and the model grid.

pub mod dataset;
pub mod grid;
pub mod synthetic;
pub mod weights;

pub use dataset::{Dataset, Sample};
pub use grid::{build_model_grid, grid_model_ids};
pub use synthetic::{generate_synthetic, AnomalyKind, Splits, SyntheticSpec};
pub use weights::{load_model, save_model};
