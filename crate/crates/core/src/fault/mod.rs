//! Fault injection into layer states and layer outputs.

pub mod bits;
pub mod output;
pub mod report;
pub mod select;
pub mod snapshot;
pub mod state;
pub mod strategy;

pub use bits::{flip_bit, BitSelector, Direction, SignFilter};
pub use output::{
    forward_with_output_injection, plan_output_hooks, ActivationFilter, LayerMode, Method, OutputInjectionPlan,
    OutputInjector, OutputVariable,
};
pub use report::{InjectionRecord, InjectionReport, TargetKind};
pub use select::{select_targets, target_count};
pub use snapshot::{model_digest, restore, snapshot, Snapshot};
pub use state::{inject_states, inject_states_in_place, StateInjectionPlan, StateVariable};
pub use strategy::{BitFlip, Corruption, FaultFactory, FaultModel, FaultRegistry, FaultSpec, Gaussian, Zeros};
