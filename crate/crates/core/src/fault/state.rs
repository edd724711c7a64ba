//! Layer-state injection: corrupt stored weights and biases before inference.

use serde::{Deserialize, Serialize};

use super::report::{InjectionRecord, InjectionReport, TargetKind};
use super::select::select_targets;
use super::strategy::{FaultModel, FaultRegistry, FaultSpec};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::rng::RandomStream;

pub const STATE_MODES: [u32; 5] = [20, 40, 60, 80, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateVariable {
    Bias,
    Weight,
    All,
}

impl StateVariable {
    pub fn name(self) -> &'static str {
        match self {
            StateVariable::Bias => "bias",
            StateVariable::Weight => "weight",
            StateVariable::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateInjectionPlan {
    /// Percentage of FC layers to corrupt.
    pub mode: u32,
    pub variable: StateVariable,
    pub fault: FaultSpec,
    /// Percentage of the selected variable's elements corrupted per layer.
    pub amount: f64,
}

impl StateInjectionPlan {
    pub fn validate(&self) -> Result<()> {
        if !STATE_MODES.contains(&self.mode) {
            return Err(Error::config(format!("state mode {}% not one of {STATE_MODES:?}", self.mode)));
        }
        check_amount(self.amount)?;
        FaultRegistry::builtin().build(&self.fault).map(|_| ())
    }
}

pub(crate) fn check_amount(amount: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&amount) {
        return Err(Error::config(format!("injection amount {amount}% outside [0, 100]")));
    }
    Ok(())
}

/// Number of FC layers hit for a `mode` percentage: `ceil(mode/100 * total)`.
pub fn layer_count(mode: u32, total: usize) -> usize {
    (mode as usize * total).div_ceil(100)
}

/// Returns a corrupted copy of `model`; the input is left untouched.
pub fn inject_states(
    model: &ModelState,
    plan: &StateInjectionPlan,
    stream: &mut RandomStream,
) -> Result<(ModelState, InjectionReport)> {
    plan.validate()?;
    let fault = FaultRegistry::builtin().build(&plan.fault)?;
    let mut corrupted = model.clone();
    let report = inject_states_in_place(&mut corrupted, plan, fault.as_ref(), stream);
    Ok((corrupted, report))
}

/// Corrupts `model` in place with an already-built fault model.
///
/// Stream consumption order: layer choice, then for each chosen layer (in
/// canonical order) weights before biases, each as target choice followed
/// by one corruption per target.
pub fn inject_states_in_place(
    model: &mut ModelState,
    plan: &StateInjectionPlan,
    fault: &dyn FaultModel,
    stream: &mut RandomStream,
) -> InjectionReport {
    let sites = model.definition.sites();
    let mut chosen = stream.sample_indices(sites.len(), layer_count(plan.mode, sites.len()));
    chosen.sort_unstable();

    let mut report = InjectionReport::default();
    let filter = fault.sign_filter();
    for site in chosen.into_iter().map(|i| sites[i]) {
        let layer = model.fc_layer_mut(site);
        let arrays: [(TargetKind, &mut [f32]); 2] =
            [(TargetKind::Weight, layer.weights.as_mut_slice()), (TargetKind::Bias, layer.bias.as_mut_slice())];
        for (kind, values) in arrays {
            let wanted = match plan.variable {
                StateVariable::All => true,
                StateVariable::Weight => kind == TargetKind::Weight,
                StateVariable::Bias => kind == TargetKind::Bias,
            };
            if !wanted {
                continue;
            }
            for idx in select_targets(values, plan.amount, filter, stream) {
                let old = values[idx];
                let c = fault.corrupt(old, stream);
                values[idx] = c.value;
                report.records.push(InjectionRecord::new(site, kind, idx, c.bit, old, c.value));
            }
        }
    }
    report
}
