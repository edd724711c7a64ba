//! Layer-output injection: corrupt post-activation values during inference.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::report::{InjectionRecord, InjectionReport, TargetKind};
use super::select::select_targets;
use super::state::check_amount;
use super::strategy::{FaultModel, FaultRegistry, FaultSpec};
use crate::error::{Error, Result};
use crate::model::{ModelDefinition, ModelState, NetKind, OutputVisitor, Site};
use crate::numeric::ActivationKind;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerMode {
    Specific(usize),
    Random,
    All,
}

impl LayerMode {
    pub fn label(self) -> String {
        match self {
            LayerMode::Specific(i) => i.to_string(),
            LayerMode::Random => "random".into(),
            LayerMode::All => "all".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputVariable {
    Scale,
    Translation,
    All,
}

impl OutputVariable {
    pub fn name(self) -> &'static str {
        match self {
            OutputVariable::Scale => "scale",
            OutputVariable::Translation => "translation",
            OutputVariable::All => "all",
        }
    }

    fn nets(self) -> &'static [NetKind] {
        match self {
            OutputVariable::Scale => &[NetKind::Scale],
            OutputVariable::Translation => &[NetKind::Translation],
            OutputVariable::All => &[NetKind::Scale, NetKind::Translation],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFilter {
    Relu,
    Tanh,
    Linear,
    All,
}

impl ActivationFilter {
    pub fn accepts(self, act: ActivationKind) -> bool {
        match self {
            ActivationFilter::Relu => act == ActivationKind::Relu,
            ActivationFilter::Tanh => act == ActivationKind::Tanh,
            ActivationFilter::Linear => act == ActivationKind::Linear,
            ActivationFilter::All => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationFilter::Relu => "relu",
            ActivationFilter::Tanh => "tanh",
            ActivationFilter::Linear => "linear",
            ActivationFilter::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Only the final FC layer of each targeted net.
    Partial,
    /// Every FC layer of each targeted net.
    Complete,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Partial => "partial",
            Method::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputInjectionPlan {
    pub mode: LayerMode,
    pub variable: OutputVariable,
    pub activation: ActivationFilter,
    pub method: Method,
    pub fault: FaultSpec,
    pub amount: f64,
}

impl OutputInjectionPlan {
    pub fn validate(&self) -> Result<()> {
        check_amount(self.amount)?;
        FaultRegistry::builtin().build(&self.fault).map(|_| ())
    }

    pub fn validate_for(&self, def: &ModelDefinition) -> Result<()> {
        self.validate()?;
        if let LayerMode::Specific(i) = self.mode {
            if i >= def.n_coupling {
                return Err(Error::config(format!(
                    "output injection targets coupling layer {i} but the model has {}",
                    def.n_coupling
                )));
            }
        }
        Ok(())
    }

    /// Pins a `Random` layer choice to a concrete coupling layer.
    pub fn resolve_layer(&self, def: &ModelDefinition, stream: &mut RandomStream) -> Self {
        let mut plan = self.clone();
        if plan.mode == LayerMode::Random {
            plan.mode = LayerMode::Specific(stream.below(def.n_coupling as u64) as usize);
        }
        plan
    }
}

/// Hook sites for `plan`. A `Random` layer mode draws its layer from `stream`.
pub fn plan_output_hooks(
    def: &ModelDefinition,
    plan: &OutputInjectionPlan,
    stream: &mut RandomStream,
) -> Result<BTreeSet<Site>> {
    plan.validate_for(def)?;
    let couplings: Vec<usize> = match plan.resolve_layer(def, stream).mode {
        LayerMode::Specific(i) => vec![i],
        LayerMode::All => (0..def.n_coupling).collect(),
        LayerMode::Random => unreachable!("resolved above"),
    };
    let fcs: Vec<usize> = match plan.method {
        Method::Partial => vec![def.fc_depth - 1],
        Method::Complete => (0..def.fc_depth).collect(),
    };
    let mut sites = BTreeSet::new();
    for &coupling in &couplings {
        for &net in plan.variable.nets() {
            for &fc in &fcs {
                if plan.activation.accepts(def.activation(net, fc)) {
                    sites.insert(Site { coupling, net, fc });
                }
            }
        }
    }
    Ok(sites)
}

/// Visitor that corrupts outputs at a fixed set of sites.
pub struct OutputInjector<'a> {
    sites: &'a BTreeSet<Site>,
    fault: &'a dyn FaultModel,
    amount: f64,
    stream: RandomStream,
    report: InjectionReport,
}

impl<'a> OutputInjector<'a> {
    pub fn new(sites: &'a BTreeSet<Site>, fault: &'a dyn FaultModel, amount: f64, stream: RandomStream) -> Self {
        Self { sites, fault, amount, stream, report: InjectionReport::default() }
    }

    pub fn into_report(self) -> InjectionReport {
        self.report
    }
}

impl OutputVisitor for OutputInjector<'_> {
    fn visit(&mut self, site: Site, _: ActivationKind, output: &mut [f32]) {
        if !self.sites.contains(&site) {
            return;
        }
        for idx in select_targets(output, self.amount, self.fault.sign_filter(), &mut self.stream) {
            let old = output[idx];
            let c = self.fault.corrupt(old, &mut self.stream);
            output[idx] = c.value;
            self.report.records.push(InjectionRecord::new(site, TargetKind::Output, idx, c.bit, old, c.value));
        }
    }
}

/// Log-likelihood of `x` with outputs corrupted at every hook site of `plan`.
pub fn forward_with_output_injection(
    model: &ModelState,
    x: &[f32],
    plan: &OutputInjectionPlan,
    stream: &mut RandomStream,
) -> Result<(f32, InjectionReport)> {
    let sites = plan_output_hooks(&model.definition, plan, stream)?;
    let fault = FaultRegistry::builtin().build(&plan.fault)?;
    let mut injector = OutputInjector::new(&sites, fault.as_ref(), plan.amount, stream.clone());
    let lp = model.log_prob_visit(x, &mut injector)?;
    Ok((lp, injector.into_report()))
}
