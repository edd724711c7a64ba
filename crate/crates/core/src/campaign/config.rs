//! Campaign configuration file and sweep expansion.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fault::{
    ActivationFilter, BitSelector, Direction, FaultSpec, LayerMode, Method, OutputInjectionPlan, OutputVariable,
    SignFilter, StateInjectionPlan, StateVariable,
};
use crate::io::grid::grid_model_ids;
use crate::metrics::{DuePolicy, SdcVariant};

fn default_n_exps() -> usize {
    10
}

fn default_n_seeds() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub id: String,
    pub path: PathBuf,
}

/// Directory holding one `<id>.rnvp` file per grid model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGridRef {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default)]
    pub variant: SdcVariant,
    #[serde(default)]
    pub due_policy: DuePolicy,
}

/// A fault axis: every list-valued field is crossed with the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultAxis {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit: Option<Vec<BitSelector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<Direction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Vec<SignFilter>>,
}

fn opt_axis<T: Clone>(name: &str, values: &Option<Vec<T>>) -> Result<Vec<Option<T>>> {
    match values {
        None => Ok(vec![None]),
        Some(v) if v.is_empty() => Err(Error::config(format!("sweep axis {name:?} is empty"))),
        Some(v) => Ok(v.iter().cloned().map(Some).collect()),
    }
}

fn axis<'a, T>(name: &str, values: &'a [T]) -> Result<&'a [T]> {
    if values.is_empty() {
        return Err(Error::config(format!("sweep axis {name:?} is empty")));
    }
    Ok(values)
}

impl FaultAxis {
    pub fn expand(&self) -> Result<Vec<FaultSpec>> {
        let mut out = Vec::new();
        for mean in opt_axis("mean", &self.mean)? {
            for std in opt_axis("std", &self.std)? {
                for bit in opt_axis("bit", &self.bit)? {
                    for direction in opt_axis("direction", &self.direction)? {
                        for sign in opt_axis("sign", &self.sign)? {
                            out.push(FaultSpec {
                                kind: self.kind.clone(),
                                mean,
                                std,
                                additive: self.additive,
                                bit,
                                direction,
                                sign,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSweep {
    pub fault: Vec<FaultAxis>,
    pub mode: Vec<u32>,
    pub variable: Vec<StateVariable>,
    pub amount: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSweep {
    pub fault: Vec<FaultAxis>,
    pub mode: Vec<LayerMode>,
    pub variable: Vec<OutputVariable>,
    pub activation: Vec<ActivationFilter>,
    pub method: Vec<Method>,
    pub amount: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub base_seed: u64,
    #[serde(default = "default_n_exps")]
    pub n_exps: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub models: Vec<ModelRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_grid: Option<ModelGridRef>,
    pub dataset: PathBuf,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub state_sweeps: Vec<StateSweep>,
    #[serde(default)]
    pub output_sweeps: Vec<OutputSweep>,
}

/// One point of the plan cross product.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectionPlan {
    State(StateInjectionPlan),
    Output(OutputInjectionPlan),
}

impl InjectionPlan {
    pub fn domain(&self) -> &'static str {
        match self {
            InjectionPlan::State(_) => "state",
            InjectionPlan::Output(_) => "output",
        }
    }

    pub fn fault(&self) -> &FaultSpec {
        match self {
            InjectionPlan::State(p) => &p.fault,
            InjectionPlan::Output(p) => &p.fault,
        }
    }

    pub fn amount(&self) -> f64 {
        match self {
            InjectionPlan::State(p) => p.amount,
            InjectionPlan::Output(p) => p.amount,
        }
    }

    /// Stable identifier built from every plan field.
    pub fn config_id(&self) -> String {
        match self {
            InjectionPlan::State(p) => {
                format!("state|{}|mode={}|var={}|amt={}", p.fault.label(), p.mode, p.variable.name(), p.amount)
            }
            InjectionPlan::Output(p) => format!(
                "output|{}|mode={}|var={}|act={}|method={}|amt={}",
                p.fault.label(),
                p.mode.label(),
                p.variable.name(),
                p.activation.name(),
                p.method.name(),
                p.amount
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InjectionPlan::State(p) => p.validate(),
            InjectionPlan::Output(p) => p.validate(),
        }
    }
}

/// A model resolved from the config, not yet loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelEntry {
    pub id: String,
    pub path: PathBuf,
}

/// First 8 bytes of SHA-256, little-endian; used as a stream label.
pub fn label_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

impl CampaignConfig {
    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        for m in &mut self.models {
            fix(&mut m.path);
        }
        if let Some(g) = &mut self.model_grid {
            fix(&mut g.dir);
        }
    }

    pub fn model_entries(&self) -> Result<Vec<ModelEntry>> {
        let mut entries: Vec<ModelEntry> =
            self.models.iter().map(|m| ModelEntry { id: m.id.clone(), path: m.path.clone() }).collect();
        if let Some(grid) = &self.model_grid {
            entries.extend(
                grid_model_ids().into_iter().map(|id| ModelEntry { path: grid.dir.join(format!("{id}.rnvp")), id }),
            );
        }
        if entries.is_empty() {
            return Err(Error::config("campaign lists no models"));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::config(format!("model id {:?} listed twice", e.id)));
            }
        }
        Ok(entries)
    }

    /// Cross product of every sweep, validated as a whole. All invalid
    /// points are reported together.
    pub fn plans(&self) -> Result<Vec<InjectionPlan>> {
        let mut plans = Vec::new();
        for sweep in &self.state_sweeps {
            for axis_entry in axis("fault", &sweep.fault)? {
                for fault in axis_entry.expand()? {
                    for &mode in axis("mode", &sweep.mode)? {
                        for &variable in axis("variable", &sweep.variable)? {
                            for &amount in axis("amount", &sweep.amount)? {
                                plans.push(InjectionPlan::State(StateInjectionPlan {
                                    mode,
                                    variable,
                                    fault: fault.clone(),
                                    amount,
                                }));
                            }
                        }
                    }
                }
            }
        }
        for sweep in &self.output_sweeps {
            for axis_entry in axis("fault", &sweep.fault)? {
                for fault in axis_entry.expand()? {
                    for &mode in axis("mode", &sweep.mode)? {
                        for &variable in axis("variable", &sweep.variable)? {
                            for &activation in axis("activation", &sweep.activation)? {
                                for &method in axis("method", &sweep.method)? {
                                    for &amount in axis("amount", &sweep.amount)? {
                                        plans.push(InjectionPlan::Output(OutputInjectionPlan {
                                            mode,
                                            variable,
                                            activation,
                                            method,
                                            fault: fault.clone(),
                                            amount,
                                        }));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if plans.is_empty() {
            return Err(Error::config("campaign has no injection plans"));
        }

        let mut problems = Vec::new();
        let mut ids = BTreeSet::new();
        for plan in &plans {
            let id = plan.config_id();
            if let Err(e) = plan.validate() {
                problems.push(format!("{id}: {e}"));
            }
            if !ids.insert(id.clone()) {
                problems.push(format!("{id}: duplicate plan"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::config(format!("invalid plans:\n  {}", problems.join("\n  "))));
        }
        Ok(plans)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_exps == 0 || self.n_seeds == 0 {
            return Err(Error::config("n_exps and n_seeds must be at least 1"));
        }
        self.model_entries()?;
        self.plans()?;
        Ok(())
    }
}
