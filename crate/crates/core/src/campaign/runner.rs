//! Experiment expansion and execution.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{label_hash, CampaignConfig, InjectionPlan, ModelEntry};
use super::rows::ResultRow;
use crate::error::{Error, Result};
use crate::fault::{
    inject_states_in_place, plan_output_hooks, snapshot, BitSelector, FaultModel, FaultRegistry, InjectionReport,
    OutputInjector, Snapshot,
};
use crate::io::dataset::{Dataset, Sample};
use crate::io::weights::load_model;
use crate::metrics::{
    build_correct_set, rates_from_counts, sdc_rate_aggregate, BaselineRecord, ExperimentRates, OutcomeClass,
};
use crate::model::{ModelState, Prediction};
use crate::rng::{derive_stream, RandomStream};

/// Sub-stream labels folded into an experiment's stream.
pub(crate) const LAYER_DRAW: u64 = 0x4C41_5945_5200_0001;
pub(crate) const SAMPLE_DRAW: u64 = 0x5341_4D50_4C45_0002;

/// One experiment: a plan point applied to one model for one seed/repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentDescriptor {
    pub plan_index: usize,
    pub config_id: String,
    pub model_index: usize,
    pub model_id: String,
    pub seed_index: usize,
    pub exp_index: usize,
}

impl ExperimentDescriptor {
    /// `(config_id hash, model_id hash, seed_index, exp_index)`.
    pub fn stream_labels(&self) -> [u64; 4] {
        [label_hash(&self.config_id), label_hash(&self.model_id), self.seed_index as u64, self.exp_index as u64]
    }

    pub fn stream(&self, base_seed: u64) -> RandomStream {
        derive_stream(base_seed, &self.stream_labels())
    }
}

/// Expands a validated config into descriptors ordered by plan, model,
/// seed, experiment.
pub fn expand_grid(config: &CampaignConfig) -> Result<Vec<ExperimentDescriptor>> {
    config.validate()?;
    let plans = config.plans()?;
    let models = config.model_entries()?;
    Ok(descriptors(config, &plans, &models))
}

fn descriptors(config: &CampaignConfig, plans: &[InjectionPlan], models: &[ModelEntry]) -> Vec<ExperimentDescriptor> {
    let mut out = Vec::with_capacity(plans.len() * models.len() * config.n_seeds * config.n_exps);
    for (plan_index, plan) in plans.iter().enumerate() {
        let config_id = plan.config_id();
        for (model_index, model) in models.iter().enumerate() {
            for seed_index in 0..config.n_seeds {
                for exp_index in 0..config.n_exps {
                    out.push(ExperimentDescriptor {
                        plan_index,
                        config_id: config_id.clone(),
                        model_index,
                        model_id: model.id.clone(),
                        seed_index,
                        exp_index,
                    });
                }
            }
        }
    }
    out
}

/// Called around every experiment with the worker's working model.
pub trait CampaignObserver: Sync {
    fn before_experiment(&self, _descriptor: &ExperimentDescriptor, _working: &ModelState, _pristine: &Snapshot) {}
    fn after_experiment(&self, _descriptor: &ExperimentDescriptor, _working: &ModelState, _pristine: &Snapshot) {}
}

struct NoObserver;

impl CampaignObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; results do not depend on this.
    pub workers: usize,
    /// Collect every injection record as JSON lines.
    pub audit: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, audit: false }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOutput {
    pub rows: Vec<ResultRow>,
    /// JSON-lines audit log; empty unless auditing was requested.
    pub audit: Vec<u8>,
}

struct LoadedModel {
    entry: ModelEntry,
    model: ModelState,
    snapshot: Snapshot,
    baseline: BaselineRecord,
    eval_set: Vec<usize>,
}

struct ExperimentResult {
    rates: ExperimentRates,
    audit: Vec<u8>,
}

#[derive(Serialize)]
struct AuditContext<'a> {
    config_id: &'a str,
    model_id: &'a str,
    seed_index: usize,
    exp_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_id: Option<u64>,
}

pub fn run_campaign(config: &CampaignConfig, options: &RunOptions) -> Result<CampaignOutput> {
    run_campaign_observed(config, options, &NoObserver)
}

pub fn run_campaign_observed(
    config: &CampaignConfig,
    options: &RunOptions,
    observer: &dyn CampaignObserver,
) -> Result<CampaignOutput> {
    config.validate()?;
    let plans = config.plans()?;
    let entries = config.model_entries()?;
    let dataset = Dataset::load(&config.dataset)?;
    if dataset.is_empty() {
        return Err(Error::config(format!("dataset {} is empty", config.dataset.display())));
    }
    let models = load_models(config, &entries, &dataset, &plans)?;
    let faults: Vec<Box<dyn FaultModel>> =
        plans.iter().map(|p| FaultRegistry::builtin().build(p.fault())).collect::<Result<_>>()?;
    let descs = descriptors(config, &plans, &entries);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ExperimentResult>> = pool.install(|| {
        descs
            .par_iter()
            .map_init(
                || models.iter().map(|m| m.model.clone()).collect::<Vec<_>>(),
                |working, d| {
                    let ctx = Ctx { config, dataset: &dataset, options, observer };
                    ctx.run_one(
                        d,
                        &plans[d.plan_index],
                        faults[d.plan_index].as_ref(),
                        &models[d.model_index],
                        &mut working[d.model_index],
                    )
                },
            )
            .collect()
    });

    let mut output = CampaignOutput::default();
    let mut per_group: BTreeMap<(usize, usize), Vec<ExperimentRates>> = BTreeMap::new();
    for (d, result) in descs.iter().zip(results) {
        let result = result?;
        let model = &models[d.model_index];
        output.rows.push(make_row(
            d,
            &plans[d.plan_index],
            model,
            &result.rates,
            d.seed_index as i64,
            d.exp_index as i64,
        ));
        output.audit.extend(result.audit);
        let group = per_group.entry((d.plan_index, d.model_index)).or_default();
        group.push(result.rates);
        if group.len() == config.n_exps * config.n_seeds {
            output.rows.push(aggregate_row(d, &plans[d.plan_index], model, group, config)?);
        }
    }
    Ok(output)
}

fn load_models(
    config: &CampaignConfig,
    entries: &[ModelEntry],
    dataset: &Dataset,
    plans: &[InjectionPlan],
) -> Result<Vec<LoadedModel>> {
    let mut loaded = Vec::with_capacity(entries.len());
    for entry in entries {
        let model = load_model(&entry.path).map_err(|e| match e {
            Error::Io(io) => {
                Error::config(format!("cannot load model {} from {}: {io}", entry.id, entry.path.display()))
            }
            other => other,
        })?;
        let threshold = model.require_threshold()?;
        if model.definition.input_dim != dataset.n_features() {
            return Err(Error::config(format!(
                "model {} expects {} features but the dataset has {}",
                entry.id,
                model.definition.input_dim,
                dataset.n_features()
            )));
        }
        for plan in plans {
            if let InjectionPlan::Output(p) = plan {
                p.validate_for(&model.definition)
                    .map_err(|e| Error::config(format!("{} on model {}: {e}", plan.config_id(), entry.id)))?;
            }
        }
        let mut scored = Vec::with_capacity(dataset.len());
        for s in &dataset.samples {
            let pred = Prediction::from_score(model.log_prob(&s.features)?, threshold);
            if pred.is_due() {
                return Err(Error::config(format!(
                    "model {} has a non-finite fault-free score on sample {}",
                    entry.id, s.id
                )));
            }
            scored.push((s.id, s.label, pred));
        }
        let baseline = BaselineRecord::new(scored)?;
        let snapshot = snapshot(&model);
        loaded.push(LoadedModel { entry: entry.clone(), model, snapshot, baseline, eval_set: Vec::new() });
    }

    let baselines: Vec<&BaselineRecord> = loaded.iter().map(|m| &m.baseline).collect();
    let sets = build_correct_set(config.metric.variant, &baselines)?;
    let position: BTreeMap<u64, usize> = dataset.samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    for (m, set) in loaded.iter_mut().zip(sets) {
        if set.is_empty() {
            return Err(Error::MetricUndefined(format!("model {} classifies no sample correctly", m.entry.id)));
        }
        m.eval_set = set.iter().map(|id| position[id]).collect();
    }
    Ok(loaded)
}

struct Ctx<'a> {
    config: &'a CampaignConfig,
    dataset: &'a Dataset,
    options: &'a RunOptions,
    observer: &'a dyn CampaignObserver,
}

impl Ctx<'_> {
    fn run_one(
        &self,
        d: &ExperimentDescriptor,
        plan: &InjectionPlan,
        fault: &dyn FaultModel,
        model: &LoadedModel,
        working: &mut ModelState,
    ) -> Result<ExperimentResult> {
        self.observer.before_experiment(d, working, &model.snapshot);
        let mut stream = d.stream(self.config.base_seed);
        let mut audit = Vec::new();
        let threshold = model.model.require_threshold()?;
        let samples = model.eval_set.iter().map(|&i| &self.dataset.samples[i]);
        let mut counts = [0u64; 3];
        let mut tally = |sample: &Sample, pred: Prediction| {
            counts[OutcomeClass::of(sample.label, pred) as usize] += 1;
        };

        match plan {
            InjectionPlan::State(p) => {
                let report = inject_states_in_place(working, p, fault, &mut stream);
                for s in samples {
                    tally(s, Prediction::from_score(working.log_prob(&s.features)?, threshold));
                }
                self.write_audit(&mut audit, d, None, &report)?;
                // Reset to the pristine state for the next experiment on this worker.
                working.clone_from(&model.model);
            }
            InjectionPlan::Output(p) => {
                let sites = plan_output_hooks(&working.definition, p, &mut stream.fold(LAYER_DRAW))?;
                let sample_base = stream.fold(SAMPLE_DRAW);
                for s in samples {
                    let mut injector = OutputInjector::new(&sites, fault, p.amount, sample_base.fold(s.id));
                    let lp = working.log_prob_visit(&s.features, &mut injector)?;
                    tally(s, Prediction::from_score(lp, threshold));
                    self.write_audit(&mut audit, d, Some(s.id), &injector.into_report())?;
                }
            }
        }
        self.observer.after_experiment(d, working, &model.snapshot);

        Ok(ExperimentResult {
            rates: rates_from_counts(counts[1], counts[2], counts[0], self.config.metric.due_policy),
            audit,
        })
    }

    fn write_audit(
        &self,
        out: &mut Vec<u8>,
        d: &ExperimentDescriptor,
        sample_id: Option<u64>,
        report: &InjectionReport,
    ) -> Result<()> {
        if self.options.audit {
            let ctx = AuditContext {
                config_id: &d.config_id,
                model_id: &d.model_id,
                seed_index: d.seed_index,
                exp_index: d.exp_index,
                sample_id,
            };
            report.write_jsonl(out, &ctx)?;
        }
        Ok(())
    }
}

fn plan_columns(plan: &InjectionPlan) -> [String; 10] {
    let fault = plan.fault();
    let opt = |v: Option<String>| v.unwrap_or_default();
    let (mode, variable, activation, method) = match plan {
        InjectionPlan::State(p) => (p.mode.to_string(), p.variable.name().to_string(), String::new(), String::new()),
        InjectionPlan::Output(p) => (
            p.mode.label(),
            p.variable.name().to_string(),
            p.activation.name().to_string(),
            p.method.name().to_string(),
        ),
    };
    let bitflip = fault.kind == "bitflip";
    [
        plan.domain().to_string(),
        fault.kind.clone(),
        mode,
        variable,
        plan.amount().to_string(),
        opt(bitflip.then(|| fault.bit.unwrap_or(BitSelector::Random).label())),
        opt(bitflip.then(|| fault.direction.map_or("both", |d| d.name()).to_string())),
        opt(bitflip.then(|| fault.sign.map_or("both", |s| s.name()).to_string())),
        activation,
        method,
    ]
}

fn make_row(
    d: &ExperimentDescriptor,
    plan: &InjectionPlan,
    model: &LoadedModel,
    rates: &ExperimentRates,
    seed_index: i64,
    exp_index: i64,
) -> ResultRow {
    build_row(
        d,
        plan,
        model,
        seed_index,
        exp_index,
        [rates.sdc().value(), rates.due().value(), rates.masked().value()],
        rates.n_samples,
    )
}

fn build_row(
    d: &ExperimentDescriptor,
    plan: &InjectionPlan,
    model: &LoadedModel,
    seed_index: i64,
    exp_index: i64,
    [sdc, due, masked]: [f64; 3],
    n_samples: u64,
) -> ResultRow {
    let [injection_domain, fault_type, mode, variable, amount, bit, direction, sign, activation, method] =
        plan_columns(plan);
    ResultRow {
        config_id: d.config_id.clone(),
        model_id: d.model_id.clone(),
        seed_index,
        exp_index,
        injection_domain,
        fault_type,
        mode,
        variable,
        amount,
        bit,
        direction,
        sign,
        activation,
        method,
        sdc_rate: sdc,
        due_rate: due,
        masked_rate: masked,
        n_samples,
        baseline_accuracy: model.baseline.accuracy(),
    }
}

fn aggregate_row(
    d: &ExperimentDescriptor,
    plan: &InjectionPlan,
    model: &LoadedModel,
    group: &[ExperimentRates],
    config: &CampaignConfig,
) -> Result<ResultRow> {
    let agg = |f: fn(&ExperimentRates) -> crate::metrics::Fraction| {
        let fr: Vec<_> = group.iter().map(f).collect();
        sdc_rate_aggregate(&fr, config.n_exps, config.n_seeds)
    };
    let rates = [agg(ExperimentRates::sdc)?, agg(ExperimentRates::due)?, agg(ExperimentRates::masked)?];
    Ok(build_row(d, plan, model, -1, -1, rates, group[0].n_samples))
}

/// Ids of the samples each loaded model is scored on; exposed for tests.
pub fn evaluation_sets(config: &CampaignConfig) -> Result<BTreeMap<String, BTreeSet<u64>>> {
    let plans = config.plans()?;
    let entries = config.model_entries()?;
    let dataset = Dataset::load(&config.dataset)?;
    let models = load_models(config, &entries, &dataset, &plans)?;
    Ok(models
        .into_iter()
        .map(|m| (m.entry.id.clone(), m.eval_set.iter().map(|&i| dataset.samples[i].id).collect()))
        .collect())
}
