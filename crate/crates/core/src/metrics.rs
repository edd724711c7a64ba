//! SDC, DUE and masked-fault rates.
//!
//! Everything is counted in integers; a rate becomes a float only when it
//! is reported.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuePolicy {
    /// DUE events get their own rate.
    #[default]
    SeparateDue,
    /// DUE events are folded into the SDC numerator.
    DueCountsAsSdc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdcVariant {
    /// Every model is scored on the samples all models classify correctly.
    Absolute,
    /// Each model is scored on its own correctly classified samples.
    #[default]
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeClass {
    Masked,
    Sdc,
    Due,
}

impl OutcomeClass {
    pub fn of(truth: Label, faulty: Prediction) -> Self {
        match faulty {
            Prediction::Due => OutcomeClass::Due,
            Prediction::Label(l) if l == truth => OutcomeClass::Masked,
            Prediction::Label(_) => OutcomeClass::Sdc,
        }
    }
}

/// Fault-free predictions of one model on a labelled sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRecord {
    labels: BTreeMap<u64, Label>,
    predictions: BTreeMap<u64, Label>,
}

impl BaselineRecord {
    /// Fails if any fault-free prediction is a DUE or an id repeats.
    pub fn new(samples: impl IntoIterator<Item = (u64, Label, Prediction)>) -> Result<Self> {
        let mut labels = BTreeMap::new();
        let mut predictions = BTreeMap::new();
        for (id, truth, pred) in samples {
            let Prediction::Label(pred) = pred else {
                return Err(Error::config(format!("fault-free prediction for sample {id} is not finite")));
            };
            if labels.insert(id, truth).is_some() {
                return Err(Error::config(format!("sample id {id} appears twice")));
            }
            predictions.insert(id, pred);
        }
        Ok(Self { labels, predictions })
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.labels.keys().copied()
    }

    pub fn label(&self, id: u64) -> Option<Label> {
        self.labels.get(&id).copied()
    }

    pub fn correct_set(&self) -> BTreeSet<u64> {
        self.labels.iter().filter(|(id, truth)| self.predictions[id] == **truth).map(|(&id, _)| id).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.correct_set().len() as f64 / self.labels.len() as f64
    }
}

/// Faulty predictions from one experiment, keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutcome {
    pub predictions: BTreeMap<u64, Prediction>,
}

impl ExperimentOutcome {
    /// Outcome class of every sample in `eval_set`.
    pub fn classes(&self, baseline: &BaselineRecord, eval_set: &BTreeSet<u64>) -> Result<BTreeMap<u64, OutcomeClass>> {
        eval_set
            .iter()
            .map(|&id| {
                let truth =
                    baseline.label(id).ok_or_else(|| Error::config(format!("sample {id} is not in the baseline")))?;
                let pred = self
                    .predictions
                    .get(&id)
                    .ok_or_else(|| Error::config(format!("experiment has no prediction for sample {id}")))?;
                Ok((id, OutcomeClass::of(truth, *pred)))
            })
            .collect()
    }
}

/// An exact rate `numerator / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    pub numerator: u64,
    pub denominator: u64,
}

impl Fraction {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        assert!(denominator > 0, "fraction with zero denominator");
        Self { numerator, denominator }
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

/// Per-experiment counts over the evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExperimentRates {
    pub sdc_count: u64,
    pub due_count: u64,
    pub masked_count: u64,
    pub n_samples: u64,
}

impl ExperimentRates {
    pub fn sdc(&self) -> Fraction {
        Fraction::new(self.sdc_count, self.n_samples)
    }

    pub fn due(&self) -> Fraction {
        Fraction::new(self.due_count, self.n_samples)
    }

    pub fn masked(&self) -> Fraction {
        Fraction::new(self.masked_count, self.n_samples)
    }
}

/// SDC/DUE/masked rates of one experiment over the baseline's correct set.
pub fn sdc_rate_exp(
    baseline: &BaselineRecord,
    outcome: &ExperimentOutcome,
    policy: DuePolicy,
) -> Result<ExperimentRates> {
    sdc_rate_exp_on(&baseline.correct_set(), baseline, outcome, policy)
}

/// Same as [`sdc_rate_exp`] over an explicit evaluation set.
pub fn sdc_rate_exp_on(
    eval_set: &BTreeSet<u64>,
    baseline: &BaselineRecord,
    outcome: &ExperimentOutcome,
    policy: DuePolicy,
) -> Result<ExperimentRates> {
    if eval_set.is_empty() {
        return Err(Error::MetricUndefined("no correctly classified samples to evaluate".into()));
    }
    let mut counts = [0u64; 3];
    for class in outcome.classes(baseline, eval_set)?.values() {
        counts[*class as usize] += 1;
    }
    Ok(rates_from_counts(counts[1], counts[2], counts[0], policy))
}

/// Assembles rates from raw counts under `policy`.
pub fn rates_from_counts(sdc: u64, due: u64, masked: u64, policy: DuePolicy) -> ExperimentRates {
    let n_samples = sdc + due + masked;
    match policy {
        DuePolicy::SeparateDue => ExperimentRates { sdc_count: sdc, due_count: due, masked_count: masked, n_samples },
        DuePolicy::DueCountsAsSdc => {
            ExperimentRates { sdc_count: sdc + due, due_count: 0, masked_count: masked, n_samples }
        }
    }
}

/// Mean of `n_exps * n_seeds` per-experiment rates, computed exactly. The
/// reduced result is rounded once provided both its terms fit in 53 bits.
pub fn sdc_rate_aggregate(per_experiment: &[Fraction], n_exps: usize, n_seeds: usize) -> Result<f64> {
    let expected = n_exps * n_seeds;
    if expected == 0 || per_experiment.len() != expected {
        return Err(Error::config(format!(
            "aggregate expects {n_exps} x {n_seeds} = {expected} experiments, got {}",
            per_experiment.len()
        )));
    }
    let sum = per_experiment
        .iter()
        .fold(Ratio::<u128>::from_integer(0), |acc, f| acc + Ratio::new(f.numerator as u128, f.denominator as u128));
    let mean = sum / Ratio::from_integer(expected as u128);
    Ok(*mean.numer() as f64 / *mean.denom() as f64)
}

/// Evaluation set per model, in the order of `baselines`.
pub fn build_correct_set(variant: SdcVariant, baselines: &[&BaselineRecord]) -> Result<Vec<BTreeSet<u64>>> {
    if baselines.is_empty() {
        return Err(Error::config("at least one model is required"));
    }
    let own: Vec<BTreeSet<u64>> = baselines.iter().map(|b| b.correct_set()).collect();
    match variant {
        SdcVariant::Relative => Ok(own),
        SdcVariant::Absolute => {
            let shared = own.iter().skip(1).fold(own[0].clone(), |acc, s| acc.intersection(s).copied().collect());
            if shared.is_empty() {
                return Err(Error::MetricUndefined("models share no correctly classified sample".into()));
            }
            Ok(vec![shared; baselines.len()])
        }
    }
}
