//! Synthetic multichannel telemetry windows.
//!
//! Nominal windows follow a stationary AR(1) process per channel with unit
//! marginal variance. Channels beyond the first are partially driven by
//! channel 0, so the data carries cross-channel structure for a flow to
//! learn. Anomalous windows perturb one randomly chosen channel.

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::Label;
use crate::rng::{derive_stream, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    /// Constant offset of `magnitude` on one channel.
    BiasShift,
    /// One channel frozen at `magnitude`.
    StuckAt,
    /// Extra `N(0, magnitude^2)` noise on half of one channel's window.
    NoiseBurst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_channels: usize,
    pub window_len: usize,
    pub n_nominal: usize,
    pub n_anomalous: usize,
    pub anomaly_kind: AnomalyKind,
    pub magnitude: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_channels: 4,
            window_len: 4,
            n_nominal: 1200,
            n_anomalous: 150,
            anomaly_kind: AnomalyKind::BiasShift,
            magnitude: 10.0,
            seed: 2024,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.window_len == 0 {
            return Err(Error::config("n_channels and window_len must be positive"));
        }
        if self.n_channels * self.window_len < 2 {
            return Err(Error::config("a window needs at least two features"));
        }
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::config(format!("magnitude must be positive, got {}", self.magnitude)));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.n_channels * self.window_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Dataset)> {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)].into_iter()
    }
}

struct Process {
    phi: Vec<f64>,
    coupling: Vec<f64>,
}

impl Process {
    fn new(spec: &SyntheticSpec) -> Self {
        let mut s = derive_stream(spec.seed, &[0]);
        let phi = (0..spec.n_channels).map(|_| 0.5 + 0.4 * s.next_f64()).collect();
        let coupling = (0..spec.n_channels).map(|c| if c == 0 { 0.0 } else { 0.3 + 0.5 * s.next_f64() }).collect();
        Self { phi, coupling }
    }

    /// Time-major window: feature `t * n_channels + c`.
    fn window(&self, spec: &SyntheticSpec, s: &mut RandomStream) -> Vec<f64> {
        let nc = spec.n_channels;
        let mut own: Vec<f64> = (0..nc).map(|_| s.standard_normal()).collect();
        let mut out = Vec::with_capacity(spec.n_features());
        for t in 0..spec.window_len {
            if t > 0 {
                for (c, v) in own.iter_mut().enumerate() {
                    let phi = self.phi[c];
                    *v = phi * *v + (1.0 - phi * phi).sqrt() * s.standard_normal();
                }
            }
            for c in 0..nc {
                let rho = self.coupling[c];
                out.push(if c == 0 { own[0] } else { rho * own[0] + (1.0 - rho * rho).sqrt() * own[c] });
            }
        }
        out
    }
}

fn apply_anomaly(spec: &SyntheticSpec, w: &mut [f64], s: &mut RandomStream) {
    let nc = spec.n_channels;
    let channel = s.below(nc as u64) as usize;
    let m = spec.magnitude as f64;
    match spec.anomaly_kind {
        AnomalyKind::BiasShift => {
            for t in 0..spec.window_len {
                w[t * nc + channel] += m;
            }
        }
        AnomalyKind::StuckAt => {
            for t in 0..spec.window_len {
                w[t * nc + channel] = m;
            }
        }
        AnomalyKind::NoiseBurst => {
            let len = (spec.window_len / 2).max(1);
            let start = s.below((spec.window_len - len + 1) as u64) as usize;
            for t in start..start + len {
                w[t * nc + channel] += m * s.standard_normal();
            }
        }
    }
}

/// Generates three disjoint, label-stratified splits of near-equal size.
///
/// Nominal sample `k` gets id `k`, anomalous sample `k` gets id
/// `n_nominal + k`; each class is dealt round-robin into train, val, test.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Splits> {
    spec.validate()?;
    let process = Process::new(spec);
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    let total = spec.n_nominal + spec.n_anomalous;
    for id in 0..total {
        let anomalous = id >= spec.n_nominal;
        let mut s = derive_stream(spec.seed, &[1, id as u64]);
        let mut w = process.window(spec, &mut s);
        if anomalous {
            apply_anomaly(spec, &mut w, &mut s);
        }
        let rank = if anomalous { id - spec.n_nominal } else { id };
        parts[rank % 3].push(Sample {
            id: id as u64,
            label: if anomalous { Label::Anomalous } else { Label::Nominal },
            features: w.into_iter().map(|v| v as f32).collect(),
        });
    }
    let [train, val, test] = parts.map(|samples| Dataset { samples });
    Ok(Splits { train, val, test })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec { n_nominal: 90, n_anomalous: 12, ..SyntheticSpec::default() }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_synthetic(&small()).unwrap(), generate_synthetic(&small()).unwrap());
    }

    #[test]
    fn no_anomalies_means_all_nominal() {
        let splits = generate_synthetic(&SyntheticSpec { n_anomalous: 0, ..small() }).unwrap();
        for (_, d) in splits.iter() {
            assert!(d.samples.iter().all(|s| s.label == Label::Nominal));
        }
    }

    #[test]
    fn splits_are_disjoint_and_stratified() {
        let splits = generate_synthetic(&small()).unwrap();
        let mut ids = HashSet::new();
        for (_, d) in splits.iter() {
            assert_eq!(d.nominal().count(), 30);
            assert_eq!(d.len(), 34);
            assert_eq!(d.n_features(), 16);
            for s in &d.samples {
                assert!(ids.insert(s.id));
            }
        }
        assert_eq!(ids.len(), 102);
    }

    #[test]
    fn nominal_marginals_are_standard() {
        let spec = SyntheticSpec { n_nominal: 3000, n_anomalous: 0, ..SyntheticSpec::default() };
        let splits = generate_synthetic(&spec).unwrap();
        let all: Vec<f64> = splits
            .iter()
            .flat_map(|(_, d)| d.samples.iter())
            .flat_map(|s| s.features.iter().map(|&v| v as f64))
            .collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn anomaly_kinds_perturb_one_channel() {
        for kind in [AnomalyKind::BiasShift, AnomalyKind::StuckAt, AnomalyKind::NoiseBurst] {
            let spec = SyntheticSpec { anomaly_kind: kind, n_nominal: 0, n_anomalous: 30, ..SyntheticSpec::default() };
            let splits = generate_synthetic(&spec).unwrap();
            for s in splits.iter().flat_map(|(_, d)| d.samples.iter()) {
                assert_eq!(s.label, Label::Anomalous);
                assert!(s.features.iter().all(|v| v.is_finite()));
                if kind == AnomalyKind::StuckAt {
                    let stuck = (0..4).filter(|&c| (0..4).all(|t| s.features[t * 4 + c] == 10.0)).count();
                    assert_eq!(stuck, 1);
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&SyntheticSpec { magnitude: 0.0, ..small() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { n_channels: 0, ..small() }).is_err());
    }
}
