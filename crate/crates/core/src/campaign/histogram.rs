//! Histograms of the last coupling layer's scale and translation outputs.

use std::collections::BTreeSet;
use std::io::Write;

use super::rows::csv_writer;
use super::runner::{LAYER_DRAW, SAMPLE_DRAW};
use crate::error::{Error, Result};
use crate::fault::{plan_output_hooks, FaultRegistry, OutputInjectionPlan, OutputInjector};
use crate::io::dataset::Dataset;
use crate::model::{ModelState, NetKind, OutputVisitor, Site};
use crate::numeric::ActivationKind;
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Values outside `[lo, hi]`, including non-finite ones.
    pub outside: u64,
}

impl Histogram {
    fn build(values: &[f32], lo: f64, hi: f64, bins: usize) -> Self {
        let mut h = Histogram { lo, hi, counts: vec![0; bins], outside: 0 };
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let v = f64::from(v);
            if !(lo..=hi).contains(&v) {
                h.outside += 1;
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            h.counts[b] += 1;
        }
        h
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + width * bin as f64, self.lo + width * (bin + 1) as f64)
    }

    /// Index of the bin a value falls into, if it is in range.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if !(self.lo..=self.hi).contains(&v) {
            return None;
        }
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        Some((((v - self.lo) / width) as usize).min(self.counts.len() - 1))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputHistograms {
    pub scale: Histogram,
    pub translation: Histogram,
}

impl OutputHistograms {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["net", "bin", "bin_lo", "bin_hi", "count"])?;
        for (name, h) in [("scale", &self.scale), ("translation", &self.translation)] {
            for (b, c) in h.counts.iter().enumerate() {
                let (lo, hi) = h.edges(b);
                w.write_record([name.to_string(), b.to_string(), lo.to_string(), hi.to_string(), c.to_string()])?;
            }
            w.write_record([name, "outside", "", "", &h.outside.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the injector first, then records the final-layer outputs it left.
struct Recorder<'a> {
    injector: OutputInjector<'a>,
    last: usize,
    depth: usize,
    scale: Vec<f32>,
    translation: Vec<f32>,
}

impl OutputVisitor for Recorder<'_> {
    fn visit(&mut self, site: Site, activation: ActivationKind, output: &mut [f32]) {
        self.injector.visit(site, activation, output);
        if site.coupling == self.last && site.fc == self.depth - 1 {
            match site.net {
                NetKind::Scale => self.scale.extend_from_slice(output),
                NetKind::Translation => self.translation.extend_from_slice(output),
            }
        }
    }
}

pub fn masked_output_histogram(
    model: &ModelState,
    plan: &OutputInjectionPlan,
    dataset: &Dataset,
    bins: usize,
    stream: &RandomStream,
) -> Result<OutputHistograms> {
    if bins < 2 {
        return Err(Error::config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let def = &model.definition;
    let fault = FaultRegistry::builtin().build(&plan.fault)?;
    let sites: BTreeSet<Site> = plan_output_hooks(def, plan, &mut stream.fold(LAYER_DRAW))?;
    let sample_base = stream.fold(SAMPLE_DRAW);
    let mut rec = Recorder {
        injector: OutputInjector::new(&sites, fault.as_ref(), plan.amount, sample_base.clone()),
        last: def.n_coupling - 1,
        depth: def.fc_depth,
        scale: Vec::new(),
        translation: Vec::new(),
    };
    for s in &dataset.samples {
        rec.injector = OutputInjector::new(&sites, fault.as_ref(), plan.amount, sample_base.fold(s.id));
        model.forward_visit(&s.features, &mut rec)?;
    }

    let (mut lo, mut hi) = rec
        .translation
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(f64::from(v)), b.max(f64::from(v))));
    if lo > hi {
        (lo, hi) = (0.0, 0.0);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    Ok(OutputHistograms {
        scale: Histogram::build(&rec.scale, -1.0, 1.0, bins),
        translation: Histogram::build(&rec.translation, lo, hi, bins),
    })
}
