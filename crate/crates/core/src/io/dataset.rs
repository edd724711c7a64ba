//! CSV datasets: `sample_id,label,f0,...,f{n-1}` with label 0 = nominal,
//! 1 = anomalous. Features are written in shortest round-trip form so a
//! save/load cycle is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub label: Label,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.label == Label::Nominal)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let n = self.n_features();
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend((0..n).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.id.to_string(), s.label.code().to_string()];
            row.extend(s.features.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a dataset, rejecting ragged rows, non-binary labels and any
    /// non-finite feature.
    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Dataset { path: origin.to_path_buf(), reason };
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "sample_id" || &header[1] != "label" {
            return Err(bad("header must start with sample_id,label and have at least one feature".into()));
        }
        let n = header.len() - 2;
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let row = line + 2;
            if rec.len() != n + 2 {
                return Err(bad(format!("row {row} has {} columns, expected {}", rec.len(), n + 2)));
            }
            let id: u64 = rec[0].parse().map_err(|_| bad(format!("row {row}: bad sample_id {:?}", &rec[0])))?;
            let label = rec[1]
                .parse::<u8>()
                .ok()
                .and_then(Label::from_code)
                .ok_or_else(|| bad(format!("row {row}: label must be 0 or 1, got {:?}", &rec[1])))?;
            let mut features = Vec::with_capacity(n);
            for (j, field) in rec.iter().skip(2).enumerate() {
                let v: f32 = field.parse().map_err(|_| bad(format!("row {row}: f{j} is not a number")))?;
                if !v.is_finite() {
                    return Err(bad(format!("row {row}: f{j} is not finite")));
                }
                features.push(v);
            }
            samples.push(Sample { id, label, features });
        }
        Ok(Self { samples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Dataset { path: path.to_path_buf(), reason: format!("cannot open: {e}") })?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}
