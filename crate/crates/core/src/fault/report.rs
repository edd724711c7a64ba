use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{NetKind, Site};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Weight,
    Bias,
    Output,
}

/// One corrupted element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub coupling: usize,
    pub net: NetKind,
    pub fc: usize,
    pub variable: TargetKind,
    pub index: usize,
    pub bit: Option<u8>,
    pub old_bits: u32,
    pub new_bits: u32,
    /// The stored pattern did not change.
    pub masked: bool,
}

impl InjectionRecord {
    pub fn new(site: Site, variable: TargetKind, index: usize, bit: Option<u8>, old: f32, new: f32) -> Self {
        Self {
            coupling: site.coupling,
            net: site.net,
            fc: site.fc,
            variable,
            index,
            bit,
            old_bits: old.to_bits(),
            new_bits: new.to_bits(),
            masked: old.to_bits() == new.to_bits(),
        }
    }

    pub fn site(&self) -> Site {
        Site { coupling: self.coupling, net: self.net, fc: self.fc }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub records: Vec<InjectionRecord>,
}

impl InjectionReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.records.iter().filter(|r| r.masked).count()
    }

    pub fn extend(&mut self, other: InjectionReport) {
        self.records.extend(other.records);
    }

    /// Writes one JSON object per record, each merged with `context`.
    pub fn write_jsonl<W: Write, C: Serialize>(&self, out: &mut W, context: &C) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a, C> {
            #[serde(flatten)]
            context: &'a C,
            #[serde(flatten)]
            record: &'a InjectionRecord,
        }
        for record in &self.records {
            serde_json::to_writer(&mut *out, &Line { context, record })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
