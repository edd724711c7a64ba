//! `results.csv` rows.

use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;

/// Renders a rate with 9 significant digits in plain decimal notation.
pub fn format_rate(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn ser_rate<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rate(*x))
}

fn de_rate<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let text = String::deserialize(d)?;
    text.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_id: String,
    pub model_id: String,
    /// `-1` on aggregate rows.
    pub seed_index: i64,
    /// `-1` on aggregate rows.
    pub exp_index: i64,
    pub injection_domain: String,
    #[serde(rename = "type")]
    pub fault_type: String,
    pub mode: String,
    pub variable: String,
    pub amount: String,
    pub bit: String,
    pub direction: String,
    pub sign: String,
    pub activation: String,
    pub method: String,
    #[serde(serialize_with = "ser_rate", deserialize_with = "de_rate")]
    pub sdc_rate: f64,
    #[serde(serialize_with = "ser_rate", deserialize_with = "de_rate")]
    pub due_rate: f64,
    #[serde(serialize_with = "ser_rate", deserialize_with = "de_rate")]
    pub masked_rate: f64,
    pub n_samples: u64,
    #[serde(serialize_with = "ser_rate", deserialize_with = "de_rate")]
    pub baseline_accuracy: f64,
}

pub const RESULT_COLUMNS: [&str; 19] = [
    "config_id",
    "model_id",
    "seed_index",
    "exp_index",
    "injection_domain",
    "type",
    "mode",
    "variable",
    "amount",
    "bit",
    "direction",
    "sign",
    "activation",
    "method",
    "sdc_rate",
    "due_rate",
    "masked_rate",
    "n_samples",
    "baseline_accuracy",
];

/// Plan-axis columns shared by every row.
pub const PLAN_AXES: [&str; 10] =
    ["injection_domain", "type", "mode", "variable", "amount", "bit", "direction", "sign", "activation", "method"];

impl ResultRow {
    pub fn is_aggregate(&self) -> bool {
        self.exp_index < 0
    }

    pub fn plan_axis(&self, name: &str) -> &str {
        match name {
            "injection_domain" => &self.injection_domain,
            "type" => &self.fault_type,
            "mode" => &self.mode,
            "variable" => &self.variable,
            "amount" => &self.amount,
            "bit" => &self.bit,
            "direction" => &self.direction,
            "sign" => &self.sign,
            "activation" => &self.activation,
            "method" => &self.method,
            other => panic!("unknown plan axis {other}"),
        }
    }
}

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out)
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_formatting() {
        assert_eq!(format_rate(0.0), "0");
        assert_eq!(format_rate(0.3), "0.300000000");
        assert_eq!(format_rate(1.0), "1.00000000");
        assert_eq!(format_rate(1.0 / 3.0), "0.333333333");
        assert_eq!(format_rate(0.0012345678912), "0.00123456789");
    }

    #[test]
    fn header_and_round_trip() {
        let row = ResultRow {
            config_id: "state|zeros|mode=100|var=all|amt=10".into(),
            model_id: "C4D3U32".into(),
            seed_index: 0,
            exp_index: -1,
            injection_domain: "state".into(),
            fault_type: "zeros".into(),
            mode: "100".into(),
            variable: "all".into(),
            amount: "10".into(),
            bit: String::new(),
            direction: String::new(),
            sign: String::new(),
            activation: String::new(),
            method: String::new(),
            sdc_rate: 0.25,
            due_rate: 0.0,
            masked_rate: 0.75,
            n_samples: 400,
            baseline_accuracy: 0.9,
        };
        let mut buf = Vec::new();
        write_rows(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join(","));
        // The config id contains '|', which needs no quoting.
        assert!(text.contains("\nstate|zeros|mode=100|var=all|amt=10,C4D3U32,0,-1,"));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), vec![row]);
    }
}
