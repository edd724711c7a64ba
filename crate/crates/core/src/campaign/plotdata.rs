//! Tables for the radial and parallel-coordinates charts.

use std::collections::BTreeMap;
use std::io::Write;

use super::rows::{csv_writer, format_rate, ResultRow, PLAN_AXES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Radial,
    ParallelCoords,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radial" => Ok(PlotKind::Radial),
            "parallel" | "parallel-coords" => Ok(PlotKind::ParallelCoords),
            other => Err(Error::config(format!("unknown plot kind {other:?}; expected radial or parallel"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits `C4D3U32` into `(4, "D3 U32")`.
fn radial_label(model_id: &str) -> (String, String) {
    let parse = || {
        let rest = model_id.strip_prefix('C')?;
        let (c, rest) = rest.split_once('D')?;
        let (d, u) = rest.split_once('U')?;
        c.parse::<u32>().ok()?;
        d.parse::<u32>().ok()?;
        u.parse::<u32>().ok()?;
        Some((c.to_string(), format!("D{d} U{u}")))
    };
    parse().unwrap_or_else(|| (String::new(), model_id.to_string()))
}

pub fn emit_plot_data(rows: &[ResultRow], kind: PlotKind) -> Result<PlotTable> {
    if rows.is_empty() {
        return Err(Error::config("no result rows to plot"));
    }
    match kind {
        PlotKind::Radial => Ok(radial(rows)),
        PlotKind::ParallelCoords => Ok(parallel(rows)),
    }
}

/// One line per (type, variable, model): the mean aggregate SDC rate over
/// every matching plan point. Falls back to per-experiment rows when the
/// input carries no aggregate rows.
fn radial(rows: &[ResultRow]) -> PlotTable {
    let has_aggregates = rows.iter().any(ResultRow::is_aggregate);
    let mut groups: BTreeMap<(&str, &str, &str), (f64, u64)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_aggregate() == has_aggregates) {
        let g = groups.entry((&r.fault_type, &r.variable, &r.model_id)).or_default();
        g.0 += r.sdc_rate;
        g.1 += 1;
    }
    let header = ["type", "variable", "model_id", "coupling", "label", "sdc_rate"];
    PlotTable {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: groups
            .into_iter()
            .map(|((t, v, m), (sum, n))| {
                let (coupling, label) = radial_label(m);
                vec![t.into(), v.into(), m.into(), coupling, label, format_rate(sum / n as f64)]
            })
            .collect(),
    }
}

fn parallel(rows: &[ResultRow]) -> PlotTable {
    let per_exp: Vec<&ResultRow> = rows.iter().filter(|r| !r.is_aggregate()).collect();
    let chosen: Vec<&ResultRow> = if per_exp.is_empty() { rows.iter().collect() } else { per_exp };
    let mut header: Vec<String> = PLAN_AXES.iter().map(|s| s.to_string()).collect();
    header.push("sdc_rate".into());
    PlotTable {
        header,
        rows: chosen
            .into_iter()
            .map(|r| {
                let mut line: Vec<String> = PLAN_AXES.iter().map(|a| r.plan_axis(a).to_string()).collect();
                line.push(format_rate(r.sdc_rate));
                line
            })
            .collect(),
    }
}
