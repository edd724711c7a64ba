//! Acceptance checks on the committed fixture. Prints one line per
//! criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Mutex;
use std::time::Instant;

use flowfault_core::campaign::{
    expand_grid, run_campaign, run_campaign_observed, CampaignConfig, CampaignObserver, ExperimentDescriptor,
    ResultRow, RunOptions,
};
use flowfault_core::fault::{flip_bit, model_digest, Direction, Snapshot};
use flowfault_core::io::{grid_model_ids, load_model};
use flowfault_core::metrics::{
    build_correct_set, sdc_rate_aggregate, sdc_rate_exp_on, BaselineRecord, DuePolicy, ExperimentOutcome, SdcVariant,
};
use flowfault_core::model::{Label, NetKind, Prediction, Site};
use flowfault_core::{derive_stream, ModelDefinition, ModelState, RandomStream};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture() -> ModelState {
    load_model(root().join("fixtures/c4d3u32.rnvp")).expect("fixture model")
}

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn invertibility() -> Outcome {
    let m = fixture();
    let mut s = RandomStream::new(1);
    let inputs: Vec<Vec<f32>> = (0..1000).map(|_| (0..16).map(|_| s.gaussian_f32(0.0, 1.0)).collect()).collect();
    let start = Instant::now();
    let mut worst = 0.0f32;
    for x in &inputs {
        let (z, _) = m.forward(x).map_err(|e| e.to_string())?;
        let back = m.inverse(&z).map_err(|e| e.to_string())?;
        worst = back.iter().zip(x).fold(worst, |w, (a, b)| w.max((a - b).abs()));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(worst < 1e-4 && elapsed < 1.0, format!("max error {worst:.3e}, {elapsed:.3} s"))
}

fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[p][col] == 0.0 {
            return 0.0;
        }
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
        }
    }
    det
}

fn jacobian_check() -> Outcome {
    let mut m = ModelState::random_init(ModelDefinition::new(6, 1, 3, 16), &mut derive_stream(42, &[])).unwrap();
    // Larger final scale weights keep log|det J| well away from zero.
    let last = m.fc_layer_mut(Site { coupling: 0, net: NetKind::Scale, fc: 2 });
    last.weights.as_mut_slice().iter_mut().for_each(|w| *w *= 8.0);
    let mut s = RandomStream::new(2);
    let h = 1e-2f32;
    let mut worst = 0.0f64;
    let mut min_log_det = f64::INFINITY;
    for _ in 0..10 {
        let x: Vec<f32> = (0..6).map(|_| s.gaussian_f32(0.0, 1.0)).collect();
        let (_, log_det) = m.forward(&x).unwrap();
        let mut jac = vec![vec![0.0; 6]; 6];
        for j in 0..6 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let (yp, _) = m.forward(&xp).unwrap();
            let (ym, _) = m.forward(&xm).unwrap();
            let step = f64::from(xp[j]) - f64::from(xm[j]);
            for i in 0..6 {
                jac[i][j] = (f64::from(yp[i]) - f64::from(ym[i])) / step;
            }
        }
        let analytic = f64::from(log_det).exp();
        worst = worst.max((det(jac).abs() - analytic).abs() / analytic);
        min_log_det = min_log_det.min(f64::from(log_det).abs());
    }
    check(worst < 1e-3, format!("max relative error {worst:.3e} (min |log det| {min_log_det:.3})"))
}

fn metric_oracle() -> Outcome {
    let mut s = RandomStream::new(3);
    let pred = |c: u64| match c {
        0 => Prediction::Label(Label::Nominal),
        1 => Prediction::Label(Label::Anomalous),
        _ => Prediction::Due,
    };
    let mut compared = 0;
    for table in 0..100 {
        let n = 1 + s.below(60) as usize;
        let n_models = 1 + s.below(3) as usize;
        let (n_exps, n_seeds) = (1 + s.below(10) as usize, 1 + s.below(3) as usize);
        let variant = if table % 2 == 0 { SdcVariant::Relative } else { SdcVariant::Absolute };
        let policy = if table % 4 < 2 { DuePolicy::SeparateDue } else { DuePolicy::DueCountsAsSdc };
        let truth: Vec<u64> = (0..n).map(|_| s.below(2)).collect();
        let base: Vec<Vec<u64>> = (0..n_models).map(|_| (0..n).map(|_| s.below(2)).collect()).collect();
        let records: Vec<BaselineRecord> = base
            .iter()
            .map(|b| {
                BaselineRecord::new((0..n).map(|i| (i as u64, Label::from_code(truth[i] as u8).unwrap(), pred(b[i]))))
                    .unwrap()
            })
            .collect();
        let refs: Vec<&BaselineRecord> = records.iter().collect();
        let sets = build_correct_set(variant, &refs);
        for m in 0..n_models {
            let eval: Vec<usize> = (0..n)
                .filter(|&i| match variant {
                    SdcVariant::Relative => base[m][i] == truth[i],
                    SdcVariant::Absolute => base.iter().all(|b| b[i] == truth[i]),
                })
                .collect();
            let Ok(sets) = &sets else {
                if !eval.is_empty() {
                    return Err(format!("table {table}: spurious undefined metric"));
                }
                continue;
            };
            let mut fractions = Vec::new();
            let mut total = 0u64;
            for _ in 0..n_exps * n_seeds {
                let faulty: Vec<u64> = (0..n).map(|_| s.below(3)).collect();
                let outcome = ExperimentOutcome {
                    predictions: faulty.iter().enumerate().map(|(i, &c)| (i as u64, pred(c))).collect(),
                };
                let got = sdc_rate_exp_on(&sets[m], &records[m], &outcome, policy);
                if eval.is_empty() {
                    if got.is_ok() {
                        return Err(format!("table {table}: empty evaluation set accepted"));
                    }
                    continue;
                }
                let mut sdc = 0;
                for &i in &eval {
                    let wrong = faulty[i] != 2 && faulty[i] != truth[i];
                    let due = faulty[i] == 2;
                    if wrong || (due && policy == DuePolicy::DueCountsAsSdc) {
                        sdc += 1;
                    }
                }
                let got = got.unwrap();
                if got.sdc_count != sdc || got.n_samples != eval.len() as u64 {
                    return Err(format!("table {table}: sdc {} vs oracle {sdc}", got.sdc_count));
                }
                total += sdc;
                fractions.push(got.sdc());
                compared += 1;
            }
            if eval.is_empty() {
                continue;
            }
            let agg = sdc_rate_aggregate(&fractions, n_exps, n_seeds).unwrap();
            let oracle = total as f64 / (eval.len() * n_exps * n_seeds) as f64;
            if agg != oracle {
                return Err(format!("table {table}: aggregate {agg} vs oracle {oracle}"));
            }
        }
    }
    Ok(format!("100 tables, {compared} experiments, exact match"))
}

struct Trends {
    /// Aggregate rows keyed by config id.
    agg: BTreeMap<String, ResultRow>,
}

impl Trends {
    fn run() -> Result<Self, String> {
        let cfg = CampaignConfig::load(root().join("configs/fixture_trends.json")).map_err(|e| e.to_string())?;
        let rows = run_campaign(&cfg, &RunOptions::default()).map_err(|e| e.to_string())?.rows;
        Ok(Trends { agg: rows.into_iter().filter(ResultRow::is_aggregate).map(|r| (r.config_id.clone(), r)).collect() })
    }

    fn row(&self, id: &str) -> Result<&ResultRow, String> {
        self.agg.get(id).ok_or_else(|| format!("missing aggregate row {id}"))
    }

    fn bit(&self, b: u32) -> Result<f64, String> {
        let r = self.row(&format!("state|bitflip:bit={b}:dir=both:sign=both|mode=100|var=all|amt=10"))?;
        Ok(r.sdc_rate + r.due_rate)
    }

    fn sdc(&self, kind: &str, var: &str, amount: u32) -> Result<f64, String> {
        Ok(self.row(&format!("state|{kind}|mode=100|var={var}|amt={amount}"))?.sdc_rate)
    }
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn bit_trend(t: &Trends) -> Outcome {
    let low = (0..16).map(|b| t.bit(b)).collect::<Result<Vec<_>, _>>()?;
    let head = (0..20).map(|b| t.bit(b)).collect::<Result<Vec<_>, _>>()?;
    let top = (24..31).map(|b| t.bit(b)).collect::<Result<Vec<_>, _>>()?;
    let low_max = low.iter().cloned().fold(0.0, f64::max);
    let head_max = head.iter().cloned().fold(0.0, f64::max);
    let top_max = top.iter().cloned().fold(0.0, f64::max);
    check(
        low_max <= 0.01 && top_max - head_max >= 0.05,
        format!("max bits 0-15 {low_max:.4}, max bits 0-19 {head_max:.4}, max bits 24-30 {top_max:.4}"),
    )
}

fn bit30(t: &Trends) -> Outcome {
    let up = t.row("state|bitflip:bit=30:dir=zero_to_one|mode=100|var=all|amt=10")?.due_rate;
    let down = t.row("state|bitflip:bit=30:dir=one_to_zero|mode=100|var=all|amt=10")?.due_rate;
    let census = flowfault_core::campaign::bit_census(&fixture()).total(30);
    check(
        up > 0.0 && down == 0.0 && census == 0,
        format!("DUE zero_to_one {up:.4}, one_to_zero {down}, census {census}"),
    )
}

fn bias_vs_weight(t: &Trends) -> Outcome {
    let (bias, weight) = (t.sdc("zeros", "bias", 10)?, t.sdc("zeros", "weight", 10)?);
    check(bias < weight, format!("SDC bias {bias:.4} < weight {weight:.4}"))
}

fn saturation(t: &Trends) -> Outcome {
    let zeros = [30, 50, 100].map(|a| t.sdc("zeros", "all", a)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let random = [10, 50, 100].map(|a| t.sdc("random", "all", a)).into_iter().collect::<Result<Vec<_>, _>>()?;
    let (z, r) = (spread(&zeros), spread(&random));
    check(z < 0.05 && r < 0.05, format!("zeros {zeros:.4?} spread {z:.4}; random {random:.4?} spread {r:.4}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = root().join("configs/fixture_smoke.json");
    let mut outputs = Vec::new();
    for workers in [1, 8] {
        let out = dir.path().join(format!("w{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_flowfault"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--workers", &workers.to_string()])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], format!("{} bytes, identical: {}", outputs[0].len(), outputs[0] == outputs[1]))
}

#[derive(Default)]
struct Boundaries(Mutex<Vec<bool>>);

impl CampaignObserver for Boundaries {
    fn before_experiment(&self, _: &ExperimentDescriptor, working: &ModelState, pristine: &Snapshot) {
        self.0.lock().unwrap().push(model_digest(working) == pristine.digest());
    }

    fn after_experiment(&self, _: &ExperimentDescriptor, working: &ModelState, pristine: &Snapshot) {
        self.0.lock().unwrap().push(model_digest(working) == pristine.digest());
    }
}

fn reset_soundness() -> Outcome {
    let mut cfg = CampaignConfig::load(root().join("configs/fixture_smoke.json")).map_err(|e| e.to_string())?;
    cfg.n_exps = 10;
    cfg.n_seeds = 5;
    cfg.output_sweeps.clear();
    cfg.state_sweeps.truncate(1);
    let s = &mut cfg.state_sweeps[0];
    s.fault.truncate(1);
    s.fault[0].bit = Some(vec![flowfault_core::fault::BitSelector::Fixed(30)]);
    s.mode = vec![100];
    s.variable.truncate(2);
    let n = expand_grid(&cfg).map_err(|e| e.to_string())?.len();
    let hook = Boundaries::default();
    run_campaign_observed(&cfg, &RunOptions { workers: 2, audit: false }, &hook).map_err(|e| e.to_string())?;
    let seen = hook.0.into_inner().unwrap();
    let clean = seen.iter().filter(|&&ok| ok).count();
    check(
        n == 100 && clean == seen.len() && seen.len() == 2 * n,
        format!("{n} experiments, {clean}/{} boundaries pristine", seen.len()),
    )
}

fn flip_fuzz() -> Outcome {
    let mut s = RandomStream::new(10);
    let mut failures = 0u64;
    for _ in 0..1_000_000 {
        let bits = s.next_u64() as u32;
        let x = f32::from_bits(bits);
        for b in 0..32 {
            let (once, _) = flip_bit(x, b, Direction::Both);
            let (twice, _) = flip_bit(once, b, Direction::Both);
            if twice.to_bits() != bits || once.to_bits() != bits ^ (1 << b) {
                failures += 1;
            }
        }
    }
    check(failures == 0, format!("32000000 double flips, {failures} failures"))
}

fn grid_arity() -> Outcome {
    let ids = grid_model_ids();
    let cfg: CampaignConfig = serde_json::from_value(serde_json::json!({
        "base_seed": 1,
        "model_grid": {"dir": "grid"},
        "dataset": "unused.csv",
        "state_sweeps": [{"fault": [{"kind": "zeros"}], "mode": [100], "variable": ["all"], "amount": [10]}]
    }))
    .map_err(|e| e.to_string())?;
    let descriptors = expand_grid(&cfg).map_err(|e| e.to_string())?;
    let mut per_model: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &descriptors {
        *per_model.entry(&d.model_id).or_default() += 1;
    }
    check(
        ids.len() == 18 && per_model.len() == 18 && per_model.values().all(|&n| n == 30),
        format!(
            "{} model ids, {} descriptors, {:?} per model",
            ids.len(),
            descriptors.len(),
            per_model.values().next()
        ),
    )
}

fn main() -> ExitCode {
    let trends = Trends::run();
    let trend = |f: fn(&Trends) -> Outcome| -> Outcome { trends.as_ref().map_err(Clone::clone).and_then(f) };
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "invertibility", invertibility()),
        (2, "jacobian", jacobian_check()),
        (3, "metric oracle", metric_oracle()),
        (4, "bit-position trend", trend(bit_trend)),
        (5, "bit-30 catastrophe", trend(bit30)),
        (6, "bias/weight ordering", trend(bias_vs_weight)),
        (7, "saturation", trend(saturation)),
        (8, "determinism", determinism()),
        (9, "reset soundness", reset_soundness()),
        (10, "flip involution", flip_fuzz()),
        (11, "grid arity", grid_arity()),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name:<22} PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name:<22} FAIL  {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
