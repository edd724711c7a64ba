use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use flowfault_core::campaign::{
    bit_census, emit_plot_data, masked_output_histogram, read_rows, run_campaign, write_rows, CampaignConfig, PlotKind,
    RunOptions,
};
use flowfault_core::fault::OutputInjectionPlan;
use flowfault_core::io::{
    build_model_grid, generate_synthetic, load_model, save_model, AnomalyKind, Dataset, SyntheticSpec,
};
use flowfault_core::model::calibrate_threshold;
use flowfault_core::{derive_stream, Error, ModelDefinition, ModelState};

#[derive(Parser)]
#[command(name = "flowfault", version, about = "Fault-injection campaigns for Real NVP anomaly detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write results.csv (and audit.jsonl with --audit).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        audit: bool,
    },
    /// Count set bits per position over a model's weights and biases.
    Census {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram the last coupling layer's scale and translation outputs.
    Histogram {
        #[arg(long)]
        model: PathBuf,
        /// Output injection plan: a JSON file or an inline JSON object.
        #[arg(long)]
        plan: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive radial or parallel-coordinates tables from results.csv.
    Plotdata {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long, value_parser = parse_plot_kind)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic train/val/test splits.
    GenData(GenData),
    /// Write a randomly initialised model, or the full 18-model grid.
    GenModel(GenModel),
    /// Set a model's anomaly threshold from nominal samples.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        percentile: f64,
        /// Defaults to overwriting --model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    /// JSON spec file; overrides the individual flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 4)]
    window: usize,
    #[arg(long, default_value_t = 1200)]
    nominal: usize,
    #[arg(long, default_value_t = 150)]
    anomalous: usize,
    #[arg(long, default_value = "bias-shift", value_parser = parse_anomaly)]
    anomaly: AnomalyKind,
    #[arg(long, default_value_t = 10.0)]
    magnitude: f32,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct GenModel {
    #[arg(long)]
    input_dim: usize,
    #[arg(long, default_value_t = 4)]
    coupling: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 32)]
    units: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file for a single model.
    #[arg(long, required_unless_present = "grid", conflicts_with = "grid")]
    out: Option<PathBuf>,
    /// Write all 18 grid models as `{dir}/{model_id}.rnvp`.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Calibrate thresholds on the nominal samples of this dataset.
    #[arg(long)]
    calibrate: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    percentile: f64,
}

fn parse_plot_kind(s: &str) -> Result<PlotKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_anomaly(s: &str) -> Result<AnomalyKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_plan(text: &str) -> Result<OutputInjectionPlan> {
    let json = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        fs::read_to_string(text).map_err(|e| Error::Config(format!("cannot read plan {text}: {e}")))?
    };
    Ok(serde_json::from_str(&json).map_err(Error::from)?)
}

fn calibrate(model: &mut ModelState, data: &Path, percentile: f64) -> Result<f32> {
    let dataset = Dataset::load(data)?;
    let tau = calibrate_threshold(model, dataset.nominal().map(|s| s.features.as_slice()), percentile)?;
    model.threshold = Some(tau);
    Ok(tau)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out, workers, audit } => {
            let cfg = CampaignConfig::load(&config).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read {}: {io}", config.display())),
                other => other,
            })?;
            let result = run_campaign(&cfg, &RunOptions { workers, audit })?;
            let mut w = create(&out.join("results.csv"))?;
            write_rows(&result.rows, &mut w)?;
            w.flush()?;
            if audit {
                let mut w = create(&out.join("audit.jsonl"))?;
                w.write_all(&result.audit)?;
                w.flush()?;
            }
            eprintln!("wrote {} rows to {}", result.rows.len(), out.join("results.csv").display());
        }
        Command::Census { model, out } => {
            let census = bit_census(&load_model(&model)?);
            let mut w = create(&out)?;
            census.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Histogram { model, plan, data, bins, seed, out } => {
            let model = load_model(&model)?;
            let plan = read_plan(&plan)?;
            let dataset = Dataset::load(&data)?;
            let hist = masked_output_histogram(&model, &plan, &dataset, bins, &derive_stream(seed, &[]))?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    hist.write_csv(&mut w)?;
                    w.flush()?;
                }
                None => hist.write_csv(io::stdout().lock())?,
            }
        }
        Command::Plotdata { rows, kind, out } => {
            let file = File::open(&rows).with_context(|| format!("opening {}", rows.display()))?;
            let rows = read_rows(io::BufReader::new(file))?;
            let table = emit_plot_data(&rows, kind)?;
            let mut w = create(&out)?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::GenData(args) => {
            let spec = match &args.spec {
                Some(path) => serde_json::from_str(
                    &fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
                )
                .map_err(Error::from)?,
                None => SyntheticSpec {
                    n_channels: args.channels,
                    window_len: args.window,
                    n_nominal: args.nominal,
                    n_anomalous: args.anomalous,
                    anomaly_kind: args.anomaly,
                    magnitude: args.magnitude,
                    seed: args.seed,
                },
            };
            let splits = generate_synthetic(&spec)?;
            fs::create_dir_all(&args.out)?;
            for (name, data) in splits.iter() {
                let mut w = create(&args.out.join(format!("{name}.csv")))?;
                data.write_csv(&mut w)?;
                w.flush()?;
            }
            fs::write(args.out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
        }
        Command::GenModel(args) => {
            let base = ModelDefinition::new(args.input_dim, args.coupling, args.depth, args.units);
            let defs = if args.grid.is_some() { build_model_grid(&base) } else { vec![base] };
            for def in defs {
                let id = def.model_id();
                let mut model = ModelState::random_init(def, &mut derive_stream(args.seed, &[]))?;
                if let Some(data) = &args.calibrate {
                    calibrate(&mut model, data, args.percentile)?;
                }
                let path = match (&args.grid, &args.out) {
                    (Some(dir), _) => {
                        fs::create_dir_all(dir)?;
                        dir.join(format!("{id}.rnvp"))
                    }
                    (None, Some(path)) => path.clone(),
                    (None, None) => unreachable!("clap requires --out or --grid"),
                };
                save_model(&path, &model)?;
            }
        }
        Command::Calibrate { model, data, percentile, out } => {
            let mut m = load_model(&model)?;
            let tau = calibrate(&mut m, &data, percentile)?;
            save_model(out.as_ref().unwrap_or(&model), &m)?;
            println!("{tau}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let configuration = e.downcast_ref::<Error>().is_some_and(Error::is_configuration);
            ExitCode::from(if configuration { 2 } else { 1 })
        }
    }
}
