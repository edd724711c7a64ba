//! Campaign expansion, execution and analysis artifacts.

pub mod census;
pub mod config;
pub mod histogram;
pub mod plotdata;
pub mod rows;
pub mod runner;

pub use census::{bit_census, BitCensus};
pub use config::{
    CampaignConfig, FaultAxis, InjectionPlan, MetricConfig, ModelEntry, ModelGridRef, ModelRef, OutputSweep, StateSweep,
};
pub use histogram::{masked_output_histogram, Histogram, OutputHistograms};
pub use plotdata::{emit_plot_data, PlotKind, PlotTable};
pub use rows::{read_rows, write_rows, ResultRow, PLAN_AXES, RESULT_COLUMNS};
pub use runner::{
    expand_grid, run_campaign, run_campaign_observed, CampaignObserver, CampaignOutput, ExperimentDescriptor,
    RunOptions,
};
