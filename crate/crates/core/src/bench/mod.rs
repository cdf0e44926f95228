//! Recovery metrics, experiment sweeps, complexity tables and IQ ingestion.

mod complexity;
mod experiment;
mod iq;
mod metrics;

pub use complexity::{complexity_report, time_layer, time_layers, write_complexity_csv, ComplexityRow};
pub use experiment::{
    default_budgets, load_model, load_models, run_single, run_sweep, write_metrics_csv, ExperimentConfig, Method, MetricRow,
    Models, Recoverer, RecoveryDump, SingleOptions, NOISE_CONVENTION,
};
pub use iq::{ingest_iq_grid, IqGrid};
pub use metrics::{hit_rate_metric, nmse_metric, support, tolerant_hit_rate, top_k};
