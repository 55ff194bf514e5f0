//! Command-line plumbing: data loading, synthetic data, sweeps and reports.

pub mod data;
pub mod report;
pub mod sweep;
pub mod synth;

pub use data::{load_csv, split, DataSchema, LoadedData};
pub use report::{load_model, save_model, ModelDocument, SweepReport};
pub use sweep::{pareto_front, sweep_bgl, sweep_sp, SweepRun, TradeoffPoint};
pub use synth::{synth_generate, SynthSpec};
