//! Scenario sweeps, closed-loop simulation, baselines, metrics and output
//! artifacts.

mod config;
mod metrics;
mod output;
mod scenario;
mod sim;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    EngineConfig, GridConfig, HarnessConfig, PathConfig, PathShape, RunConfig, SliderConfig, SliderKind, SliderSet,
    WallConfig,
};
pub use metrics::{compute_metrics, Metrics};
pub use output::{emit_outputs, metrics_csv, parse_trace_line, render_svg, trace_jsonl, write_trace, PlotTrack};
pub use scenario::{build_scenarios, initial_world, Scenario, Setup, SweepSelection};
pub use sim::{
    run, run_closed_loop, run_dipole_baseline, run_open_loop_baseline, InvariantReport, RunMode, RunOptions, RunRecord,
    Strategy, TraceSample,
};
pub use sweep::{oracle_check, run_sweep, write_sweep_outputs, OracleCheckReport, RunSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no path named `{0}` in the configuration")]
    UnknownPath(String),
    #[error("scenario {index} cannot be placed: {reason}")]
    Placement { index: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}
