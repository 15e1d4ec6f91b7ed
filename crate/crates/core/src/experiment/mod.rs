//! Config-driven experiments: strict TOML configs and a runner that writes
//! deterministic reports plus a run manifest.

mod config;
mod runner;

pub use config::{
    parse_config, CheckConfig, CoupleConfig, ErgodicityConfig, ExperimentConfig, ExperimentKind, FitConfig,
    IrreducibilityConfig, KbConfig, KbModeName, Lemma21Config, ModelSpec, SimulateConfig,
};
pub use runner::{run_experiment, write_failure, RunOutcome};
