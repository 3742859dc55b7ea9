//! Experiment configuration, the online bandit loop and its CSV outputs.

mod config;
mod policy;
mod runner;
mod summary;

pub use config::{
    Algorithm, BanditSection, Bandwidth, CnnSection, DataSection, Dataset, ExperimentConfig, ExperimentSection,
    FcSection, KernelUcbSection, LinUcbSection, PrecisionMode, SyntheticSection, DATA_DIR_ENV,
};
pub use policy::{Choice, KernelUcbPolicy, LinUcbPolicy, NeuralUcbPolicy, Policy, RandomPolicy};
pub use runner::{
    cnn_topology, config_bounds, read_rounds, run_experiment, run_experiment_with, Progress, RoundRecord, RunOutput, ROUNDS_HEADER,
};
pub use summary::{summarize, summarize_records, Summary, SummaryRow};
