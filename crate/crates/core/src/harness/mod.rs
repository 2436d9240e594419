//! Experiment configuration, Monte Carlo drivers and result output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, OutputPaths, RingSize};
pub use experiments::{
    clt_check, clt_statistics, domination_test, estimate_q_moments, fit_scaling, identities, lln_check,
    microconcavity_run, ring_doubling_check, sample_heights, sample_q, second_moment_ratios, CltReport,
    DominationReport, IdentityReport, LlnReport, MicroReport, MomentEstimate, QSamples,
};
pub use output::{ResultRow, Summary, TestOutcome};
