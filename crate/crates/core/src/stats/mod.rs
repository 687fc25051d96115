//! Ensemble estimators and the checks run on them.

pub mod ensemble;
pub mod estimate;
pub mod gof;
pub mod verify;

pub use ensemble::{ensemble_range, ensemble_run, CheckpointColumns, CheckpointStats, EnsembleSummary, SummaryReport};
pub use estimate::Estimate;
pub use verify::{
    all_pass, format_table, lil_monitor, verify_clt, verify_gram_limit, verify_martingale, verify_mixture_clt,
    verify_second_moments, verify_superdiffusive, Check, TestReport,
};
