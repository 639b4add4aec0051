//! Experiment configs, parameter sweeps, threshold search and result files.

mod cat;
mod config;
mod emit;
mod sweep;

pub use cat::{fidelity_csv, run_cat, run_cat_entry, wigner_csv, CatReport, CatResult, CatSummary};
pub use config::{
    round_sig, Binning, CatConfig, Cutoffs, DirectionSpec, Experiment, Family, Format, Output, Parameter, Party,
    Physics, SweepConfig, SweepRange, ThresholdSettings,
};
pub use emit::{emit, from_json, to_csv, to_json, write_text};
pub use sweep::{
    bisect, build_state, find_threshold, ordinal, provenance, run_sweep, Provenance, RowDiagnostics, SweepResult,
    SweepRow, Threshold, Tolerances, WitnessId,
};
