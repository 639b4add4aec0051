//! States shared by the benchmarks.

use hqsteer_core::stategen::{mixture_state, photon_subtracted_tmsv, MixtureParams};
use hqsteer_core::DensityOperator;

/// Lossy photon-subtracted TMSV at `r = 1`, `η = 0.6`.
pub fn subtracted(cutoff: usize) -> DensityOperator {
    photon_subtracted_tmsv(1.0, 0.6, 0.6, cutoff, cutoff).expect("valid parameters").0
}

/// TMSV/SMSV mixture at `P = 0.7`.
pub fn mixture(cutoff: usize) -> DensityOperator {
    let params = MixtureParams { p_tmsv: 0.7, r: 0.5, r_a: 0.5, r_b: 0.5 };
    mixture_state(&params, cutoff, cutoff).expect("valid parameters")
}
