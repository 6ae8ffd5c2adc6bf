//! Time-domain Monte Carlo for PF-SPAD, conventional and QIS pixels, and the
//! trial harness that aggregates simulated exposures into response and SNR
//! statistics.
//!
//! Every simulator is a pure function of its inputs and a [`SeedSpec`].
//! Poisson, normal, exponential and binomial variates come from `rand_distr`
//! 0.5 (Poisson: Knuth's product method below a mean of 12, transformed
//! rejection above).

mod reference;
mod rng;
mod spad;
mod trials;

pub use reference::{simulate_conventional_count, simulate_qis_count};
pub use rng::SeedSpec;
pub use spad::{
    count_bound, sample_spad_count_exact, simulate_spad_count, simulate_spad_trace, simulate_spad_trace_from,
    supports_exact_sampling, StartState,
};
pub use trials::{run_trials, trials_to_curve, SimSensor, TrialStats, TRIAL_CSV_HEADER};
