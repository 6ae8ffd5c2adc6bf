//! Analytic response and noise model of a passive free-running SPAD pixel.
//!
//! The pixel is a non-paralyzable counter: every detection opens a dead-time
//! window `tau_d` during which further photons are lost. Over an exposure `T`
//! at incident flux `phi` the count behaves like a renewal process with mean
//! `q phi T / (1 + q phi tau_d)`; inverting that curve gives the count
//! estimator whose error budget is modelled here.

mod curve;
mod exact;

pub use curve::{admissible_range, dynamic_range, log_flux_grid, snr_curve, ModelTag, SensorModel, SnrCurve};
pub use exact::{count_pmf_exact, count_pmf_exact_with_cap, rmse_exact, CountPmf, ExactCountCdf, DEFAULT_SUPPORT_CAP};

use crate::error::{Error, Result};
use crate::sensor::{Exposure, FluxLevel, SpadConfig};

/// Mean detected count, `q phi T / (1 + q phi tau_d)`.
pub fn expected_counts(phi: FluxLevel, cfg: &SpadConfig, exposure: Exposure) -> f64 {
    let rate = cfg.quantum_efficiency * phi.get();
    if rate.is_infinite() {
        return exposure.seconds() / cfg.dead_time_s;
    }
    rate * exposure.seconds() / (1.0 + rate * cfg.dead_time_s)
}

/// Count variance, `q phi T / (1 + q phi tau_d)^3`.
pub fn count_variance(phi: FluxLevel, cfg: &SpadConfig, exposure: Exposure) -> f64 {
    let rate = cfg.quantum_efficiency * phi.get();
    rate * exposure.seconds() / (1.0 + rate * cfg.dead_time_s).powi(3)
}

/// Flux at which the count variance peaks, `1 / (2 q tau_d)`.
pub fn variance_peak_flux(cfg: &SpadConfig) -> f64 {
    1.0 / (2.0 * cfg.quantum_efficiency * cfg.dead_time_s)
}

/// Bias and variance terms of the count-based flux estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseBreakdown {
    /// photons/s
    pub bias_dark: f64,
    /// photons/s
    pub bias_afterpulse: f64,
    /// (photons/s)^2
    pub var_shot: f64,
    /// (photons/s)^2
    pub var_quantization: f64,
    /// photons/s
    pub rmse: f64,
}

impl RmseBreakdown {
    fn assemble(bias_dark: f64, bias_afterpulse: f64, var_shot: f64, var_quantization: f64) -> Self {
        let bias = bias_dark + bias_afterpulse;
        RmseBreakdown {
            bias_dark,
            bias_afterpulse,
            var_shot,
            var_quantization,
            rmse: (bias * bias + var_shot + var_quantization).sqrt(),
        }
    }
}

/// Afterpulsing bias of the flux estimate, `p_ap q phi (1 + phi tau_d) exp(-q phi tau_d)`.
pub fn afterpulse_bias(phi: FluxLevel, cfg: &SpadConfig) -> f64 {
    let phi = phi.get();
    let q = cfg.quantum_efficiency;
    if cfg.afterpulse_prob == 0.0 {
        return 0.0;
    }
    cfg.afterpulse_prob * q * phi * (1.0 + phi * cfg.dead_time_s) * (-q * phi * cfg.dead_time_s).exp()
}

/// Gaussian-approximation error budget of the count estimator.
///
/// With `jitter_corrected` the shot term accounts for a random dead time of
/// mean `tau_d` and standard deviation `jitter_sigma_s`:
/// `phi (1 + q^2 phi^2 sigma^2)(1 + q phi tau_d) / (q T)`.
pub fn rmse_approx(phi: FluxLevel, cfg: &SpadConfig, exposure: Exposure, jitter_corrected: bool) -> RmseBreakdown {
    let q = cfg.quantum_efficiency;
    let t = exposure.seconds();
    let flux = phi.get();
    let x = q * flux * cfg.dead_time_s;
    let mut var_shot = flux * (1.0 + x) / (q * t);
    if jitter_corrected {
        let s = q * flux * cfg.jitter_sigma_s;
        var_shot *= 1.0 + s * s;
    }
    let var_quantization = (1.0 + x).powi(4) / (12.0 * q * q * t * t);
    RmseBreakdown::assemble(cfg.dark_rate_hz, afterpulse_bias(phi, cfg), var_shot, var_quantization)
}

/// `20 log10(phi / rmse)`. An infinite rmse maps to negative infinity.
pub fn snr_from_rmse(phi: FluxLevel, rmse: f64) -> Result<f64> {
    if phi.get() <= 0.0 {
        return Err(Error::InvalidArgument("snr needs a positive flux".into()));
    }
    if rmse == f64::INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if !rmse.is_finite() || rmse <= 0.0 {
        return Err(Error::InvalidRmse(rmse));
    }
    Ok(20.0 * (phi.get() / rmse).log10())
}

/// Flux above which quantization variance stays larger than shot variance.
///
/// `var_quantization = var_shot` reduces to `(1 + x)^3 = 12 x T / tau_d` with
/// `x = q phi tau_d`. The cubic has two positive roots whenever `T > tau_d`:
/// one at a few photons per second, where both terms are negligible, and the
/// soft-saturation root past the minimum at `x = 2 sqrt(T / tau_d) - 1`,
/// beyond which quantization dominates for good. This returns the latter.
pub fn soft_saturation_flux(cfg: &SpadConfig, exposure: Exposure) -> f64 {
    let ratio = exposure.seconds() / cfg.dead_time_s;
    let g = |x: f64| (1.0 + x).powi(3) - 12.0 * x * ratio;
    let mut lo = (2.0 * ratio.sqrt() - 1.0).max(0.0);
    let mut hi = lo.max(1.0);
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi / (cfg.quantum_efficiency * cfg.dead_time_s)
}
