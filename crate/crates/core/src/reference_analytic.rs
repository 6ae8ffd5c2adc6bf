//! Baseline sensors: a conventional full-well pixel and a single-bit quanta
//! image sensor (QIS) with uniform temporal bins.
//!
//! Saturated states use explicit sentinels: `rmse = +inf`, `snr = -inf` dB.
//! `erf` is the fdlibm implementation (full double precision).

use crate::error::{Error, Result};
use crate::sensor::{ConventionalConfig, Exposure, FluxLevel, QisConfig, SpadConfig};
use crate::spad_analytic::snr_from_rmse;
use crate::special::erf;

/// RMSE and SNR (dB) of the conventional pixel; hard saturation at `N_fwc / (q T)`.
pub fn conventional_rmse_snr(phi: FluxLevel, cfg: &ConventionalConfig, exposure: Exposure) -> (f64, f64) {
    let q = cfg.quantum_efficiency;
    let t = exposure.seconds();
    let flux = phi.get();
    if flux >= cfg.saturation_flux(exposure) {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let signal = q * flux * t;
    let noise_var = signal + cfg.read_noise_e * cfg.read_noise_e;
    let rmse = noise_var.sqrt() / (q * t);
    let snr = 10.0 * (signal * signal / noise_var).log10();
    (rmse, snr)
}

/// Supremum of the conventional SNR, approached just below saturation.
/// Depends only on the full well and read noise, not on exposure.
pub fn conventional_peak_snr(cfg: &ConventionalConfig) -> f64 {
    let n = cfg.full_well as f64;
    10.0 * (n * n / (n + cfg.read_noise_e * cfg.read_noise_e)).log10()
}

/// Mean number of filled bins, `N (1 - exp(-q phi tau_b))`.
pub fn qis_mean_counts(phi: FluxLevel, cfg: &QisConfig, exposure: Exposure) -> Result<f64> {
    let bins = cfg.bins(exposure)? as f64;
    let x = cfg.quantum_efficiency * phi.get() * cfg.bin_width_s;
    Ok(-bins * (-x).exp_m1())
}

/// Read-noise false-positive bias of the QIS estimate, clamped at zero.
pub fn qis_read_noise_bias(phi: FluxLevel, cfg: &QisConfig) -> f64 {
    if cfg.read_noise_e == 0.0 {
        return 0.0;
    }
    let q = cfg.quantum_efficiency;
    let tail = 1.0 - erf(1.0 / (2.0 * std::f64::consts::SQRT_2 * cfg.read_noise_e));
    (0.5 * (1.0 / (q * cfg.bin_width_s) - phi.get()) * tail).max(0.0)
}

/// Gaussian-approximation variance of the QIS estimate,
/// `(1 - e^{-x}) / (q^2 T tau_b e^{-x}) = expm1(x) / (q^2 T tau_b)`.
///
/// Overflows to `+inf` once `q phi tau_b` exceeds ~709.
pub fn qis_variance(phi: FluxLevel, cfg: &QisConfig, exposure: Exposure) -> f64 {
    let q = cfg.quantum_efficiency;
    let x = q * phi.get() * cfg.bin_width_s;
    x.exp_m1() / (q * q * exposure.seconds() * cfg.bin_width_s)
}

/// RMSE and SNR (dB) of the QIS estimator.
pub fn qis_rmse_snr(phi: FluxLevel, cfg: &QisConfig, exposure: Exposure) -> Result<(f64, f64)> {
    cfg.bins(exposure)?;
    let bias = qis_read_noise_bias(phi, cfg);
    let rmse = (bias * bias + qis_variance(phi, cfg, exposure)).sqrt();
    if phi.get() == 0.0 {
        return Ok((rmse, f64::NEG_INFINITY));
    }
    let snr = if rmse > 0.0 {
        snr_from_rmse(phi, rmse)?
    } else {
        f64::INFINITY
    };
    Ok((rmse, snr))
}

/// Slopes `d phi_hat / d N_T` of the PF-SPAD and QIS estimators at one count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSlopes {
    pub spad: f64,
    pub qis: f64,
}

/// Compares how steeply the two count estimators respond to one extra count
/// when the QIS bin width equals the SPAD dead time.
pub fn estimator_slope_gap(count: u64, spad: &SpadConfig, qis: &QisConfig, exposure: Exposure) -> Result<EstimatorSlopes> {
    if (qis.bin_width_s - spad.dead_time_s).abs() > 1e-12 * spad.dead_time_s {
        return Err(Error::InvalidArgument("slope comparison needs tau_b = tau_d".into()));
    }
    if spad.quantum_efficiency != qis.quantum_efficiency {
        return Err(Error::InvalidArgument("slope comparison needs equal quantum efficiency".into()));
    }
    let t = exposure.seconds();
    let n = count as f64;
    let max = (t / qis.bin_width_s).ceil() as u64;
    if count == 0 || n * qis.bin_width_s >= t {
        return Err(Error::CountOutOfRange {
            count,
            min: 1,
            max: max.saturating_sub(1),
        });
    }
    let q = qis.quantum_efficiency;
    let qis_slope = 1.0 / (q * (t - n * qis.bin_width_s));
    let live = t - n * spad.dead_time_s;
    let spad_slope = t / (q * live * live);
    Ok(EstimatorSlopes {
        spad: spad_slope,
        qis: qis_slope,
    })
}
