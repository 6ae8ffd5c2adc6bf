//! Exact count distribution of the dead-time-limited renewal process.
//!
//! The exposure is taken to open with an uncounted detection at `t = 0`, so
//! the n-th counted detection lands at `n tau_d + Gamma(n, rate)`. Hence
//!
//! ```text
//! P(N_T <= n) = Q(n, rate (T - (n + 1) tau_d))
//! ```
//!
//! where `Q(k, mu)` is the Poisson CDF and `Q(k, mu <= 0) = 1`. The pmf is the
//! first difference of that CDF, supported on `0..=floor(T / tau_d)`.

use crate::error::{Error, Result};
use crate::sensor::{Exposure, FluxLevel, SpadConfig};
use crate::special::poisson_cdf;

use super::afterpulse_bias;

pub const DEFAULT_SUPPORT_CAP: u64 = 1_000_000;

/// CDF of the detected count for a given detection rate.
#[derive(Debug, Clone, Copy)]
pub struct ExactCountCdf {
    rate: f64,
    exposure_s: f64,
    dead_time_s: f64,
    capacity: u64,
}

impl ExactCountCdf {
    /// `rate` is the rate of detectable events (q phi, plus dark counts when
    /// those should be included).
    pub fn new(rate: f64, dead_time_s: f64, exposure: Exposure) -> Self {
        ExactCountCdf {
            rate,
            exposure_s: exposure.seconds(),
            dead_time_s,
            capacity: (exposure.seconds() / dead_time_s).floor() as u64,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// `P(N_T <= n)`.
    pub fn cdf(&self, n: u64) -> f64 {
        if n >= self.capacity {
            return 1.0;
        }
        let live = self.exposure_s - (n + 1) as f64 * self.dead_time_s;
        poisson_cdf(n, self.rate * live)
    }

    /// Smallest `n` with `P(N_T <= n) >= u`, for `u` in [0, 1).
    pub fn inverse(&self, u: f64) -> u64 {
        let (mut lo, mut hi) = (0u64, self.capacity);
        if self.cdf(0) >= u {
            return 0;
        }
        // invariant: cdf(lo) < u <= cdf(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.cdf(mid) >= u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Probability mass function of the detected count.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPmf {
    /// `probs[n] = P(N_T = n)` for `n = 0..=floor(T / tau_d)`.
    pub probs: Vec<f64>,
    pub quantum_efficiency: f64,
    pub flux: f64,
    pub exposure_s: f64,
    pub dead_time_s: f64,
}

impl CountPmf {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - m).powi(2) * p)
            .sum()
    }
}

pub fn count_pmf_exact(phi: FluxLevel, cfg: &SpadConfig, exposure: Exposure) -> Result<CountPmf> {
    count_pmf_exact_with_cap(phi, cfg, exposure, DEFAULT_SUPPORT_CAP)
}

/// Exact pmf with an explicit bound on the number of support points.
pub fn count_pmf_exact_with_cap(phi: FluxLevel, cfg: &SpadConfig, exposure: Exposure, cap: u64) -> Result<CountPmf> {
    let cdf = ExactCountCdf::new(cfg.quantum_efficiency * phi.get(), cfg.dead_time_s, exposure);
    let support = cdf.capacity() + 1;
    if support > cap {
        return Err(Error::SupportTooLarge { support, cap });
    }
    let mut probs = Vec::with_capacity(support as usize);
    let mut prev = 0.0;
    for n in 0..support {
        let c = cdf.cdf(n);
        probs.push((c - prev).max(0.0));
        prev = c;
    }
    Ok(CountPmf {
        probs,
        quantum_efficiency: cfg.quantum_efficiency,
        flux: phi.get(),
        exposure_s: exposure.seconds(),
        dead_time_s: cfg.dead_time_s,
    })
}

/// RMSE of the count estimator averaged over the exact count distribution,
/// plus the dark and afterpulse biases of the approximate model.
pub fn rmse_exact(phi: FluxLevel, cfg: &SpadConfig, exposure: Exposure) -> Result<f64> {
    let pmf = count_pmf_exact(phi, cfg, exposure)?;
    let q = cfg.quantum_efficiency;
    let t = exposure.seconds();
    let flux = phi.get();
    let mut mse = 0.0;
    for (n, &p) in pmf.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let live = t - n as f64 * cfg.dead_time_s;
        if live <= 1e-12 * t {
            // estimator diverges on a count that fills the exposure
            return Ok(f64::INFINITY);
        }
        let err = n as f64 / (q * live) - flux;
        mse += p * err * err;
    }
    let bias = cfg.dark_rate_hz + afterpulse_bias(phi, cfg);
    Ok((bias * bias + mse).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spad_analytic::rmse_approx;

    fn flux(v: f64) -> FluxLevel {
        FluxLevel::new(v).unwrap()
    }

    // Erlang CDF by composite Simpson quadrature of the density; independent
    // of the Poisson-sum route used by the implementation.
    fn erlang_cdf(shape: u64, rate: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let ln_norm = shape as f64 * rate.ln() - crate::special::ln_factorial(shape - 1);
        let pdf = |t: f64| {
            if t <= 0.0 {
                if shape == 1 { rate } else { 0.0 }
            } else {
                (ln_norm + (shape - 1) as f64 * t.ln() - rate * t).exp()
            }
        };
        let steps = 20_000;
        let h = x / steps as f64;
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pmf_matches_quadrature_oracle_on_small_support() {
        // T / tau_d = 4.5, so counts run 0..=4.
        let cfg = SpadConfig::ideal(0.5, 1e-3);
        let exposure = Exposure::new(4.5e-3).unwrap();
        for &phi in &[100.0, 800.0, 5000.0] {
            let pmf = count_pmf_exact(flux(phi), &cfg, exposure).unwrap();
            assert_eq!(pmf.probs.len(), 5);
            let rate = 0.5 * phi;
            // P(N >= n) = P(n tau_d + Erlang(n) <= T)
            let tail = |n: u64| {
                if n == 0 {
                    1.0
                } else {
                    erlang_cdf(n, rate, 4.5e-3 - n as f64 * 1e-3)
                }
            };
            for n in 0..5u64 {
                let want = tail(n) - tail(n + 1);
                assert!((pmf.probs[n as usize] - want).abs() < 1e-9, "phi={phi} n={n}");
            }
        }
    }

    #[test]
    fn pmf_normalized_at_reference_point() {
        let pmf = count_pmf_exact(flux(1e8), &SpadConfig::REFERENCE, Exposure::new(5e-3).unwrap()).unwrap();
        assert_eq!(pmf.probs.len(), 33_401);
        let total: f64 = pmf.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        assert!(pmf.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        // mean sits within one count of the renewal approximation
        assert!((pmf.mean() - 28_620.49).abs() < 1.0, "{}", pmf.mean());
        assert!((pmf.variance() / 586.1 - 1.0).abs() < 0.02, "{}", pmf.variance());
    }

    #[test]
    fn low_flux_normalization() {
        let exposure = Exposure::new(5e-3).unwrap();
        for &phi in &[0.0, 10.0, 1e3, 1e5] {
            let pmf = count_pmf_exact(flux(phi), &SpadConfig::REFERENCE, exposure).unwrap();
            let total: f64 = pmf.probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "phi={phi} total={total}");
        }
    }

    #[test]
    fn vanishing_dead_time_gives_poisson() {
        let cfg = SpadConfig::ideal(0.4, 1e-9);
        let exposure = Exposure::new(1e-4).unwrap();
        let phi = 1e5; // q phi T = 4
        let pmf = count_pmf_exact(flux(phi), &cfg, exposure).unwrap();
        let mu: f64 = 0.4 * phi * 1e-4;
        let mut term = (-mu).exp();
        for n in 0..20usize {
            if n > 0 {
                term *= mu / n as f64;
            }
            // the Poisson mean seen by p_n shrinks by at most rate (n + 1) tau_d,
            // and |dP/dmu| <= 1
            let tol = 0.4 * phi * (n + 2) as f64 * 1e-9;
            assert!((pmf.probs[n] - term).abs() < tol, "n={n}");
        }
    }

    #[test]
    fn support_cap_enforced() {
        let cfg = SpadConfig::ideal(0.4, 1e-9);
        let err = count_pmf_exact(flux(1.0), &cfg, Exposure::new(5e-3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SupportTooLarge { support: 5_000_001, .. }));
        let ok = count_pmf_exact_with_cap(flux(1.0), &cfg, Exposure::new(5e-6).unwrap(), 10_000);
        assert!(ok.is_ok());
    }

    #[test]
    fn degenerate_pmf_gives_single_point_error() {
        // huge flux: every dead time is followed immediately by a detection
        let cfg = SpadConfig::ideal(1.0, 1e-3);
        let exposure = Exposure::new(3.5e-3).unwrap();
        let phi = 1e9;
        let pmf = count_pmf_exact(flux(phi), &cfg, exposure).unwrap();
        assert!(pmf.probs[3] > 1.0 - 1e-9);
        let rmse = rmse_exact(flux(phi), &cfg, exposure).unwrap();
        let want = (3.0 / (3.5e-3 - 3e-3) - phi).abs();
        assert!((rmse / want - 1.0).abs() < 1e-6, "{rmse} vs {want}");
    }

    #[test]
    fn exact_close_to_approx_at_reference_point() {
        let cfg = SpadConfig::REFERENCE;
        let exposure = Exposure::new(5e-3).unwrap();
        let exact = rmse_exact(flux(1e8), &cfg, exposure).unwrap();
        let approx = rmse_approx(flux(1e8), &cfg, exposure, false).rmse;
        assert!((exact / approx - 1.0).abs() < 0.05, "{exact} vs {approx}");
    }

    #[test]
    fn inverse_cdf_brackets() {
        let cdf = ExactCountCdf::new(0.4 * 1e8, 149.7e-9, Exposure::new(5e-3).unwrap());
        for &u in &[0.0, 1e-9, 0.25, 0.5, 0.75, 0.999_999] {
            let n = cdf.inverse(u);
            assert!(cdf.cdf(n) >= u);
            assert!(n == 0 || cdf.cdf(n - 1) < u);
        }
    }
}
