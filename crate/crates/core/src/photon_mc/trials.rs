use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate_conventional, estimate_from_counts, estimate_qis, ConventionalEstimate};
use crate::sensor::{ConventionalConfig, Exposure, FluxLevel, QisConfig, SpadConfig};
use crate::spad_analytic::{ModelTag, SnrCurve};

use super::reference::{simulate_conventional_count, simulate_qis_count};
use super::spad::{check_exact_sampling, sample_spad_count_exact, simulate_spad_count, supports_exact_sampling, StartState};
use super::SeedSpec;

pub const TRIAL_CSV_HEADER: &str = "flux_photons_per_s,trials,mean_count,var_count,mean_flux_hat,rmse_flux_hat";

/// Sensor and simulation options for [`run_trials`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimSensor {
    Spad {
        cfg: SpadConfig,
        start: StartState,
        /// Draw counts from the exact count CDF instead of the event loop.
        /// Only valid without afterpulsing and jitter.
        exact_sampling: bool,
    },
    Conventional(ConventionalConfig),
    Qis(QisConfig),
}

impl SimSensor {
    pub fn spad(cfg: SpadConfig) -> Self {
        SimSensor::Spad {
            cfg,
            start: StartState::default(),
            exact_sampling: false,
        }
    }

    /// SPAD capture settings; `fast` uses exact count sampling when the
    /// config allows it and otherwise falls back to the event loop with a
    /// warning.
    pub fn spad_capture(cfg: SpadConfig, fast: bool) -> Self {
        let supported = supports_exact_sampling(&cfg);
        if fast && !supported {
            log::warn!("fast capture needs p_ap = 0 and jitter_sigma = 0; using the event simulation");
        }
        SimSensor::Spad {
            cfg,
            start: StartState::DetectionAtZero,
            exact_sampling: fast && supported,
        }
    }

    pub(crate) fn validate(&self, exposure: Exposure) -> Result<()> {
        match self {
            SimSensor::Spad { cfg, exact_sampling, .. } => {
                cfg.validate()?;
                if cfg.dead_time_s >= exposure.seconds() {
                    return Err(Error::ExposureShorterThanDeadTime {
                        exposure_s: exposure.seconds(),
                        dead_time_s: cfg.dead_time_s,
                    });
                }
                if *exact_sampling {
                    check_exact_sampling(cfg)?;
                }
                Ok(())
            }
            SimSensor::Conventional(cfg) => cfg.validate(),
            SimSensor::Qis(cfg) => {
                cfg.validate()?;
                cfg.bins(exposure).map(|_| ())
            }
        }
    }

    pub(crate) fn sample_count(&self, phi: FluxLevel, exposure: Exposure, seed: SeedSpec) -> Result<u64> {
        Ok(match self {
            SimSensor::Spad {
                cfg,
                start,
                exact_sampling,
            } => {
                if *exact_sampling {
                    sample_spad_count_exact(phi, cfg, exposure, seed)
                } else {
                    simulate_spad_count(phi, cfg, exposure, *start, seed)
                }
            }
            SimSensor::Conventional(cfg) => simulate_conventional_count(phi, cfg, exposure, seed),
            SimSensor::Qis(cfg) => simulate_qis_count(phi, cfg, exposure, seed)?,
        })
    }

    /// One simulated exposure: the count and the flux estimate, `None` when
    /// the count is at the sensor's saturation boundary.
    fn trial(&self, phi: FluxLevel, exposure: Exposure, seed: SeedSpec) -> Result<(u64, Option<f64>)> {
        let n = self.sample_count(phi, exposure, seed)?;
        let est = match self {
            SimSensor::Spad { cfg, .. } => estimate_from_counts(n, cfg, exposure).ok().map(|e| e.phi_hat),
            SimSensor::Conventional(cfg) => match estimate_conventional(n, cfg, exposure)? {
                ConventionalEstimate::Flux(e) => Some(e.phi_hat),
                ConventionalEstimate::Saturated => None,
            },
            SimSensor::Qis(cfg) => estimate_qis(n, cfg, exposure).ok().map(|e| e.phi_hat),
        };
        Ok((n, est))
    }
}

/// Aggregated statistics of repeated exposures at one flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStats {
    pub flux: f64,
    pub trials: usize,
    pub mean_count: f64,
    /// unbiased sample variance
    pub var_count: f64,
    pub mean_flux_hat: f64,
    /// root mean squared error of the flux estimates against `flux`
    pub rmse_flux_hat: f64,
    /// trials whose count sat at the saturation boundary; any such trial
    /// makes `mean_flux_hat` and `rmse_flux_hat` infinite
    pub saturated_trials: usize,
}

impl TrialStats {
    /// `20 log10(flux / rmse_flux_hat)`; `-inf` when saturated.
    pub fn snr_db(&self) -> f64 {
        if self.rmse_flux_hat.is_infinite() {
            f64::NEG_INFINITY
        } else if self.rmse_flux_hat == 0.0 {
            f64::INFINITY
        } else {
            20.0 * (self.flux / self.rmse_flux_hat).log10()
        }
    }

    /// Standard error of `mean_count`.
    pub fn count_standard_error(&self) -> f64 {
        (self.var_count / self.trials as f64).sqrt()
    }

    pub fn write_csv<W: Write>(stats: &[TrialStats], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRIAL_CSV_HEADER}")?;
        for s in stats {
            writeln!(
                out,
                "{:e},{},{:e},{:e},{:e},{:e}",
                s.flux, s.trials, s.mean_count, s.var_count, s.mean_flux_hat, s.rmse_flux_hat
            )?;
        }
        Ok(())
    }

    pub fn save_csv(stats: &[TrialStats], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        Self::write_csv(stats, &mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Compensated (Neumaier) sum in slice order.
fn stable_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn aggregate(flux: f64, outcomes: &[(u64, Option<f64>)]) -> TrialStats {
    let n = outcomes.len() as f64;
    let mean_count = stable_sum(outcomes.iter().map(|o| o.0 as f64)) / n;
    let var_count = stable_sum(outcomes.iter().map(|o| (o.0 as f64 - mean_count).powi(2))) / (n - 1.0);
    let saturated_trials = outcomes.iter().filter(|o| o.1.is_none()).count();
    let (mean_flux_hat, rmse_flux_hat) = if saturated_trials > 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let mean = stable_sum(outcomes.iter().map(|o| o.1.unwrap())) / n;
        let mse = stable_sum(outcomes.iter().map(|o| (o.1.unwrap() - flux).powi(2))) / n;
        (mean, mse.sqrt())
    };
    TrialStats {
        flux,
        trials: outcomes.len(),
        mean_count,
        var_count,
        mean_flux_hat,
        rmse_flux_hat,
        saturated_trials,
    }
}

/// Simulates `trials` exposures per flux level and aggregates them.
///
/// Trial `i` at flux index `k` uses stream `(k << 32) | i` of `master_seed`,
/// so results do not depend on the thread count or on scheduling. Trials run
/// on the current rayon pool.
pub fn run_trials(sensor: &SimSensor, exposure: Exposure, flux_grid: &[f64], trials: usize, master_seed: u64) -> Result<Vec<TrialStats>> {
    if trials < 2 {
        return Err(Error::OutOfRange {
            field: "trials",
            value: trials as f64,
        });
    }
    if trials as u64 > u32::MAX as u64 {
        return Err(Error::OutOfRange {
            field: "trials",
            value: trials as f64,
        });
    }
    sensor.validate(exposure)?;
    let levels = flux_grid.iter().map(|&f| FluxLevel::new(f)).collect::<Result<Vec<_>>>()?;
    let base = SeedSpec::new(master_seed, 0);
    levels
        .iter()
        .enumerate()
        .map(|(k, &phi)| {
            let outcomes = (0..trials)
                .into_par_iter()
                .map(|i| sensor.trial(phi, exposure, base.with_stream(((k as u64) << 32) | i as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate(phi.get(), &outcomes))
        })
        .collect()
}

/// Empirical SNR curve built from trial RMSEs.
pub fn trials_to_curve(stats: &[TrialStats]) -> Result<SnrCurve> {
    SnrCurve::from_rmse(
        stats.iter().map(|s| s.flux).collect(),
        stats.iter().map(|s| s.rmse_flux_hat).collect(),
        ModelTag::MonteCarlo,
    )
}
