//! Sensor parameter types shared by every model.
//!
//! Units are fixed throughout the crate: seconds, photons per second,
//! electrons and decibels. Configs are plain immutable values; nothing
//! derived from them is cached.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Passive free-running SPAD pixel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpadConfig {
    /// Photon detection probability, in (0, 1].
    pub quantum_efficiency: f64,
    /// Mean dead time after each detection, seconds.
    pub dead_time_s: f64,
    /// Dark count rate, counts per second.
    pub dark_rate_hz: f64,
    /// Probability that a detection is followed by an afterpulse, in [0, 1).
    pub afterpulse_prob: f64,
    /// Standard deviation of the realized dead time, seconds.
    pub jitter_sigma_s: f64,
}

impl SpadConfig {
    /// The single-pixel prototype: q = 0.4, 149.7 ns dead time, 100 Hz dark
    /// counts, 1% afterpulsing, no jitter.
    pub const REFERENCE: SpadConfig = SpadConfig {
        quantum_efficiency: 0.4,
        dead_time_s: 149.7e-9,
        dark_rate_hz: 100.0,
        afterpulse_prob: 0.01,
        jitter_sigma_s: 0.0,
    };

    /// Ideal pixel with the given efficiency and dead time and no spurious counts.
    pub fn ideal(quantum_efficiency: f64, dead_time_s: f64) -> Self {
        SpadConfig {
            quantum_efficiency,
            dead_time_s,
            dark_rate_hz: 0.0,
            afterpulse_prob: 0.0,
            jitter_sigma_s: 0.0,
        }
    }

    pub fn without_spurious_counts(self) -> Self {
        SpadConfig {
            dark_rate_hz: 0.0,
            afterpulse_prob: 0.0,
            ..self
        }
    }

    pub fn with_jitter(self, jitter_sigma_s: f64) -> Self {
        SpadConfig {
            jitter_sigma_s,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        finite("quantum_efficiency", self.quantum_efficiency)?;
        finite("dead_time", self.dead_time_s)?;
        finite("dark_rate", self.dark_rate_hz)?;
        finite("afterpulse_prob", self.afterpulse_prob)?;
        finite("jitter_sigma", self.jitter_sigma_s)?;
        check_efficiency(self.quantum_efficiency)?;
        if self.dead_time_s <= 0.0 {
            return Err(out_of_range("dead_time", self.dead_time_s));
        }
        if self.dark_rate_hz < 0.0 {
            return Err(out_of_range("dark_rate", self.dark_rate_hz));
        }
        if !(0.0..1.0).contains(&self.afterpulse_prob) {
            return Err(out_of_range("afterpulse_prob", self.afterpulse_prob));
        }
        if self.jitter_sigma_s < 0.0 {
            return Err(out_of_range("jitter_sigma", self.jitter_sigma_s));
        }
        if self.jitter_sigma_s >= self.dead_time_s {
            return Err(Error::JitterTooLarge {
                sigma_s: self.jitter_sigma_s,
                dead_time_s: self.dead_time_s,
            });
        }
        Ok(())
    }

    /// Largest count an exposure can hold without jitter, `floor(T / tau_d)`.
    pub fn capacity(&self, exposure: Exposure) -> u64 {
        (exposure.seconds() / self.dead_time_s).floor() as u64
    }
}

/// Conventional full-well pixel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionalConfig {
    pub quantum_efficiency: f64,
    /// Full well capacity, electrons.
    pub full_well: u64,
    /// Read noise, electrons RMS.
    pub read_noise_e: f64,
}

impl ConventionalConfig {
    /// Reference sensor used against the SPAD prototype: 33,400 e- full well,
    /// q = 0.9, 5 e- read noise.
    pub const REFERENCE: ConventionalConfig = ConventionalConfig {
        quantum_efficiency: 0.9,
        full_well: 33_400,
        read_noise_e: 5.0,
    };

    pub fn validate(&self) -> Result<()> {
        finite("quantum_efficiency", self.quantum_efficiency)?;
        finite("read_noise", self.read_noise_e)?;
        check_efficiency(self.quantum_efficiency)?;
        if self.full_well < 1 {
            return Err(out_of_range("full_well", self.full_well as f64));
        }
        if self.read_noise_e < 0.0 {
            return Err(out_of_range("read_noise", self.read_noise_e));
        }
        Ok(())
    }

    /// Flux at which the well fills on average, `N_fwc / (q T)`.
    pub fn saturation_flux(&self, exposure: Exposure) -> f64 {
        self.full_well as f64 / (self.quantum_efficiency * exposure.seconds())
    }
}

/// Single-bit quanta image sensor with uniform temporal binning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QisConfig {
    pub quantum_efficiency: f64,
    /// Width of one temporal bin, seconds.
    pub bin_width_s: f64,
    /// Read noise, electrons RMS.
    pub read_noise_e: f64,
}

impl QisConfig {
    pub fn validate(&self) -> Result<()> {
        finite("quantum_efficiency", self.quantum_efficiency)?;
        finite("bin_width", self.bin_width_s)?;
        finite("read_noise", self.read_noise_e)?;
        check_efficiency(self.quantum_efficiency)?;
        if self.bin_width_s <= 0.0 {
            return Err(out_of_range("bin_width", self.bin_width_s));
        }
        if self.read_noise_e < 0.0 {
            return Err(out_of_range("read_noise", self.read_noise_e));
        }
        Ok(())
    }

    /// Number of bins `N = T / tau_b`; errors unless T is an integer multiple
    /// of the bin width to 1e-9 relative.
    pub fn bins(&self, exposure: Exposure) -> Result<u64> {
        let ratio = exposure.seconds() / self.bin_width_s;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::ExposureNotBinMultiple {
                exposure_s: exposure.seconds(),
                bin_width_s: self.bin_width_s,
            });
        }
        Ok(n as u64)
    }
}

/// Exposure duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exposure(f64);

impl Exposure {
    pub fn new(seconds: f64) -> Result<Self> {
        finite("exposure", seconds)?;
        if seconds <= 0.0 {
            return Err(out_of_range("exposure", seconds));
        }
        Ok(Exposure(seconds))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }

    /// Same exposure stretched by an integer factor (jots times frames).
    pub fn scaled(self, factor: f64) -> Result<Self> {
        Exposure::new(self.0 * factor)
    }
}

/// Incident photon flux in photons per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FluxLevel(f64);

impl FluxLevel {
    pub const ZERO: FluxLevel = FluxLevel(0.0);

    pub fn new(photons_per_s: f64) -> Result<Self> {
        finite("flux", photons_per_s)?;
        if photons_per_s < 0.0 {
            return Err(out_of_range("flux", photons_per_s));
        }
        Ok(FluxLevel(photons_per_s))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FluxLevel {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        FluxLevel::new(value)
    }
}

impl fmt::Display for FluxLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} photons/s", self.0)
    }
}

/// Checks a SPAD config against an exposure and hands both back unchanged.
pub fn validate_spad_config(cfg: SpadConfig, exposure: Exposure) -> Result<(SpadConfig, Exposure)> {
    cfg.validate()?;
    if exposure.seconds() <= cfg.dead_time_s {
        return Err(Error::ExposureShorterThanDeadTime {
            exposure_s: exposure.seconds(),
            dead_time_s: cfg.dead_time_s,
        });
    }
    Ok((cfg, exposure))
}

fn finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NotFinite { field })
    }
}

fn out_of_range(field: &'static str, value: f64) -> Error {
    Error::OutOfRange { field, value }
}

fn check_efficiency(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(out_of_range("quantum_efficiency", q))
    }
}

/// Parsed `key=value` sensor configuration file.
///
/// Recognized keys: `q`, `tau_d_s`, `dark_rate_hz`, `p_ap`,
/// `jitter_sigma_s`, `exposure_s`, `fwc`, `read_noise_e`, `qis_tau_b_s`.
/// `#` starts a comment; blank lines are ignored. Optional noise terms
/// (`dark_rate_hz`, `p_ap`, `jitter_sigma_s`, `read_noise_e`) default to 0
/// when a sensor config is assembled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub q: Option<f64>,
    pub tau_d_s: Option<f64>,
    pub dark_rate_hz: Option<f64>,
    pub p_ap: Option<f64>,
    pub jitter_sigma_s: Option<f64>,
    pub exposure_s: Option<f64>,
    pub fwc: Option<u64>,
    pub read_noise_e: Option<f64>,
    pub qis_tau_b_s: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn spad(&self) -> Result<SpadConfig> {
        let cfg = SpadConfig {
            quantum_efficiency: self.q.ok_or(Error::MissingKey("q"))?,
            dead_time_s: self.tau_d_s.ok_or(Error::MissingKey("tau_d_s"))?,
            dark_rate_hz: self.dark_rate_hz.unwrap_or(0.0),
            afterpulse_prob: self.p_ap.unwrap_or(0.0),
            jitter_sigma_s: self.jitter_sigma_s.unwrap_or(0.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn conventional(&self) -> Result<ConventionalConfig> {
        let cfg = ConventionalConfig {
            quantum_efficiency: self.q.ok_or(Error::MissingKey("q"))?,
            full_well: self.fwc.ok_or(Error::MissingKey("fwc"))?,
            read_noise_e: self.read_noise_e.unwrap_or(0.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn qis(&self) -> Result<QisConfig> {
        let cfg = QisConfig {
            quantum_efficiency: self.q.ok_or(Error::MissingKey("q"))?,
            bin_width_s: self.qis_tau_b_s.ok_or(Error::MissingKey("qis_tau_b_s"))?,
            read_noise_e: self.read_noise_e.unwrap_or(0.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exposure(&self) -> Result<Exposure> {
        Exposure::new(self.exposure_s.ok_or(Error::MissingKey("exposure_s"))?)
    }
}

impl FromStr for ConfigFile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut out = ConfigFile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: line_no,
                message: format!("expected key=value, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let real = || -> Result<Option<f64>> {
                let v: f64 = value.parse().map_err(|_| Error::ConfigSyntax {
                    line: line_no,
                    message: format!("`{key}` is not a number: `{value}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::ConfigSyntax {
                        line: line_no,
                        message: format!("`{key}` is not finite"),
                    });
                }
                Ok(Some(v))
            };
            match key {
                "q" => out.q = real()?,
                "tau_d_s" => out.tau_d_s = real()?,
                "dark_rate_hz" => out.dark_rate_hz = real()?,
                "p_ap" => out.p_ap = real()?,
                "jitter_sigma_s" => out.jitter_sigma_s = real()?,
                "exposure_s" => out.exposure_s = real()?,
                "read_noise_e" => out.read_noise_e = real()?,
                "qis_tau_b_s" => out.qis_tau_b_s = real()?,
                "fwc" => {
                    out.fwc = Some(value.parse().map_err(|_| Error::ConfigSyntax {
                        line: line_no,
                        message: format!("`fwc` is not a non-negative integer: `{value}`"),
                    })?)
                }
                other => {
                    return Err(Error::UnknownKey {
                        line: line_no,
                        key: other.to_string(),
                    })
                }
            }
        }
        Ok(out)
    }
}
