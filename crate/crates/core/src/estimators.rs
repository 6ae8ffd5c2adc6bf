//! Flux estimators: invert a sensor measurement into photons per second.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sensor::{ConventionalConfig, Exposure, QisConfig, SpadConfig};

/// Relative slack below `T` at which `n tau_d` counts as filling the exposure.
const CAPACITY_EPS: f64 = 1e-12;

/// Detection timestamps (seconds) from one exposure.
///
/// Timestamps are strictly increasing and lie in `(0, T]`. The exposure is
/// taken to open on a detection at `t = 0`, so the first gap is measured
/// from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrace {
    timestamps: Vec<f64>,
    exposure: Exposure,
}

impl DetectionTrace {
    pub fn new(timestamps: Vec<f64>, exposure: Exposure) -> Result<Self> {
        let mut prev = 0.0;
        for (i, &t) in timestamps.iter().enumerate() {
            if !t.is_finite() || t <= prev || t > exposure.seconds() {
                return Err(Error::InvalidTrace(format!(
                    "timestamp {i} = {t} not in ({prev}, {}]",
                    exposure.seconds()
                )));
            }
            prev = t;
        }
        Ok(DetectionTrace { timestamps, exposure })
    }

    /// Builds a trace from inter-detection gaps, the first measured from 0.
    pub fn from_gaps(gaps: &[f64], exposure: Exposure) -> Result<Self> {
        let mut t = 0.0;
        let stamps = gaps
            .iter()
            .map(|g| {
                t += g;
                t
            })
            .collect();
        Self::new(stamps, exposure)
    }

    pub(crate) fn from_sorted_unchecked(timestamps: Vec<f64>, exposure: Exposure) -> Self {
        debug_assert!(timestamps.windows(2).all(|w| w[0] < w[1]));
        DetectionTrace { timestamps, exposure }
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn count(&self) -> u64 {
        self.timestamps.len() as u64
    }

    pub fn exposure(&self) -> Exposure {
        self.exposure
    }

    /// Gaps `X_1..X_N`, with `X_1` measured from `t = 0`.
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        let prevs = std::iter::once(0.0).chain(self.timestamps.iter().copied());
        self.timestamps.iter().zip(prevs).map(|(t, p)| t - p)
    }

    /// Mean gap `X̄`. The gaps telescope, so this is the last timestamp over N.
    pub fn mean_gap(&self) -> Option<f64> {
        self.timestamps.last().map(|last| last / self.timestamps.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_s")?;
        for t in &self.timestamps {
            writeln!(out, "{t:e}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: BufRead>(input: R, exposure: Exposure) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "t_s" => {}
            _ => return Err(Error::Csv("expected header `t_s`".into())),
        }
        let mut stamps = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Csv(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            stamps.push(line.parse().map_err(|_| Error::Csv(format!("bad timestamp `{line}`")))?);
        }
        Self::new(stamps, exposure)
    }
}

/// Which estimator produced a flux value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SpadInterarrival,
    SpadCounts,
    Qis,
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxEstimate {
    /// photons/s, finite and non-negative
    pub phi_hat: f64,
    pub method: Method,
}

/// Maximum-likelihood flux from detection gaps, `1 / (q (X̄ - tau_d))`.
pub fn estimate_from_interarrivals(trace: &DetectionTrace, cfg: &SpadConfig) -> Result<FluxEstimate> {
    let n = trace.timestamps.len();
    if n < 2 {
        return Err(Error::InsufficientDetections(n));
    }
    let mean_gap = trace.mean_gap().expect("non-empty trace");
    let excess = mean_gap - cfg.dead_time_s;
    if excess <= 1e-12 * cfg.dead_time_s {
        return Err(Error::MeanGapAtOrBelowDeadTime {
            mean_gap_s: mean_gap,
            dead_time_s: cfg.dead_time_s,
        });
    }
    Ok(FluxEstimate {
        phi_hat: 1.0 / (cfg.quantum_efficiency * excess),
        method: Method::SpadInterarrival,
    })
}

/// Count-based PF-SPAD estimate, `n / (q (T - n tau_d))`.
pub fn estimate_from_counts(n: u64, cfg: &SpadConfig, exposure: Exposure) -> Result<FluxEstimate> {
    let t = exposure.seconds();
    let live = t - n as f64 * cfg.dead_time_s;
    if live <= CAPACITY_EPS * t {
        return Err(Error::CountExceedsCapacity {
            count: n,
            capacity: cfg.capacity(exposure),
        });
    }
    Ok(FluxEstimate {
        phi_hat: n as f64 / (cfg.quantum_efficiency * live),
        method: Method::SpadCounts,
    })
}

/// QIS maximum-likelihood estimate, `ln(T / (T - n tau_b)) / (q tau_b)`.
pub fn estimate_qis(n: u64, cfg: &QisConfig, exposure: Exposure) -> Result<FluxEstimate> {
    let bins = cfg.bins(exposure)?;
    if n == bins {
        return Err(Error::AllBinsFull { count: n, bins });
    }
    if n > bins {
        return Err(Error::CountOutOfRange {
            count: n,
            min: 0,
            max: bins,
        });
    }
    // ln(T/(T - n tau_b)) = -ln(1 - n/N)
    let frac = n as f64 / bins as f64;
    Ok(FluxEstimate {
        phi_hat: -(-frac).ln_1p() / (cfg.quantum_efficiency * cfg.bin_width_s),
        method: Method::Qis,
    })
}

/// Outcome of the conventional estimator: a full well carries no flux information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConventionalEstimate {
    Flux(FluxEstimate),
    Saturated,
}

pub fn estimate_conventional(n: u64, cfg: &ConventionalConfig, exposure: Exposure) -> Result<ConventionalEstimate> {
    if n > cfg.full_well {
        return Err(Error::CountOutOfRange {
            count: n,
            min: 0,
            max: cfg.full_well,
        });
    }
    if n == cfg.full_well {
        return Ok(ConventionalEstimate::Saturated);
    }
    Ok(ConventionalEstimate::Flux(FluxEstimate {
        phi_hat: n as f64 / (cfg.quantum_efficiency * exposure.seconds()),
        method: Method::Conventional,
    }))
}
