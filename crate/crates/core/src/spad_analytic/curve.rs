use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reference_analytic::{conventional_rmse_snr, qis_rmse_snr};
use crate::sensor::{ConventionalConfig, Exposure, FluxLevel, QisConfig, SpadConfig};

use super::{rmse_approx, rmse_exact, snr_from_rmse};

/// Which model produced a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelTag {
    SpadApprox,
    SpadExact,
    SpadJitter,
    Conventional,
    Qis,
    MonteCarlo,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::SpadApprox => "spad_approx",
            ModelTag::SpadExact => "spad_exact",
            ModelTag::SpadJitter => "spad_jitter",
            ModelTag::Conventional => "conventional",
            ModelTag::Qis => "qis",
            ModelTag::MonteCarlo => "monte_carlo",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spad_approx" => ModelTag::SpadApprox,
            "spad_exact" => ModelTag::SpadExact,
            "spad_jitter" => ModelTag::SpadJitter,
            "conventional" => ModelTag::Conventional,
            "qis" => ModelTag::Qis,
            "monte_carlo" => ModelTag::MonteCarlo,
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }
}

/// An analytic sensor model together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorModel {
    SpadApprox(SpadConfig),
    SpadExact(SpadConfig),
    SpadJitter(SpadConfig),
    Conventional(ConventionalConfig),
    Qis(QisConfig),
}

impl SensorModel {
    pub fn tag(&self) -> ModelTag {
        match self {
            SensorModel::SpadApprox(_) => ModelTag::SpadApprox,
            SensorModel::SpadExact(_) => ModelTag::SpadExact,
            SensorModel::SpadJitter(_) => ModelTag::SpadJitter,
            SensorModel::Conventional(_) => ModelTag::Conventional,
            SensorModel::Qis(_) => ModelTag::Qis,
        }
    }

    /// RMSE of the flux estimate at one flux level; `+inf` when the sensor
    /// cannot produce a finite estimate.
    pub fn rmse(&self, phi: FluxLevel, exposure: Exposure) -> Result<f64> {
        Ok(match self {
            SensorModel::SpadApprox(cfg) => rmse_approx(phi, cfg, exposure, false).rmse,
            SensorModel::SpadJitter(cfg) => rmse_approx(phi, cfg, exposure, true).rmse,
            SensorModel::SpadExact(cfg) => rmse_exact(phi, cfg, exposure)?,
            SensorModel::Conventional(cfg) => conventional_rmse_snr(phi, cfg, exposure).0,
            SensorModel::Qis(cfg) => qis_rmse_snr(phi, cfg, exposure)?.0,
        })
    }
}

/// SNR versus flux on a log-spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrCurve {
    pub flux_grid: Vec<f64>,
    pub rmse: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub model_tag: ModelTag,
}

pub const CSV_HEADER: &str = "flux_photons_per_s,rmse,snr_db,model";

impl SnrCurve {
    /// Builds a curve from per-point RMSE values, deriving the SNR column.
    pub fn from_rmse(flux_grid: Vec<f64>, rmse: Vec<f64>, model_tag: ModelTag) -> Result<Self> {
        if flux_grid.len() != rmse.len() {
            return Err(Error::InvalidArgument("flux grid and rmse lengths differ".into()));
        }
        let snr_db = flux_grid
            .iter()
            .zip(&rmse)
            .map(|(&phi, &r)| snr_from_rmse(FluxLevel::new(phi)?, r))
            .collect::<Result<Vec<_>>>()?;
        let curve = SnrCurve {
            flux_grid,
            rmse,
            snr_db,
            model_tag,
        };
        curve.check()?;
        Ok(curve)
    }

    pub fn len(&self) -> usize {
        self.flux_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flux_grid.is_empty()
    }

    /// Largest SNR on the grid.
    pub fn peak_snr_db(&self) -> f64 {
        self.snr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self) -> Result<()> {
        if self.snr_db.len() != self.flux_grid.len() || self.rmse.len() != self.flux_grid.len() {
            return Err(Error::InvalidArgument("curve columns differ in length".into()));
        }
        if self.flux_grid.len() < 2 {
            return Err(Error::InvalidArgument("curve needs at least 2 points".into()));
        }
        if !self.flux_grid.windows(2).all(|w| w[0] < w[1]) || self.flux_grid[0] <= 0.0 {
            return Err(Error::InvalidArgument("flux grid must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{}",
                self.flux_grid[i], self.rmse[i], self.snr_db[i], self.model_tag
            )?;
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

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Csv("empty file".into()))?
            .map_err(|e| Error::Csv(e.to_string()))?;
        if header.trim() != CSV_HEADER {
            return Err(Error::Csv(format!("unexpected header `{}`", header.trim())));
        }
        let (mut flux_grid, mut rmse, mut snr_db) = (Vec::new(), Vec::new(), Vec::new());
        let mut tag = None;
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Csv(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Csv(format!("row {}: expected 4 fields", i + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Csv(format!("row {}: bad number `{s}`", i + 1)))
            };
            flux_grid.push(num(fields[0])?);
            rmse.push(num(fields[1])?);
            snr_db.push(num(fields[2])?);
            let row_tag: ModelTag = fields[3].trim().parse()?;
            match tag {
                None => tag = Some(row_tag),
                Some(t) if t != row_tag => return Err(Error::Csv("mixed model tags".into())),
                _ => {}
            }
        }
        let curve = SnrCurve {
            flux_grid,
            rmse,
            snr_db,
            model_tag: tag.ok_or_else(|| Error::Csv("no data rows".into()))?,
        };
        curve.check()?;
        Ok(curve)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// `points` log-spaced flux values from `flux_min` to `flux_max` inclusive.
pub fn log_flux_grid(flux_min: f64, flux_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(flux_min > 0.0 && flux_min.is_finite() && flux_max.is_finite() && flux_max > flux_min) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < flux_min < flux_max, got {flux_min} and {flux_max}"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid points".into()));
    }
    let (lo, hi) = (flux_min.ln(), flux_max.ln());
    let step = (hi - lo) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| (lo + step * i as f64).exp()).collect();
    grid[0] = flux_min;
    grid[points - 1] = flux_max;
    Ok(grid)
}

pub fn snr_curve(model: &SensorModel, exposure: Exposure, flux_min: f64, flux_max: f64, points: usize) -> Result<SnrCurve> {
    let grid = log_flux_grid(flux_min, flux_max, points)?;
    let rmse = grid
        .par_iter()
        .map(|&phi| model.rmse(FluxLevel::new(phi)?, exposure))
        .collect::<Result<Vec<_>>>()?;
    SnrCurve::from_rmse(grid, rmse, model.tag())
}

/// Lowest and highest flux at which the curve reaches `threshold_db`.
///
/// Crossings between grid points are located on the straight line joining
/// neighbouring points in (log flux, dB). Returns `None` when no grid point
/// meets the threshold.
pub fn admissible_range(curve: &SnrCurve, threshold_db: f64) -> Option<(f64, f64)> {
    let ok = |i: usize| curve.snr_db[i] >= threshold_db;
    let first = (0..curve.len()).find(|&i| ok(i))?;
    let last = (0..curve.len()).rev().find(|&i| ok(i))?;
    let crossing = |inside: usize, outside: usize| -> f64 {
        let (s_in, s_out) = (curve.snr_db[inside], curve.snr_db[outside]);
        let (l_in, l_out) = (curve.flux_grid[inside].ln(), curve.flux_grid[outside].ln());
        // fraction of the way from the outside point to the inside point
        let frac = if s_out.is_finite() {
            (threshold_db - s_out) / (s_in - s_out)
        } else {
            1.0
        };
        (l_out + frac.clamp(0.0, 1.0) * (l_in - l_out)).exp()
    };
    let low = if first == 0 {
        curve.flux_grid[0]
    } else {
        crossing(first, first - 1)
    };
    let high = if last + 1 == curve.len() {
        curve.flux_grid[last]
    } else {
        crossing(last, last + 1)
    };
    Some((low, high))
}

/// Ratio of the highest to the lowest flux measurable at `threshold_db`.
pub fn dynamic_range(curve: &SnrCurve, threshold_db: f64) -> Option<f64> {
    admissible_range(curve, threshold_db).map(|(lo, hi)| hi / lo)
}
