//! Simulated HDR imaging: flux maps in, per-pixel sensor capture,
//! reconstruction, tone mapping and file output.

mod output;
mod pfm;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate_conventional, estimate_from_counts, estimate_qis, ConventionalEstimate};
use crate::photon_mc::{SeedSpec, SimSensor};
use crate::sensor::{Exposure, FluxLevel};

pub use output::{write_outputs, OutputPaths, SUMMARY_CSV_HEADER};
pub use pfm::{decode_pfm, encode_pfm, load_flux_image, save_flux_image};

/// Photon flux per pixel and channel (photons/s), row-major with
/// interleaved channels, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FluxImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image dimensions {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("{channels} channels (expected 1 or 3)")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::OutOfRange { field: "flux", value: *v });
        }
        Ok(FluxImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn with_data(&self, data: Vec<f64>) -> FluxImage {
        FluxImage { data, ..*self }
    }
}

/// Simulated counts with the sensor and exposure that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CountImage {
    width: usize,
    height: usize,
    channels: usize,
    counts: Vec<u64>,
    sensor: SimSensor,
    exposure: Exposure,
}

impl CountImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sensor(&self) -> &SimSensor {
        &self.sensor
    }

    pub fn exposure(&self) -> Exposure {
        self.exposure
    }
}

/// Log-affine remap of the positive values so that the brightest becomes
/// `peak_flux` and brightest/dimmest equals `target_ratio`. Zeros stay zero.
pub fn rescale_dynamic_range(img: &FluxImage, target_ratio: f64, peak_flux: f64) -> Result<FluxImage> {
    if target_ratio.is_nan() || target_ratio <= 1.0 || target_ratio.is_infinite() {
        return Err(Error::OutOfRange {
            field: "target_ratio",
            value: target_ratio,
        });
    }
    if peak_flux.is_nan() || peak_flux <= 0.0 || peak_flux.is_infinite() {
        return Err(Error::OutOfRange {
            field: "peak_flux",
            value: peak_flux,
        });
    }
    let positive = img.data.iter().copied().filter(|&v| v > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0, f64::max);
    if hi <= lo {
        return Err(Error::InvalidArgument(
            "rescaling needs at least two distinct positive values".into(),
        ));
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let slope = target_ratio.ln() / (ln_hi - ln_lo);
    let ln_peak = peak_flux.ln();
    let data = img
        .data
        .iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else if v == hi {
                peak_flux
            } else {
                (ln_peak + slope * (v.ln() - ln_hi)).exp()
            }
        })
        .collect();
    Ok(img.with_data(data))
}

/// Simulates every pixel and channel independently. Sample `i` of the
/// interleaved buffer (`pixel_index * channels + channel`) uses stream `i`.
pub fn simulate_capture(img: &FluxImage, sensor: &SimSensor, exposure: Exposure, master_seed: u64) -> Result<CountImage> {
    sensor.validate(exposure)?;
    let base = SeedSpec::new(master_seed, 0);
    let counts = img
        .data
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sensor.sample_count(FluxLevel::new(v)?, exposure, base.with_stream(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CountImage {
        width: img.width,
        height: img.height,
        channels: img.channels,
        counts,
        sensor: *sensor,
        exposure,
    })
}

/// Reconstructed flux plus a per-sample saturation flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub flux: FluxImage,
    /// same layout as `flux`
    pub saturated: Vec<bool>,
}

impl Reconstruction {
    pub fn saturated_count(&self) -> usize {
        self.saturated.iter().filter(|&&s| s).count()
    }
}

/// Inverts the sensor response sample by sample.
///
/// Counts the estimator cannot invert are flagged and replaced by the
/// largest representable flux: `N_fwc / (q T)` for a full conventional well,
/// the estimate at the largest admissible count for a SPAD, and the estimate
/// at `N - 1` filled jots for a QIS.
pub fn reconstruct_flux(counts: &CountImage) -> Result<Reconstruction> {
    let exposure = counts.exposure;
    let invert: Box<dyn Fn(u64) -> Result<(f64, bool)> + Sync> = match counts.sensor {
        SimSensor::Spad { cfg, .. } => {
            let mut top = cfg.capacity(exposure);
            while top > 0 && estimate_from_counts(top, &cfg, exposure).is_err() {
                top -= 1;
            }
            let ceiling = estimate_from_counts(top, &cfg, exposure)?.phi_hat;
            Box::new(move |n| match estimate_from_counts(n, &cfg, exposure) {
                Ok(e) => Ok((e.phi_hat, false)),
                Err(_) => Ok((ceiling, true)),
            })
        }
        SimSensor::Conventional(cfg) => {
            let ceiling = cfg.saturation_flux(exposure);
            Box::new(move |n| match estimate_conventional(n, &cfg, exposure)? {
                ConventionalEstimate::Flux(e) => Ok((e.phi_hat, false)),
                ConventionalEstimate::Saturated => Ok((ceiling, true)),
            })
        }
        SimSensor::Qis(cfg) => {
            let bins = cfg.bins(exposure)?;
            let ceiling = estimate_qis(bins - 1, &cfg, exposure)?.phi_hat;
            Box::new(move |n| {
                if n >= bins {
                    Ok((ceiling, true))
                } else {
                    Ok((estimate_qis(n, &cfg, exposure)?.phi_hat, false))
                }
            })
        }
    };
    let (data, saturated): (Vec<f64>, Vec<bool>) = counts
        .counts
        .par_iter()
        .map(|&n| invert(n))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(Reconstruction {
        flux: FluxImage::new(counts.width, counts.height, counts.channels, data)?,
        saturated,
    })
}

/// 8-bit image with the same geometry as its source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneMapped {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

fn luminance(px: &[f64]) -> f64 {
    match px {
        [r, g, b] => 0.2126 * r + 0.7152 * g + 0.0722 * b,
        [y] => *y,
        _ => unreachable!("1 or 3 channels"),
    }
}

/// Global photographic operator: with `L_avg` the geometric mean of the
/// positive pixel luminances, each channel value `c` becomes
/// `round(255 * c' / (1 + c'))` with `c' = c / (key * L_avg)`.
/// An image without positive luminance maps to all zeros.
pub fn tone_map(img: &FluxImage, key: f64) -> Result<ToneMapped> {
    if key.is_nan() || key <= 0.0 || key.is_infinite() {
        return Err(Error::OutOfRange { field: "key", value: key });
    }
    let (mut log_sum, mut n) = (0.0, 0usize);
    for px in img.data.chunks_exact(img.channels) {
        let l = luminance(px);
        if l > 0.0 {
            log_sum += l.ln();
            n += 1;
        }
    }
    let data = if n == 0 {
        vec![0; img.data.len()]
    } else {
        let scale = key * (log_sum / n as f64).exp();
        img.data
            .iter()
            .map(|&c| {
                let c = c / scale;
                // c / (1 + c) without overflow for huge c
                let v = if c.is_infinite() { 1.0 } else { c / (1.0 + c) };
                (255.0 * v).round() as u8
            })
            .collect()
    };
    Ok(ToneMapped {
        width: img.width,
        height: img.height,
        channels: img.channels,
        data,
    })
}
