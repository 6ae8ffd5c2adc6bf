use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{save_flux_image, Reconstruction, ToneMapped};

pub const SUMMARY_CSV_HEADER: &str = "channel,min_flux,max_flux,mean_flux,saturated_pixels";

/// Destinations for [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub png: PathBuf,
    pub pfm: PathBuf,
    pub summary_csv: PathBuf,
}

impl OutputPaths {
    /// `{prefix}.png`, `{prefix}_flux.pfm`, `{prefix}_summary.csv`
    pub fn from_prefix(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref().as_os_str().to_owned();
        let with = |suffix: &str| {
            let mut s = p.clone();
            s.push(suffix);
            PathBuf::from(s)
        };
        OutputPaths {
            png: with(".png"),
            pfm: with("_flux.pfm"),
            summary_csv: with("_summary.csv"),
        }
    }
}

fn channel_name(channels: usize, c: usize) -> &'static str {
    if channels == 1 {
        "gray"
    } else {
        ["r", "g", "b"][c]
    }
}

/// Per-channel flux statistics and saturated sample counts.
pub fn write_summary<W: Write>(rec: &Reconstruction, mut out: W) -> std::io::Result<()> {
    let ch = rec.flux.channels();
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for c in 0..ch {
        let values = rec.flux.data().iter().skip(c).step_by(ch);
        let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            n += 1;
        }
        let saturated = rec.saturated.iter().skip(c).step_by(ch).filter(|&&s| s).count();
        writeln!(
            out,
            "{},{:e},{:e},{:e},{saturated}",
            channel_name(ch, c),
            lo,
            hi,
            sum / n as f64
        )?;
    }
    Ok(())
}

fn write_png(toned: &ToneMapped, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), toned.width as u32, toned.height as u32);
    encoder.set_color(if toned.channels == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |source| Error::Png {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&toned.data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Writes the tone-mapped PNG, the reconstructed flux as PFM and the
/// summary CSV.
pub fn write_outputs(rec: &Reconstruction, toned: &ToneMapped, paths: &OutputPaths) -> Result<()> {
    write_png(toned, &paths.png)?;
    save_flux_image(&rec.flux, &paths.pfm)?;
    let path = &paths.summary_csv;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_summary(rec, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
