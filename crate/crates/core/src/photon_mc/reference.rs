use rand_distr::{Binomial, Distribution, Normal, Poisson};

use crate::error::Result;
use crate::sensor::{ConventionalConfig, Exposure, FluxLevel, QisConfig};

use super::SeedSpec;

/// Photo-electrons plus rounded Gaussian read noise, clamped to `[0, N_fwc]`.
pub fn simulate_conventional_count(phi: FluxLevel, cfg: &ConventionalConfig, exposure: Exposure, seed: SeedSpec) -> u64 {
    let mut rng = seed.rng();
    let mean = cfg.quantum_efficiency * phi.get() * exposure.seconds();
    let cap = cfg.full_well as f64;
    // Above ~60 sigma past the well there is no point sampling.
    let electrons = if mean <= 0.0 {
        0.0
    } else if mean - 60.0 * mean.sqrt() > cap + 60.0 * cfg.read_noise_e {
        return cfg.full_well;
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(&mut rng)
    };
    let noise = if cfg.read_noise_e > 0.0 {
        Normal::new(0.0, cfg.read_noise_e).expect("validated read noise").sample(&mut rng).round()
    } else {
        0.0
    };
    (electrons + noise).clamp(0.0, cap) as u64
}

/// Number of jots (out of `T / tau_b`) that saw at least one photon.
pub fn simulate_qis_count(phi: FluxLevel, cfg: &QisConfig, exposure: Exposure, seed: SeedSpec) -> Result<u64> {
    let bins = cfg.bins(exposure)?;
    let x = cfg.quantum_efficiency * phi.get() * cfg.bin_width_s;
    let p = -(-x).exp_m1();
    if p >= 1.0 {
        return Ok(bins);
    }
    let mut rng = seed.rng();
    Ok(Binomial::new(bins, p).expect("probability in [0, 1)").sample(&mut rng))
}
