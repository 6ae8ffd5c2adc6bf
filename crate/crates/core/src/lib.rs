//! Passive free-running SPAD (PF-SPAD) imaging models.
//!
//! Closed-form and exact count statistics of a dead-time-limited SPAD pixel,
//! reference conventional and quanta image sensor models, flux estimators,
//! seeded Monte Carlo simulation, and an HDR image capture pipeline.

pub mod error;
pub mod estimators;
pub mod hdr_pipeline;
pub mod photon_mc;
pub mod reference_analytic;
pub mod sensor;
pub mod spad_analytic;
pub mod special;

pub use error::{Error, Result};
pub use sensor::{ConfigFile, ConventionalConfig, Exposure, FluxLevel, QisConfig, SpadConfig};
