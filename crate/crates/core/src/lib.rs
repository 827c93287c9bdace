//! Score-based sampling detectors for real-valued massive MIMO systems.
//!
//! The crate is organised the way an experiment flows:
//!
//! - [`model`]: constellations, channel and frame generation, SNR bookkeeping.
//! - [`detectors`]: MMSE, MMSE-SIC, the brute-force ML oracle and the
//!   conjugate-gradient inner solver.
//! - [`diffusion`]: the geometric noise schedule, the lattice-Gaussian
//!   denoiser and Tweedie score, approximate diffusion detection (ADD) and the
//!   annealed Langevin (ALS) baseline.
//! - [`sim`]: seeded Monte-Carlo BER sweeps and single-trajectory timing.
//! - [`experiment`]: declarative experiment files, presets, CSV and manifest
//!   output consumed by the `addmimo` command-line tool.

pub mod detectors;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
pub use model::{Constellation, ChannelInstance, SnrPoint, TransmissionFrame};
pub use rng::{derive_substream, SeedPath, Stream};
