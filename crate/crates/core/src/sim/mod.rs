pub mod ber;
pub mod config;
pub mod timing;

pub use ber::{run_ber_sweep, wilson_interval, BerPoint, BerReport, FrameRunner, PointFlag};
pub use config::{DetectorKind, DetectorSpec, StoppingRule, SweepConfig};
pub use timing::{run_timing, ScalingFit, TimingConfig, TimingReport, TimingRow};
