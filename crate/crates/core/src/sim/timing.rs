//! Single-trajectory wall-clock benchmarks.
//!
//! Each repetition draws a fresh channel and frame, then times the detector
//! setup (the CG matrix `HᵀH + λI` for ADD, the channel SVD for ALS) and one
//! trajectory separately. The per-trajectory figure charges the whole setup
//! to that trajectory. Everything runs on the calling thread.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DetectorKind, DetectorSpec};
use crate::diffusion::{AddDetector, AlsDetector};
use crate::error::{Error, Result};
use crate::model::{sample_channel, sample_frame, snr_to_sigma0, Constellation};
use crate::rng::SeedPath;

/// Smallest accepted repetition count.
pub const MIN_REPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    /// Square dimensions N = K to benchmark.
    pub dims: Vec<usize>,
    pub reps: usize,
    /// Untimed repetitions run first at every dimension.
    pub warmup: usize,
    pub m: usize,
    pub snr_db: f64,
    /// ADD and ALS entries only.
    pub detectors: Vec<DetectorSpec>,
    pub master_seed: u64,
}

impl TimingConfig {
    pub fn validate(&self) -> Result<Constellation> {
        let c = Constellation::qam(self.m)?;
        if self.dims.is_empty() {
            return Err(Error::invalid("dimension grid is empty"));
        }
        if self.dims.contains(&0) {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.reps < MIN_REPS {
            return Err(Error::invalid(format!(
                "timing needs at least {MIN_REPS} repetitions, got {}",
                self.reps
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("timing SNR must be finite"));
        }
        if self.detectors.is_empty() {
            return Err(Error::invalid("detector roster is empty"));
        }
        for d in &self.detectors {
            match d.build(&c)? {
                DetectorKind::Add(_) | DetectorKind::Als(..) => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "{} is not a sampling detector; timing covers ADD and ALS only",
                        d.label()
                    )))
                }
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub detector: String,
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    /// Setup plus one trajectory, microseconds.
    pub mean_us: f64,
    pub median_us: f64,
    pub setup_mean_us: f64,
    pub setup_median_us: f64,
    pub trajectory_mean_us: f64,
    pub trajectory_median_us: f64,
    /// Setup plus the detector's full trajectory count, from the means.
    pub frame_mean_us: f64,
}

/// Log-log slope of median time against dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub detector: String,
    pub exponent: f64,
    pub setup_exponent: f64,
    pub trajectory_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub fits: Vec<ScalingFit>,
    pub machine: String,
}

impl TimingReport {
    pub fn row(&self, detector: &str, n: usize) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.detector == detector && r.n == n)
    }

    pub fn fit(&self, detector: &str) -> Option<&ScalingFit> {
        self.fits.iter().find(|f| f.detector == detector)
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Operating system, architecture, core count and CPU model when known.
pub fn machine_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{} {} / {} logical cpus / {}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpus,
        model
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn micros(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e6
}

/// Times one setup and one trajectory on the frame at `path`.
fn measure(kind: &DetectorKind, c: &Constellation, n: usize, snr_db: f64, path: &SeedPath) -> Result<(f64, f64)> {
    let mut rng = path.child(0).stream();
    let ch = sample_channel(n, n, &mut rng)?;
    let sigma0 = snr_to_sigma0(snr_db, n, c.symbol_energy())?;
    let tx = sample_frame(&ch, c, sigma0, &mut rng)?;
    let mut traj_rng = path.child(1).stream();
    match kind {
        DetectorKind::Add(cfg) => {
            let start = Instant::now();
            let det = AddDetector::new(ch.matrix(), &tx.y, c, sigma0, cfg)?;
            let setup = micros(start);
            let start = Instant::now();
            black_box(det.trajectory(&mut traj_rng)?);
            Ok((setup, micros(start)))
        }
        DetectorKind::Als(cfg, _) => {
            let start = Instant::now();
            let det = AlsDetector::new(ch.matrix(), &tx.y, c, sigma0, cfg)?;
            let setup = micros(start);
            let start = Instant::now();
            black_box(det.trajectory(&mut traj_rng));
            Ok((setup, micros(start)))
        }
        _ => Err(Error::invalid("timing covers ADD and ALS only")),
    }
}

/// Benchmarks every detector at every dimension. Detectors at one dimension
/// see the same channels.
pub fn run_timing(cfg: &TimingConfig) -> Result<TimingReport> {
    let c = cfg.validate()?;
    let kinds = cfg
        .detectors
        .iter()
        .map(|d| d.build(&c))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (di, &n) in cfg.dims.iter().enumerate() {
        for (spec, kind) in cfg.detectors.iter().zip(&kinds) {
            let trajectories = match kind {
                DetectorKind::Add(a) => a.trajectories,
                DetectorKind::Als(_, s) => *s,
                _ => 1,
            };
            let mut setup = Vec::with_capacity(cfg.reps);
            let mut traj = Vec::with_capacity(cfg.reps);
            for rep in 0..cfg.warmup + cfg.reps {
                let path = SeedPath::new(cfg.master_seed, &[di as u32, rep as u32]);
                let (s, t) = measure(kind, &c, n, cfg.snr_db, &path)?;
                if rep >= cfg.warmup {
                    setup.push(s);
                    traj.push(t);
                }
            }
            let total: Vec<f64> = setup.iter().zip(&traj).map(|(s, t)| s + t).collect();
            rows.push(TimingRow {
                detector: spec.label(),
                n,
                k: n,
                reps: cfg.reps,
                mean_us: mean(&total),
                median_us: median(&total),
                setup_mean_us: mean(&setup),
                setup_median_us: median(&setup),
                trajectory_mean_us: mean(&traj),
                trajectory_median_us: median(&traj),
                frame_mean_us: mean(&setup) + trajectories as f64 * mean(&traj),
            });
        }
    }

    let mut fits = Vec::new();
    if cfg.dims.len() >= 2 {
        for spec in &cfg.detectors {
            let label = spec.label();
            let mine: Vec<&TimingRow> = rows.iter().filter(|r| r.detector == label).collect();
            let xs: Vec<f64> = mine.iter().map(|r| r.n as f64).collect();
            let fit = |f: fn(&TimingRow) -> f64| loglog_slope(&xs, &mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            fits.push(ScalingFit {
                exponent: fit(|r| r.median_us),
                setup_exponent: fit(|r| r.setup_median_us),
                trajectory_exponent: fit(|r| r.trajectory_median_us),
                detector: label,
            });
        }
    }

    Ok(TimingReport {
        rows,
        fits,
        machine: machine_descriptor(),
    })
}
