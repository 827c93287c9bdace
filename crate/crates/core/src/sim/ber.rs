//! Seeded Monte-Carlo BER sweeps.
//!
//! Frame `f` of SNR point `p` draws its channel, symbols and noise from
//! substream `[p, f, 0]`; sampling detectors draw trajectories from
//! `[p, f, family, j]`. Frames are evaluated in parallel batches and folded
//! back in frame order, and every detector stops at the first frame where its
//! own stopping rule is met, so reports do not depend on thread count.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{family_tag, DetectorKind, SweepConfig, MIN_CONVERGED_ERRORS};
use crate::detectors::{detect_ml_bruteforce, detect_mmse, detect_mmse_sic, HardDecision};
use crate::diffusion::{AddDetector, AlsDetector};
use crate::error::{Error, Result};
use crate::model::{sample_channel, sample_frame, snr_to_sigma0, ChannelInstance, Constellation, TransmissionFrame};
use crate::rng::{derive_substream, SeedPath};

const BATCH_FRAMES: u64 = 128;

/// 97.5% standard normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    /// Fewer errors or bits than required for a converged point.
    Undersampled,
    /// The frame cap stopped the point before the stopping rule was met.
    FrameCap,
}

impl PointFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointFlag::Undersampled => "undersampled",
            PointFlag::FrameCap => "frame_cap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "undersampled" => Some(PointFlag::Undersampled),
            "frame_cap" => Some(PointFlag::FrameCap),
            _ => None,
        }
    }
}

impl fmt::Display for PointFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub detector: String,
    pub snr_db: f64,
    pub sigma0: f64,
    pub frames: u64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub flags: Vec<PointFlag>,
}

impl BerPoint {
    pub fn converged(&self) -> bool {
        self.flags.is_empty()
    }

    /// Binomial standard deviation of the BER estimate.
    pub fn std_err(&self) -> f64 {
        if self.bits == 0 {
            return f64::INFINITY;
        }
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BerReport {
    pub points: Vec<BerPoint>,
    /// Detectors left out because they do not apply at this dimension.
    pub skipped: Vec<String>,
}

impl BerReport {
    pub fn point(&self, detector: &str, snr_db: f64) -> Option<&BerPoint> {
        self.points
            .iter()
            .find(|p| p.detector == detector && p.snr_db == snr_db)
    }

    pub fn curve(&self, detector: &str) -> Vec<&BerPoint> {
        self.points.iter().filter(|p| p.detector == detector).collect()
    }

    pub fn detectors(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for p in &self.points {
            if seen.insert(p.detector.clone()) {
                out.push(p.detector.clone());
            }
        }
        out
    }
}

/// Wilson score interval at 95% confidence. Always brackets `errors/bits`.
pub fn wilson_interval(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 1.0);
    }
    let n = bits as f64;
    let p = errors as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Frame generation and per-detector evaluation for one sweep.
#[derive(Debug)]
pub struct FrameRunner {
    cfg: SweepConfig,
    c: Constellation,
    kinds: Vec<DetectorKind>,
    labels: Vec<String>,
    applicable: Vec<bool>,
    sigma0: Vec<f64>,
}

impl FrameRunner {
    pub fn new(cfg: &SweepConfig) -> Result<Self> {
        let c = cfg.validate()?;
        let kinds = cfg
            .detectors
            .iter()
            .map(|d| d.build(&c))
            .collect::<Result<Vec<_>>>()?;
        let labels = cfg.detectors.iter().map(|d| d.label()).collect();
        let applicable = cfg.detectors.iter().map(|d| d.applies_to(cfg.k)).collect();
        let sigma0 = cfg
            .snr_db
            .iter()
            .map(|&s| snr_to_sigma0(s, cfg.k, c.symbol_energy()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            c,
            kinds,
            labels,
            applicable,
            sigma0,
        })
    }

    pub fn constellation(&self) -> &Constellation {
        &self.c
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sigma0(&self, point: usize) -> f64 {
        self.sigma0[point]
    }

    pub fn bits_per_frame(&self) -> u64 {
        self.cfg.k as u64 * self.c.bits_per_symbol() as u64
    }

    /// Channel and transmission for frame `frame` of SNR point `point`.
    pub fn frame(&self, point: usize, frame: u64) -> Result<(ChannelInstance, TransmissionFrame)> {
        let mut rng = derive_substream(self.cfg.master_seed, &frame_path(point, frame, 0));
        let ch = sample_channel(self.cfg.n, self.cfg.k, &mut rng)?;
        let tx = sample_frame(&ch, &self.c, self.sigma0[point], &mut rng)?;
        Ok((ch, tx))
    }

    /// Runs detector `det` on a frame produced by [`frame`](Self::frame).
    pub fn detect(
        &self,
        det: usize,
        point: usize,
        frame: u64,
        ch: &ChannelInstance,
        tx: &TransmissionFrame,
    ) -> Result<HardDecision> {
        let h = ch.matrix();
        let y = &tx.y;
        let sigma0 = self.sigma0[point];
        let es = self.c.symbol_energy();
        let kind = &self.kinds[det];
        let seed = SeedPath::new(self.cfg.master_seed, &frame_path(point, frame, family_tag(kind)));
        match kind {
            DetectorKind::Mmse => detect_mmse(h, y, sigma0, es, &self.c),
            DetectorKind::MmseSic => detect_mmse_sic(h, y, sigma0, es, &self.c),
            DetectorKind::Ml(cfg) => detect_ml_bruteforce(h, y, &self.c, cfg),
            DetectorKind::Add(cfg) => Ok(AddDetector::new(h, y, &self.c, sigma0, cfg)?.detect(&seed)?.0),
            DetectorKind::Als(cfg, s) => Ok(AlsDetector::new(h, y, &self.c, sigma0, cfg)?.detect(&seed, *s)?.0),
        }
    }

    pub fn bit_errors(&self, tx: &TransmissionFrame, d: &HardDecision) -> u64 {
        tx.symbols
            .iter()
            .zip(&d.symbols)
            .map(|(&a, &b)| self.c.bit_errors(a, b) as u64)
            .sum()
    }

    fn run_frame(&self, point: usize, frame: u64, active: &[usize]) -> Result<Vec<u64>> {
        let (ch, tx) = self.frame(point, frame)?;
        active
            .iter()
            .map(|&det| {
                self.detect(det, point, frame, &ch, &tx)
                    .map(|d| self.bit_errors(&tx, &d))
                    .map_err(|e| Error::SweepAborted {
                        detector: self.labels[det].clone(),
                        snr_db: self.cfg.snr_db[point],
                        path: frame_path(point, frame, family_tag(&self.kinds[det])).to_vec(),
                        source: Box::new(e),
                    })
            })
            .collect()
    }
}

fn frame_path(point: usize, frame: u64, tag: u32) -> [u32; 3] {
    [point as u32, frame as u32, tag]
}

#[derive(Debug, Clone, Default)]
struct Tally {
    frames: u64,
    bits: u64,
    errors: u64,
    done: bool,
}

/// Runs every detector on identical frames at every SNR point.
pub fn run_ber_sweep(cfg: &SweepConfig) -> Result<BerReport> {
    let runner = FrameRunner::new(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if cfg.threads > 0 {
        builder = builder.num_threads(cfg.threads);
    }
    let pool = builder.build().map_err(|e| Error::ThreadPool(e.to_string()))?;
    pool.install(|| sweep(&runner))
}

fn sweep(runner: &FrameRunner) -> Result<BerReport> {
    let cfg = &runner.cfg;
    let rule = &cfg.stopping;
    let bits_per_frame = runner.bits_per_frame();
    let mut report = BerReport::default();
    for (det, ok) in runner.applicable.iter().enumerate() {
        if !ok {
            report.skipped.push(runner.labels[det].clone());
        }
    }

    for (point, &snr_db) in cfg.snr_db.iter().enumerate() {
        let mut tallies = vec![Tally::default(); runner.kinds.len()];
        for (t, ok) in tallies.iter_mut().zip(&runner.applicable) {
            t.done = !ok;
        }
        let mut next = 0u64;
        while next < rule.max_frames && tallies.iter().any(|t| !t.done) {
            let active: Vec<usize> = (0..tallies.len()).filter(|&d| !tallies[d].done).collect();
            let end = (next + BATCH_FRAMES).min(rule.max_frames);
            let results: Vec<Result<Vec<u64>>> = (next..end)
                .into_par_iter()
                .map(|f| runner.run_frame(point, f, &active))
                .collect();
            for result in results {
                let errors = result?;
                for (&det, e) in active.iter().zip(errors) {
                    let t = &mut tallies[det];
                    if t.done {
                        continue;
                    }
                    t.frames += 1;
                    t.bits += bits_per_frame;
                    t.errors += e;
                    if t.bits >= rule.min_bits && t.errors >= rule.min_errors {
                        t.done = true;
                    }
                }
            }
            next = end;
        }

        for (det, t) in tallies.iter().enumerate() {
            if !runner.applicable[det] {
                continue;
            }
            let mut flags = Vec::new();
            if t.errors < rule.min_errors.max(MIN_CONVERGED_ERRORS) || t.bits < rule.min_bits {
                flags.push(PointFlag::Undersampled);
            }
            if t.frames >= rule.max_frames && !(t.bits >= rule.min_bits && t.errors >= rule.min_errors) {
                flags.push(PointFlag::FrameCap);
            }
            let ber = if t.bits == 0 { 0.0 } else { t.errors as f64 / t.bits as f64 };
            let (ci_lo, ci_hi) = wilson_interval(t.errors, t.bits);
            report.points.push(BerPoint {
                detector: runner.labels[det].clone(),
                snr_db,
                sigma0: runner.sigma0[point],
                frames: t.frames,
                bits: t.bits,
                errors: t.errors,
                ber,
                ci_lo,
                ci_hi,
                flags,
            });
        }
    }
    Ok(report)
}
