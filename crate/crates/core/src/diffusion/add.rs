//! Approximate diffusion detection (ADD).
//!
//! One trajectory walks the geometric schedule from `t = 1` down to `t = ε`.
//! At every step the received signal is perturbed to the current noise level,
//! a few CG iterations started from the current sample give `x̄`, the LGD
//! Tweedie score is evaluated at `x̄`, and an Euler–Maruyama step of the
//! reverse SDE produces the next sample. S trajectories form a candidate list
//! and the candidate with the smallest residual is the decision.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoise::prior_score_into;
use super::schedule::NoiseSchedule;
use super::{list_decision, CandidateList};
use crate::detectors::{CgSystem, CgWorkspace, CgdConfig, HardDecision};
use crate::error::{Error, Result};
use crate::model::Constellation;
use crate::rng::SeedPath;

/// Sign of the drift term in the reverse step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftSign {
    /// `x̂ = x̄ + g²·s·Δt + g√Δt·w`: moves toward the denoiser output.
    #[default]
    TowardDenoised,
    /// `x̂ = x̄ − g²·s·Δt + g√Δt·w`, exactly as the algorithm box prints it.
    /// Replication mode only; it pushes samples away from the alphabet.
    LiteralAlg2,
}

impl DriftSign {
    fn factor(self) -> f64 {
        match self {
            DriftSign::TowardDenoised => 1.0,
            DriftSign::LiteralAlg2 => -1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftSign::TowardDenoised => "toward_denoised",
            DriftSign::LiteralAlg2 => "literal_alg2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddConfig {
    pub schedule: NoiseSchedule,
    pub trajectories: usize,
    pub inner: CgdConfig,
    #[serde(default)]
    pub drift_sign: DriftSign,
}

impl AddConfig {
    /// `σ_min = 0.01`, `σ_max = E_s`, `ε = 10⁻³`, `T = 20`, `T_iter = 3`.
    pub fn recommended(symbol_energy: f64, trajectories: usize) -> Result<Self> {
        let cfg = Self {
            schedule: NoiseSchedule::new(0.01, symbol_energy, 20, 1e-3)?,
            trajectories,
            inner: CgdConfig::default(),
            drift_sign: DriftSign::TowardDenoised,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::invalid("ADD needs at least one trajectory"));
        }
        self.inner.validate()
    }
}

/// ADD bound to one channel and received vector. Building it forms the CG
/// matrix `HᵀH + λI` once; trajectories only read it.
#[derive(Debug)]
pub struct AddDetector<'a> {
    h: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    c: &'a Constellation,
    cfg: AddConfig,
    system: CgSystem,
}

impl<'a> AddDetector<'a> {
    pub fn new(
        h: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        c: &'a Constellation,
        sigma0: f64,
        cfg: &AddConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if h.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "ADD (rows of H vs y)",
                expected: h.nrows(),
                found: y.len(),
            });
        }
        let lambda = cfg.inner.regularizer.lambda(sigma0, c.symbol_energy());
        let system = CgSystem::new(h, lambda)?;
        Ok(Self {
            h,
            y,
            c,
            cfg: *cfg,
            system,
        })
    }

    pub fn config(&self) -> &AddConfig {
        &self.cfg
    }

    /// One reverse-time trajectory; returns the unquantised sample `x̂(ε)`.
    ///
    /// Draw order: K values for `x̂(1)`, then per step K values of `z` for the
    /// perturbation followed by K values of `w` for the Langevin noise.
    pub fn trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let sched = &self.cfg.schedule;
        let (n, k) = self.h.shape();
        let dt = sched.dt();
        let sqrt_dt = dt.sqrt();
        let drift = self.cfg.drift_sign.factor();
        let points = self.c.points();

        let mut x_hat = DVector::from_fn(k, |_, _| sched.sigma_max() * rng.sample::<f64, _>(StandardNormal));
        let mut z = DVector::zeros(k);
        let mut y_tilde = DVector::zeros(n);
        let mut b = DVector::zeros(k);
        let mut score = DVector::zeros(k);
        let mut ws = CgWorkspace::new(k);

        for step in 0..sched.steps() {
            let sigma_prev = sched.sigma(sched.time(step));
            fill_normal(&mut z, rng);
            y_tilde.copy_from(self.y);
            y_tilde.gemv(sigma_prev, self.h, &z, 1.0);

            let t = sched.time(step + 1);
            b.gemv_tr(1.0, self.h, &y_tilde, 0.0);
            // x̂ becomes x̄ in place.
            self.system.solve_in_place(&b, &mut x_hat, self.cfg.inner.t_iter, &mut ws, |_| {})?;

            let sigma = sched.sigma(t);
            let g = sched.g(t);
            prior_score_into(&x_hat, sigma, points, &mut score);
            let drift_scale = drift * g * g * dt;
            let noise_scale = g * sqrt_dt;
            for (x, s) in x_hat.iter_mut().zip(score.iter()) {
                let w: f64 = rng.sample(StandardNormal);
                *x += drift_scale * s + noise_scale * w;
            }
        }
        Ok(x_hat)
    }

    /// S trajectories on substreams `seed/j`, quantised and list-decided.
    pub fn detect(&self, seed: &SeedPath) -> Result<(HardDecision, CandidateList)> {
        let raw = (0..self.cfg.trajectories)
            .map(|j| self.trajectory(&mut seed.child(j as u32).stream()))
            .collect::<Result<Vec<_>>>()?;
        Ok(list_decision(self.h, self.y, self.c, raw))
    }

    /// As [`detect`](Self::detect) with trajectories spread over the rayon
    /// pool. Output is identical.
    pub fn detect_par(&self, seed: &SeedPath) -> Result<(HardDecision, CandidateList)> {
        let raw = (0..self.cfg.trajectories)
            .into_par_iter()
            .map(|j| self.trajectory(&mut seed.child(j as u32).stream()))
            .collect::<Result<Vec<_>>>()?;
        Ok(list_decision(self.h, self.y, self.c, raw))
    }
}

fn fill_normal<R: Rng + ?Sized>(v: &mut DVector<f64>, rng: &mut R) {
    for e in v.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
}

/// `ỹ = y + σ_t·H·z` with `z ~ N(0, I_K)`, a draw from `N(y, σ_t² HHᵀ)`.
pub fn perturb_received<R: Rng + ?Sized>(
    y: &DVector<f64>,
    h: &DMatrix<f64>,
    sigma_t: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "perturb_received",
            expected: h.nrows(),
            found: y.len(),
        });
    }
    if !(sigma_t >= 0.0) {
        return Err(Error::invalid("perturbation level must be >= 0"));
    }
    let mut z = DVector::zeros(h.ncols());
    fill_normal(&mut z, rng);
    let mut out = y.clone();
    out.gemv(sigma_t, h, &z, 1.0);
    Ok(out)
}

/// One ADD trajectory drawn from `rng`.
pub fn add_trajectory<R: Rng + ?Sized>(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Constellation,
    sigma0: f64,
    cfg: &AddConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    AddDetector::new(h, y, c, sigma0, cfg)?.trajectory(rng)
}

/// Full ADD list detection. Trajectory `j` uses substream `seed/j`.
pub fn add_detect(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Constellation,
    sigma0: f64,
    cfg: &AddConfig,
    seed: &SeedPath,
) -> Result<(HardDecision, CandidateList)> {
    AddDetector::new(h, y, c, sigma0, cfg)?.detect(seed)
}

pub fn add_detect_par(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Constellation,
    sigma0: f64,
    cfg: &AddConfig,
    seed: &SeedPath,
) -> Result<(HardDecision, CandidateList)> {
    AddDetector::new(h, y, c, sigma0, cfg)?.detect_par(seed)
}
