//! Annealed Langevin sampling (ALS) baseline.
//!
//! Per trajectory: start from `N(0, σ_T·I)`, then for each level from the
//! largest to the smallest run `L_A` Langevin steps
//! `x ← x + (δ_t/2)·s(x, σ_t) + √δ_t·w` with `δ_t = ε_lr·σ_t²/σ_ref²`. The
//! posterior score is the LGD prior score plus the SVD likelihood score.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoise::prior_score_into;
use super::svd::{likelihood_into, svd_cache, LikelihoodVariant, LikelihoodWorkspace, SvdCache};
use super::{list_decision, CandidateList};
use crate::detectors::HardDecision;
use crate::error::{Error, Result};
use crate::model::Constellation;
use crate::rng::SeedPath;

/// Level whose variance normalises the step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepReference {
    /// `σ_T`, the largest level: every `δ_t ≤ ε_lr`.
    #[default]
    Largest,
    /// `σ_1`, the smallest level, as in most annealed Langevin samplers.
    Smallest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Number of noise levels T.
    pub levels: usize,
    /// Langevin steps per level, `L_A`.
    pub langevin_steps: usize,
    /// Annealed learning rate `ε_lr`.
    pub step_size: f64,
    #[serde(default)]
    pub variant: LikelihoodVariant,
    #[serde(default)]
    pub step_reference: StepReference,
}

impl AlsConfig {
    /// Budget matched to ADD with `T = 20`: twenty levels between 0.01 and
    /// `E_s`, `L_A` steps each.
    pub fn recommended(symbol_energy: f64, langevin_steps: usize) -> Result<Self> {
        let cfg = Self {
            sigma_min: 0.01,
            sigma_max: symbol_energy,
            levels: 20,
            langevin_steps,
            step_size: DEFAULT_STEP_SIZE,
            variant: LikelihoodVariant::IndependentNoise,
            step_reference: StepReference::Largest,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0) || !self.sigma_max.is_finite() {
            return Err(Error::invalid("ALS levels must be positive and finite"));
        }
        if self.levels == 0 || self.langevin_steps == 0 {
            return Err(Error::invalid("ALS needs at least one level and one Langevin step"));
        }
        if self.levels > 1 && !(self.sigma_max > self.sigma_min) {
            return Err(Error::invalid("ALS sigma_max must exceed sigma_min"));
        }
        if self.levels == 1 && self.sigma_max < self.sigma_min {
            return Err(Error::invalid("ALS sigma_max must not be below sigma_min"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid("ALS step size must be positive"));
        }
        Ok(())
    }

    /// Geometric levels `σ_1 < … < σ_T` with `σ_1 = sigma_min` and
    /// `σ_T = sigma_max`; a single level sits at `sigma_max`.
    pub fn sigma_levels(&self) -> Vec<f64> {
        if self.levels == 1 {
            return vec![self.sigma_max];
        }
        let ratio = self.sigma_max / self.sigma_min;
        let last = (self.levels - 1) as f64;
        (0..self.levels)
            .map(|i| self.sigma_min * ratio.powf(i as f64 / last))
            .collect()
    }

    /// `δ_t` for every level, in the same order as [`sigma_levels`](Self::sigma_levels).
    pub fn step_sizes(&self) -> Vec<f64> {
        let levels = self.sigma_levels();
        let reference = match self.step_reference {
            StepReference::Largest => levels[levels.len() - 1],
            StepReference::Smallest => levels[0],
        };
        levels
            .iter()
            .map(|s| self.step_size * s * s / (reference * reference))
            .collect()
    }
}

pub const DEFAULT_STEP_SIZE: f64 = 1.0;

/// ALS bound to one channel. Construction computes the SVD and `Uᵀy`.
#[derive(Debug)]
pub struct AlsDetector<'a> {
    h: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    c: &'a Constellation,
    sigma0: f64,
    cfg: AlsConfig,
    svd: SvdCache,
    uty: DVector<f64>,
}

impl<'a> AlsDetector<'a> {
    pub fn new(
        h: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        c: &'a Constellation,
        sigma0: f64,
        cfg: &AlsConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if h.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "ALS (rows of H vs y)",
                expected: h.nrows(),
                found: y.len(),
            });
        }
        let svd = svd_cache(h)?;
        Ok(Self::with_svd(h, y, c, sigma0, cfg, svd))
    }

    pub fn with_svd(
        h: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        c: &'a Constellation,
        sigma0: f64,
        cfg: &AlsConfig,
        svd: SvdCache,
    ) -> Self {
        let uty = svd.u.tr_mul(y);
        Self {
            h,
            y,
            c,
            sigma0,
            cfg: *cfg,
            svd,
            uty,
        }
    }

    pub fn svd(&self) -> &SvdCache {
        &self.svd
    }

    /// One annealed trajectory; returns the unquantised terminal sample.
    ///
    /// Draw order: K values for the initial sample, then K values per
    /// Langevin step.
    pub fn trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.h.ncols();
        let levels = self.cfg.sigma_levels();
        let steps = self.cfg.step_sizes();
        let init_std = levels[levels.len() - 1].sqrt();
        let points = self.c.points();

        let mut x = DVector::from_fn(k, |_, _| init_std * rng.sample::<f64, _>(StandardNormal));
        let mut prior = DVector::zeros(k);
        let mut lik = DVector::zeros(k);
        let mut ws = LikelihoodWorkspace::new(k);
        for (&sigma_t, &delta) in levels.iter().zip(steps.iter()).rev() {
            let half = 0.5 * delta;
            let noise = delta.sqrt();
            for _ in 0..self.cfg.langevin_steps {
                prior_score_into(&x, sigma_t, points, &mut prior);
                likelihood_into(&x, &self.uty, &self.svd, sigma_t, self.sigma0, self.cfg.variant, &mut ws, &mut lik);
                for i in 0..k {
                    let w: f64 = rng.sample(StandardNormal);
                    x[i] += half * (prior[i] + lik[i]) + noise * w;
                }
            }
        }
        x
    }

    pub fn detect(&self, seed: &SeedPath, trajectories: usize) -> Result<(HardDecision, CandidateList)> {
        if trajectories == 0 {
            return Err(Error::invalid("ALS needs at least one trajectory"));
        }
        let raw = (0..trajectories)
            .map(|j| self.trajectory(&mut seed.child(j as u32).stream()))
            .collect();
        Ok(list_decision(self.h, self.y, self.c, raw))
    }

    pub fn detect_par(&self, seed: &SeedPath, trajectories: usize) -> Result<(HardDecision, CandidateList)> {
        if trajectories == 0 {
            return Err(Error::invalid("ALS needs at least one trajectory"));
        }
        let raw = (0..trajectories)
            .into_par_iter()
            .map(|j| self.trajectory(&mut seed.child(j as u32).stream()))
            .collect();
        Ok(list_decision(self.h, self.y, self.c, raw))
    }
}

/// Full ALS list detection. Trajectory `j` uses substream `seed/j`.
pub fn als_detect(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Constellation,
    sigma0: f64,
    cfg: &AlsConfig,
    trajectories: usize,
    seed: &SeedPath,
) -> Result<(HardDecision, CandidateList)> {
    AlsDetector::new(h, y, c, sigma0, cfg)?.detect(seed, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_constellation, sample_channel, sample_frame};
    use crate::rng::derive_substream;

    #[test]
    fn levels_are_geometric() {
        let cfg = AlsConfig::recommended(1.0, 3).unwrap();
        let lv = cfg.sigma_levels();
        assert_eq!(lv.len(), 20);
        assert!((lv[0] - 0.01).abs() < 1e-15 && (lv[19] - 1.0).abs() < 1e-12);
        let r = lv[0] / lv[1];
        for w in lv.windows(2) {
            assert!((w[0] / w[1] - r).abs() < 1e-12);
            assert!(w[0] / w[1] < 1.0);
        }
        let d = cfg.step_sizes();
        assert!((d[19] - cfg.step_size).abs() < 1e-15);
        assert!(d.iter().all(|&x| x <= cfg.step_size + 1e-15));
        let small = AlsConfig {
            step_reference: StepReference::Smallest,
            ..cfg
        };
        assert!((small.step_sizes()[0] - cfg.step_size).abs() < 1e-15);
    }

    #[test]
    fn pick_is_list_minimum() {
        let c = build_constellation(4).unwrap();
        let mut rng = derive_substream(50, &[]);
        let ch = sample_channel(8, 8, &mut rng).unwrap();
        let f = sample_frame(&ch, &c, 0.5, &mut rng).unwrap();
        let cfg = AlsConfig::recommended(1.0, 3).unwrap();
        let seed = SeedPath::new(1, &[7]);
        let (d, list) = als_detect(ch.matrix(), &f.y, &c, 0.5, &cfg, 10, &seed).unwrap();
        assert!(list.residuals.iter().all(|r| d.residual <= *r));
        let det = AlsDetector::new(ch.matrix(), &f.y, &c, 0.5, &cfg).unwrap();
        assert_eq!(det.detect_par(&seed, 10).unwrap().1, list);
    }

    #[test]
    fn single_level_contracts_toward_truth() {
        let c = build_constellation(4).unwrap();
        let k = 8;
        let h = DMatrix::<f64>::identity(k, k);
        let sigma = 0.1;
        let cfg = AlsConfig {
            sigma_min: sigma,
            sigma_max: sigma,
            levels: 1,
            langevin_steps: 20,
            step_size: 0.5 * sigma * sigma,
            variant: LikelihoodVariant::IndependentNoise,
            step_reference: StepReference::Largest,
        };
        let mut init_err = 0.0;
        let mut final_err = 0.0;
        for trial in 0..200u32 {
            let mut rng = derive_substream(51, &[trial]);
            let f = sample_frame(&crate::model::ChannelInstance::new(h.clone()).unwrap(), &c, 0.01, &mut rng).unwrap();
            let det = AlsDetector::new(&h, &f.y, &c, 0.01, &cfg).unwrap();
            let mut s = derive_substream(52, &[trial]);
            let x0 = DVector::from_fn(k, |_, _| sigma.sqrt() * s.sample::<f64, _>(StandardNormal));
            init_err += (&x0 - &f.x_true).norm_squared();
            let x = det.trajectory(&mut derive_substream(52, &[trial]));
            final_err += (&x - &f.x_true).norm_squared();
        }
        assert!(final_err * 10.0 <= init_err, "init {init_err} final {final_err}");
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = AlsConfig::recommended(1.0, 3).unwrap();
        cfg.levels = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = AlsConfig::recommended(1.0, 3).unwrap();
        cfg.sigma_max = 0.001;
        assert!(cfg.validate().is_err());
        let mut cfg = AlsConfig::recommended(1.0, 3).unwrap();
        cfg.step_size = 0.0;
        assert!(cfg.validate().is_err());
    }
}
