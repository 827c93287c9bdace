//! Detector roster and sweep configuration.

use serde::{Deserialize, Serialize};

use crate::detectors::{CgdConfig, MlConfig, Regularizer, DEFAULT_ML_BUDGET};
use crate::diffusion::{AddConfig, AlsConfig, DriftSign, LikelihoodVariant, NoiseSchedule, StepReference};
use crate::error::{Error, Result};
use crate::model::Constellation;

fn default_sigma_min() -> f64 {
    0.01
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    20
}
fn default_t_iter() -> usize {
    3
}
fn default_langevin_steps() -> usize {
    3
}
fn default_step_size() -> f64 {
    crate::diffusion::als::DEFAULT_STEP_SIZE
}
fn default_ml_budget() -> u64 {
    DEFAULT_ML_BUDGET
}

/// One entry of a detector roster, as written in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    Mmse {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    MmseSic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Ml {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        /// Skip this detector when K exceeds `max_k`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_k: Option<usize>,
        #[serde(default = "default_ml_budget")]
        max_candidates: u64,
    },
    Add {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        trajectories: usize,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_t_iter")]
        t_iter: usize,
        #[serde(default = "default_sigma_min")]
        sigma_min: f64,
        /// Defaults to the symbol energy.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_max: Option<f64>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        regularizer: Regularizer,
        #[serde(default)]
        drift: DriftSign,
    },
    Als {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        trajectories: usize,
        #[serde(default = "default_steps")]
        levels: usize,
        #[serde(default = "default_langevin_steps")]
        langevin_steps: usize,
        #[serde(default = "default_sigma_min")]
        sigma_min: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_max: Option<f64>,
        #[serde(default = "default_step_size")]
        step_size: f64,
        #[serde(default)]
        variant: LikelihoodVariant,
        #[serde(default)]
        step_reference: StepReference,
    },
}

impl DetectorSpec {
    pub fn mmse() -> Self {
        DetectorSpec::Mmse { label: None }
    }

    pub fn mmse_sic() -> Self {
        DetectorSpec::MmseSic { label: None }
    }

    pub fn ml(max_k: Option<usize>) -> Self {
        DetectorSpec::Ml {
            label: None,
            max_k,
            max_candidates: DEFAULT_ML_BUDGET,
        }
    }

    /// ADD with the recommended schedule and `T_iter`.
    pub fn add(trajectories: usize) -> Self {
        DetectorSpec::Add {
            label: None,
            trajectories,
            steps: default_steps(),
            t_iter: default_t_iter(),
            sigma_min: default_sigma_min(),
            sigma_max: None,
            epsilon: default_epsilon(),
            regularizer: Regularizer::PaperLiteral,
            drift: DriftSign::TowardDenoised,
        }
    }

    /// ALS with `T = 20` levels and `L_A = langevin_steps`.
    pub fn als(trajectories: usize, langevin_steps: usize) -> Self {
        DetectorSpec::Als {
            label: None,
            trajectories,
            levels: default_steps(),
            langevin_steps,
            sigma_min: default_sigma_min(),
            sigma_max: None,
            step_size: default_step_size(),
            variant: LikelihoodVariant::IndependentNoise,
            step_reference: StepReference::Largest,
        }
    }

    pub fn with_label(mut self, new_label: &str) -> Self {
        match &mut self {
            DetectorSpec::Mmse { label }
            | DetectorSpec::MmseSic { label }
            | DetectorSpec::Ml { label, .. }
            | DetectorSpec::Add { label, .. }
            | DetectorSpec::Als { label, .. } => *label = Some(new_label.to_string()),
        }
        self
    }

    pub fn label(&self) -> String {
        match self {
            DetectorSpec::Mmse { label } => label.clone().unwrap_or_else(|| "MMSE".into()),
            DetectorSpec::MmseSic { label } => label.clone().unwrap_or_else(|| "MMSE-SIC".into()),
            DetectorSpec::Ml { label, .. } => label.clone().unwrap_or_else(|| "ML".into()),
            DetectorSpec::Add {
                label, trajectories, ..
            } => label.clone().unwrap_or_else(|| format!("ADD-{trajectories}")),
            DetectorSpec::Als {
                label, trajectories, ..
            } => label.clone().unwrap_or_else(|| format!("ALS-{trajectories}")),
        }
    }

    /// Human-readable description of the modes that produced a result.
    pub fn describe(&self, c: &Constellation) -> String {
        match self {
            DetectorSpec::Mmse { .. } => "linear MMSE".into(),
            DetectorSpec::MmseSic { .. } => "MMSE-SIC, max post-filter SINR ordering".into(),
            DetectorSpec::Ml { max_candidates, .. } => {
                format!("exhaustive ML, budget {max_candidates} candidates")
            }
            DetectorSpec::Add {
                trajectories,
                steps,
                t_iter,
                sigma_min,
                sigma_max,
                epsilon,
                regularizer,
                drift,
                ..
            } => {
                let mode = if *drift == DriftSign::LiteralAlg2 {
                    " [replication mode]"
                } else {
                    ""
                };
                format!(
                    "ADD S={trajectories} T={steps} T_iter={t_iter} sigma=[{sigma_min}, {}] eps={epsilon} \
                     regularizer={} drift={}{mode}",
                    sigma_max.unwrap_or(c.symbol_energy()),
                    regularizer.describe(),
                    drift.name(),
                )
            }
            DetectorSpec::Als {
                trajectories,
                levels,
                langevin_steps,
                sigma_min,
                sigma_max,
                step_size,
                variant,
                step_reference,
                ..
            } => format!(
                "ALS S={trajectories} T={levels} L_A={langevin_steps} sigma=[{sigma_min}, {}] step={step_size} \
                 step_reference={step_reference:?} variant={}",
                sigma_max.unwrap_or(c.symbol_energy()),
                variant.name(),
            ),
        }
    }

    /// Whether this detector takes part at dimension `k`.
    pub fn applies_to(&self, k: usize) -> bool {
        match self {
            DetectorSpec::Ml { max_k: Some(m), .. } => k <= *m,
            _ => true,
        }
    }

    /// Resolves defaults against the constellation and checks parameters.
    pub fn build(&self, c: &Constellation) -> Result<DetectorKind> {
        Ok(match self {
            DetectorSpec::Mmse { .. } => DetectorKind::Mmse,
            DetectorSpec::MmseSic { .. } => DetectorKind::MmseSic,
            DetectorSpec::Ml { max_candidates, .. } => {
                if *max_candidates == 0 {
                    return Err(Error::invalid("ML budget must be positive"));
                }
                DetectorKind::Ml(MlConfig {
                    max_candidates: *max_candidates,
                })
            }
            DetectorSpec::Add {
                trajectories,
                steps,
                t_iter,
                sigma_min,
                sigma_max,
                epsilon,
                regularizer,
                drift,
                ..
            } => {
                let cfg = AddConfig {
                    schedule: NoiseSchedule::new(
                        *sigma_min,
                        sigma_max.unwrap_or(c.symbol_energy()),
                        *steps,
                        *epsilon,
                    )?,
                    trajectories: *trajectories,
                    inner: CgdConfig::new(*t_iter, *regularizer)?,
                    drift_sign: *drift,
                };
                cfg.validate()?;
                DetectorKind::Add(cfg)
            }
            DetectorSpec::Als {
                trajectories,
                levels,
                langevin_steps,
                sigma_min,
                sigma_max,
                step_size,
                variant,
                step_reference,
                ..
            } => {
                if *trajectories == 0 {
                    return Err(Error::invalid("ALS needs at least one trajectory"));
                }
                let cfg = AlsConfig {
                    sigma_min: *sigma_min,
                    sigma_max: sigma_max.unwrap_or(c.symbol_energy()),
                    levels: *levels,
                    langevin_steps: *langevin_steps,
                    step_size: *step_size,
                    variant: *variant,
                    step_reference: *step_reference,
                };
                cfg.validate()?;
                DetectorKind::Als(cfg, *trajectories)
            }
        })
    }
}

/// A validated, constellation-resolved detector.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorKind {
    Mmse,
    MmseSic,
    Ml(MlConfig),
    Add(AddConfig),
    Als(AlsConfig, usize),
}

/// Stream tag of the sampler family. Detectors of the same family share
/// trajectory substreams within a frame, so ADD-5 sees exactly the first five
/// trajectories of ADD-20.
pub(crate) fn family_tag(kind: &DetectorKind) -> u32 {
    match kind {
        DetectorKind::Add(_) => 1,
        DetectorKind::Als(..) => 2,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub min_bits: u64,
    pub min_errors: u64,
    pub max_frames: u64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            min_bits: 100_000,
            min_errors: 100,
            max_frames: 200_000,
        }
    }
}

/// Smallest error count for a point to be reported as converged.
pub const MIN_CONVERGED_ERRORS: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub snr_db: Vec<f64>,
    pub detectors: Vec<DetectorSpec>,
    pub stopping: StoppingRule,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<Constellation> {
        let c = Constellation::qam(self.m)?;
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if self.n < self.k {
            return Err(Error::Underdetermined { n: self.n, k: self.k });
        }
        if self.snr_db.is_empty() {
            return Err(Error::invalid("SNR grid is empty"));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::invalid("SNR grid has NaN or -inf entries"));
        }
        if self.detectors.is_empty() {
            return Err(Error::invalid("detector roster is empty"));
        }
        if self.stopping.max_frames == 0 {
            return Err(Error::invalid("max_frames must be positive"));
        }
        for d in &self.detectors {
            d.build(&c)?;
        }
        let mut labels: Vec<String> = self.detectors.iter().map(|d| d.label()).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate detector label {}", w[0])));
        }
        Ok(c)
    }
}
