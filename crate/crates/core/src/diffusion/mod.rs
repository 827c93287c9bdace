//! Score-based sampling detectors.
//!
//! Both samplers share the lattice-Gaussian denoiser and the Tweedie score in
//! [`denoise`]. ADD ([`add`]) evaluates the score at the output of an inner
//! CG detector run on a perturbed received signal, so it never factorises the
//! channel. ALS ([`als`]) needs the channel SVD for its likelihood score.

pub mod add;
pub mod als;
pub mod denoise;
pub mod schedule;
pub mod svd;

pub use add::{add_detect, add_detect_par, add_trajectory, perturb_received, AddConfig, AddDetector, DriftSign};
pub use als::{als_detect, AlsConfig, AlsDetector, StepReference};
pub use denoise::{lgd_denoise, lgd_weights, tweedie_score};
pub use schedule::{make_schedule, NoiseSchedule};
pub use svd::{likelihood_score_svd, svd_cache, LikelihoodVariant, SvdCache};

use nalgebra::{DMatrix, DVector};

use crate::detectors::HardDecision;
use crate::model::Constellation;

/// Quantised terminal samples of S trajectories and their residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub samples: Vec<DVector<f64>>,
    pub symbols: Vec<Vec<usize>>,
    pub residuals: Vec<f64>,
}

impl CandidateList {
    pub(crate) fn from_decisions(decisions: Vec<HardDecision>) -> Self {
        let mut list = CandidateList {
            samples: Vec::with_capacity(decisions.len()),
            symbols: Vec::with_capacity(decisions.len()),
            residuals: Vec::with_capacity(decisions.len()),
        };
        for d in decisions {
            list.samples.push(d.x_hat);
            list.symbols.push(d.symbols);
            list.residuals.push(d.residual);
        }
        list
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the smallest residual among the first `n` candidates; ties
    /// go to the lowest index.
    pub fn prefix_pick(&self, n: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &r) in self.residuals.iter().take(n).enumerate() {
            match best {
                Some(b) if self.residuals[b] <= r => {}
                _ => best = Some(i),
            }
        }
        best
    }

    pub fn pick(&self) -> Option<usize> {
        self.prefix_pick(self.len())
    }

    pub(crate) fn decision(&self, index: usize, soft: DVector<f64>) -> HardDecision {
        HardDecision {
            x_hat: self.samples[index].clone(),
            symbols: self.symbols[index].clone(),
            soft,
            residual: self.residuals[index],
        }
    }
}

/// Quantises raw terminal samples, gathers them in trajectory order and
/// returns the residual-minimising candidate.
pub(crate) fn list_decision(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Constellation,
    raw: Vec<DVector<f64>>,
) -> (HardDecision, CandidateList) {
    let mut softs = Vec::with_capacity(raw.len());
    let mut decisions = Vec::with_capacity(raw.len());
    for sample in raw {
        softs.push(sample.clone());
        decisions.push(HardDecision::from_soft(h, y, sample, c));
    }
    let list = CandidateList::from_decisions(decisions);
    let best = list.pick().expect("list is non-empty");
    let decision = list.decision(best, softs.swap_remove(best));
    (decision, list)
}
