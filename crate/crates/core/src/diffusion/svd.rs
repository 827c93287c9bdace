use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thin SVD `H = U Σ Vᵀ` of an N×K channel (N ≥ K): `U` is N×K with
/// orthonormal columns, `V` is K×K orthogonal, singular values descend.
#[derive(Debug, Clone)]
pub struct SvdCache {
    pub u: DMatrix<f64>,
    pub singular: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdCache {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.singular.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn k(&self) -> usize {
        self.v.nrows()
    }
}

pub fn svd_cache(h: &DMatrix<f64>) -> Result<SvdCache> {
    let (n, k) = h.shape();
    if n < k {
        return Err(Error::Underdetermined { n, k });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("channel has non-finite entries".into()));
    }
    let svd = h
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("iteration did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Decomposition("U not computed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Decomposition("Vᵀ not computed".into()))?;
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let singular = DVector::from_iterator(k, order.iter().map(|&i| s[i]));
    let u = DMatrix::from_fn(n, k, |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(k, k, |r, c| v_t[(order[c], r)]);
    Ok(SvdCache { u, singular, v })
}

/// Likelihood score used by the annealed Langevin baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodVariant {
    /// `Hᵀ(σ_t² HHᵀ + σ0² I)⁻¹ (y − Hx̂)`: annealing noise and channel noise
    /// treated as independent. Defined for every `(σ_t, σ0)`.
    #[default]
    IndependentNoise,
    /// Denominator `σ_t² s_i² − σ0²`; components with `σ_t s_i ≤ σ0` are
    /// zeroed.
    SnipsCorrelated,
}

impl LikelihoodVariant {
    pub fn name(&self) -> &'static str {
        match self {
            LikelihoodVariant::IndependentNoise => "independent_noise",
            LikelihoodVariant::SnipsCorrelated => "snips_correlated",
        }
    }
}

/// `V · diag(gain_i) · (Uᵀy − Σ Vᵀx̂)` with the per-mode gain set by
/// `variant`.
pub fn likelihood_score_svd(
    x_hat: &DVector<f64>,
    y: &DVector<f64>,
    svd: &SvdCache,
    sigma_t: f64,
    sigma0: f64,
    variant: LikelihoodVariant,
) -> Result<DVector<f64>> {
    if y.len() != svd.n() {
        return Err(Error::DimensionMismatch {
            context: "likelihood_score_svd (y)",
            expected: svd.n(),
            found: y.len(),
        });
    }
    if x_hat.len() != svd.k() {
        return Err(Error::DimensionMismatch {
            context: "likelihood_score_svd (x)",
            expected: svd.k(),
            found: x_hat.len(),
        });
    }
    let uty = svd.u.tr_mul(y);
    let mut ws = LikelihoodWorkspace::new(svd.k());
    let mut out = DVector::zeros(svd.k());
    likelihood_into(x_hat, &uty, svd, sigma_t, sigma0, variant, &mut ws, &mut out);
    Ok(out)
}

pub(crate) struct LikelihoodWorkspace {
    proj: DVector<f64>,
}

impl LikelihoodWorkspace {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            proj: DVector::zeros(k),
        }
    }
}

/// Hot-loop form with `Uᵀy` precomputed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn likelihood_into(
    x_hat: &DVector<f64>,
    uty: &DVector<f64>,
    svd: &SvdCache,
    sigma_t: f64,
    sigma0: f64,
    variant: LikelihoodVariant,
    ws: &mut LikelihoodWorkspace,
    out: &mut DVector<f64>,
) {
    let st2 = sigma_t * sigma_t;
    let s02 = sigma0 * sigma0;
    // proj = Vᵀx̂
    ws.proj.gemv_tr(1.0, &svd.v, x_hat, 0.0);
    for (i, p) in ws.proj.iter_mut().enumerate() {
        let s = svd.singular[i];
        let innovation = uty[i] - s * *p;
        let gain = match variant {
            LikelihoodVariant::IndependentNoise => {
                let den = st2 * s * s + s02;
                if den > 0.0 {
                    s / den
                } else {
                    0.0
                }
            }
            LikelihoodVariant::SnipsCorrelated => {
                if sigma_t * s > sigma0 {
                    s / (st2 * s * s - s02)
                } else {
                    0.0
                }
            }
        };
        *p = gain * innovation;
    }
    out.gemv(1.0, &svd.v, &ws.proj, 0.0);
}
