use nalgebra::{DMatrix, DVector};

use super::HardDecision;
use crate::error::{Error, Result};
use crate::model::{residual_into, Constellation};

/// Largest enumeration the brute-force oracle accepts by default: 2²⁰ candidates.
pub const DEFAULT_ML_BUDGET: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlConfig {
    pub max_candidates: u64,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            max_candidates: DEFAULT_ML_BUDGET,
        }
    }
}

impl MlConfig {
    /// Largest K whose full enumeration over `c` fits the budget.
    pub fn max_k(&self, c: &Constellation) -> usize {
        let q = c.len() as u128;
        if q <= 1 {
            return usize::MAX;
        }
        let mut k = 0;
        let mut count: u128 = 1;
        while count * q <= self.max_candidates as u128 {
            count *= q;
            k += 1;
        }
        k
    }
}

/// Exact `argmin ‖y − Hx‖²` over `Q^K` by exhaustive enumeration.
///
/// Candidates are visited in lexicographic order of their symbol indices
/// (first component most significant) and only a strictly smaller residual
/// replaces the incumbent, so ties go to the lexicographically first vector.
/// Refuses when `|Q|^K` exceeds the budget.
pub fn detect_ml_bruteforce(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &Constellation,
    cfg: &MlConfig,
) -> Result<HardDecision> {
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "detect_ml_bruteforce",
            expected: h.nrows(),
            found: y.len(),
        });
    }
    let k = h.ncols();
    let q = c.len();
    let candidates = (q as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if candidates > cfg.max_candidates as u128 {
        return Err(Error::BudgetExceeded {
            candidates,
            budget: cfg.max_candidates,
        });
    }

    let points = c.points();
    let mut idx = vec![0usize; k];
    let mut x = vec![points[0]; k];
    let mut scratch = vec![0.0; y.len()];
    let mut best_idx = idx.clone();
    let mut best = f64::INFINITY;
    loop {
        let r = residual_into(y.as_slice(), h, &x, &mut scratch);
        if r < best {
            best = r;
            best_idx.copy_from_slice(&idx);
        }
        // Odometer increment, last component fastest.
        let mut pos = k;
        loop {
            if pos == 0 {
                let soft = DVector::from_iterator(k, best_idx.iter().map(|&i| points[i]));
                return Ok(HardDecision::from_symbols(h, y, best_idx, soft, c));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < q {
                x[pos] = points[idx[pos]];
                break;
            }
            idx[pos] = 0;
            x[pos] = points[0];
        }
    }
}
