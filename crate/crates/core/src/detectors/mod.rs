//! Reference detectors and the conjugate-gradient inner solver.

mod cgd;
mod linear;
mod ml;

pub use cgd::{cg_iterates, cgd_solve, CgSystem, CgdConfig, Regularizer};
pub(crate) use cgd::CgWorkspace;
pub use linear::{detect_mmse, detect_mmse_sic};
pub use ml::{detect_ml_bruteforce, MlConfig, DEFAULT_ML_BUDGET};

use nalgebra::{DMatrix, DVector};

use crate::model::{residual_into, Constellation};

/// A detector's output: symbols in `Q^K`, the pre-quantisation estimate and
/// the residual `‖y − H x_hat‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardDecision {
    pub x_hat: DVector<f64>,
    pub symbols: Vec<usize>,
    pub soft: DVector<f64>,
    pub residual: f64,
}

impl HardDecision {
    /// Quantises `soft` and evaluates the residual of the result.
    pub fn from_soft(h: &DMatrix<f64>, y: &DVector<f64>, soft: DVector<f64>, c: &Constellation) -> Self {
        let symbols = quantize_indices(&soft, c);
        Self::from_symbols(h, y, symbols, soft, c)
    }

    pub(crate) fn from_symbols(
        h: &DMatrix<f64>,
        y: &DVector<f64>,
        symbols: Vec<usize>,
        soft: DVector<f64>,
        c: &Constellation,
    ) -> Self {
        let x_hat = DVector::from_iterator(symbols.len(), symbols.iter().map(|&i| c.points()[i]));
        let mut scratch = vec![0.0; y.len()];
        let residual = residual_into(y.as_slice(), h, x_hat.as_slice(), &mut scratch);
        Self {
            x_hat,
            symbols,
            soft,
            residual,
        }
    }
}

/// Per-component nearest point of `c`, ties toward the smaller symbol.
/// Cholesky factor of a symmetric matrix that is numerically positive
/// definite: every pivot must clear a relative floor, so exactly singular
/// Gram matrices that factor by roundoff are still rejected.
pub(crate) fn spd_cholesky(a: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = a.clone().cholesky()?;
    let floor = scale * a.nrows() as f64 * f64::EPSILON * 16.0;
    let l = chol.l_dirty();
    if (0..a.nrows()).any(|i| !(l[(i, i)] * l[(i, i)] > floor)) {
        return None;
    }
    Some(chol)
}

pub fn quantize(soft: &DVector<f64>, c: &Constellation) -> DVector<f64> {
    soft.map(|v| c.nearest(v))
}

pub fn quantize_indices(soft: &DVector<f64>, c: &Constellation) -> Vec<usize> {
    soft.iter().map(|&v| c.nearest_index(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_constellation;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        let c = build_constellation(4).unwrap();
        let q = quantize(&DVector::from_vec(vec![0.2, -3.7]), &c);
        assert_eq!(q.as_slice(), &[1.0, -1.0]);
        let q = quantize(&DVector::from_vec(vec![0.0]), &c);
        assert_eq!(q.as_slice(), &[-1.0]);
        let already = DVector::from_vec(vec![-1.0, 1.0, 1.0]);
        assert_eq!(quantize(&already, &c), already);
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent_and_nearest(
            vals in proptest::collection::vec(-20.0f64..20.0, 1..12),
            m in prop_oneof![Just(4usize), Just(16), Just(64), Just(256)],
        ) {
            let c = build_constellation(m).unwrap();
            let soft = DVector::from_vec(vals);
            let q = quantize(&soft, &c);
            prop_assert_eq!(quantize(&q, &c), q.clone());
            for (a, qa) in soft.iter().zip(q.iter()) {
                for p in c.points() {
                    prop_assert!((qa - a).abs() <= (p - a).abs());
                }
            }
        }
    }
}
