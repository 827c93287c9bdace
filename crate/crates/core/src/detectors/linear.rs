use nalgebra::{DMatrix, DVector};

use super::HardDecision;
use crate::error::{Error, Result};
use crate::model::Constellation;

fn check_shapes(h: &DMatrix<f64>, y: &DVector<f64>, context: &'static str) -> Result<()> {
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: h.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

fn loading(sigma0: f64, symbol_energy: f64) -> Result<f64> {
    if !(sigma0 >= 0.0) || !(symbol_energy > 0.0) {
        return Err(Error::invalid("MMSE needs sigma0 >= 0 and E_s > 0"));
    }
    Ok(sigma0 * sigma0 / symbol_energy)
}

fn regularized_gram(h: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut g = h.tr_mul(h);
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    g
}

/// Linear MMSE: `soft = (HᵀH + (σ0²/E_s)I)⁻¹ Hᵀy`, then quantise.
pub fn detect_mmse(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma0: f64,
    symbol_energy: f64,
    c: &Constellation,
) -> Result<HardDecision> {
    check_shapes(h, y, "detect_mmse")?;
    let lambda = loading(sigma0, symbol_energy)?;
    let chol = super::spd_cholesky(&regularized_gram(h, lambda))
        .ok_or_else(|| Error::NotPositiveDefinite("MMSE filter matrix HᵀH + σ0²/E_s·I".into()))?;
    let soft = chol.solve(&h.tr_mul(y));
    Ok(HardDecision::from_soft(h, y, soft, c))
}

/// Ordered MMSE-SIC. Each round detects the remaining stream with the highest
/// post-filter SINR (smallest diagonal of `(H_rᵀH_r + λI)⁻¹`, lowest column
/// index on ties), quantises it and cancels it from `y`.
pub fn detect_mmse_sic(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma0: f64,
    symbol_energy: f64,
    c: &Constellation,
) -> Result<HardDecision> {
    check_shapes(h, y, "detect_mmse_sic")?;
    let lambda = loading(sigma0, symbol_energy)?;
    let k = h.ncols();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut y_res = y.clone();
    let mut symbols = vec![0usize; k];
    let mut soft = DVector::zeros(k);

    while !remaining.is_empty() {
        let h_r = h.select_columns(remaining.iter());
        let g_inv = super::spd_cholesky(&regularized_gram(&h_r, lambda))
            .ok_or_else(|| Error::NotPositiveDefinite("MMSE-SIC filter matrix".into()))?
            .inverse();
        let mut pick = 0;
        for i in 1..remaining.len() {
            if g_inv[(i, i)] < g_inv[(pick, pick)] {
                pick = i;
            }
        }
        let matched = h_r.tr_mul(&y_res);
        let estimate = g_inv.row(pick).transpose().dot(&matched);
        let col = remaining[pick];
        let idx = c.nearest_index(estimate);
        symbols[col] = idx;
        soft[col] = estimate;
        y_res.axpy(-c.points()[idx], &h.column(col), 1.0);
        remaining.remove(pick);
    }
    Ok(HardDecision::from_symbols(h, y, symbols, soft, c))
}
