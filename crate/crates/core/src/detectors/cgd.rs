use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal loading added to `HᵀH` before the CG solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// `sigma0 · E_s`, as written in the ADD inner solver.
    #[default]
    PaperLiteral,
    /// `sigma0² / E_s`, the LMMSE loading.
    MmseStandard,
    Custom(f64),
}

impl Regularizer {
    pub fn lambda(&self, sigma0: f64, symbol_energy: f64) -> f64 {
        match *self {
            Regularizer::PaperLiteral => sigma0 * symbol_energy,
            Regularizer::MmseStandard => sigma0 * sigma0 / symbol_energy,
            Regularizer::Custom(l) => l,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Regularizer::PaperLiteral => "paper_literal (sigma0*E_s)".into(),
            Regularizer::MmseStandard => "mmse_standard (sigma0^2/E_s)".into(),
            Regularizer::Custom(l) => format!("custom ({l})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgdConfig {
    pub t_iter: usize,
    #[serde(default)]
    pub regularizer: Regularizer,
}

impl CgdConfig {
    pub fn new(t_iter: usize, regularizer: Regularizer) -> Result<Self> {
        let cfg = Self { t_iter, regularizer };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_iter == 0 {
            return Err(Error::invalid("T_iter must be at least 1"));
        }
        if let Regularizer::Custom(l) = self.regularizer {
            if !l.is_finite() {
                return Err(Error::invalid("custom regularizer must be finite"));
            }
        }
        Ok(())
    }
}

impl Default for CgdConfig {
    fn default() -> Self {
        Self {
            t_iter: 3,
            regularizer: Regularizer::PaperLiteral,
        }
    }
}

/// The regularised normal equations `(HᵀH + λI) x = Hᵀy`, prepared once per
/// channel.
#[derive(Debug, Clone)]
pub struct CgSystem {
    a: DMatrix<f64>,
    lambda: f64,
}

impl CgSystem {
    /// Forms `A = HᵀH + λI`. For `λ ≤ 0` positive definiteness is not implied
    /// by construction and is checked with a Cholesky factorisation.
    pub fn new(h: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::invalid(format!("regularizer must be finite, got {lambda}")));
        }
        let k = h.ncols();
        let mut a = h.tr_mul(h);
        for i in 0..k {
            a[(i, i)] += lambda;
        }
        if lambda <= 0.0 && super::spd_cholesky(&a).is_none() {
            return Err(Error::NotPositiveDefinite(format!(
                "HᵀH + {lambda}·I (channel is rank deficient or loading is negative)"
            )));
        }
        Ok(Self { a, lambda })
    }

    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("CG system matrix must be square"));
        }
        Ok(Self { a, lambda: 0.0 })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `iters` conjugate-gradient steps from `x0` toward `A⁻¹b`.
    pub fn solve(&self, b: &DVector<f64>, x0: &DVector<f64>, iters: usize) -> Result<DVector<f64>> {
        let mut ws = CgWorkspace::new(self.dim());
        let mut x = x0.clone();
        self.solve_in_place(b, &mut x, iters, &mut ws, |_| {})?;
        Ok(x)
    }

    /// Textbook CG on `½xᵀAx − bᵀx`:
    /// `r₀ = Ax₀ − b`, `d₀ = −r₀`, `α = rᵀr / dᵀAd`, `x ← x + αd`,
    /// `r ← r + αAd`, `β = r₊ᵀr₊ / rᵀr`, `d ← −r₊ + βd`.
    ///
    /// `observe` sees every iterate after it is formed. Stops early once the
    /// residual is exactly zero.
    pub(crate) fn solve_in_place(
        &self,
        b: &DVector<f64>,
        x: &mut DVector<f64>,
        iters: usize,
        ws: &mut CgWorkspace,
        mut observe: impl FnMut(&DVector<f64>),
    ) -> Result<()> {
        let n = self.dim();
        if b.len() != n || x.len() != n {
            return Err(Error::DimensionMismatch {
                context: "cgd_solve",
                expected: n,
                found: if b.len() != n { b.len() } else { x.len() },
            });
        }
        let CgWorkspace { r, d, ad } = ws;
        r.gemv(1.0, &self.a, x, 0.0);
        *r -= b;
        d.copy_from(r);
        d.neg_mut();
        let mut rr = r.norm_squared();
        for _ in 0..iters {
            if rr == 0.0 {
                break;
            }
            ad.gemv(1.0, &self.a, d, 0.0);
            let dad = d.dot(ad);
            if !(dad > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "CG curvature dᵀAd = {dad:e} along a search direction"
                )));
            }
            let alpha = rr / dad;
            x.axpy(alpha, d, 1.0);
            r.axpy(alpha, ad, 1.0);
            let rr_next = r.norm_squared();
            let beta = rr_next / rr;
            // d ← −r + βd
            d.axpy(-1.0, r, beta);
            rr = rr_next;
            observe(x);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CgWorkspace {
    r: DVector<f64>,
    d: DVector<f64>,
    ad: DVector<f64>,
}

impl CgWorkspace {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            r: DVector::zeros(n),
            d: DVector::zeros(n),
            ad: DVector::zeros(n),
        }
    }
}

/// `T_iter` CG steps on `(HᵀH + λI)x = Hᵀy` from `x0`, with λ chosen by
/// `cfg.regularizer`.
pub fn cgd_solve(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    sigma0: f64,
    symbol_energy: f64,
    cfg: &CgdConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "cgd_solve (rows of H vs y)",
            expected: h.nrows(),
            found: y.len(),
        });
    }
    let system = CgSystem::new(h, cfg.regularizer.lambda(sigma0, symbol_energy))?;
    let b = h.tr_mul(y);
    system.solve(&b, x0, cfg.t_iter)
}

/// Every CG iterate `x₁ … x_iters` for `Ax = b`, starting from `x0`.
pub fn cg_iterates(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    iters: usize,
) -> Result<Vec<DVector<f64>>> {
    let system = CgSystem::from_matrix(a.clone())?;
    let mut ws = CgWorkspace::new(system.dim());
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(iters);
    system.solve_in_place(b, &mut x, iters, &mut ws, |xi| out.push(xi.clone()))?;
    Ok(out)
}
