//! Real-valued MIMO system model: `y = H x + n`.
//!
//! Channels carry i.i.d. unit-variance real Gaussian entries, symbols come from
//! the real PAM alphabet `{±1, ±3, …, ±(√M−1)}` of square M-QAM, and noise is
//! i.i.d. Gaussian with standard deviation `sigma0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Real alphabet of one quadrature of square M-QAM.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    points: Vec<f64>,
    symbol_energy: f64,
}

impl Constellation {
    /// Square QAM with `order` ∈ {4, 16, 64, 256}.
    pub fn qam(order: usize) -> Result<Self> {
        let levels = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            256 => 16,
            _ => return Err(Error::UnsupportedOrder(order)),
        };
        let points: Vec<f64> = (0..levels)
            .map(|i| (2 * i as i64 - (levels as i64 - 1)) as f64)
            .collect();
        Ok(Self {
            order,
            points,
            symbol_energy: (order as f64 - 1.0) / 3.0,
        })
    }

    /// Arbitrary strictly increasing alphabet. `order` is reported as the
    /// square of the point count.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("constellation needs at least one point"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("constellation points must be finite"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "constellation points must be strictly increasing",
            ));
        }
        let symbol_energy = points.iter().map(|p| p * p).sum::<f64>() / points.len() as f64;
        Ok(Self {
            order: points.len() * points.len(),
            points,
            symbol_energy,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }

    pub fn min_point(&self) -> f64 {
        self.points[0]
    }

    pub fn max_point(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Gray-labelled bits carried by one real symbol.
    pub fn bits_per_symbol(&self) -> u32 {
        usize::BITS - (self.points.len() - 1).leading_zeros()
    }

    /// Index of the nearest point; exact ties go to the smaller symbol.
    pub fn nearest_index(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_dist = (self.points[0] - value).abs();
        for (i, &q) in self.points.iter().enumerate().skip(1) {
            let d = (q - value).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub fn nearest(&self, value: f64) -> f64 {
        self.points[self.nearest_index(value)]
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.points.iter().position(|&q| q == value)
    }

    /// Binary-reflected Gray label of the point at `index`.
    pub fn gray_label(&self, index: usize) -> u32 {
        let i = index as u32;
        i ^ (i >> 1)
    }

    /// Bit errors between two symbol indices under Gray labelling.
    pub fn bit_errors(&self, sent: usize, detected: usize) -> u32 {
        (self.gray_label(sent) ^ self.gray_label(detected)).count_ones()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.points.len())
    }
}

/// Builds the real alphabet for square M-QAM.
pub fn build_constellation(order: usize) -> Result<Constellation> {
    Constellation::qam(order)
}

/// One channel realisation with N receive and K transmit real dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    h: DMatrix<f64>,
}

impl ChannelInstance {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::invalid("channel matrix must be non-empty"));
        }
        if h.nrows() < h.ncols() {
            return Err(Error::Underdetermined {
                n: h.nrows(),
                k: h.ncols(),
            });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("channel matrix has non-finite entries"));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }
}

/// Draws an N×K channel with i.i.d. standard normal entries.
pub fn sample_channel<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<ChannelInstance> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if n < k {
        return Err(Error::Underdetermined { n, k });
    }
    // Column-major fill keeps the draw order fixed.
    let h = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    ChannelInstance::new(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionFrame {
    pub symbols: Vec<usize>,
    pub x_true: DVector<f64>,
    pub y: DVector<f64>,
    pub sigma0: f64,
}

/// Draws uniform symbols and the received vector `y = H x + sigma0 · n`.
///
/// Draw order: K symbol indices, then N noise samples.
pub fn sample_frame<R: Rng + ?Sized>(
    ch: &ChannelInstance,
    c: &Constellation,
    sigma0: f64,
    rng: &mut R,
) -> Result<TransmissionFrame> {
    if !(sigma0 >= 0.0) || !sigma0.is_finite() {
        return Err(Error::invalid(format!("sigma0 must be finite and >= 0, got {sigma0}")));
    }
    let symbols: Vec<usize> = (0..ch.k()).map(|_| c.sample_index(rng)).collect();
    let x_true = DVector::from_iterator(ch.k(), symbols.iter().map(|&i| c.points()[i]));
    let mut y = DVector::zeros(ch.n());
    mat_vec_into(ch.matrix(), x_true.as_slice(), y.as_mut_slice());
    for yi in y.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *yi += sigma0 * n;
    }
    Ok(TransmissionFrame {
        symbols,
        x_true,
        y,
        sigma0,
    })
}

/// SNR as average received power per receive antenna over noise variance:
/// `SNR = K·E_s / sigma0²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub sigma0: f64,
}

impl SnrPoint {
    pub fn new(snr_db: f64, k: usize, symbol_energy: f64) -> Result<Self> {
        Ok(Self {
            snr_db,
            sigma0: snr_to_sigma0(snr_db, k, symbol_energy)?,
        })
    }
}

/// `sigma0 = sqrt(K·E_s / 10^(snr_db/10))`. `+inf` dB maps to a noiseless
/// channel.
pub fn snr_to_sigma0(snr_db: f64, k: usize, symbol_energy: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if !(symbol_energy > 0.0) {
        return Err(Error::invalid("symbol energy must be positive"));
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR is NaN"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let linear = 10f64.powf(snr_db / 10.0);
    Ok((k as f64 * symbol_energy / linear).sqrt())
}

/// Real image of a complex system: `H = [[Re, −Im], [Im, Re]]`, `y = [Re; Im]`.
pub fn complex_to_real(
    hc: &DMatrix<Complex64>,
    yc: &DVector<Complex64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if hc.nrows() != yc.len() {
        return Err(Error::DimensionMismatch {
            context: "complex_to_real",
            expected: hc.nrows(),
            found: yc.len(),
        });
    }
    let (n, k) = hc.shape();
    let h = DMatrix::from_fn(2 * n, 2 * k, |i, j| {
        let z = hc[(i % n, j % k)];
        match (i < n, j < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    Ok((h, complex_vector_to_real(yc)))
}

pub fn complex_vector_to_real(v: &DVector<Complex64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// `‖y − H x‖²` with shape checks.
pub fn residual(y: &DVector<f64>, h: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "residual (rows of H vs y)",
            expected: h.nrows(),
            found: y.len(),
        });
    }
    if h.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "residual (columns of H vs x)",
            expected: h.ncols(),
            found: x.len(),
        });
    }
    let mut scratch = vec![0.0; y.len()];
    Ok(residual_into(y.as_slice(), h, x.as_slice(), &mut scratch))
}

/// `out = H x`, accumulated column by column in a fixed order.
pub(crate) fn mat_vec_into(h: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &xj) in x.iter().enumerate() {
        for (o, hij) in out.iter_mut().zip(h.column(j).iter()) {
            *o += hij * xj;
        }
    }
}

/// Shape-unchecked residual. Every detector computes residuals through this
/// function so that comparisons between detectors are exact, and a noiseless
/// frame scores exactly zero at its transmitted vector.
pub(crate) fn residual_into(y: &[f64], h: &DMatrix<f64>, x: &[f64], scratch: &mut [f64]) -> f64 {
    mat_vec_into(h, x, scratch);
    y.iter().zip(scratch.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}
