//! Single-level GHM multiwavelet analysis matrix and the separable 2-D window
//! transform `W = F w F^T`.
//!
//! The Geronimo-Hardin-Massopust system has multiplicity two, so its filter
//! bank is a set of 2x2 matrix taps: low-pass `H0..H3` and high-pass `G0..G3`.
//! The `m x m` analysis matrix stacks `m/4` block-rows of low-pass taps over
//! `m/4` block-rows of high-pass taps. Block-row `r` places tap `k` at scalar
//! columns `4r + 2k` and `4r + 2k + 1`, wrapping periodically, which keeps the
//! matrix exactly orthogonal for every valid `m`.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};

type Tap = [[f64; 2]; 2];

/// Low-pass matrix taps of the GHM scaling functions, orthonormal scaling.
pub fn ghm_lowpass() -> [Tap; 4] {
    let r = SQRT_2;
    [
        [[3.0 / (5.0 * r), 4.0 / 5.0], [-1.0 / 20.0, -3.0 / (10.0 * r)]],
        [[3.0 / (5.0 * r), 0.0], [9.0 / 20.0, 1.0 / r]],
        [[0.0, 0.0], [9.0 / 20.0, -3.0 / (10.0 * r)]],
        [[0.0, 0.0], [-1.0 / 20.0, 0.0]],
    ]
}

/// High-pass matrix taps of the GHM multiwavelets, orthonormal scaling.
pub fn ghm_highpass() -> [Tap; 4] {
    let r = SQRT_2;
    [
        [[-1.0 / 20.0, -3.0 / (10.0 * r)], [1.0 / (10.0 * r), 3.0 / 10.0]],
        [[9.0 / 20.0, -1.0 / r], [-9.0 / (10.0 * r), 0.0]],
        [[9.0 / 20.0, -3.0 / (10.0 * r)], [9.0 / (10.0 * r), -3.0 / 10.0]],
        [[-1.0 / 20.0, 0.0], [-1.0 / (10.0 * r), 0.0]],
    ]
}

/// Orthogonal GHM analysis matrix for windows of side `size`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    size: usize,
    entries: Array2<f64>,
}

/// A window in the multiwavelet domain. The top-left `m/2 x m/2` quadrant
/// holds the low-pass (approximation) coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedWindow {
    pub coeffs: Array2<f64>,
}

impl TransformedWindow {
    pub fn zeros(m: usize) -> Self {
        Self {
            coeffs: Array2::zeros((m, m)),
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Index separating low-pass rows/columns from detail ones.
    #[inline]
    pub fn split(&self) -> usize {
        self.size() / 2
    }

    #[inline]
    pub fn is_lowpass(&self, row: usize, col: usize) -> bool {
        let h = self.split();
        row < h && col < h
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub fn build_ghm_matrix(m: usize) -> Result<TransformMatrix> {
    if m < 8 || m % 4 != 0 {
        return Err(Error::InvalidGeometry(format!(
            "GHM matrix size must be a multiple of 4 and at least 8, got {m}"
        )));
    }
    let mut entries = Array2::zeros((m, m));
    let half = m / 2;
    for (row_base, taps) in [(0, ghm_lowpass()), (half, ghm_highpass())] {
        for block in 0..m / 4 {
            for (k, tap) in taps.iter().enumerate() {
                let col = (4 * block + 2 * k) % m;
                for i in 0..2 {
                    for j in 0..2 {
                        entries[[row_base + 2 * block + i, col + j]] += tap[i][j];
                    }
                }
            }
        }
    }
    Ok(TransformMatrix { size: m, entries })
}

impl TransformMatrix {
    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// `max |F F^T - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let prod = self.entries.dot(&self.entries.t());
        prod.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    fn check(&self, rows: usize, cols: usize) -> Result<()> {
        if rows != self.size || cols != self.size {
            return Err(Error::SizeMismatch {
                expected: self.size,
                found: if rows != self.size { rows } else { cols },
            });
        }
        Ok(())
    }

    /// `F w F^T`.
    pub fn forward(&self, values: &Array2<f64>) -> Result<TransformedWindow> {
        self.check(values.nrows(), values.ncols())?;
        let coeffs = self.entries.dot(values).dot(&self.entries.t());
        Ok(TransformedWindow { coeffs })
    }

    /// `F^T W F`.
    pub fn inverse(&self, w: &TransformedWindow) -> Result<Array2<f64>> {
        self.check(w.coeffs.nrows(), w.coeffs.ncols())?;
        Ok(self.entries.t().dot(&w.coeffs).dot(&self.entries))
    }

    /// Transform of the all-ones window. GHM without prefiltering does not
    /// annihilate constants, so this pattern has nonzero detail energy.
    pub fn constant_response(&self) -> TransformedWindow {
        let ones = Array2::ones((self.size, self.size));
        TransformedWindow {
            coeffs: self.entries.dot(&ones).dot(&self.entries.t()),
        }
    }

    /// Matrix entries as CSV, one row per line, full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}
