//! Uniform grid on the two-dimensional periodic torus [0, L)^2 and the
//! associated integer wavenumbers.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Discretisation of the torus [0, L)^2 with `n` points per dimension.
///
/// Samples live at x_i = i*h with h = L/n. Since `n` is a power of two the
/// stored spacing satisfies h*n == L exactly in floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    n: usize,
    length: f64,
    spacing: f64,
}

impl TorusGrid {
    /// Build a grid with `n` points per dimension on a torus of side `length`.
    ///
    /// `n` must be a power of two and at least 4, so that the spectral index
    /// range -n/2+1 ..= n/2 is well defined.
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 4"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length = {length} must be positive")));
        }
        Ok(Self { n, length, spacing: length / n as f64 })
    }

    /// Points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Side length of the torus.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Grid spacing h = L/n.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of samples n^2.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major storage index of the sample at (ix, iy).
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Physical coordinate of grid index i along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// Integer wavenumber for FFT bin `j`, ranging over -n/2+1 ..= n/2.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    /// First-derivative multiplier i*(2*pi/L)*k for FFT bin `j`.
    ///
    /// The Nyquist mode k = n/2 gets a zero factor: the odd derivative of a
    /// real signal is not representable there.
    #[inline]
    pub fn deriv_factor(&self, j: usize) -> Complex64 {
        let k = self.wavenumber(j);
        if k == (self.n / 2) as i64 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, 2.0 * PI / self.length * k as f64)
        }
    }

    /// Laplacian multiplier -(4*pi^2/L^2)*|k|^2 for the mode (jx, jy).
    ///
    /// Unlike the first derivative this keeps the full |k|^2 weight on the
    /// Nyquist mode.
    #[inline]
    pub fn laplacian_multiplier(&self, jx: usize, jy: usize) -> f64 {
        let kx = self.wavenumber(jx) as f64;
        let ky = self.wavenumber(jy) as f64;
        let c = 2.0 * PI / self.length;
        -c * c * (kx * kx + ky * ky)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::new(3, 1.0).is_err());
        assert!(TorusGrid::new(6, 1.0).is_err());
        assert!(TorusGrid::new(0, 1.0).is_err());
        assert!(TorusGrid::new(8, -1.0).is_err());
        assert!(TorusGrid::new(8, 1.0).is_ok());
    }

    #[test]
    fn spacing_times_n_is_exact() {
        for n in [4usize, 8, 64, 256] {
            let g = TorusGrid::new(n, 2.0 * PI).unwrap();
            assert_eq!(g.spacing() * n as f64, 2.0 * PI);
        }
    }

    #[test]
    fn wavenumber_range() {
        let g = TorusGrid::new(8, 2.0 * PI).unwrap();
        let ks: Vec<i64> = (0..8).map(|j| g.wavenumber(j)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, 4, -3, -2, -1]);
    }

    #[test]
    fn nyquist_derivative_factor_is_zero() {
        let g = TorusGrid::new(8, 2.0 * PI).unwrap();
        assert_eq!(g.deriv_factor(4), Complex64::new(0.0, 0.0));
        // but the Laplacian keeps the full weight there
        assert_eq!(g.laplacian_multiplier(4, 0), -16.0);
    }

    #[test]
    fn derivative_factor_at_zero_mode() {
        let g = TorusGrid::new(16, 2.0 * PI).unwrap();
        assert_eq!(g.deriv_factor(0), Complex64::new(0.0, 0.0));
        assert_eq!(g.deriv_factor(1), Complex64::new(0.0, 1.0));
    }
}
