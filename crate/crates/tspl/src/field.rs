//! Real scalar fields on the torus with a dual physical/spectral
//! representation.
//!
//! The forward transform is unnormalised and the inverse carries the 1/n^2
//! factor, matching the FFT convention of common libraries; every formula in
//! the crate is written so the convention cancels.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::TorusGrid;
use num_complex::Complex64;

/// Relative tolerance on the imaginary residue accepted when converting a
/// spectral field back to physical samples.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

#[derive(Debug, Clone)]
enum Data {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// A real scalar field sampled on a [`TorusGrid`], stored either as n^2
/// physical samples or as n^2 complex Fourier coefficients.
///
/// Values are immutable once constructed; every operation returns a new
/// field, so fields can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct Field {
    grid: TorusGrid,
    data: Data,
}

impl Field {
    /// Sample a closure f(x, y) on the grid.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for iy in 0..n {
            let y = grid.coord(iy);
            for ix in 0..n {
                values.push(f(grid.coord(ix), y));
            }
        }
        Self { grid, data: Data::Physical(values) }
    }

    /// Physical field from raw row-major samples.
    pub fn from_samples(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch { left: grid.n(), right: (values.len() as f64).sqrt() as usize });
        }
        Ok(Self { grid, data: Data::Physical(values) })
    }

    /// Spectral field from raw row-major coefficients.
    pub fn from_modes(grid: TorusGrid, modes: Vec<Complex64>) -> Result<Self> {
        if modes.len() != grid.len() {
            return Err(Error::GridMismatch { left: grid.n(), right: (modes.len() as f64).sqrt() as usize });
        }
        Ok(Self { grid, data: Data::Spectral(modes) })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, data: Data::Physical(vec![0.0; grid.len()]) }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self { grid, data: Data::Physical(vec![value; grid.len()]) }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.data {
            Data::Physical(_) => Representation::Physical,
            Data::Spectral(_) => Representation::Spectral,
        }
    }

    /// Physical samples, if this field is stored physically.
    pub fn samples(&self) -> Option<&[f64]> {
        match &self.data {
            Data::Physical(v) => Some(v),
            Data::Spectral(_) => None,
        }
    }

    /// Spectral coefficients, if this field is stored spectrally.
    pub fn modes(&self) -> Option<&[Complex64]> {
        match &self.data {
            Data::Spectral(v) => Some(v),
            Data::Physical(_) => None,
        }
    }

    /// Forward transform; identity on already-spectral fields.
    pub fn to_spectral(&self) -> Field {
        match &self.data {
            Data::Spectral(_) => self.clone(),
            Data::Physical(values) => {
                let mut buf: Vec<Complex64> =
                    values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft::forward(&mut buf, self.grid.n());
                Field { grid: self.grid, data: Data::Spectral(buf) }
            }
        }
    }

    /// Inverse transform with a conjugate-symmetry check.
    ///
    /// The imaginary residue of the inverse transform must stay below
    /// [`SYMMETRY_TOL`] relative to the field amplitude; a larger residue
    /// means the spectrum did not describe a real field.
    pub fn to_physical(&self) -> Result<Field> {
        match &self.data {
            Data::Physical(_) => Ok(self.clone()),
            Data::Spectral(modes) => {
                let mut buf = modes.clone();
                fft::inverse(&mut buf, self.grid.n());
                let mut max_im = 0.0f64;
                let mut max_re = 0.0f64;
                for v in &buf {
                    max_im = max_im.max(v.im.abs());
                    max_re = max_re.max(v.re.abs());
                }
                let tol = SYMMETRY_TOL * max_re.max(1.0);
                if max_im > tol {
                    return Err(Error::SymmetryViolation { residue: max_im, tol });
                }
                Ok(Field {
                    grid: self.grid,
                    data: Data::Physical(buf.into_iter().map(|v| v.re).collect()),
                })
            }
        }
    }

    /// Inverse transform of a spectrum that is real by construction (a real
    /// multiplier applied to the spectrum of a real field): the imaginary
    /// residue is round-off and is dropped without the symmetry check.
    fn inverse_real(grid: TorusGrid, mut modes: Vec<Complex64>) -> Field {
        fft::inverse(&mut modes, grid.n());
        Field { grid, data: Data::Physical(modes.into_iter().map(|v| v.re).collect()) }
    }

    /// Spectral derivative along `axis` (0 = x, 1 = y): multiplies each mode
    /// by i*(2*pi/L)*k on that axis, with the Nyquist factor zeroed.
    ///
    /// The result is returned in physical representation: differentiating a
    /// real field yields a real field, so no symmetry check applies.
    pub fn derivative(&self, axis: usize) -> Field {
        assert!(axis < 2, "axis must be 0 (x) or 1 (y)");
        let spectral = self.to_spectral();
        let modes = spectral.modes().expect("spectral after to_spectral");
        let n = self.grid.n();
        let mut out = Vec::with_capacity(n * n);
        for jy in 0..n {
            let fy = self.grid.deriv_factor(jy);
            for jx in 0..n {
                let f = if axis == 0 { self.grid.deriv_factor(jx) } else { fy };
                out.push(modes[self.grid.idx(jx, jy)] * f);
            }
        }
        Self::inverse_real(self.grid, out)
    }

    /// nu * Laplacian, applied as the spectral multiplier -(4 nu pi^2/L^2) |k|^2
    /// and returned in physical representation.
    pub fn laplacian(&self, nu: f64) -> Field {
        let spectral = self.to_spectral();
        let modes = spectral.modes().expect("spectral after to_spectral");
        let n = self.grid.n();
        let mut out = Vec::with_capacity(n * n);
        for jy in 0..n {
            for jx in 0..n {
                let m = nu * self.grid.laplacian_multiplier(jx, jy);
                out.push(modes[self.grid.idx(jx, jy)] * m);
            }
        }
        Self::inverse_real(self.grid, out)
    }

    /// Pointwise map over physical samples.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        let phys = self.to_physical()?;
        let values = phys.samples().expect("physical after to_physical");
        Ok(Field {
            grid: self.grid,
            data: Data::Physical(values.iter().map(|&v| f(v)).collect()),
        })
    }

    /// Pointwise combination of two fields in physical space.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_grid(other)?;
        let a = self.to_physical()?;
        let b = other.to_physical()?;
        let av = a.samples().unwrap();
        let bv = b.samples().unwrap();
        Ok(Field {
            grid: self.grid,
            data: Data::Physical(av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()),
        })
    }

    /// self + scale * other, carried out in whichever representation both
    /// sides can share cheaply (physical preferred).
    pub fn add_scaled(&self, other: &Field, scale: f64) -> Result<Field> {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn scale(&self, s: f64) -> Result<Field> {
        self.map(|v| s * v)
    }

    /// Truncate the spectrum to modes with |kx| <= max_mode and |ky| <= max_mode.
    pub fn band_limit(&self, max_mode: i64) -> Result<Field> {
        let spectral = self.to_spectral();
        let modes = spectral.modes().unwrap();
        let n = self.grid.n();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for jy in 0..n {
            for jx in 0..n {
                if self.grid.wavenumber(jx).abs() <= max_mode
                    && self.grid.wavenumber(jy).abs() <= max_mode
                {
                    out[self.grid.idx(jx, jy)] = modes[self.grid.idx(jx, jy)];
                }
            }
        }
        Field { grid: self.grid, data: Data::Spectral(out) }.to_physical()
    }

    /// True if any sample or coefficient is non-finite.
    pub fn has_non_finite(&self) -> bool {
        match &self.data {
            Data::Physical(v) => v.iter().any(|x| !x.is_finite()),
            Data::Spectral(v) => v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()),
        }
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { left: self.grid.n(), right: other.grid.n() });
        }
        Ok(())
    }

    /// Maximum absolute difference of physical samples.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_grid(other)?;
        let a = self.to_physical()?;
        let b = other.to_physical()?;
        Ok(a.samples()
            .unwrap()
            .iter()
            .zip(b.samples().unwrap())
            .map(|(&x, &y)| (x - y).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, 2.0 * PI).unwrap()
    }

    pub fn random_field(g: TorusGrid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..g.len())
            .map(|_| rng.next_u64() as f64 / u64::MAX as f64 - 0.5)
            .collect();
        Field::from_samples(g, values).unwrap()
    }

    /// O(n^4) direct DFT, kept deliberately independent of the FFT path.
    fn direct_inverse(modes: &[Complex64], g: TorusGrid) -> Vec<f64> {
        let n = g.n();
        let mut out = vec![0.0; n * n];
        for iy in 0..n {
            for ix in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for jy in 0..n {
                    for jx in 0..n {
                        let phase = 2.0 * PI * (ix * jx + iy * jy) as f64 / n as f64;
                        acc += modes[g.idx(jx, jy)] * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                out[g.idx(ix, iy)] = acc.re / (n * n) as f64;
            }
        }
        out
    }

    #[test]
    fn constant_dc_mode() {
        let g = grid(8);
        let f = Field::constant(g, 1.0).to_spectral();
        let modes = f.modes().unwrap();
        assert!((modes[0].re - 64.0).abs() < 1e-12);
        assert!(modes[1..].iter().all(|m| m.norm() < 1e-12));
    }

    #[test]
    fn sine_hits_single_mode() {
        let g = grid(16);
        let f = Field::from_fn(g, |x, _| x.sin()).to_spectral();
        let modes = f.modes().unwrap();
        let n = g.n();
        // sin x = (e^{ix} - e^{-ix}) / 2i: modes k = (1,0) and (-1,0)
        let expect = Complex64::new(0.0, -((n * n) as f64) / 2.0);
        assert!((modes[g.idx(1, 0)] - expect).norm() < 1e-9);
        assert!((modes[g.idx(n - 1, 0)] - expect.conj()).norm() < 1e-9);
        for jy in 0..n {
            for jx in 0..n {
                if (jx, jy) != (1, 0) && (jx, jy) != (n - 1, 0) {
                    assert!(modes[g.idx(jx, jy)].norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn roundtrip_many_sizes() {
        for n in [8usize, 16, 32, 64, 128] {
            let g = grid(n);
            let f = random_field(g, n as u64);
            let back = f.to_spectral().to_physical().unwrap();
            let max = f
                .samples()
                .unwrap()
                .iter()
                .zip(back.samples().unwrap())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max < 1e-12, "roundtrip error {max} at n = {n}");
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_field() {
        let g = grid(8);
        let f = Field::from_modes(g, vec![Complex64::new(0.0, 0.0); g.len()]).unwrap();
        let p = f.to_physical().unwrap();
        assert!(p.samples().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_from_two_modes() {
        let g = grid(8);
        let n = g.n();
        let mut modes = vec![Complex64::new(0.0, 0.0); g.len()];
        modes[g.idx(1, 0)] = Complex64::new((n * n) as f64 / 2.0, 0.0);
        modes[g.idx(n - 1, 0)] = Complex64::new((n * n) as f64 / 2.0, 0.0);
        let f = Field::from_modes(g, modes).unwrap().to_physical().unwrap();
        for iy in 0..n {
            for ix in 0..n {
                let x = g.coord(ix);
                assert!((f.samples().unwrap()[g.idx(ix, iy)] - x.cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_matches_direct_dft_oracle() {
        let g = grid(8);
        // random real field -> spectrum is conjugate symmetric by construction
        let f = random_field(g, 3).to_spectral();
        let via_fft = f.to_physical().unwrap();
        let via_direct = direct_inverse(f.modes().unwrap(), g);
        for (a, b) in via_fft.samples().unwrap().iter().zip(&via_direct) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn broken_symmetry_is_rejected() {
        let g = grid(8);
        let mut modes = vec![Complex64::new(0.0, 0.0); g.len()];
        // a lone complex mode with no conjugate partner
        modes[g.idx(1, 0)] = Complex64::new(0.0, 32.0);
        let f = Field::from_modes(g, modes).unwrap();
        assert!(matches!(f.to_physical(), Err(Error::SymmetryViolation { .. })));
    }

    #[test]
    fn derivative_of_sine() {
        let g = grid(32);
        let f = Field::from_fn(g, |x, _| x.sin());
        let d = f.derivative(0).to_physical().unwrap();
        let expect = Field::from_fn(g, |x, _| x.cos());
        assert!(d.max_abs_diff(&expect).unwrap() < 1e-12);
        // constants differentiate to zero
        let c = Field::constant(g, 3.5).derivative(1).to_physical().unwrap();
        assert!(c.samples().unwrap().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn derivative_closed_form_oracle() {
        // d/dy exp(0.7 sin y) = 0.7 cos y exp(0.7 sin y)
        let g = TorusGrid::new(128, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, |_, y| (0.7 * y.sin()).exp());
        let d = f.derivative(1).to_physical().unwrap();
        let expect = Field::from_fn(g, |_, y| 0.7 * y.cos() * (0.7 * y.sin()).exp());
        assert!(d.max_abs_diff(&expect).unwrap() < 1e-10);
    }

    #[test]
    fn derivative_is_linear() {
        let g = grid(16);
        let f = random_field(g, 11);
        let h = random_field(g, 12);
        let lhs = f.add_scaled(&h, 2.5).unwrap().derivative(0);
        let rhs = f
            .derivative(0)
            .to_physical()
            .unwrap()
            .add_scaled(&h.derivative(0).to_physical().unwrap(), 2.5)
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn laplacian_eigenfunctions() {
        let g = grid(32);
        let f = Field::from_fn(g, |x, _| x.sin());
        let lap = f.laplacian(1.0);
        let expect = Field::from_fn(g, |x, _| -x.sin());
        assert!(lap.max_abs_diff(&expect).unwrap() < 1e-12);

        let c = Field::constant(g, 2.0).laplacian(0.7);
        assert!(c.max_abs_diff(&Field::zeros(g)).unwrap() < 1e-12);

        let f2 = Field::from_fn(g, |x, y| x.sin() + (2.0 * y).sin());
        let lap2 = f2.laplacian(1.0);
        let expect2 = Field::from_fn(g, |x, y| -x.sin() - 4.0 * (2.0 * y).sin());
        assert!(lap2.max_abs_diff(&expect2).unwrap() < 1e-12);
    }

    #[test]
    fn laplacian_equals_iterated_derivatives() {
        let g = grid(32);
        let f = random_field(g, 21).band_limit(8).unwrap();
        let nu = 0.37;
        let lap = f.laplacian(nu).to_physical().unwrap();
        let dxx = f.derivative(0).derivative(0);
        let dyy = f.derivative(1).derivative(1);
        let composed = dxx.add_scaled(&dyy, 1.0).unwrap().scale(nu).unwrap();
        assert!(lap.max_abs_diff(&composed).unwrap() < 1e-10);
    }
}
