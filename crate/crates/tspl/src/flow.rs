//! Divergence-free background velocity fields.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::TorusGrid;
use crate::norms::{norm_wkp, Exponent};

/// Relative tolerance on the spectral divergence accepted at construction.
pub const DIVERGENCE_TOL: f64 = 1e-10;

/// Precomputed samples of a divergence-free velocity field v = (vx, vy).
#[derive(Debug, Clone)]
pub struct FlowField {
    grid: TorusGrid,
    vx: Field,
    vy: Field,
    max_speed: f64,
}

impl FlowField {
    /// Build a flow from its two components, rejecting fields whose spectral
    /// divergence exceeds `DIVERGENCE_TOL * max(1, max_speed)`.
    pub fn new(vx: Field, vy: Field) -> Result<Self> {
        vx.check_grid(&vy)?;
        let grid = vx.grid();
        let vx = vx.to_physical()?;
        let vy = vy.to_physical()?;
        let max_speed = vx
            .samples()
            .unwrap()
            .iter()
            .zip(vy.samples().unwrap())
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .fold(0.0f64, f64::max);
        let flow = Self { grid, vx, vy, max_speed };
        let div_linf = norm_wkp(&divergence(&flow), 0, Exponent::Infinity)?;
        let tol = DIVERGENCE_TOL * max_speed.max(1.0);
        if div_linf > tol {
            return Err(Error::DivergentFlow { linf: div_linf, tol });
        }
        Ok(flow)
    }

    /// Sample two closures vx(x, y), vy(x, y) on the grid.
    pub fn from_fns(
        grid: TorusGrid,
        vx: impl Fn(f64, f64) -> f64,
        vy: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        Self::new(Field::from_fn(grid, vx), Field::from_fn(grid, vy))
    }

    /// The paper's shear flow v(x, y) = (-amplitude * sin y, 0).
    pub fn shear(grid: TorusGrid, amplitude: f64) -> Result<Self> {
        Self::from_fns(grid, move |_, y| -amplitude * y.sin(), |_, _| 0.0)
    }

    /// Zero velocity (advection becomes the identity).
    pub fn zero(grid: TorusGrid) -> Result<Self> {
        Self::new(Field::zeros(grid), Field::zeros(grid))
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn vx(&self) -> &Field {
        &self.vx
    }

    pub fn vy(&self) -> &Field {
        &self.vy
    }

    /// Cached maximum of |v| over the grid.
    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }
}

/// Spectral divergence dvx/dx + dvy/dy.
pub fn divergence(flow: &FlowField) -> Field {
    let dx = flow.vx.derivative(0);
    let dy = flow.vy.derivative(1);
    dx.to_physical()
        .and_then(|a| dy.to_physical().and_then(|b| a.add_scaled(&b, 1.0)))
        .expect("derivatives of physical inputs stay symmetric")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(32, 2.0 * PI).unwrap()
    }

    #[test]
    fn shear_flow_is_divergence_free() {
        let flow = FlowField::shear(grid(), 0.75).unwrap();
        let div = norm_wkp(&divergence(&flow), 0, Exponent::Infinity).unwrap();
        assert!(div < 1e-12);
        assert!((flow.max_speed() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn crossed_trig_flow_is_divergence_free() {
        // d/dx cos y + d/dy sin x = 0
        let flow = FlowField::from_fns(grid(), |_, y| y.cos(), |x, _| x.sin()).unwrap();
        let div = norm_wkp(&divergence(&flow), 0, Exponent::Infinity).unwrap();
        assert!(div < 1e-12);
    }

    #[test]
    fn compressible_flow_is_rejected() {
        let out = FlowField::from_fns(grid(), |x, _| x.sin(), |_, _| 0.0);
        assert!(matches!(out, Err(Error::DivergentFlow { .. })));
    }
}
