//! Discrete Sobolev norms W^{k,p} on the torus grid.
//!
//! The p = 2 norms use the rectangle rule with weight h^2 (periodic, so no
//! boundary correction); first derivatives are spectral. p = infinity takes
//! the maximum over grid points of the function and, for k = 1, of both first
//! derivatives.

use crate::error::{Error, Result};
use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Two,
    Infinity,
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Two => write!(f, "2"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

fn l2_sq(values: &[f64], weight: f64) -> f64 {
    values.iter().map(|&v| v * v).sum::<f64>() * weight
}

fn linf(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Discrete W^{k,p} norm with k in {0, 1} and p in {2, inf}.
pub fn norm_wkp(f: &Field, k: usize, p: Exponent) -> Result<f64> {
    if k > 1 {
        return Err(Error::UnsupportedNorm { k, p: p.to_string() });
    }
    let phys = f.to_physical()?;
    let values = phys.samples().expect("physical");
    let h = f.grid().spacing();
    let w = h * h;
    match (k, p) {
        (0, Exponent::Two) => Ok(l2_sq(values, w).sqrt()),
        (0, Exponent::Infinity) => Ok(linf(values)),
        (1, Exponent::Two) => {
            let dx = f.derivative(0).to_physical()?;
            let dy = f.derivative(1).to_physical()?;
            Ok((l2_sq(values, w)
                + l2_sq(dx.samples().unwrap(), w)
                + l2_sq(dy.samples().unwrap(), w))
            .sqrt())
        }
        (1, Exponent::Infinity) => {
            let dx = f.derivative(0).to_physical()?;
            let dy = f.derivative(1).to_physical()?;
            Ok(linf(values)
                .max(linf(dx.samples().unwrap()))
                .max(linf(dy.samples().unwrap())))
        }
        _ => unreachable!(),
    }
}

/// Discrete L^2 inner product h^2 * sum(f * g).
pub fn inner_l2(f: &Field, g: &Field) -> Result<f64> {
    f.check_grid(g)?;
    let a = f.to_physical()?;
    let b = g.to_physical()?;
    let h = f.grid().spacing();
    Ok(a.samples()
        .unwrap()
        .iter()
        .zip(b.samples().unwrap())
        .map(|(&x, &y)| x * y)
        .sum::<f64>()
        * h
        * h)
}

/// L^2 norm evaluated on the spectral side via the Plancherel identity.
///
/// With the unnormalised forward transform, sum_x |f|^2 h^2 equals
/// sum_k |f_hat(k)|^2 h^2 / n^2.
pub fn norm_l2_spectral(f: &Field) -> f64 {
    let spec = f.to_spectral();
    let modes = spec.modes().expect("spectral");
    let n2 = f.grid().len() as f64;
    let h = f.grid().spacing();
    (modes.iter().map(|m| m.norm_sqr()).sum::<f64>() * h * h / n2).sqrt()
}
