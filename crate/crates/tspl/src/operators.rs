//! The three right-hand-side operators of the convected Allen-Cahn model
//! and the polynomial term catalog used by the truncation lab.
//!
//! Writing the equation as du/dt = A u + L u + R u:
//! * `apply_advection`: A u = -v . grad u,
//! * `apply_diffusion`: L u = nu * Laplacian u,
//! * `apply_reaction`:  R u = u - u^3.
//!
//! Derivatives are spectral, products are pointwise in physical space with no
//! dealiasing (an optional 2/3-rule flag exists on [`ModelParams`] but is off
//! by default, which is the configuration all reported numbers use).

use crate::error::Result;
use crate::field::Field;
use crate::flow::FlowField;

/// Model parameters: diffusivity, background flow, and the fixed cubic
/// nonlinearity f(u) = u^3 - u.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub nu: f64,
    pub flow: FlowField,
    /// Apply the 2/3-rule spectral filter after pointwise products.
    pub dealias: bool,
}

impl ModelParams {
    pub fn new(nu: f64, flow: FlowField) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(crate::error::Error::InvalidConfig(format!(
                "diffusivity nu = {nu} must be positive"
            )));
        }
        Ok(Self { nu, flow, dealias: false })
    }

    fn post_product(&self, f: Field) -> Result<Field> {
        if self.dealias {
            let cutoff = (self.flow.grid().n() as i64) / 3;
            f.band_limit(cutoff)
        } else {
            Ok(f)
        }
    }
}

/// A u = -(vx * df/dx + vy * df/dy).
pub fn apply_advection(f: &Field, params: &ModelParams) -> Result<Field> {
    let flow = &params.flow;
    f.check_grid(flow.vx())?;
    let dx = f.derivative(0).to_physical()?;
    let dy = f.derivative(1).to_physical()?;
    let term_x = dx.zip_map(flow.vx(), |d, v| v * d)?;
    let term_y = dy.zip_map(flow.vy(), |d, v| v * d)?;
    params.post_product(term_x.add_scaled(&term_y, 1.0)?.scale(-1.0)?)
}

/// L u = nu * Laplacian u.
pub fn apply_diffusion(f: &Field, params: &ModelParams) -> Result<Field> {
    Ok(f.laplacian(params.nu))
}

/// R u = u - u^3, pointwise.
pub fn apply_reaction(f: &Field) -> Result<Field> {
    f.map(|u| u - u * u * u)
}

/// The closed catalog of second-order expansion terms; names read in
/// application order, so `DiffusionThenAdvection` is A(L a).
///
/// `Jacobian*` terms carry the pointwise factor (1 - 3a^2), the derivative of
/// the reaction right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionTerm {
    /// A a
    Advection,
    /// L a
    Diffusion,
    /// a - a^3
    Reaction,
    /// A(A a)
    AdvectionTwice,
    /// L(L a)
    DiffusionTwice,
    /// A(L a)
    DiffusionThenAdvection,
    /// L(A a)
    AdvectionThenDiffusion,
    /// A(a - a^3)
    ReactionThenAdvection,
    /// L(a - a^3)
    ReactionThenDiffusion,
    /// (1 - 3a^2)(a - a^3)
    JacobianReaction,
    /// (1 - 3a^2) L a
    JacobianDiffusion,
    /// (1 - 3a^2) A a
    JacobianAdvection,
}

impl ExpansionTerm {
    pub const ALL: [ExpansionTerm; 12] = [
        ExpansionTerm::Advection,
        ExpansionTerm::Diffusion,
        ExpansionTerm::Reaction,
        ExpansionTerm::AdvectionTwice,
        ExpansionTerm::DiffusionTwice,
        ExpansionTerm::DiffusionThenAdvection,
        ExpansionTerm::AdvectionThenDiffusion,
        ExpansionTerm::ReactionThenAdvection,
        ExpansionTerm::ReactionThenDiffusion,
        ExpansionTerm::JacobianReaction,
        ExpansionTerm::JacobianDiffusion,
        ExpansionTerm::JacobianAdvection,
    ];
}

fn jacobian_times(a: &Field, g: &Field) -> Result<Field> {
    a.zip_map(g, |u, v| (1.0 - 3.0 * u * u) * v)
}

/// Evaluate one catalog term at the state `a`.
pub fn apply_poly(a: &Field, term: ExpansionTerm, params: &ModelParams) -> Result<Field> {
    use ExpansionTerm::*;
    match term {
        Advection => apply_advection(a, params),
        Diffusion => apply_diffusion(a, params),
        Reaction => apply_reaction(a),
        AdvectionTwice => apply_advection(&apply_advection(a, params)?, params),
        DiffusionTwice => apply_diffusion(&apply_diffusion(a, params)?, params),
        DiffusionThenAdvection => apply_advection(&apply_diffusion(a, params)?, params),
        AdvectionThenDiffusion => apply_diffusion(&apply_advection(a, params)?, params),
        ReactionThenAdvection => apply_advection(&apply_reaction(a)?, params),
        ReactionThenDiffusion => apply_diffusion(&apply_reaction(a)?, params),
        JacobianReaction => jacobian_times(a, &apply_reaction(a)?),
        JacobianDiffusion => jacobian_times(a, &apply_diffusion(a, params)?.to_physical()?),
        JacobianAdvection => jacobian_times(a, &apply_advection(a, params)?),
    }
}
