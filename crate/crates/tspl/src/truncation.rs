//! Local-truncation laboratory: second-order Taylor predictions for the six
//! splitting compositions, their averaged one-step operator, and the exact
//! flow, plus slope fitting to read off empirical orders.
//!
//! Identifiers follow the composition as written, so `Arl` is
//! S_A(tau) S_R(tau) S_L(tau): the rightmost factor (heat) acts first and
//! advection acts last.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::norms::{norm_wkp, Exponent};
use crate::operators::{apply_poly, ExpansionTerm, ModelParams};
use crate::reference::advance_to;
use crate::semigroups::SemigroupId;
use crate::splitting::{fixed_split_step, mean_split_step};
use std::io::Write;
use std::path::Path;

/// Reference sub-stepping used when approximating the exact flow T(tau):
/// tau_ref = tau / ORACLE_REFINEMENT.
pub const ORACLE_REFINEMENT: f64 = 256.0;

/// The eight catalog entries: six compositions, their explicit mean, and the
/// exact flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpansionId {
    Arl,
    Lra,
    Alr,
    Lar,
    Ral,
    Rla,
    AveragedS,
    ExactT,
}

impl ExpansionId {
    pub const PERMUTATIONS: [ExpansionId; 6] = [
        ExpansionId::Arl,
        ExpansionId::Lra,
        ExpansionId::Alr,
        ExpansionId::Lar,
        ExpansionId::Ral,
        ExpansionId::Rla,
    ];

    pub const ALL: [ExpansionId; 8] = [
        ExpansionId::Arl,
        ExpansionId::Lra,
        ExpansionId::Alr,
        ExpansionId::Lar,
        ExpansionId::Ral,
        ExpansionId::Rla,
        ExpansionId::AveragedS,
        ExpansionId::ExactT,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExpansionId::Arl => "ARL",
            ExpansionId::Lra => "LRA",
            ExpansionId::Alr => "ALR",
            ExpansionId::Lar => "LAR",
            ExpansionId::Ral => "RAL",
            ExpansionId::Rla => "RLA",
            ExpansionId::AveragedS => "averaged-S",
            ExpansionId::ExactT => "exact-T",
        }
    }

    /// Sub-flow order for the six compositions, first applied first
    /// (the reverse of the letters as written).
    pub fn application_order(&self) -> Option<[SemigroupId; 3]> {
        use SemigroupId::{Advection as A, Heat as L, Reaction as R};
        match self {
            ExpansionId::Arl => Some([L, R, A]),
            ExpansionId::Lra => Some([A, R, L]),
            ExpansionId::Alr => Some([R, L, A]),
            ExpansionId::Lar => Some([R, A, L]),
            ExpansionId::Ral => Some([L, A, R]),
            ExpansionId::Rla => Some([A, L, R]),
            ExpansionId::AveragedS | ExpansionId::ExactT => None,
        }
    }
}

/// Second-order cross term contributed by applying `earlier` before `later`.
fn cross_term(later: SemigroupId, earlier: SemigroupId) -> ExpansionTerm {
    use SemigroupId::{Advection as A, Heat as L, Reaction as R};
    match (later, earlier) {
        (A, L) => ExpansionTerm::DiffusionThenAdvection,
        (L, A) => ExpansionTerm::AdvectionThenDiffusion,
        (A, R) => ExpansionTerm::ReactionThenAdvection,
        (R, A) => ExpansionTerm::JacobianAdvection,
        (L, R) => ExpansionTerm::ReactionThenDiffusion,
        (R, L) => ExpansionTerm::JacobianDiffusion,
        _ => unreachable!("cross terms are only defined for distinct sub-flows"),
    }
}

fn diagonal_term(id: SemigroupId) -> ExpansionTerm {
    match id {
        SemigroupId::Advection => ExpansionTerm::AdvectionTwice,
        SemigroupId::Heat => ExpansionTerm::DiffusionTwice,
        SemigroupId::Reaction => ExpansionTerm::JacobianReaction,
    }
}

/// Shared first-order part a + tau (L a + A a + a - a^3).
fn first_order(a: &Field, params: &ModelParams, tau: f64) -> Result<Field> {
    let mut out = a.to_physical()?;
    for term in [ExpansionTerm::Diffusion, ExpansionTerm::Advection, ExpansionTerm::Reaction] {
        out = out.add_scaled(&apply_poly(a, term, params)?.to_physical()?, tau)?;
    }
    Ok(out)
}

/// Evaluate the printed second-order expansion for `id` at the state `a`.
pub fn expansion_predict(
    id: ExpansionId,
    a: &Field,
    params: &ModelParams,
    tau: f64,
) -> Result<Field> {
    let mut out = first_order(a, params, tau)?;
    let half_tau2 = 0.5 * tau * tau;
    let add = |out: Field, term: ExpansionTerm, weight: f64| -> Result<Field> {
        out.add_scaled(&apply_poly(a, term, params)?.to_physical()?, weight * half_tau2)
    };
    match id.application_order() {
        Some(order) => {
            for sub in order {
                out = add(out, diagonal_term(sub), 1.0)?;
            }
            for i in 0..3 {
                for j in (i + 1)..3 {
                    out = add(out, cross_term(order[j], order[i]), 2.0)?;
                }
            }
            Ok(out)
        }
        None => {
            // (L + A)^2 a
            for term in [
                ExpansionTerm::DiffusionTwice,
                ExpansionTerm::AdvectionTwice,
                ExpansionTerm::DiffusionThenAdvection,
                ExpansionTerm::AdvectionThenDiffusion,
            ] {
                out = add(out, term, 1.0)?;
            }
            // (1 - 3a^2)(a - a^3) + (L + A)(a - a^3) + (1 - 3a^2)(L + A) a,
            // the identical tau^2 bracket of the averaged operator and of
            // the exact flow
            for term in [
                ExpansionTerm::JacobianReaction,
                ExpansionTerm::ReactionThenDiffusion,
                ExpansionTerm::ReactionThenAdvection,
                ExpansionTerm::JacobianDiffusion,
                ExpansionTerm::JacobianAdvection,
            ] {
                out = add(out, term, 1.0)?;
            }
            Ok(out)
        }
    }
}

/// The one-step operator named by `id`: a splitting composition, their mean,
/// or the exact flow approximated by the reference integrator.
pub fn composition(id: ExpansionId, a: &Field, params: &ModelParams, tau: f64) -> Result<Field> {
    match id.application_order() {
        Some(order) => fixed_split_step(a, params, tau, order),
        None => match id {
            ExpansionId::AveragedS => mean_split_step(a, params, tau),
            ExpansionId::ExactT => advance_to(a, params, tau / ORACLE_REFINEMENT, tau),
            _ => unreachable!(),
        },
    }
}

/// One-step deviation of a composition from the exact flow in W^{k,p}.
///
/// `id` must be one of the six permutations or `AveragedS`; the exact flow
/// itself is not a valid argument.
pub fn local_error(
    id: ExpansionId,
    a: &Field,
    params: &ModelParams,
    tau: f64,
    k: usize,
    p: Exponent,
) -> Result<f64> {
    if id == ExpansionId::ExactT {
        return Err(Error::InvalidExpansionId(
            id.name().to_string(),
            "local errors are measured against the exact flow".to_string(),
        ));
    }
    let approx = composition(id, a, params, tau)?;
    let exact = advance_to(a, params, tau / ORACLE_REFINEMENT, tau)?;
    norm_wkp(&approx.add_scaled(&exact, -1.0)?, k, p)
}

/// Deviation of the one-step operator from its printed expansion in W^{k,p}.
pub fn expansion_remainder(
    id: ExpansionId,
    a: &Field,
    params: &ModelParams,
    tau: f64,
    k: usize,
    p: Exponent,
) -> Result<f64> {
    let actual = composition(id, a, params, tau)?;
    let predicted = expansion_predict(id, a, params, tau)?;
    norm_wkp(&actual.add_scaled(&predicted, -1.0)?, k, p)
}

/// Least-squares order fit on log2 error against log2 tau.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    /// Root-mean-square residual of the log2-log2 fit.
    pub residual: f64,
}

pub fn fit_order(taus: &[f64], errors: &[f64]) -> Result<SlopeReport> {
    if taus.len() != errors.len() {
        return Err(Error::DegenerateFit(format!(
            "{} step sizes against {} errors",
            taus.len(),
            errors.len()
        )));
    }
    if taus.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 samples, got {}",
            taus.len()
        )));
    }
    for (&t, &e) in taus.iter().zip(errors) {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::DegenerateFit(format!("nonpositive step size {t}")));
        }
        if !e.is_finite() || e <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "nonpositive error {e} at tau = {t}; exact agreement cannot be fitted"
            )));
        }
    }
    let xs: Vec<f64> = taus.iter().map(|t| t.log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all step sizes coincide".to_string()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(SlopeReport { taus: taus.to_vec(), errors: errors.to_vec(), slope, residual })
}

/// One row of the lab's CSV report.
#[derive(Debug, Clone)]
pub struct RemainderRow {
    pub id: String,
    pub k: usize,
    pub p: String,
    pub tau: f64,
    pub remainder: f64,
    pub slope: f64,
    pub fit_residual: f64,
}

pub fn write_remainder_csv(path: &Path, rows: &[RemainderRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "id,k,p,tau,remainder,slope,fit_residual")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.17e},{:.17e},{:.6},{:.6}",
            r.id, r.k, r.p, r.tau, r.remainder, r.slope, r.fit_residual
        )?;
    }
    Ok(())
}
