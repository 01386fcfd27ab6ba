//! Exponential midpoint reference integrator and snapshot storage.
//!
//! The scheme advances the Fourier coefficients by
//!
//! ```text
//! u_half(k) = e^{-c tau/2} u_n(k) - (tau/2) phi(c tau/2) g(u_n, k)
//! u_next(k) = e^{-c tau}   u_n(k) -  tau    phi(c tau)   g(u_half, k)
//! ```
//!
//! with c = (4 pi^2 / L^2) |k|^2 nu, phi(z) = (1 - e^{-z})/z and
//! g(u, k) = fft(u^3 - u)(k) + i (2 pi / L) k . fft(v u)(k). The k = 0 mode
//! is the phi(0) = 1 limit, which the series branch of `phi` covers.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::TorusGrid;
use crate::operators::ModelParams;
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// (1 - e^{-z}) / z, with a series branch below |z| = 1e-4 so the k -> 0
/// limit phi(0) = 1 needs no special casing.
pub(crate) fn phi(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        // 1 - z/2 + z^2/6 - z^3/24 + z^4/120, error ~ z^5/720
        1.0 + z * (-0.5 + z * (1.0 / 6.0 + z * (-1.0 / 24.0 + z / 120.0)))
    } else {
        (1.0 - (-z).exp()) / z
    }
}

/// Precomputed per-mode tables for one (params, tau) pair.
pub struct ReferenceStepper {
    grid: TorusGrid,
    tau: f64,
    exp_half: Vec<f64>,
    exp_full: Vec<f64>,
    weight_half: Vec<f64>,
    weight_full: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    include_g: bool,
}

impl ReferenceStepper {
    pub fn new(params: &ModelParams, tau: f64) -> Result<Self> {
        Self::build(params, tau, true)
    }

    /// Variant with the nonlinear/advective term g forced to zero; the
    /// scheme then reduces to the exact heat exponential, which the
    /// validation suite checks against `heat_step`.
    pub fn heat_only(params: &ModelParams, tau: f64) -> Result<Self> {
        Self::build(params, tau, false)
    }

    fn build(params: &ModelParams, tau: f64, include_g: bool) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidConfig(format!("reference step tau = {tau} must be positive")));
        }
        let grid = params.flow.grid();
        let n = grid.n();
        let mut exp_half = Vec::with_capacity(n * n);
        let mut exp_full = Vec::with_capacity(n * n);
        let mut weight_half = Vec::with_capacity(n * n);
        let mut weight_full = Vec::with_capacity(n * n);
        for jy in 0..n {
            for jx in 0..n {
                let c = -params.nu * grid.laplacian_multiplier(jx, jy);
                exp_half.push((-c * tau / 2.0).exp());
                exp_full.push((-c * tau).exp());
                weight_half.push(tau / 2.0 * phi(c * tau / 2.0));
                weight_full.push(tau * phi(c * tau));
            }
        }
        let vx = params.flow.vx().samples().expect("physical flow").to_vec();
        let vy = params.flow.vy().samples().expect("physical flow").to_vec();
        Ok(Self { grid, tau, exp_half, exp_full, weight_half, weight_full, vx, vy, include_g })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// g(u, k) for physical samples of u.
    fn g_modes(&self, u_phys: &[f64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let mut f_of_u: Vec<Complex64> = u_phys
            .iter()
            .map(|&u| Complex64::new(u * u * u - u, 0.0))
            .collect();
        crate::fft::forward(&mut f_of_u, n);
        let mut vxu: Vec<Complex64> = u_phys
            .iter()
            .zip(&self.vx)
            .map(|(&u, &v)| Complex64::new(v * u, 0.0))
            .collect();
        crate::fft::forward(&mut vxu, n);
        let mut vyu: Vec<Complex64> = u_phys
            .iter()
            .zip(&self.vy)
            .map(|(&u, &v)| Complex64::new(v * u, 0.0))
            .collect();
        crate::fft::forward(&mut vyu, n);
        let mut g = f_of_u;
        for jy in 0..n {
            let fy = self.grid.deriv_factor(jy);
            for jx in 0..n {
                let idx = self.grid.idx(jx, jy);
                let fx = self.grid.deriv_factor(jx);
                g[idx] += fx * vxu[idx] + fy * vyu[idx];
            }
        }
        g
    }

    /// One step on the (spectral, physical) pair representation.
    pub fn step_raw(
        &self,
        modes: &[Complex64],
        phys: &[f64],
    ) -> Result<(Vec<Complex64>, Vec<f64>)> {
        let n = self.grid.n();
        let len = n * n;
        debug_assert_eq!(modes.len(), len);

        let half: Vec<Complex64> = if self.include_g {
            let g_n = self.g_modes(phys);
            (0..len)
                .map(|i| self.exp_half[i] * modes[i] - self.weight_half[i] * g_n[i])
                .collect()
        } else {
            (0..len).map(|i| self.exp_half[i] * modes[i]).collect()
        };

        let next: Vec<Complex64> = if self.include_g {
            let mut half_phys = half.clone();
            crate::fft::inverse(&mut half_phys, n);
            let half_samples: Vec<f64> = half_phys.iter().map(|c| c.re).collect();
            let g_half = self.g_modes(&half_samples);
            (0..len)
                .map(|i| self.exp_full[i] * modes[i] - self.weight_full[i] * g_half[i])
                .collect()
        } else {
            (0..len).map(|i| self.exp_full[i] * modes[i]).collect()
        };

        let mut next_phys_c = next.clone();
        crate::fft::inverse(&mut next_phys_c, n);
        let next_phys: Vec<f64> = next_phys_c.iter().map(|c| c.re).collect();
        if next_phys.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: 0 });
        }
        Ok((next, next_phys))
    }
}

/// The nonlinear/advective source g(u, k) as a spectral field:
/// fft(u^3 - u)(k) + i (2 pi / L) k . fft(v u)(k).
pub fn g_term(u: &Field, params: &ModelParams) -> Result<Field> {
    let stepper = ReferenceStepper::new(params, 1.0)?;
    let phys = u.to_physical()?;
    Field::from_modes(u.grid(), stepper.g_modes(phys.samples().unwrap()))
}

/// One exponential-midpoint step on a field.
pub fn exp_midpoint_step(u: &Field, params: &ModelParams, tau: f64) -> Result<Field> {
    let stepper = ReferenceStepper::new(params, tau)?;
    let phys = u.to_physical()?;
    let spec = u.to_spectral();
    let (modes, _) = stepper.step_raw(spec.modes().unwrap(), phys.samples().unwrap())?;
    Field::from_modes(u.grid(), modes)?.to_physical()
}

/// Advance `u` to exactly time `horizon` with steps of `tau` (the last step
/// covers the remainder when horizon is not a multiple of tau).
pub fn advance_to(u: &Field, params: &ModelParams, tau: f64, horizon: f64) -> Result<Field> {
    let steps = (horizon / tau).ceil() as usize;
    let mut cur = u.to_physical()?;
    for n in 0..steps {
        let t_next = ((n + 1) as f64 * tau).min(horizon);
        let dt = t_next - n as f64 * tau;
        cur = exp_midpoint_step(&cur, params, dt)?;
    }
    Ok(cur)
}

fn step_index_for(t: f64, tau_ref: f64) -> Result<usize> {
    let ratio = t / tau_ref;
    let idx = ratio.round();
    if (ratio - idx).abs() > 1e-9 * idx.abs().max(1.0) || idx < 0.0 {
        return Err(Error::MisalignedSampleTime { t, tau_ref });
    }
    Ok(idx as usize)
}

/// Reference trajectory sampled at the requested times.
///
/// Every sample time must be an integer multiple of `tau_ref`; the returned
/// snapshots are physical fields in the order of `sample_times`.
pub fn reference_trajectory(
    u0: &Field,
    params: &ModelParams,
    tau_ref: f64,
    horizon: f64,
    sample_times: &[f64],
) -> Result<Vec<Field>> {
    let stepper = ReferenceStepper::new(params, tau_ref)?;
    let total_steps = step_index_for(horizon, tau_ref)?;
    let mut wanted: Vec<(usize, usize)> = Vec::with_capacity(sample_times.len());
    for (slot, &t) in sample_times.iter().enumerate() {
        let idx = step_index_for(t, tau_ref)?;
        if idx > total_steps {
            return Err(Error::MisalignedSampleTime { t, tau_ref });
        }
        wanted.push((idx, slot));
    }
    wanted.sort_unstable();

    let mut out: Vec<Option<Field>> = vec![None; sample_times.len()];
    let phys0 = u0.to_physical()?;
    let mut modes = u0.to_spectral().modes().unwrap().to_vec();
    let mut phys = phys0.samples().unwrap().to_vec();
    let mut cursor = 0usize;
    for (idx, slot) in &wanted {
        if *idx == 0 {
            out[*slot] = Some(phys0.clone());
        }
    }
    for step in 1..=total_steps {
        // skip the work past the last requested sample
        if wanted.iter().all(|(idx, _)| *idx < step) {
            break;
        }
        let (m, p) = stepper.step_raw(&modes, &phys).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence { step },
            other => other,
        })?;
        modes = m;
        phys = p;
        while cursor < wanted.len() && wanted[cursor].0 < step {
            cursor += 1;
        }
        for (idx, slot) in wanted.iter().skip(cursor) {
            if *idx != step {
                break;
            }
            out[*slot] = Some(Field::from_samples(params.flow.grid(), phys.clone())?);
        }
    }
    Ok(out
        .into_iter()
        .map(|f| f.expect("all sample slots filled"))
        .collect())
}

/// Snapshot file header; the payload is n^2 little-endian f64 samples in
/// row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub version: u32,
    pub n: u32,
    pub length: f64,
    pub nu: f64,
    pub tau_ref: f64,
    pub time: f64,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"TSPL";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot(path: &Path, field: &Field, meta: &SnapshotMeta) -> Result<()> {
    let phys = field.to_physical()?;
    let samples = phys.samples().unwrap();
    if samples.len() != (meta.n as usize) * (meta.n as usize) {
        return Err(Error::SnapshotFormat(format!(
            "field has {} samples, header says n = {}",
            samples.len(),
            meta.n
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&meta.version.to_le_bytes())?;
    w.write_all(&meta.n.to_le_bytes())?;
    w.write_all(&meta.length.to_le_bytes())?;
    w.write_all(&meta.nu.to_le_bytes())?;
    w.write_all(&meta.tau_ref.to_le_bytes())?;
    w.write_all(&meta.time.to_le_bytes())?;
    for v in samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotMeta, Field)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::SnapshotFormat(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::SnapshotFormat(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4);
    r.read_exact(&mut b8)?;
    let length = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let nu = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let tau_ref = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let time = f64::from_le_bytes(b8);
    let meta = SnapshotMeta { version, n, length, nu, tau_ref, time };
    let grid = TorusGrid::new(n as usize, length)?;
    let mut samples = vec![0.0f64; grid.len()];
    for v in samples.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok((meta, Field::from_samples(grid, samples)?))
}

/// Where reference snapshots live: resident in memory at desk scale, one
/// file per sample time at full scale.
pub enum SnapshotStore {
    Memory { times: Vec<f64>, fields: Vec<Field> },
    Files { times: Vec<f64>, paths: Vec<PathBuf> },
}

impl SnapshotStore {
    pub fn len(&self) -> usize {
        match self {
            SnapshotStore::Memory { times, .. } => times.len(),
            SnapshotStore::Files { times, .. } => times.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> &[f64] {
        match self {
            SnapshotStore::Memory { times, .. } => times,
            SnapshotStore::Files { times, .. } => times,
        }
    }

    pub fn load(&self, i: usize) -> Result<Field> {
        match self {
            SnapshotStore::Memory { fields, .. } => Ok(fields[i].clone()),
            SnapshotStore::Files { paths, .. } => Ok(read_snapshot(&paths[i])?.1),
        }
    }

    /// Index of the snapshot at time `t`, if present.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times()
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

/// Build a snapshot store for the given sample times; `dir = None` keeps the
/// snapshots in memory, `dir = Some(..)` writes one TSPL file per time.
pub fn build_snapshot_store(
    u0: &Field,
    params: &ModelParams,
    tau_ref: f64,
    horizon: f64,
    sample_times: &[f64],
    dir: Option<&Path>,
) -> Result<SnapshotStore> {
    let snaps = reference_trajectory(u0, params, tau_ref, horizon, sample_times)?;
    match dir {
        None => Ok(SnapshotStore::Memory { times: sample_times.to_vec(), fields: snaps }),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let grid = params.flow.grid();
            let mut paths = Vec::with_capacity(snaps.len());
            for (i, (t, f)) in sample_times.iter().zip(&snaps).enumerate() {
                let path = dir.join(format!("ref_{i:06}.tspl"));
                let meta = SnapshotMeta {
                    version: SNAPSHOT_VERSION,
                    n: grid.n() as u32,
                    length: grid.length(),
                    nu: params.nu,
                    tau_ref,
                    time: *t,
                };
                write_snapshot(&path, f, &meta)?;
                paths.push(path);
            }
            Ok(SnapshotStore::Files { times: sample_times.to_vec(), paths })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowField;
    use crate::grid::TorusGrid;
    use crate::norms::{norm_wkp, Exponent};
    use crate::semigroups::heat_step;
    use std::f64::consts::PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, 2.0 * PI).unwrap()
    }

    fn paper_params(n: usize) -> ModelParams {
        ModelParams::new(1.0, FlowField::shear(grid(n), 0.75).unwrap()).unwrap()
    }

    fn paper_u0(g: TorusGrid) -> Field {
        Field::from_fn(g, |x, y| 1.0 + 0.5 * x.sin() + (0.7 * y.sin()).exp())
    }

    #[test]
    fn phi_series_matches_direct_branch() {
        // both branches around the switch point, checked against the
        // cancellation-free expm1 form; the direct branch loses about
        // eps/z digits to the 1 - e^{-z} subtraction
        for &z in &[5e-5f64, 1e-4, 2e-4, 1e-3, 0.1, 1.0] {
            let exact = -(-z).exp_m1() / z;
            let tol = 2.5e-16 / z + 1e-15;
            assert!((phi(z) - exact).abs() < tol, "z = {z}");
        }
        assert_eq!(phi(0.0), 1.0);
    }

    #[test]
    fn phi_limit_matches_expm1_evaluation_at_tiny_c() {
        // the k -> 0 branch agrees with evaluating -expm1(-c)/c at c = 1e-30
        let c = 1e-30f64;
        let direct = -(-c).exp_m1() / c;
        assert!((phi(c) - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_state_stays_zero() {
        let params = paper_params(16);
        let z = Field::zeros(grid(16));
        let out = exp_midpoint_step(&z, &params, 0.1).unwrap();
        assert!(norm_wkp(&out, 0, Exponent::Infinity).unwrap() < 1e-15);
    }

    #[test]
    fn heat_only_matches_heat_step_to_roundoff() {
        let params = paper_params(32);
        let u0 = paper_u0(grid(32));
        let tau = 2f64.powi(-4);
        let stepper = ReferenceStepper::heat_only(&params, tau).unwrap();
        let spec = u0.to_spectral();
        let (modes, _) = stepper
            .step_raw(spec.modes().unwrap(), u0.samples().unwrap())
            .unwrap();
        let via_ref = Field::from_modes(grid(32), modes).unwrap().to_physical().unwrap();
        let via_heat = heat_step(&u0, params.nu, tau).unwrap().to_physical().unwrap();
        assert!(via_ref.max_abs_diff(&via_heat).unwrap() < 1e-13);
    }

    #[test]
    fn g_term_vanishes_on_fixed_points() {
        // f(0) = 0 with zero flux, and f(1) = 0 with a divergence-free flux
        let params = paper_params(16);
        let g = grid(16);
        for state in [Field::zeros(g), Field::constant(g, 1.0)] {
            let out = g_term(&state, &params).unwrap();
            let max = out.modes().unwrap().iter().map(|m| m.norm()).fold(0.0, f64::max);
            assert!(max < 1e-10 * g.len() as f64, "max mode {max}");
        }
    }

    #[test]
    fn sin_cubed_spectrum_in_g() {
        // u = sin x, v = 0: g = fft(sin^3 x - sin x); with
        // sin^3 x = (3 sin x - sin 3x)/4 the only modes are k = (+-1, 0)
        // with weight -1/4 of sin and (+-3, 0) with weight -1/4 of sin 3x.
        let g = grid(32);
        let flow = FlowField::zero(g).unwrap();
        let params = ModelParams::new(1.0, flow).unwrap();
        let u = Field::from_fn(g, |x, _| x.sin());
        let stepper = ReferenceStepper::new(&params, 0.1).unwrap();
        let gm = stepper.g_modes(u.samples().unwrap());
        let n2 = g.len() as f64;
        // fft(sin kx) = -i n^2/2 at +k, +i n^2/2 at -k
        let coeff_1 = gm[g.idx(1, 0)];
        let coeff_3 = gm[g.idx(3, 0)];
        // f(u) = u^3 - u = -(1/4) sin x - (1/4) sin 3x
        let expect_1 = Complex64::new(0.0, n2 / 8.0);
        let expect_3 = Complex64::new(0.0, n2 / 8.0);
        assert!((coeff_1 - expect_1).norm() < 1e-9 * n2);
        assert!((coeff_3 - expect_3).norm() < 1e-9 * n2);
        // everything else vanishes
        for jy in 0..g.n() {
            for jx in 0..g.n() {
                let k = (g.wavenumber(jx), g.wavenumber(jy));
                if !(k.1 == 0 && matches!(k.0.abs(), 1 | 3)) {
                    assert!(gm[g.idx(jx, jy)].norm() < 1e-9 * n2, "mode {k:?}");
                }
            }
        }
    }

    #[test]
    fn g_advection_part_matches_operator_route_on_band_limited_data() {
        // On band-limited data the flux and advective forms agree discretely
        // (no aliasing), so g's advection part equals -fft(apply_advection).
        let n = 64;
        let params = paper_params(n);
        let u = paper_u0(grid(n)).band_limit(6).unwrap();
        let stepper = ReferenceStepper::new(&params, 0.1).unwrap();
        let gm = stepper.g_modes(u.samples().unwrap());

        let mut fu = u
            .samples()
            .unwrap()
            .iter()
            .map(|&v| Complex64::new(v * v * v - v, 0.0))
            .collect::<Vec<_>>();
        crate::fft::forward(&mut fu, n);
        let adv = crate::operators::apply_advection(&u, &params).unwrap().to_spectral();
        let adv_modes = adv.modes().unwrap();
        let mut max_rel = 0.0f64;
        for i in 0..gm.len() {
            let flux_part = gm[i] - fu[i];
            let operator_part = -adv_modes[i];
            max_rel = max_rel.max((flux_part - operator_part).norm());
        }
        assert!(max_rel < 1e-8 * grid(n).len() as f64, "max diff {max_rel}");
    }

    /// RK4 on the full right-hand side with `m` sub-steps; independent of
    /// the exponential-midpoint path.
    fn rk4_full_pde(u0: &Field, params: &ModelParams, t: f64, m: usize) -> Field {
        let rhs = |u: &Field| -> Field {
            let lap = u.laplacian(params.nu).to_physical().unwrap();
            let adv = crate::operators::apply_advection(u, params).unwrap();
            let rea = crate::operators::apply_reaction(u).unwrap();
            lap.add_scaled(&adv, 1.0).unwrap().add_scaled(&rea, 1.0).unwrap()
        };
        let mut u = u0.clone();
        let h = t / m as f64;
        for _ in 0..m {
            let k1 = rhs(&u);
            let k2 = rhs(&u.add_scaled(&k1, h / 2.0).unwrap());
            let k3 = rhs(&u.add_scaled(&k2, h / 2.0).unwrap());
            let k4 = rhs(&u.add_scaled(&k3, h).unwrap());
            u = u
                .add_scaled(&k1, h / 6.0)
                .unwrap()
                .add_scaled(&k2, h / 3.0)
                .unwrap()
                .add_scaled(&k3, h / 3.0)
                .unwrap()
                .add_scaled(&k4, h / 6.0)
                .unwrap();
        }
        u
    }

    #[test]
    fn constant_state_is_a_fixed_point_under_flow() {
        // u0 = 1, v nonzero: f(1) = 0 and the discrete flux divergence of a
        // divergence-free flow vanishes, so g = 0 and the state is frozen
        let n = 32;
        let params = paper_params(n);
        let one = Field::constant(grid(n), 1.0);
        let out = exp_midpoint_step(&one, &params, 0.25).unwrap();
        assert!(out.max_abs_diff(&one).unwrap() < 1e-13);
    }

    #[test]
    fn one_step_matches_tiny_step_rk4_at_third_order() {
        // cross-integrator oracle: the midpoint local error against an RK4
        // integration of the full PDE shrinks like tau^3
        let n = 32;
        let params = paper_params(n);
        let u0 = paper_u0(grid(n));
        let tau = 2f64.powi(-6);
        let d_tau = exp_midpoint_step(&u0, &params, tau)
            .unwrap()
            .max_abs_diff(&rk4_full_pde(&u0, &params, tau, 64))
            .unwrap();
        let d_half = exp_midpoint_step(&u0, &params, tau / 2.0)
            .unwrap()
            .max_abs_diff(&rk4_full_pde(&u0, &params, tau / 2.0, 64))
            .unwrap();
        let ratio = d_tau / d_half;
        assert!(
            (5.0..12.0).contains(&ratio),
            "local error ratio {ratio} (d_tau = {d_tau:.3e}, d_half = {d_half:.3e})"
        );
    }

    #[test]
    fn trajectory_sampling_contract() {
        let params = paper_params(16);
        let u0 = paper_u0(grid(16));
        let tau_ref = 2f64.powi(-6);

        // time zero returns the initial field
        let snaps = reference_trajectory(&u0, &params, tau_ref, 0.25, &[0.0]).unwrap();
        assert!(snaps[0].max_abs_diff(&u0).unwrap() < 1e-15);

        // a sample at 4 tau_ref equals stepping four times by hand
        let t = 4.0 * tau_ref;
        let snaps = reference_trajectory(&u0, &params, tau_ref, 0.25, &[t]).unwrap();
        let mut manual = u0.clone();
        for _ in 0..4 {
            manual = exp_midpoint_step(&manual, &params, tau_ref).unwrap();
        }
        assert!(snaps[0].max_abs_diff(&manual).unwrap() < 1e-13);

        // misaligned sample times are rejected
        let bad = reference_trajectory(&u0, &params, tau_ref, 0.25, &[tau_ref * 1.5]);
        assert!(matches!(bad, Err(Error::MisalignedSampleTime { .. })));
    }

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let g = grid(16);
        let f = paper_u0(g);
        let dir = std::env::temp_dir().join("tspl_snapshot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("snap.tspl");
        let meta = SnapshotMeta {
            version: SNAPSHOT_VERSION,
            n: 16,
            length: g.length(),
            nu: 1.0,
            tau_ref: 2f64.powi(-10),
            time: 0.5,
        };
        write_snapshot(&path, &f, &meta).unwrap();
        let (meta2, f2) = read_snapshot(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(f.samples().unwrap(), f2.samples().unwrap());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn file_backed_store_loads_what_memory_store_holds() {
        let params = paper_params(16);
        let u0 = paper_u0(grid(16));
        let tau_ref = 2f64.powi(-5);
        let times: Vec<f64> = (0..=4).map(|i| i as f64 * tau_ref).collect();
        let mem = build_snapshot_store(&u0, &params, tau_ref, times[4], &times, None).unwrap();
        let dir = std::env::temp_dir().join("tspl_store_test");
        let files =
            build_snapshot_store(&u0, &params, tau_ref, times[4], &times, Some(&dir)).unwrap();
        for i in 0..mem.len() {
            let a = mem.load(i).unwrap();
            let b = files.load(i).unwrap();
            assert_eq!(a.samples().unwrap(), b.samples().unwrap());
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
