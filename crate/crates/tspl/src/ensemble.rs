//! Monte Carlo ensembles and the error statistics of the convergence study:
//! expected single-run error, bias, stability and boundedness monitors.
//!
//! With eps_n = u_n - u_ref(t_n) per member, the two statistics per norm are
//!
//! ```text
//! E = max_n mean_l ||eps_n^l||      (mean of norms, then max over time)
//! B = max_n ||mean_l eps_n^l||      (norm of the mean field)
//! ```
//!
//! Members run fully in parallel; accumulators are merged from fixed-size
//! chunks in index order, so the result does not depend on the thread count,
//! and every sum is compensated so it barely depends on member order either.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::norms::{norm_wkp, Exponent};
use crate::operators::ModelParams;
use crate::reference::ReferenceStepper;
use crate::semigroups::{semigroup_step, SemigroupId};
use crate::splitting::{derive_member_seed, evolve, PermutationStream, SchemeKind, SchemeSpec};
use crate::truncation::{fit_order, SlopeReport};
use rayon::prelude::*;
use std::time::Instant;

/// Norms wired into the harness: L^2, W^{1,2} and the max norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormId {
    L2,
    W12,
    LInf,
}

impl NormId {
    pub fn k(&self) -> usize {
        match self {
            NormId::L2 | NormId::LInf => 0,
            NormId::W12 => 1,
        }
    }

    pub fn exponent(&self) -> Exponent {
        match self {
            NormId::L2 | NormId::W12 => Exponent::Two,
            NormId::LInf => Exponent::Infinity,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NormId::L2 => "l2",
            NormId::W12 => "w12",
            NormId::LInf => "linf",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(NormId::L2),
            "w12" => Some(NormId::W12),
            "linf" => Some(NormId::LInf),
            _ => None,
        }
    }
}

/// One ensemble run: scheme, horizon, member count and the statistics wanted.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub master_seed: u64,
    pub scheme: SchemeSpec,
    pub horizon: f64,
    pub norms: Vec<NormId>,
}

/// Statistics of one ensemble at one step size.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub norm: NormId,
    pub e_stat: f64,
    pub b_stat: f64,
    /// CLT estimate of the Monte Carlo noise in the bias statistic:
    /// std of the member errors at the maximising time over sqrt(N).
    pub noise_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct TauStatistics {
    pub tau: f64,
    pub n_members: usize,
    pub per_norm: Vec<NormStats>,
    pub wallclock_s: f64,
}

/// Compensated (Kahan) accumulator over sample vectors.
struct KahanField {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanField {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    fn add(&mut self, values: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values) {
            let y = v - *c;
            let t = *s + y;
            *c = (t - *s) - y;
            *s = t;
        }
    }

    fn merge(&mut self, other: &KahanField) {
        self.add(&other.sum);
        // fold the other side's residual compensation in as well
        let neg: Vec<f64> = other.comp.iter().map(|c| -c).collect();
        self.add(&neg);
    }
}

fn kahan_scalar_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

struct ChunkOut {
    /// member-major [member_in_chunk][time][norm] error norms
    member_errs: Vec<Vec<f64>>,
    /// per-time compensated sums of the numerical solutions
    sums: Vec<KahanField>,
}

/// Fixed chunk count for the deterministic parallel reduction.
const ENSEMBLE_CHUNKS: usize = 16;

/// Run one ensemble against reference snapshots at every step time.
///
/// `reference` must hold physical snapshots at 0, tau, 2 tau, ..., horizon.
/// Any member that produces a non-finite value fails the whole run, as the
/// boundedness theory says it never should.
pub fn run_ensemble(
    cfg: &EnsembleConfig,
    params: &ModelParams,
    u0: &Field,
    reference: &[Field],
) -> Result<TauStatistics> {
    let start = Instant::now();
    let tau = cfg.scheme.tau;
    let steps = (cfg.horizon / tau).round() as usize;
    if ((cfg.horizon / tau) - steps as f64).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "horizon {} is not an integer multiple of tau {tau}",
            cfg.horizon
        )));
    }
    let n_times = steps + 1;
    if reference.len() != n_times {
        return Err(Error::InvalidConfig(format!(
            "need {n_times} reference snapshots (one per step time), got {}",
            reference.len()
        )));
    }
    if cfg.n_members == 0 {
        return Err(Error::InvalidConfig("ensemble needs at least one member".to_string()));
    }
    let grid = u0.grid();
    let ref_samples: Vec<Vec<f64>> = reference
        .iter()
        .map(|f| f.to_physical().map(|p| p.samples().unwrap().to_vec()))
        .collect::<Result<_>>()?;

    let chunk_size = cfg.n_members.div_ceil(ENSEMBLE_CHUNKS);
    let chunk_bounds: Vec<(usize, usize)> = (0..cfg.n_members)
        .step_by(chunk_size)
        .map(|lo| (lo, (lo + chunk_size).min(cfg.n_members)))
        .collect();

    let chunk_results: Vec<Result<ChunkOut>> = chunk_bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out = ChunkOut {
                member_errs: Vec::with_capacity(hi - lo),
                sums: (0..n_times).map(|_| KahanField::new(grid.len())).collect(),
            };
            for member in lo..hi {
                let scheme = match &cfg.scheme.kind {
                    SchemeKind::RandomTrotter { .. } => SchemeSpec {
                        kind: SchemeKind::RandomTrotter {
                            seed: derive_member_seed(cfg.master_seed, member as u64),
                        },
                        tau,
                    },
                    other => SchemeSpec { kind: other.clone(), tau },
                };
                let mut errs = vec![0.0f64; n_times * cfg.norms.len()];
                let mut observer_err: Option<Error> = None;
                let _ = evolve(u0, &scheme, params, cfg.horizon, |n, _t, field| {
                    if observer_err.is_some() {
                        return;
                    }
                    let phys = match field.to_physical() {
                        Ok(p) => p,
                        Err(e) => {
                            observer_err = Some(e);
                            return;
                        }
                    };
                    let samples = phys.samples().unwrap();
                    out.sums[n].add(samples);
                    let diff: Vec<f64> = samples
                        .iter()
                        .zip(&ref_samples[n])
                        .map(|(&u, &r)| u - r)
                        .collect();
                    let diff_field = Field::from_samples(grid, diff).expect("grid sizes match");
                    for (j, norm) in cfg.norms.iter().enumerate() {
                        match norm_wkp(&diff_field, norm.k(), norm.exponent()) {
                            Ok(v) => errs[n * cfg.norms.len() + j] = v,
                            Err(e) => observer_err = Some(e),
                        }
                    }
                })?;
                if let Some(e) = observer_err {
                    return Err(e);
                }
                out.member_errs.push(errs);
            }
            Ok(out)
        })
        .collect();

    // merge chunk partials in chunk order
    let mut member_errs: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_members);
    let mut sums: Vec<KahanField> = (0..n_times).map(|_| KahanField::new(grid.len())).collect();
    for chunk in chunk_results {
        let chunk = chunk?;
        member_errs.extend(chunk.member_errs);
        for (acc, part) in sums.iter_mut().zip(&chunk.sums) {
            acc.merge(part);
        }
    }

    let inv_m = 1.0 / cfg.n_members as f64;
    let mut per_norm = Vec::with_capacity(cfg.norms.len());
    for (j, norm) in cfg.norms.iter().enumerate() {
        // expected single-run error: mean over members, then max over time
        let mut e_stat = 0.0f64;
        for n in 0..n_times {
            let mean = kahan_scalar_sum(
                member_errs.iter().map(|errs| errs[n * cfg.norms.len() + j]),
            ) * inv_m;
            e_stat = e_stat.max(mean);
        }

        // bias: norm of the mean error field, then max over time
        let mut b_stat = 0.0f64;
        let mut argmax_n = 0usize;
        for n in 0..n_times {
            let mean_field: Vec<f64> = sums[n]
                .sum
                .iter()
                .zip(&ref_samples[n])
                .map(|(&s, &r)| s * inv_m - r)
                .collect();
            let bias_field = Field::from_samples(grid, mean_field)?;
            let v = norm_wkp(&bias_field, norm.k(), norm.exponent())?;
            if v > b_stat {
                b_stat = v;
                argmax_n = n;
            }
        }

        // CLT noise estimate at the maximising time
        let errs_at: Vec<f64> = member_errs
            .iter()
            .map(|errs| errs[argmax_n * cfg.norms.len() + j])
            .collect();
        let mean = errs_at.iter().sum::<f64>() * inv_m;
        let var = errs_at.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (cfg.n_members.max(2) - 1) as f64;
        let noise_estimate = (var / cfg.n_members as f64).sqrt();

        per_norm.push(NormStats { norm: *norm, e_stat, b_stat, noise_estimate });
    }

    Ok(TauStatistics {
        tau,
        n_members: cfg.n_members,
        per_norm,
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

/// Numerically stable streaming mean of fields (compensated summation).
pub fn bias_mean_field<'a>(fields: impl Iterator<Item = &'a Field>) -> Result<Field> {
    let mut acc: Option<(KahanField, usize, crate::grid::TorusGrid)> = None;
    for f in fields {
        let phys = f.to_physical()?;
        let samples = phys.samples().unwrap();
        match &mut acc {
            None => {
                let mut k = KahanField::new(samples.len());
                k.add(samples);
                acc = Some((k, 1, f.grid()));
            }
            Some((k, count, grid)) => {
                if *grid != f.grid() {
                    return Err(Error::GridMismatch { left: grid.n(), right: f.grid().n() });
                }
                k.add(samples);
                *count += 1;
            }
        }
    }
    let (k, count, grid) = acc.ok_or_else(|| Error::EmptyInput("no fields to average".to_string()))?;
    let inv = 1.0 / count as f64;
    Field::from_samples(grid, k.sum.iter().map(|&s| s * inv).collect())
}

/// Growth of the distance between two solutions of the model.
#[derive(Debug, Clone)]
pub struct GrowthReport {
    pub times: Vec<f64>,
    /// ||u1(t) - u2(t)|| / ||u1(0) - u2(0)|| at the sampled times.
    pub ratios: Vec<f64>,
    /// Smallest nonnegative C with ratio(t) <= e^{C t} at every sample.
    pub c_hat: f64,
    pub initial_distance: f64,
}

/// Evolve two nearby states with the reference integrator and report the
/// growth of their distance in W^{k,p}.
pub fn stability_probe(
    u0_a: &Field,
    u0_b: &Field,
    params: &ModelParams,
    horizon: f64,
    tau_probe: f64,
    k: usize,
    p: Exponent,
) -> Result<GrowthReport> {
    u0_a.check_grid(u0_b)?;
    let initial = norm_wkp(&u0_a.add_scaled(u0_b, -1.0)?, k, p)?;
    if initial == 0.0 {
        return Err(Error::DegenerateProbe);
    }
    let stepper = ReferenceStepper::new(params, tau_probe)?;
    let steps = (horizon / tau_probe).round() as usize;
    let stride = (steps / 16).max(1);

    let mut a_modes = u0_a.to_spectral().modes().unwrap().to_vec();
    let mut a_phys = u0_a.to_physical()?.samples().unwrap().to_vec();
    let mut b_modes = u0_b.to_spectral().modes().unwrap().to_vec();
    let mut b_phys = u0_b.to_physical()?.samples().unwrap().to_vec();

    let mut times = vec![0.0];
    let mut ratios = vec![1.0];
    for step in 1..=steps {
        let (am, ap) = stepper.step_raw(&a_modes, &a_phys)?;
        a_modes = am;
        a_phys = ap;
        let (bm, bp) = stepper.step_raw(&b_modes, &b_phys)?;
        b_modes = bm;
        b_phys = bp;
        if step % stride == 0 || step == steps {
            let diff: Vec<f64> = a_phys.iter().zip(&b_phys).map(|(&x, &y)| x - y).collect();
            let d = norm_wkp(&Field::from_samples(u0_a.grid(), diff)?, k, p)?;
            times.push(step as f64 * tau_probe);
            ratios.push(d / initial);
        }
    }
    let c_hat = times
        .iter()
        .zip(&ratios)
        .skip(1)
        .map(|(&t, &r)| r.ln() / t)
        .fold(0.0f64, f64::max);
    Ok(GrowthReport { times, ratios, c_hat, initial_distance: initial })
}

/// Norm series of one random-splitting trajectory, including the two
/// intermediate sub-compositions inside every step.
#[derive(Debug, Clone)]
pub struct BoundednessReport {
    /// (norm after first sub-flow, after second, after the full step)
    pub per_step: Vec<[f64; 3]>,
    pub initial_norm: f64,
    pub sup: f64,
}

/// Drive a random-splitting trajectory recording W^{k,p} norms after every
/// sub-flow application.
pub fn boundedness_monitor(
    u0: &Field,
    params: &ModelParams,
    seed: u64,
    tau: f64,
    horizon: f64,
    k: usize,
    p: Exponent,
) -> Result<BoundednessReport> {
    let steps = (horizon / tau).ceil() as usize;
    let mut stream = PermutationStream::new(seed);
    let mut u = u0.clone();
    let initial_norm = norm_wkp(&u, k, p)?;
    let mut sup = initial_norm;
    let mut per_step = Vec::with_capacity(steps);
    for n in 0..steps {
        let t_next = ((n + 1) as f64 * tau).min(horizon);
        let dt = t_next - n as f64 * tau;
        let order = stream.next_permutation();
        let mut norms = [0.0f64; 3];
        for (i, id) in order.iter().enumerate() {
            u = semigroup_step(*id, &u, params, dt)?;
            if u.has_non_finite() {
                return Err(Error::Divergence { step: n + 1 });
            }
            norms[i] = norm_wkp(&u, k, p)?;
            sup = sup.max(norms[i]);
        }
        per_step.push(norms);
    }
    Ok(BoundednessReport { per_step, initial_norm, sup })
}

/// Norm series of a pure heat trajectory (used as the monotone baseline).
pub fn heat_norm_series(
    u0: &Field,
    params: &ModelParams,
    tau: f64,
    steps: usize,
    k: usize,
    p: Exponent,
) -> Result<Vec<f64>> {
    let mut u = u0.clone();
    let mut out = vec![norm_wkp(&u, k, p)?];
    for _ in 0..steps {
        u = semigroup_step(SemigroupId::Heat, &u, params, tau)?;
        out.push(norm_wkp(&u, k, p)?);
    }
    Ok(out)
}

/// Fitted orders of one scheme's E and B statistics over a tau ladder.
#[derive(Debug, Clone)]
pub struct SlopeSummary {
    pub norm: NormId,
    pub e_fit: SlopeReport,
    pub b_fit: SlopeReport,
}

/// Per-scheme convergence report: raw statistics per tau plus fitted orders.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub scheme_label: String,
    pub entries: Vec<TauStatistics>,
    pub slopes: Vec<SlopeSummary>,
}

/// Fit E and B orders for every norm across the tau entries.
pub fn fit_convergence_report(
    scheme_label: &str,
    entries: Vec<TauStatistics>,
) -> Result<ConvergenceReport> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("no tau entries to fit".to_string()));
    }
    let norms: Vec<NormId> = entries[0].per_norm.iter().map(|s| s.norm).collect();
    let taus: Vec<f64> = entries.iter().map(|e| e.tau).collect();
    let mut slopes = Vec::new();
    for (j, norm) in norms.iter().enumerate() {
        let e_errs: Vec<f64> = entries.iter().map(|e| e.per_norm[j].e_stat).collect();
        let b_errs: Vec<f64> = entries.iter().map(|e| e.per_norm[j].b_stat).collect();
        slopes.push(SlopeSummary {
            norm: *norm,
            e_fit: fit_order(&taus, &e_errs)?,
            b_fit: fit_order(&taus, &b_errs)?,
        });
    }
    Ok(ConvergenceReport { scheme_label: scheme_label.to_string(), entries, slopes })
}

/// CSV with one row per (tau, norm): the schema of the converge reports.
pub fn write_stats_csv(path: &std::path::Path, entries: &[TauStatistics]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "tau,norm_id,E_stat,B_stat,n_members,noise_estimate,wallclock_s")?;
    for e in entries {
        for s in &e.per_norm {
            writeln!(
                w,
                "{:.17e},{},{:.17e},{:.17e},{},{:.6e},{:.3}",
                e.tau, s.norm.label(), s.e_stat, s.b_stat, e.n_members, s.noise_estimate, e.wallclock_s
            )?;
        }
    }
    Ok(())
}

/// Parse a stats CSV back into entries (used by the plot command).
pub fn read_stats_csv(path: &std::path::Path) -> Result<Vec<TauStatistics>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::EmptyInput(format!("{} has no header", path.display())))?;
    if !header.starts_with("tau,norm_id") {
        return Err(Error::InvalidConfig(format!(
            "{} does not look like a stats CSV (header {header:?})",
            path.display()
        )));
    }
    let mut entries: Vec<TauStatistics> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::InvalidConfig(format!("bad CSV row: {line}")));
        }
        let tau: f64 = cols[0].parse().map_err(|_| Error::InvalidConfig(format!("bad tau in {line}")))?;
        let norm = NormId::from_label(cols[1])
            .ok_or_else(|| Error::InvalidConfig(format!("unknown norm id {}", cols[1])))?;
        let stats = NormStats {
            norm,
            e_stat: cols[2].parse().map_err(|_| Error::InvalidConfig(format!("bad E in {line}")))?,
            b_stat: cols[3].parse().map_err(|_| Error::InvalidConfig(format!("bad B in {line}")))?,
            noise_estimate: cols[5]
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad noise in {line}")))?,
        };
        let n_members: usize =
            cols[4].parse().map_err(|_| Error::InvalidConfig(format!("bad count in {line}")))?;
        let wallclock_s: f64 =
            cols[6].parse().map_err(|_| Error::InvalidConfig(format!("bad wallclock in {line}")))?;
        match entries.last_mut() {
            Some(e) if e.tau == tau => e.per_norm.push(stats),
            _ => entries.push(TauStatistics {
                tau,
                n_members,
                per_norm: vec![stats],
                wallclock_s,
            }),
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }
    Ok(entries)
}
