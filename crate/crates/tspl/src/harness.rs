//! Experiment orchestration behind the CLI: single trajectories, the
//! convergence study with manifest-driven resume, the verification suites,
//! and plot rendering.

use crate::config::{fnv1a, ExperimentConfig, SchemeEntry};
use crate::ensemble::{
    fit_convergence_report, read_stats_csv, run_ensemble, write_stats_csv, ConvergenceReport,
    EnsembleConfig, NormId, TauStatistics,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::norms::norm_wkp;
use crate::plot::{render_loglog_svg, Series};
use crate::reference::{
    build_snapshot_store, write_snapshot, SnapshotMeta, SnapshotStore, SNAPSHOT_VERSION,
};
use crate::semigroups::advect_substeps;
use crate::splitting::{evolve, SchemeSpec, PRNG_IDENTITY};
use crate::truncation::write_remainder_csv;
use crate::verify::{run_suite, suite_expansions, suite_truncation, SuiteResult, SUITE_NAMES};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Set up the global worker pool: explicit flag first, then TSPL_THREADS,
/// then all available cores. Safe to call more than once.
pub fn init_threads(threads: Option<usize>) {
    let from_env = std::env::var("TSPL_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(k) = threads.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub study: String,
    pub scheme: String,
    pub tau: f64,
    pub csv: String,
    pub fnv64: String,
    pub n_members: usize,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub version: String,
    pub prng: String,
    pub config_hash: String,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub plots: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            prng: PRNG_IDENTITY.to_string(),
            config_hash: format!("{:016x}", cfg.hash()),
            entries: Vec::new(),
            plots: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("bad manifest: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    fn find(&self, study: &str, scheme: &str, tau: f64) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.study == study && e.scheme == scheme && e.tau == tau)
    }

    fn warn_once(&mut self, message: String) {
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }
}

fn file_fnv(path: &Path) -> Result<String> {
    Ok(format!("{:016x}", fnv1a(&std::fs::read(path)?)))
}

/// Output of `simulate`: one trajectory, its snapshots and norm series.
#[derive(Debug)]
pub struct SimulateReport {
    pub scheme: String,
    pub snapshots: Vec<PathBuf>,
    pub norms_csv: PathBuf,
}

/// Run one trajectory of the first configured scheme, writing a snapshot
/// every `snapshot_stride` steps and a per-step norm CSV.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<SimulateReport> {
    cfg.validate()?;
    let params = cfg.model_params()?;
    let u0 = cfg.initial_field()?;
    let seed = seed_override.unwrap_or(cfg.seeds.master);
    let entry = cfg.schemes.first().expect("validated: at least one scheme");
    let scheme = SchemeSpec::new(entry.to_kind(seed)?, cfg.simulate.tau)?;
    let label = entry.label();

    let dir = out_dir.join(format!("sim-{label}"));
    std::fs::create_dir_all(&dir)?;
    let norms_path = dir.join("norms.csv");
    let mut norms_file = std::io::BufWriter::new(std::fs::File::create(&norms_path)?);
    writeln!(norms_file, "step,time,l2,w12,linf")?;

    let grid = params.flow.grid();
    let meta = |t: f64| SnapshotMeta {
        version: SNAPSHOT_VERSION,
        n: grid.n() as u32,
        length: grid.length(),
        nu: params.nu,
        tau_ref: cfg.simulate.tau,
        time: t,
    };

    let mut snapshots = Vec::new();
    let mut io_error: Option<Error> = None;
    let stride = cfg.simulate.snapshot_stride;
    evolve(&u0, &scheme, &params, cfg.time.horizon, |n, t, field| {
        if io_error.is_some() || n % stride != 0 {
            return;
        }
        let mut write = || -> Result<()> {
            let path = dir.join(format!("snap_{n:06}.tspl"));
            write_snapshot(&path, field, &meta(t))?;
            snapshots.push(path);
            let l2 = norm_wkp(field, 0, crate::norms::Exponent::Two)?;
            let w12 = norm_wkp(field, 1, crate::norms::Exponent::Two)?;
            let linf = norm_wkp(field, 0, crate::norms::Exponent::Infinity)?;
            writeln!(norms_file, "{n},{t:.12},{l2:.17e},{w12:.17e},{linf:.17e}")?;
            Ok(())
        };
        if let Err(e) = write() {
            io_error = Some(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    norms_file.flush()?;
    Ok(SimulateReport { scheme: label, snapshots, norms_csv: norms_path })
}

/// Output of `converge`.
#[derive(Debug)]
pub struct ConvergeSummary {
    pub reports: Vec<(String, ConvergenceReport)>,
    pub plots: Vec<PathBuf>,
    pub ran: usize,
    pub skipped: usize,
    pub manifest_path: PathBuf,
}

fn tau_tag(tau: f64) -> String {
    let m = -tau.log2();
    if (m - m.round()).abs() < 1e-9 {
        format!("m{}", m.round() as i64)
    } else {
        format!("t{tau:e}")
    }
}

/// Run the convergence studies for every configured scheme with
/// manifest-driven resume: a (study, scheme, tau) whose CSV already exists
/// with a matching hash is loaded instead of re-run.
pub fn cmd_converge(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ConvergeSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let manifest_path = out_dir.join("manifest.toml");
    let mut manifest = if manifest_path.exists() {
        let m = RunManifest::load(&manifest_path)?;
        let expect = format!("{:016x}", cfg.hash());
        if m.config_hash != expect {
            return Err(Error::InvalidConfig(format!(
                "output directory {} was produced by a different configuration \
                 (hash {} vs {expect}); pick a fresh directory or delete the manifest",
                out_dir.display(),
                m.config_hash
            )));
        }
        m
    } else {
        RunManifest::new(cfg)
    };

    let params = cfg.model_params()?;
    let u0 = cfg.initial_field()?;
    let norms: Vec<NormId> = cfg.norms.iter().map(|n| n.to_norm_id()).collect();
    let horizon = cfg.time.horizon;

    if advect_substeps(params.flow.grid(), &params.flow, cfg.error_study.tau_ladder[0]) > 1 {
        manifest.warn_once(
            "advection RK4 is sub-stepped at the coarsest tau to stay inside the stability region"
                .to_string(),
        );
    }

    // one reference run covers every study: snapshots at all multiples of
    // the finest tau
    let min_tau = cfg
        .error_study
        .tau_ladder
        .iter()
        .chain(&cfg.bias_study.tau_ladder)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let n_ref_times = (horizon / min_tau).round() as usize;
    let ref_times: Vec<f64> = (0..=n_ref_times).map(|i| i as f64 * min_tau).collect();
    let ref_dir = out_dir.join("reference");
    let store_dir = cfg.reference.file_backed.then_some(ref_dir.as_path());
    eprintln!(
        "[converge] building reference trajectory (tau_ref = {:.3e}, {} snapshots)",
        cfg.reference.tau_ref,
        ref_times.len()
    );
    let store = build_snapshot_store(
        &u0,
        &params,
        cfg.reference.tau_ref,
        horizon,
        &ref_times,
        store_dir,
    )?;

    let mut ran = 0usize;
    let mut skipped = 0usize;
    let mut reports = Vec::new();
    let mut plot_series: Vec<(String, Vec<(String, ConvergenceReport)>)> = Vec::new();

    for (study_name, study) in
        [("error", &cfg.error_study), ("bias", &cfg.bias_study)]
    {
        let mut study_reports: Vec<(String, ConvergenceReport)> = Vec::new();
        for scheme_entry in &cfg.schemes {
            let label = scheme_entry.label();
            let mut entries: Vec<TauStatistics> = Vec::new();
            for &tau in &study.tau_ladder {
                let csv_name = format!("{study_name}_{label}_{}.csv", tau_tag(tau));
                let csv_path = out_dir.join(&csv_name);
                if let Some(entry) = manifest.find(study_name, &label, tau) {
                    if csv_path.exists() && file_fnv(&csv_path)? == entry.fnv64 {
                        let mut loaded = read_stats_csv(&csv_path)?;
                        entries.append(&mut loaded);
                        skipped += 1;
                        continue;
                    }
                }
                let n_members = effective_members(scheme_entry, study.n_members, &mut manifest);
                eprintln!(
                    "[converge] {study_name}/{label}: tau = {tau:.5e}, {n_members} member(s)"
                );
                let reference = reference_slice(&store, tau, horizon)?;
                let ens_cfg = EnsembleConfig {
                    n_members,
                    master_seed: cfg.seeds.master,
                    scheme: SchemeSpec::new(scheme_entry.to_kind(cfg.seeds.master)?, tau)?,
                    horizon,
                    norms: norms.clone(),
                };
                let stats = run_ensemble(&ens_cfg, &params, &u0, &reference)?;
                write_stats_csv(&csv_path, std::slice::from_ref(&stats))?;
                manifest.entries.retain(|e| {
                    !(e.study == study_name && e.scheme == label && e.tau == tau)
                });
                manifest.entries.push(ManifestEntry {
                    study: study_name.to_string(),
                    scheme: label.clone(),
                    tau,
                    csv: csv_name,
                    fnv64: file_fnv(&csv_path)?,
                    n_members,
                    wallclock_s: stats.wallclock_s,
                });
                manifest.save(&manifest_path)?;
                entries.push(stats);
                ran += 1;
            }
            entries.sort_by(|a, b| b.tau.partial_cmp(&a.tau).unwrap());
            let combined = out_dir.join(format!("{study_name}_{label}.csv"));
            write_stats_csv(&combined, &entries)?;
            let report = fit_convergence_report(&label, entries)?;
            study_reports.push((label, report));
        }
        reports.extend(study_reports.iter().map(|(l, r)| (format!("{study_name}/{l}"), r.clone())));
        plot_series.push((study_name.to_string(), study_reports));
    }

    // slopes.csv: the fitted orders per study, scheme and norm
    let slopes_path = out_dir.join("slopes.csv");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&slopes_path)?);
        writeln!(w, "study,scheme,norm_id,stat,slope,fit_residual")?;
        for (name, report) in &reports {
            let (study, scheme) = name.split_once('/').unwrap();
            for s in &report.slopes {
                writeln!(
                    w,
                    "{study},{scheme},{},E,{:.4},{:.4}",
                    s.norm.label(),
                    s.e_fit.slope,
                    s.e_fit.residual
                )?;
                writeln!(
                    w,
                    "{study},{scheme},{},B,{:.4},{:.4}",
                    s.norm.label(),
                    s.b_fit.slope,
                    s.b_fit.residual
                )?;
            }
        }
    }

    // plots: (error, bias) x configured norms, all schemes as series
    let mut plots = Vec::new();
    for (study_name, study_reports) in &plot_series {
        for norm in &norms {
            let mut series = Vec::new();
            for (label, report) in study_reports {
                let j = report
                    .slopes
                    .iter()
                    .position(|s| s.norm == *norm)
                    .expect("norm present in report");
                let taus: Vec<f64> = report.entries.iter().map(|e| e.tau).collect();
                let values: Vec<f64> = report
                    .entries
                    .iter()
                    .map(|e| {
                        let s = &e.per_norm[j];
                        if *study_name == "error" {
                            s.e_stat
                        } else {
                            s.b_stat
                        }
                    })
                    .collect();
                let fit = if *study_name == "error" {
                    &report.slopes[j].e_fit
                } else {
                    &report.slopes[j].b_fit
                };
                series.push(Series {
                    label: label.clone(),
                    taus,
                    values,
                    slope: Some(fit.slope),
                });
            }
            let path = out_dir.join(format!("{study_name}_{}.svg", norm.label()));
            let title = format!(
                "{} study, {} norm",
                study_name,
                norm.label()
            );
            render_loglog_svg(&path, &title, &series, &[1.5, 2.0])?;
            if !manifest.plots.contains(&path.file_name().unwrap().to_string_lossy().to_string()) {
                manifest
                    .plots
                    .push(path.file_name().unwrap().to_string_lossy().to_string());
            }
            plots.push(path);
        }
    }
    manifest.save(&manifest_path)?;

    Ok(ConvergeSummary { reports, plots, ran, skipped, manifest_path })
}

/// Deterministic schemes produce identical members, so one member carries
/// the full statistic.
fn effective_members(
    entry: &SchemeEntry,
    requested: usize,
    manifest: &mut RunManifest,
) -> usize {
    match entry {
        SchemeEntry::Random => requested,
        _ => {
            manifest.warn_once(format!(
                "scheme {} is deterministic: running 1 member instead of {requested} \
                 (E and B coincide exactly)",
                entry.label()
            ));
            1
        }
    }
}

/// Extract reference snapshots at multiples of `tau` from the shared store.
fn reference_slice(store: &SnapshotStore, tau: f64, horizon: f64) -> Result<Vec<Field>> {
    let steps = (horizon / tau).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let t = n as f64 * tau;
        let idx = store.index_of(t).ok_or_else(|| Error::InvalidConfig(format!(
            "reference store has no snapshot at t = {t}"
        )))?;
        out.push(store.load(idx)?);
    }
    Ok(out)
}

/// Output of `verify`.
#[derive(Debug, Serialize)]
pub struct VerifySummary {
    pub all_passed: bool,
    pub suites: Vec<SuiteResult>,
}

/// Run the requested suites (all by default), write the JSON summary and the
/// truncation-lab CSV, and report overall success.
pub fn cmd_verify(
    cfg: &ExperimentConfig,
    suite_filter: Option<&str>,
    out_dir: &Path,
) -> Result<VerifySummary> {
    std::fs::create_dir_all(out_dir)?;
    let names: Vec<&str> = match suite_filter {
        Some(name) => {
            if !SUITE_NAMES.contains(&name) {
                return Err(Error::InvalidConfig(format!(
                    "unknown suite {name:?}; available: {}",
                    SUITE_NAMES.join(", ")
                )));
            }
            vec![name]
        }
        None => SUITE_NAMES.to_vec(),
    };
    let mut suites = Vec::new();
    for name in names {
        let started = Instant::now();
        // the two lab suites also produce the CSV report
        let suite = match name {
            "truncation" => {
                let (suite, rows) = suite_truncation(cfg)?;
                write_remainder_csv(&out_dir.join("truncation_lab.csv"), &rows)?;
                suite
            }
            "expansions" => {
                let (suite, rows) = suite_expansions(cfg)?;
                write_remainder_csv(&out_dir.join("expansion_lab.csv"), &rows)?;
                suite
            }
            other => run_suite(other, cfg)?,
        };
        for check in &suite.checks {
            eprintln!(
                "[verify] {:12} {:40} {} ({})",
                suite.name,
                check.name,
                if check.passed { "pass" } else { "FAIL" },
                check.detail
            );
        }
        eprintln!(
            "[verify] suite {} finished in {:.1}s",
            suite.name,
            started.elapsed().as_secs_f64()
        );
        suites.push(suite);
    }
    let summary = VerifySummary { all_passed: suites.iter().all(|s| s.passed), suites };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidConfig(format!("summary serialization: {e}")))?;
    std::fs::write(out_dir.join("verify.json"), json)?;
    Ok(summary)
}

/// Re-plot existing stats CSVs: for each input, an error and a bias figure
/// with fitted slopes.
pub fn cmd_plot(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if csv_paths.is_empty() {
        return Err(Error::EmptyInput("no CSV files given".to_string()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    for csv in csv_paths {
        let entries = read_stats_csv(csv)?;
        let stem = csv
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "stats".to_string());
        let norms: Vec<NormId> = entries[0].per_norm.iter().map(|s| s.norm).collect();
        let taus: Vec<f64> = entries.iter().map(|e| e.tau).collect();
        for (kind, pick) in [
            ("error", Box::new(|s: &crate::ensemble::NormStats| s.e_stat) as Box<dyn Fn(_) -> f64>),
            ("bias", Box::new(|s: &crate::ensemble::NormStats| s.b_stat)),
        ] {
            let mut series = Vec::new();
            for (j, norm) in norms.iter().enumerate() {
                let values: Vec<f64> = entries.iter().map(|e| pick(&e.per_norm[j])).collect();
                let slope = crate::truncation::fit_order(&taus, &values).ok().map(|f| f.slope);
                series.push(Series {
                    label: format!("{} {}", norm.label(), kind),
                    taus: taus.clone(),
                    values,
                    slope,
                });
            }
            let path = out_dir.join(format!("{stem}_{kind}.svg"));
            render_loglog_svg(&path, &format!("{stem} ({kind})"), &series, &[1.5, 2.0])?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}
