//! Experiment configuration: a TOML file with sections for the grid, model,
//! studies and output, plus the two built-in presets.
//!
//! Unknown keys are rejected so typos cannot silently change a run, and
//! `validate` enforces the cross-field constraints (power-of-two ladders,
//! reference step dividing the smallest tau, horizon a multiple of the
//! largest tau) with messages that say how to fix the file.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::FlowField;
use crate::grid::TorusGrid;
use crate::norms::Exponent;
use crate::operators::ModelParams;
use crate::semigroups::SemigroupId;
use crate::splitting::SchemeKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum FlowSpec {
    /// v(x, y) = (-amplitude sin y, 0)
    Shear { amplitude: f64 },
    /// v = 0
    Zero,
    /// v(x, y) = (amplitude cos y, amplitude sin x)
    Cross { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum InitialSpec {
    /// u0(x, y) = 1 + 0.5 sin x + exp(0.7 sin y)
    Paper,
    Constant { value: f64 },
    /// Seeded random field truncated to |k| <= max_mode and scaled to the
    /// given max amplitude.
    BandLimited { seed: u64, max_mode: i64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub nu: f64,
    pub flow: FlowSpec,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub tau_ref: f64,
    /// Write reference snapshots to disk instead of holding them in memory.
    #[serde(default)]
    pub file_backed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub tau: f64,
    /// Steps between written snapshots (1 = every step).
    #[serde(default = "one")]
    pub snapshot_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub tau_ladder: Vec<f64>,
    pub n_members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum SchemeEntry {
    Random,
    /// `order` is three letters out of {A, L, R}, first applied first.
    Fixed { order: String },
    Symmetric,
}

impl SchemeEntry {
    pub fn to_kind(&self, master_seed: u64) -> Result<SchemeKind> {
        match self {
            SchemeEntry::Random => Ok(SchemeKind::RandomTrotter { seed: master_seed }),
            SchemeEntry::Symmetric => Ok(SchemeKind::SymmetricTrotter),
            SchemeEntry::Fixed { order } => {
                let ids: Vec<SemigroupId> =
                    order.chars().filter_map(SemigroupId::from_letter).collect();
                let mut seen = [false; 3];
                for id in &ids {
                    seen[*id as usize] = true;
                }
                if order.len() != 3 || ids.len() != 3 || seen.iter().any(|s| !s) {
                    return Err(Error::InvalidConfig(format!(
                        "fixed scheme order {order:?} must contain each of A, L, R exactly once"
                    )));
                }
                Ok(SchemeKind::FixedTrotter { order: [ids[0], ids[1], ids[2]] })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchemeEntry::Random => "random".into(),
            SchemeEntry::Symmetric => "symmetric".into(),
            SchemeEntry::Fixed { order } => format!("fixed-{}", order.to_ascii_uppercase()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub master: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormSpec {
    L2,
    W12,
    Linf,
}

impl NormSpec {
    pub fn to_norm_id(self) -> crate::ensemble::NormId {
        match self {
            NormSpec::L2 => crate::ensemble::NormId::L2,
            NormSpec::W12 => crate::ensemble::NormId::W12,
            NormSpec::Linf => crate::ensemble::NormId::LInf,
        }
    }

    pub fn k(self) -> usize {
        self.to_norm_id().k()
    }

    pub fn exponent(self) -> Exponent {
        self.to_norm_id().exponent()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form provenance label ("paper-desk", "paper-full", or custom).
    pub preset: String,
    pub grid: GridSection,
    pub model: ModelSection,
    pub time: TimeSection,
    pub reference: ReferenceSection,
    pub simulate: SimulateSection,
    pub error_study: StudySection,
    pub bias_study: StudySection,
    pub schemes: Vec<SchemeEntry>,
    pub seeds: SeedsSection,
    pub norms: Vec<NormSpec>,
    pub output: OutputSection,
}

fn is_power_of_two_f64(x: f64) -> bool {
    x > 0.0 && x.log2().fract().abs() < 1e-12
}

fn divides(small: f64, big: f64) -> bool {
    let ratio = big / small;
    (ratio - ratio.round()).abs() < 1e-9 && ratio >= 1.0 - 1e-12
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.grid.n, self.grid.length)
            .map_err(|e| Error::InvalidConfig(format!("[grid]: {e}")))?;
        if !self.model.nu.is_finite() || self.model.nu <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "[model] nu = {} must be positive",
                self.model.nu
            )));
        }
        if !self.time.horizon.is_finite() || self.time.horizon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "[time] horizon = {} must be positive",
                self.time.horizon
            )));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("[[schemes]] must list at least one scheme".into()));
        }
        for s in &self.schemes {
            s.to_kind(0)?;
        }
        if self.norms.is_empty() {
            return Err(Error::InvalidConfig("norms must list at least one of l2, w12, linf".into()));
        }
        for (name, study) in [("error_study", &self.error_study), ("bias_study", &self.bias_study)] {
            if study.tau_ladder.len() < 4 {
                return Err(Error::InvalidConfig(format!(
                    "[{name}] tau_ladder needs at least 4 entries for an order fit, got {}",
                    study.tau_ladder.len()
                )));
            }
            if study.n_members == 0 {
                return Err(Error::InvalidConfig(format!("[{name}] n_members must be at least 1")));
            }
            for &tau in &study.tau_ladder {
                if !is_power_of_two_f64(tau) {
                    return Err(Error::InvalidConfig(format!(
                        "[{name}] tau = {tau} is not a power of two; use 2^-m ladder entries"
                    )));
                }
                if !divides(self.reference.tau_ref, tau) {
                    return Err(Error::InvalidConfig(format!(
                        "[reference] tau_ref = {} does not divide [{name}] tau = {tau}; \
                         lower tau_ref to a power of two below the smallest ladder entry",
                        self.reference.tau_ref
                    )));
                }
            }
            let max_tau = study.tau_ladder.iter().cloned().fold(0.0, f64::max);
            if !divides(max_tau, self.time.horizon) {
                return Err(Error::InvalidConfig(format!(
                    "[time] horizon = {} is not a multiple of the largest [{name}] tau = {max_tau}",
                    self.time.horizon
                )));
            }
        }
        if !is_power_of_two_f64(self.simulate.tau) {
            return Err(Error::InvalidConfig(format!(
                "[simulate] tau = {} is not a power of two",
                self.simulate.tau
            )));
        }
        if self.simulate.snapshot_stride == 0 {
            return Err(Error::InvalidConfig("[simulate] snapshot_stride must be at least 1".into()));
        }
        if !divides(self.simulate.tau, self.time.horizon) {
            return Err(Error::InvalidConfig(format!(
                "[time] horizon = {} is not a multiple of [simulate] tau = {}",
                self.time.horizon, self.simulate.tau
            )));
        }
        if !is_power_of_two_f64(self.reference.tau_ref) {
            return Err(Error::InvalidConfig(format!(
                "[reference] tau_ref = {} is not a power of two",
                self.reference.tau_ref
            )));
        }
        if self.output.directory.is_empty() {
            return Err(Error::InvalidConfig("[output] directory must not be empty".into()));
        }
        Ok(())
    }

    pub fn torus_grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n, self.grid.length)
    }

    pub fn flow_field(&self) -> Result<FlowField> {
        let grid = self.torus_grid()?;
        match &self.model.flow {
            FlowSpec::Shear { amplitude } => FlowField::shear(grid, *amplitude),
            FlowSpec::Zero => FlowField::zero(grid),
            FlowSpec::Cross { amplitude } => {
                let a = *amplitude;
                FlowField::from_fns(grid, move |_, y| a * y.cos(), move |x, _| a * x.sin())
            }
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.nu, self.flow_field()?)
    }

    pub fn initial_field(&self) -> Result<Field> {
        let grid = self.torus_grid()?;
        Ok(match &self.model.initial {
            InitialSpec::Paper => paper_initial(grid),
            InitialSpec::Constant { value } => Field::constant(grid, *value),
            InitialSpec::BandLimited { seed, max_mode, amplitude } => {
                band_limited_field(grid, *seed, *max_mode, *amplitude)?
            }
        })
    }

    /// FNV-1a 64 hash of the canonical serialized form.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_toml().as_bytes())
    }

    /// Built-in presets: "paper-desk" (minutes on a workstation) and
    /// "paper-full" (the full-scale experiment, hours).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-desk" => Ok(Self::paper_desk()),
            "paper-full" => Ok(Self::paper_full()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; available: paper-desk, paper-full"
            ))),
        }
    }

    pub fn paper_desk() -> Self {
        let cfg = ExperimentConfig {
            preset: "paper-desk".into(),
            grid: GridSection { n: 64, length: 2.0 * std::f64::consts::PI },
            model: ModelSection {
                nu: 1.0,
                flow: FlowSpec::Shear { amplitude: 0.75 },
                initial: InitialSpec::Paper,
            },
            time: TimeSection { horizon: 1.0 },
            reference: ReferenceSection { tau_ref: 2f64.powi(-12), file_backed: false },
            simulate: SimulateSection { tau: 2f64.powi(-6), snapshot_stride: 1 },
            error_study: StudySection {
                tau_ladder: (4..=8).map(|m| 2f64.powi(-m)).collect(),
                n_members: 400,
            },
            bias_study: StudySection {
                tau_ladder: (3..=6).map(|m| 2f64.powi(-m)).collect(),
                n_members: 2000,
            },
            schemes: vec![
                SchemeEntry::Random,
                SchemeEntry::Fixed { order: "ALR".into() },
                SchemeEntry::Symmetric,
            ],
            seeds: SeedsSection { master: 2024 },
            norms: vec![NormSpec::L2, NormSpec::W12],
            output: OutputSection { directory: "runs/paper-desk".into() },
        };
        cfg.validate().expect("preset is valid");
        cfg
    }

    pub fn paper_full() -> Self {
        let cfg = ExperimentConfig {
            preset: "paper-full".into(),
            grid: GridSection { n: 256, length: 2.0 * std::f64::consts::PI },
            model: ModelSection {
                nu: 1.0,
                flow: FlowSpec::Shear { amplitude: 0.75 },
                initial: InitialSpec::Paper,
            },
            time: TimeSection { horizon: 1.0 },
            reference: ReferenceSection { tau_ref: 2f64.powi(-14), file_backed: true },
            simulate: SimulateSection { tau: 2f64.powi(-6), snapshot_stride: 1 },
            error_study: StudySection {
                tau_ladder: (4..=8).map(|m| 2f64.powi(-m)).collect(),
                n_members: 10_000,
            },
            bias_study: StudySection {
                tau_ladder: (4..=8).map(|m| 2f64.powi(-m)).collect(),
                n_members: 10_000,
            },
            schemes: vec![
                SchemeEntry::Random,
                SchemeEntry::Fixed { order: "ALR".into() },
                SchemeEntry::Symmetric,
            ],
            seeds: SeedsSection { master: 2024 },
            norms: vec![NormSpec::L2, NormSpec::W12],
            output: OutputSection { directory: "runs/paper-full".into() },
        };
        cfg.validate().expect("preset is valid");
        cfg
    }
}

/// The experiment's initial state u0(x, y) = 1 + 0.5 sin x + exp(0.7 sin y).
pub fn paper_initial(grid: TorusGrid) -> Field {
    Field::from_fn(grid, |x, y| 1.0 + 0.5 * x.sin() + (0.7 * y.sin()).exp())
}

/// Seeded random field truncated to |k| <= max_mode, rescaled so its max
/// amplitude equals `amplitude`.
pub fn band_limited_field(
    grid: TorusGrid,
    seed: u64,
    max_mode: i64,
    amplitude: f64,
) -> Result<Field> {
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let raw = Field::from_samples(
        grid,
        (0..grid.len())
            .map(|_| rng.next_u64() as f64 / u64::MAX as f64 - 0.5)
            .collect(),
    )?;
    let smooth = raw.band_limit(max_mode)?;
    let max = crate::norms::norm_wkp(&smooth, 0, Exponent::Infinity)?;
    if max == 0.0 {
        return Err(Error::InvalidConfig("band-limited field degenerated to zero".into()));
    }
    smooth.scale(amplitude / max)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for name in ["paper-desk", "paper-full"] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::parse(&text).unwrap();
            assert_eq!(cfg, back, "serialize/parse must be the identity");
            assert_eq!(cfg.hash(), back.hash());
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::paper_desk().to_toml();
        text.push_str("\n[grid_typo]\nn = 3\n");
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = ExperimentConfig::paper_desk()
            .to_toml()
            .replace("n = 64", "n = 64\nextra_key = 1");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn validation_catches_bad_ladders() {
        let mut cfg = ExperimentConfig::paper_desk();
        cfg.error_study.tau_ladder = vec![0.1, 0.05, 0.025, 0.0125];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("power of two"), "{err}");

        let mut cfg = ExperimentConfig::paper_desk();
        cfg.reference.tau_ref = 2f64.powi(-5); // larger than the smallest tau
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("does not divide"), "{err}");

        let mut cfg = ExperimentConfig::paper_desk();
        cfg.time.horizon = 0.7;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::paper_desk();
        cfg.model.nu = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("nu"), "{err}");
    }

    #[test]
    fn fixed_scheme_order_is_checked() {
        let entry = SchemeEntry::Fixed { order: "AAL".into() };
        assert!(entry.to_kind(0).is_err());
        let entry = SchemeEntry::Fixed { order: "ALR".into() };
        assert!(entry.to_kind(0).is_ok());
        let entry = SchemeEntry::Fixed { order: "RL".into() };
        assert!(entry.to_kind(0).is_err());
    }

    #[test]
    fn runtime_objects_build() {
        let cfg = ExperimentConfig::paper_desk();
        let params = cfg.model_params().unwrap();
        assert!((params.flow.max_speed() - 0.75).abs() < 1e-12);
        let u0 = cfg.initial_field().unwrap();
        let max = crate::norms::norm_wkp(&u0, 0, Exponent::Infinity).unwrap();
        assert!(max > 3.0 && max < 4.0);
    }

    #[test]
    fn band_limited_initial_is_reproducible() {
        let g = TorusGrid::new(64, 2.0 * std::f64::consts::PI).unwrap();
        let a = band_limited_field(g, 11, 4, 0.25).unwrap();
        let b = band_limited_field(g, 11, 4, 0.25).unwrap();
        assert_eq!(a.samples().unwrap(), b.samples().unwrap());
        let c = band_limited_field(g, 12, 4, 0.25).unwrap();
        assert!(a.max_abs_diff(&c).unwrap() > 1e-6);
    }
}
