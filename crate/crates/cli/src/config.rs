//! TOML run configuration. Every key has a default; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use weakfock::constants::{Mode, Physics, ThresholdPolicy};
use weakfock::fock::Caps;
use weakfock::grid::Scheme;
use weakfock::kernels::KernelFamily;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub species: usize,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m_w: f64,
    pub lambda: f64,
    pub delta: f64,
    /// explicit coupling; when absent g = g_fraction · g_δ^{(1)}
    pub g: Option<f64>,
    pub g_fraction: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            species: 1,
            m1: 1.0,
            m2: 2.0,
            m3: 3.0,
            m_w: 4.0,
            lambda: 1.2,
            delta: 0.6,
            g: None,
            g_fraction: 1e-3,
        }
    }
}

impl PhysicsConfig {
    pub fn physics(&self, g: f64) -> Physics {
        Physics { m1: self.m1, m2: self.m2, m3: self.m3, m_w: self.m_w, lambda: self.lambda, delta: self.delta, g }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelGrid {
    pub pmax: f64,
    pub shells: usize,
    #[serde(default = "one")]
    pub labels: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub scheme: Scheme,
    pub massive: ChannelGrid,
    pub neutrino: ChannelGrid,
    pub boson: ChannelGrid,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            scheme: Scheme::Midpoint,
            massive: ChannelGrid { pmax: 1.0, shells: 1, labels: 1 },
            neutrino: ChannelGrid { pmax: 1.44, shells: 6, labels: 1 },
            boson: ChannelGrid { pmax: 1.0, shells: 1, labels: 1 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PowerGaussian,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: FamilyName,
    /// power_gaussian: amplitude · |p₂|^power · exp(−(|p₁|²+|p₂|²+|k|²)/width²)
    pub amplitude: f64,
    pub width: f64,
    pub power: f64,
    /// table: path to the kernel table
    pub path: Option<PathBuf>,
    /// multiply by χ₀(2|p₂|/Λ)
    pub uv_cutoff: bool,
    pub helicity: bool,
    /// allowed K̃² growth under one grid doubling before infrared (i) fails
    pub divergence_factor: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: FamilyName::PowerGaussian,
            amplitude: 1.0,
            width: 1.0,
            power: 0.5,
            path: None,
            uv_cutoff: true,
            helicity: false,
            divergence_factor: 2.0,
        }
    }
}

impl KernelConfig {
    pub fn family(&self) -> KernelFamily {
        match self.family {
            FamilyName::PowerGaussian => {
                KernelFamily::PowerGaussian { amplitude: self.amplitude, width: self.width, power: self.power }
            }
            FamilyName::Table => KernelFamily::Table { path: self.path.clone().unwrap_or_default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub beta: f64,
    pub eta: f64,
    pub optimize: bool,
    /// search box for the optimizer: log-spaced over [lo, hi]
    pub search_lo: f64,
    pub search_hi: f64,
    pub search_points: usize,
    pub g1_fraction: f64,
    pub g_delta_fraction: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let p = ThresholdPolicy::default();
        ConstantsConfig {
            beta: 1.0,
            eta: 1.0,
            optimize: false,
            search_lo: 0.05,
            search_hi: 20.0,
            search_points: 25,
            g1_fraction: p.g1_fraction,
            g_delta_fraction: p.g_delta_fraction,
        }
    }
}

impl ConstantsConfig {
    pub fn policy(&self) -> ThresholdPolicy {
        ThresholdPolicy { g1_fraction: self.g1_fraction, g_delta_fraction: self.g_delta_fraction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub nmax: usize,
    /// soft-content sweep over g ∈ [lo, hi]·g_δ^{(1)}, log-spaced
    pub soft_lo: f64,
    pub soft_hi: f64,
    pub soft_points: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig { nmax: 4, soft_lo: 1e-4, soft_hi: 1e-3, soft_points: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MourreConfig {
    pub stages: Vec<usize>,
    /// also build the formula-mode commutator
    pub formula: bool,
    /// user-supplied C̃ for the window estimate
    pub c_tilde: Option<f64>,
    pub refinement_shells: Vec<usize>,
}

impl Default for MourreConfig {
    fn default() -> Self {
        MourreConfig { stages: vec![1, 2, 3], formula: true, c_tilde: None, refinement_shells: vec![6, 12, 24] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub s: f64,
    /// empty: `auto_points` values spread over (E, m₁ − δ)
    pub lambdas: Vec<f64>,
    pub auto_points: usize,
    pub epsilons: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { s: 1.0, lambdas: Vec::new(), auto_points: 4, epsilons: vec![1e-1, 1e-2, 1e-3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub samples: usize,
    pub etas: Vec<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { samples: 100, etas: vec![0.25, 1.0, 4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub count: usize,
    /// largest total particle number in the threshold table
    pub threshold_order: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { count: 20, threshold_order: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub dense_limit: usize,
    pub basis_limit: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { mode: Mode::Certify, seed: 1, out: PathBuf::from("out"), dense_limit: 6000, basis_limit: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub grid: GridConfig,
    pub caps: Caps,
    pub kernel: KernelConfig,
    pub constants: ConstantsConfig,
    pub cascade: CascadeConfig,
    pub mourre: MourreConfig,
    pub probe: ProbeConfig,
    pub bounds: BoundsConfig,
    pub spectrum: SpectrumConfig,
    pub run: RunSection,
}

impl RunConfig {
    /// Every violated precondition, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.physics.physics(self.physics.g.unwrap_or(0.0)).validate();
        let p = &self.physics;
        if !(1..=3).contains(&p.species) {
            v.push(format!("species count {} outside 1–3", p.species));
        }
        if p.g.is_none() && !(p.g_fraction >= 0.0 && p.g_fraction.is_finite()) {
            v.push(format!("g_fraction = {} must be finite and ≥ 0", p.g_fraction));
        }
        for (name, c, labels) in [
            ("massive", &self.grid.massive, [1, 2]),
            ("neutrino", &self.grid.neutrino, [1, 2]),
            ("boson", &self.grid.boson, [1, 3]),
        ] {
            if !(c.pmax > 0.0 && c.pmax.is_finite()) {
                v.push(format!("grid.{name}.pmax must be positive"));
            }
            if c.shells == 0 {
                v.push(format!("grid.{name}.shells must be ≥ 1"));
            }
            if !labels.contains(&c.labels) {
                v.push(format!("grid.{name}.labels must be {} or {}", labels[0], labels[1]));
            }
        }
        if self.grid.neutrino.shells < 3 {
            v.push("grid.neutrino.shells must be ≥ 3 for the dilation generator".into());
        }
        if self.grid.scheme != Scheme::Midpoint {
            v.push("grid.scheme must be midpoint: the dilation generator needs uniform shells".into());
        }
        let c = &self.caps;
        if c.particle == 0 || c.antiparticle == 0 || c.neutrino == 0 || c.antineutrino == 0 || c.boson == 0 {
            v.push("caps must all be ≥ 1".into());
        }
        let kc = &self.kernel;
        match kc.family {
            FamilyName::PowerGaussian => {
                if !(kc.width > 0.0) || !kc.amplitude.is_finite() || !kc.power.is_finite() {
                    v.push("kernel: width > 0, finite amplitude and power".into());
                }
            }
            FamilyName::Table => match &kc.path {
                Some(p) if p.exists() => {}
                Some(p) => v.push(format!("kernel table {} does not exist", p.display())),
                None => v.push("kernel.path is required for the table family".into()),
            },
        }
        if !(self.kernel.divergence_factor >= 1.0) {
            v.push("kernel.divergence_factor must be ≥ 1".into());
        }
        let k = &self.constants;
        if !(k.beta > 0.0 && k.eta > 0.0) {
            v.push("β, η must be positive".into());
        }
        if k.optimize && !(k.search_lo > 0.0 && k.search_hi > k.search_lo && k.search_points >= 1) {
            v.push("optimizer search box: 0 < search_lo < search_hi, search_points ≥ 1".into());
        }
        for (name, f) in [("g1_fraction", k.g1_fraction), ("g_delta_fraction", k.g_delta_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                v.push(format!("constants.{name} = {f} outside (0, 1)"));
            }
        }
        let cs = &self.cascade;
        if cs.nmax < 1 {
            v.push("cascade.nmax must be ≥ 1".into());
        }
        if !(cs.soft_lo > 0.0 && cs.soft_hi > cs.soft_lo) || cs.soft_points < 2 {
            v.push("cascade soft sweep: 0 < soft_lo < soft_hi, soft_points ≥ 2".into());
        }
        if self.mourre.stages.iter().any(|&n| n > cs.nmax) {
            v.push(format!("mourre.stages must lie in 0..={}", cs.nmax));
        }
        if self.mourre.refinement_shells.iter().any(|&s| s < 3) {
            v.push("mourre.refinement_shells entries must be ≥ 3".into());
        }
        if !(self.probe.s > 0.5) {
            v.push(format!("probe.s = {} must exceed 1/2", self.probe.s));
        }
        if self.probe.epsilons.is_empty() || self.probe.epsilons.iter().any(|&e| !(e > 0.0)) {
            v.push("probe.epsilons must be nonempty and positive".into());
        }
        if self.bounds.samples == 0 || self.bounds.etas.iter().any(|&e| !(e > 0.0)) {
            v.push("bounds: samples ≥ 1 and positive η values".into());
        }
        if self.run.dense_limit == 0 || self.run.basis_limit == 0 {
            v.push("run.dense_limit and run.basis_limit must be ≥ 1".into());
        }
        v
    }

    pub fn validate(self) -> Result<Self, ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Validation(v))
        }
    }
}

pub fn parse_str(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), msg: e.to_string() })?;
    cfg.validate()
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_is_the_defaults() {
        let text = include_str!("../../../docs/config.example.toml");
        assert_eq!(parse_str(text, "example").unwrap(), RunConfig::default());
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_str("", "mem").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid.neutrino.shells, 6);
        assert_eq!(c.cascade.nmax, 4);
    }

    #[test]
    fn delta_above_mass_is_named() {
        let Err(ConfigError::Validation(v)) = parse_str("[physics]\ndelta = 1.5\n", "mem") else { panic!() };
        assert!(v.iter().any(|s| s.contains("0 < δ < m₁")), "{v:?}");
    }

    #[test]
    fn small_lambda_is_named() {
        let Err(ConfigError::Validation(v)) = parse_str("[physics]\nlambda = 0.9\n", "mem") else { panic!() };
        assert!(v.iter().any(|s| s.contains("Λ > m₁")));
    }

    #[test]
    fn all_violations_listed() {
        let Err(ConfigError::Validation(v)) =
            parse_str("[physics]\ndelta = 2.0\nlambda = 0.5\nspecies = 4\n[probe]\ns = 0.2\n", "mem")
        else {
            panic!()
        };
        assert!(v.len() >= 4, "{v:?}");
    }

    #[test]
    fn unknown_key_reports_location() {
        let Err(ConfigError::Parse { msg, .. }) = parse_str("[physics]\nmass = 1\n", "mem") else { panic!() };
        assert!(msg.contains("mass") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn table_family_parses() {
        let c: RunConfig = toml::from_str("[kernel]\nfamily = \"table\"\npath = \"k.txt\"\n").unwrap();
        assert!(matches!(c.kernel.family(), KernelFamily::Table { .. }));
        let Err(ConfigError::Validation(v)) = parse_str("[kernel]\nfamily = \"table\"\n", "mem") else { panic!() };
        assert!(v.iter().any(|s| s.contains("kernel.path")));
    }
}
