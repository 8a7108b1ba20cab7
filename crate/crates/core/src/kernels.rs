//! Coupling kernels G^{(α)}_{ℓ,ε,ε′}: sampling, smooth cutoffs and the
//! integrability checks on them.
//!
//! Arrays are stored in mode normalization: a continuum value G(ξ₁,ξ₂,ξ₃)
//! is multiplied by (w₁w₂w₃)^{½}, so L² norms become Euclidean norms. The
//! optional derivative arrays hold r∂_r G and r²∂²_r G along the neutrino slot
//! with the same normalization.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::BlockKind;
use crate::grid::{Channel, ModeGrid};
use crate::jet::Jet;

type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("bad kernel family parameters: {0}")]
    BadFamilyParams(String),
    #[error("derivative arrays are missing")]
    MissingDerivatives,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel table {path}: {msg}")]
    Table { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Index (α, ℓ, ε) of one interaction term; ε′ = −ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelKey {
    pub alpha: u8,
    pub species: u8,
    pub eps: Sign,
}

impl KernelKey {
    pub fn all(species: usize) -> Vec<KernelKey> {
        let mut keys = Vec::new();
        for alpha in [1, 2] {
            for l in 1..=species as u8 {
                for eps in [Sign::Plus, Sign::Minus] {
                    keys.push(KernelKey { alpha, species: l, eps });
                }
            }
        }
        keys
    }

    /// Massive block created by b*_{ℓ,ε}.
    pub fn massive_block(&self) -> BlockKind {
        match self.eps {
            Sign::Plus => BlockKind::Particle(self.species),
            Sign::Minus => BlockKind::Antiparticle(self.species),
        }
    }

    /// Neutrino block created by c*_{ℓ,ε′}.
    pub fn neutrino_block(&self) -> BlockKind {
        match self.eps {
            Sign::Plus => BlockKind::Antineutrino(self.species),
            Sign::Minus => BlockKind::Neutrino(self.species),
        }
    }

    /// Boson block of a_ε: W⁻ for ε = +, W⁺ for ε = −.
    pub fn boson_block(&self) -> BlockKind {
        match self.eps {
            Sign::Plus => BlockKind::WMinus,
            Sign::Minus => BlockKind::WPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelArray {
    pub key: KernelKey,
    pub values: Vec<C64>,
    pub radial_d1: Option<Vec<C64>>,
    pub radial_d2: Option<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub massive: ModeGrid,
    pub neutrino: ModeGrid,
    pub boson: ModeGrid,
    pub arrays: Vec<KernelArray>,
    pub helicity: bool,
    pub uv_cutoff: Option<f64>,
}

impl KernelSet {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.massive.parent_len(), self.neutrino.parent_len(), self.boson.parent_len())
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let (_, n2, n3) = self.shape();
        (i * n2 + j) * n3 + k
    }

    pub fn get(&self, key: KernelKey) -> Option<&KernelArray> {
        self.arrays.iter().find(|a| a.key == key)
    }

    pub fn zero(massive: &ModeGrid, neutrino: &ModeGrid, boson: &ModeGrid, species: usize) -> KernelSet {
        let len = massive.parent_len() * neutrino.parent_len() * boson.parent_len();
        KernelSet {
            massive: massive.clone(),
            neutrino: neutrino.clone(),
            boson: boson.clone(),
            arrays: KernelKey::all(species)
                .into_iter()
                .map(|key| KernelArray {
                    key,
                    values: vec![C64::new(0.0, 0.0); len],
                    radial_d1: Some(vec![C64::new(0.0, 0.0); len]),
                    radial_d2: Some(vec![C64::new(0.0, 0.0); len]),
                })
                .collect(),
            helicity: false,
            uv_cutoff: None,
        }
    }

    /// Neutrino radius of parent id `j`.
    pub fn neutrino_radius(&self, j: usize) -> f64 {
        self.neutrino.radial.radii[j / self.neutrino.labels.len()]
    }

    /// K(G)² = Σ ‖G‖².
    pub fn k_norm(&self) -> f64 {
        self.arrays.iter().map(|a| sq_norm(&a.values)).sum::<f64>().sqrt()
    }

    /// K̃(G)² = Σ ∫|G|²/|p₂|².
    pub fn k_tilde(&self) -> f64 {
        let mut s = 0.0;
        for a in &self.arrays {
            self.for_each(|idx, _, j, _| {
                let r = self.neutrino_radius(j);
                s += a.values[idx].norm_sqr() / (r * r);
            });
        }
        s.sqrt()
    }

    pub fn term_norm(&self, key: KernelKey) -> f64 {
        self.get(key).map(|a| sq_norm(&a.values).sqrt()).unwrap_or(0.0)
    }

    /// ∫|G|²/w⁽³⁾ for one term.
    pub fn term_norm_over_boson_energy(&self, key: KernelKey, m_w: f64) -> f64 {
        let Some(a) = self.get(key) else { return 0.0 };
        let mut s = 0.0;
        self.for_each(|idx, _, _, k| {
            let r = self.boson.radial.radii[k / self.boson.labels.len()];
            s += a.values[idx].norm_sqr() / (r * r + m_w * m_w).sqrt();
        });
        s
    }

    /// ‖G(·,·,k)‖ for a fixed boson mode.
    pub fn boson_slice_norm(&self, key: KernelKey, k: usize) -> f64 {
        let Some(a) = self.get(key) else { return 0.0 };
        let (n1, n2, _) = self.shape();
        let mut s = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                s += a.values[self.idx(i, j, k)].norm_sqr();
            }
        }
        s.sqrt()
    }

    /// ‖G(·,j,·)‖ for a fixed neutrino mode.
    pub fn neutrino_slice_norm(&self, key: KernelKey, j: usize) -> f64 {
        let Some(a) = self.get(key) else { return 0.0 };
        let (n1, _, n3) = self.shape();
        let mut s = 0.0;
        for i in 0..n1 {
            for k in 0..n3 {
                s += a.values[self.idx(i, j, k)].norm_sqr();
            }
        }
        s.sqrt()
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (n1, n2, n3) = self.shape();
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    f((i * n2 + j) * n3 + k, i, j, k);
                }
            }
        }
    }

    /// Multiplies every array by a real profile of |p₂| given as a jet in r.
    /// Derivative arrays follow the product rule; they are dropped when the
    /// input lacks them.
    pub fn multiply_radial(&self, profile: impl Fn(f64) -> Jet) -> KernelSet {
        let mut out = self.clone();
        let n2 = self.neutrino.parent_len();
        let jets: Vec<Jet> = (0..n2).map(|j| profile(self.neutrino_radius(j))).collect();
        for a in &mut out.arrays {
            let old = a.values.clone();
            let (d1, d2) = (a.radial_d1.clone(), a.radial_d2.clone());
            let mut nd1 = d1.clone();
            let mut nd2 = d2.clone();
            self.for_each(|idx, _, j, _| {
                let r = self.neutrino_radius(j);
                let c = jets[j];
                let (rc1, r2c2) = (r * c.d1, r * r * c.d2);
                a.values[idx] = old[idx] * c.v;
                if let (Some(src1), Some(dst1)) = (&d1, nd1.as_mut()) {
                    dst1[idx] = src1[idx] * c.v + old[idx] * rc1;
                    if let (Some(src2), Some(dst2)) = (&d2, nd2.as_mut()) {
                        dst2[idx] = src2[idx] * c.v + src1[idx] * (2.0 * rc1) + old[idx] * r2c2;
                    }
                }
            });
            if nd1.is_none() {
                nd2 = None;
            }
            a.radial_d1 = nd1;
            a.radial_d2 = nd2;
        }
        out
    }
}

fn sq_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

// ---------------------------------------------------------------------------
// Smooth cutoffs

fn log_e(u: Jet) -> Jet {
    -(u.recip())
}

fn log_sum_exp(a: Jet, b: Jet) -> Jet {
    let m = a.v.max(b.v);
    ((a + -m).exp() + (b + -m).exp()).ln() + m
}

/// χ₀ with χ₀² = 1 − S(x − 1): equal to 1 on (−∞, 1], 0 on [2, ∞).
pub fn chi0_jet(x: Jet) -> Jet {
    if x.v <= 1.0 {
        return Jet::cst(1.0);
    }
    if x.v >= 2.0 {
        return Jet::cst(0.0);
    }
    let u = x + -1.0;
    let a = log_e(Jet::cst(1.0) - u);
    let b = log_e(u);
    ((a - log_sum_exp(a, b)) * 0.5).exp()
}

/// χ_∞ = (1 − χ₀²)^{½}.
pub fn chi_inf_jet(x: Jet) -> Jet {
    if x.v <= 1.0 {
        return Jet::cst(0.0);
    }
    if x.v >= 2.0 {
        return Jet::cst(1.0);
    }
    let u = x + -1.0;
    let a = log_e(Jet::cst(1.0) - u);
    let b = log_e(u);
    ((b - log_sum_exp(a, b)) * 0.5).exp()
}

pub fn chi0(x: f64) -> f64 {
    chi0_jet(Jet::cst(x)).v
}

pub fn chi_inf(x: f64) -> f64 {
    chi_inf_jet(Jet::cst(x)).v
}

/// The C^∞ ramp S(u) = e(u)/(e(u)+e(1−u)), e(u) = exp(−1/u) for u > 0.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = -1.0 / u;
        let b = -1.0 / (1.0 - u);
        1.0 / (1.0 + (b - a).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// χ_σ(p) = χ₀(|p|/σ)
    Inner,
    /// χ^σ(p) = χ_∞(|p|/σ)
    Outer,
    /// χ̃^σ = 1 − χ_σ
    Complement,
}

pub fn cutoff_jet(which: Cutoff, sigma: f64, r: Jet) -> Jet {
    let x = r * (1.0 / sigma);
    match which {
        Cutoff::Inner => chi0_jet(x),
        Cutoff::Outer => chi_inf_jet(x),
        Cutoff::Complement => Jet::cst(1.0) - chi0_jet(x),
    }
}

pub fn apply_cutoff(k: &KernelSet, sigma: f64, which: Cutoff) -> KernelSet {
    k.multiply_radial(|r| cutoff_jet(which, sigma, Jet::var(r)))
}

/// Sharp window 1_{lo ≤ |p₂| ≤ hi}; derivative arrays are dropped.
pub fn apply_indicator(k: &KernelSet, lo: f64, hi: f64) -> KernelSet {
    let mut out = k.multiply_radial(|r| Jet::cst(if r >= lo && r <= hi { 1.0 } else { 0.0 }));
    for a in &mut out.arrays {
        a.radial_d1 = None;
        a.radial_d2 = None;
    }
    out
}

// ---------------------------------------------------------------------------
// Families

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// amplitude · |p₂|^power · exp(−(|p₁|²+|p₂|²+|k|²)/width²)
    PowerGaussian { amplitude: f64, width: f64, power: f64 },
    /// Tabulated continuum values, see [`read_kernel_table`].
    Table { path: PathBuf },
}

impl Default for KernelFamily {
    fn default() -> Self {
        KernelFamily::PowerGaussian { amplitude: 1.0, width: 1.0, power: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub species: usize,
    /// UV cutoff Λ: multiplies by χ₀(2|p₂|/Λ), so entries with |p₂| ≥ Λ vanish.
    pub uv_cutoff: Option<f64>,
    /// Zero the entries with s₂ = ε·½.
    pub helicity: bool,
}

fn uv_factor(lambda: Option<f64>, r: Jet) -> Jet {
    match lambda {
        Some(l) => chi0_jet(r * (2.0 / l)),
        None => Jet::cst(1.0),
    }
}

pub fn sample_kernel(
    family: &KernelFamily,
    opts: &SampleOptions,
    massive: &ModeGrid,
    neutrino: &ModeGrid,
    boson: &ModeGrid,
) -> Result<KernelSet, KernelError> {
    for (g, c) in [(massive, Channel::Massive), (neutrino, Channel::Neutrino), (boson, Channel::Boson)] {
        if g.channel != c || g.points.len() != g.parent_len() {
            return Err(KernelError::ShapeMismatch(format!("{c:?} grid must be an unrestricted channel grid")));
        }
    }
    let mut set = KernelSet::zero(massive, neutrino, boson, opts.species);
    set.helicity = opts.helicity;
    set.uv_cutoff = opts.uv_cutoff;
    match family {
        KernelFamily::PowerGaussian { amplitude, width, power } => {
            if !(*width > 0.0) || !amplitude.is_finite() || !power.is_finite() {
                return Err(KernelError::BadFamilyParams(format!(
                    "amplitude {amplitude}, width {width}, power {power}"
                )));
            }
            let w2 = width * width;
            let radial: Vec<Jet> = neutrino
                .radial
                .radii
                .iter()
                .map(|&r| {
                    let x = Jet::var(r);
                    x.powf(*power) * (x * x * (-1.0 / w2)).exp() * uv_factor(opts.uv_cutoff, x)
                })
                .collect();
            let nl = neutrino.labels.len();
            for a in &mut set.arrays {
                let d1 = a.radial_d1.as_mut().unwrap();
                let d2 = a.radial_d2.as_mut().unwrap();
                for p1 in &massive.points {
                    for p2 in &neutrino.points {
                        if opts.helicity && p2.label == a.key.eps.value() {
                            continue;
                        }
                        for p3 in &boson.points {
                            let idx = (p1.id * neutrino.len() + p2.id) * boson.len() + p3.id;
                            let s = amplitude
                                * (-(p1.radius * p1.radius + p3.radius * p3.radius) / w2).exp()
                                * (p1.weight * p2.weight * p3.weight).sqrt();
                            let f = radial[p2.id / nl];
                            let r = p2.radius;
                            a.values[idx] = C64::new(s * f.v, 0.0);
                            d1[idx] = C64::new(s * r * f.d1, 0.0);
                            d2[idx] = C64::new(s * r * r * f.d2, 0.0);
                        }
                    }
                }
            }
            Ok(set)
        }
        KernelFamily::Table { path } => {
            let entries = read_kernel_table(path)?;
            fill_from_table(&mut set, &entries, path)?;
            Ok(set)
        }
    }
}

/// One parsed table entry: (key, i, j, k, value).
pub type TableEntry = (KernelKey, usize, usize, usize, C64);

/// Reads a kernel table. A header line `alpha ell eps eps' n1 n2 n3`
/// (signs written `+`/`-`) opens a section; rows `i j k re im` follow.
/// Lines starting with `#` are comments.
pub fn read_kernel_table(path: &Path) -> Result<Vec<TableEntry>, KernelError> {
    let err = |msg: String| KernelError::Table { path: path.display().to_string(), msg };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    let mut current: Option<(KernelKey, (usize, usize, usize))> = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let sign = |s: &str| match s {
            "+" => Ok(Sign::Plus),
            "-" => Ok(Sign::Minus),
            _ => Err(err(format!("line {}: bad sign {s}", ln + 1))),
        };
        if tok.len() == 7 {
            let eps = sign(tok[2])?;
            if sign(tok[3])? != eps.flip() {
                return Err(err(format!("line {}: ε′ must differ from ε", ln + 1)));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("line {}: {e}", ln + 1)));
            let key = KernelKey { alpha: num(tok[0])? as u8, species: num(tok[1])? as u8, eps };
            current = Some((key, (num(tok[4])?, num(tok[5])?, num(tok[6])?)));
        } else if tok.len() == 5 {
            let (key, shape) = current.ok_or_else(|| err(format!("line {}: row before header", ln + 1)))?;
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("line {}: {e}", ln + 1)));
            let fl = |s: &str| s.parse::<f64>().map_err(|e| err(format!("line {}: {e}", ln + 1)));
            let (i, j, k) = (num(tok[0])?, num(tok[1])?, num(tok[2])?);
            if i >= shape.0 || j >= shape.1 || k >= shape.2 {
                return Err(err(format!("line {}: index outside declared shape", ln + 1)));
            }
            out.push((key, i, j, k, C64::new(fl(tok[3])?, fl(tok[4])?)));
        } else {
            return Err(err(format!("line {}: expected 5 or 7 fields", ln + 1)));
        }
    }
    Ok(out)
}

fn fill_from_table(set: &mut KernelSet, entries: &[TableEntry], path: &Path) -> Result<(), KernelError> {
    let (n1, n2, n3) = set.shape();
    for &(key, i, j, k, v) in entries {
        if i >= n1 || j >= n2 || k >= n3 {
            return Err(KernelError::Table { path: path.display().to_string(), msg: "shape does not match grid".into() });
        }
        let w = (set.massive.points[i].weight * set.neutrino.points[j].weight * set.boson.points[k].weight).sqrt();
        let idx = set.idx(i, j, k);
        let a = set
            .arrays
            .iter_mut()
            .find(|a| a.key == key)
            .ok_or_else(|| KernelError::Table { path: path.display().to_string(), msg: format!("{key:?} not enabled") })?;
        a.values[idx] = v * w;
    }
    finite_difference_derivatives(set);
    Ok(())
}

/// Fills r∂_r and r²∂²_r by finite differences along the shells of each
/// neutrino label, centered inside and one-sided at the boundary shells.
pub fn finite_difference_derivatives(set: &mut KernelSet) {
    let (n1, _, n3) = set.shape();
    let nl = set.neutrino.labels.len();
    let radii = set.neutrino.radial.radii.clone();
    let ns = radii.len();
    let wts: Vec<f64> = (0..ns).map(|s| set.neutrino.radial.weight(s)).collect();
    for a in 0..set.arrays.len() {
        let vals = set.arrays[a].values.clone();
        let mut d1 = vec![C64::new(0.0, 0.0); vals.len()];
        let mut d2 = vec![C64::new(0.0, 0.0); vals.len()];
        for i in 0..n1 {
            for k in 0..n3 {
                for l in 0..nl {
                    // continuum profile along r (undo the neutrino weight)
                    let f: Vec<C64> = (0..ns).map(|s| vals[set.idx(i, s * nl + l, k)] / wts[s].sqrt()).collect();
                    for s in 0..ns {
                        let (fd1, fd2) = if ns < 3 {
                            let fd1 = if ns == 2 { (f[1] - f[0]) / (radii[1] - radii[0]) } else { C64::new(0.0, 0.0) };
                            (fd1, C64::new(0.0, 0.0))
                        } else {
                            let c = s.clamp(1, ns - 2);
                            let (h0, h1) = (radii[c] - radii[c - 1], radii[c + 1] - radii[c]);
                            let second = (f[c + 1] * h0 - f[c] * (h0 + h1) + f[c - 1] * h1) * (2.0 / (h0 * h1 * (h0 + h1)));
                            let first = if s == 0 {
                                (f[1] - f[0]) / h0 - second * (h0 / 2.0)
                            } else if s == ns - 1 {
                                (f[ns - 1] - f[ns - 2]) / h1 + second * (h1 / 2.0)
                            } else {
                                (f[s + 1] - f[s - 1]) / (radii[s + 1] - radii[s - 1])
                            };
                            (first, second)
                        };
                        let idx = set.idx(i, s * nl + l, k);
                        d1[idx] = fd1 * (radii[s] * wts[s].sqrt());
                        d2[idx] = fd2 * (radii[s] * radii[s] * wts[s].sqrt());
                    }
                }
            }
        }
        set.arrays[a].radial_d1 = Some(d1);
        set.arrays[a].radial_d2 = Some(d2);
    }
}

// ---------------------------------------------------------------------------
// Hypotheses

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisVerdicts {
    pub square_integrable: bool,
    pub infrared_i: bool,
    pub infrared_ii: bool,
    pub derivatives_iii: bool,
    pub ultraviolet_iv: bool,
}

impl HypothesisVerdicts {
    pub fn all(&self) -> bool {
        self.square_integrable && self.infrared_i && self.infrared_ii && self.derivatives_iii && self.ultraviolet_iv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub k: f64,
    pub k_tilde: f64,
    /// max over grid radii σ ≤ Λ of σ⁻² (∫_{|p₂|≤σ}|G|²)^{½}
    pub infrared_c: f64,
    pub d1_norm: f64,
    pub d2_norm: f64,
    /// K̃² on the refined grid divided by K̃² on this grid, if a refinement was supplied.
    pub refinement_ratio: Option<f64>,
    pub divergence_factor: f64,
    pub verdicts: HypothesisVerdicts,
}

pub fn check_hypotheses(
    k: &KernelSet,
    lambda: f64,
    refined: Option<&KernelSet>,
    divergence_factor: f64,
) -> Result<HypothesisReport, KernelError> {
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for a in &k.arrays {
        d1 += sq_norm(a.radial_d1.as_ref().ok_or(KernelError::MissingDerivatives)?);
        d2 += sq_norm(a.radial_d2.as_ref().ok_or(KernelError::MissingDerivatives)?);
    }
    let (d1, d2) = (d1.sqrt(), d2.sqrt());
    let kn = k.k_norm();
    let kt = k.k_tilde();
    let ir_c = infrared_constant(k, lambda);
    let refinement_ratio = refined.map(|r| {
        let base = kt * kt;
        let fine = r.k_tilde().powi(2);
        if base == 0.0 {
            if fine == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            fine / base
        }
    });
    let mut uv = true;
    let n2 = k.neutrino.parent_len();
    for a in &k.arrays {
        k.for_each(|idx, _, j, _| {
            if j < n2 && k.neutrino_radius(j) >= lambda && a.values[idx] != C64::new(0.0, 0.0) {
                uv = false;
            }
        });
    }
    let verdicts = HypothesisVerdicts {
        square_integrable: kn.is_finite(),
        infrared_i: kt.is_finite() && refinement_ratio.map_or(true, |q| q <= divergence_factor),
        infrared_ii: ir_c.is_finite(),
        derivatives_iii: d1.is_finite() && d2.is_finite(),
        ultraviolet_iv: uv,
    };
    Ok(HypothesisReport {
        k: kn,
        k_tilde: kt,
        infrared_c: ir_c,
        d1_norm: d1,
        d2_norm: d2,
        refinement_ratio,
        divergence_factor,
        verdicts,
    })
}

fn infrared_constant(k: &KernelSet, lambda: f64) -> f64 {
    let mut best: f64 = 0.0;
    for &sigma in k.neutrino.radial.radii.iter().filter(|&&r| r <= lambda) {
        let mut s = 0.0;
        for a in &k.arrays {
            k.for_each(|idx, _, j, _| {
                if k.neutrino_radius(j) <= sigma {
                    s += a.values[idx].norm_sqr();
                }
            });
        }
        best = best.max(s.sqrt() / (sigma * sigma));
    }
    best
}

// ---------------------------------------------------------------------------
// Dilation generator acting on kernels

/// Applies −i·a along the neutrino slot, with `a` indexed by parent ids.
pub fn apply_generator_to_kernel(k: &KernelSet, a: &DMatrix<C64>) -> Result<KernelSet, KernelError> {
    let (n1, n2, n3) = k.shape();
    if a.nrows() != n2 || a.ncols() != n2 {
        return Err(KernelError::ShapeMismatch(format!("generator is {}×{}, neutrino slot has {n2}", a.nrows(), a.ncols())));
    }
    let mi = C64::new(0.0, -1.0);
    let mut out = k.clone();
    for (src, dst) in k.arrays.iter().zip(out.arrays.iter_mut()) {
        for i in 0..n1 {
            for kk in 0..n3 {
                for j in 0..n2 {
                    let mut acc = C64::new(0.0, 0.0);
                    for m in 0..n2 {
                        let x = a[(j, m)];
                        if x != C64::new(0.0, 0.0) {
                            acc += x * src.values[k.idx(i, m, kk)];
                        }
                    }
                    dst.values[k.idx(i, j, kk)] = mi * acc;
                }
            }
        }
        dst.radial_d1 = None;
        dst.radial_d2 = None;
    }
    Ok(out)
}

/// Continuum form of −i·a_h G for the symmetrized generator ½(h a + a h):
/// h·(r∂_r G + 3/2 G) + ½ r h′ G, evaluated from the derivative arrays.
/// `h` returns (h(r), r·h′(r)).
pub fn formula_generator_kernel(k: &KernelSet, h: impl Fn(f64) -> (f64, f64)) -> Result<KernelSet, KernelError> {
    let mut out = k.clone();
    let n2 = k.neutrino.parent_len();
    let hv: Vec<(f64, f64)> = (0..n2).map(|j| h(k.neutrino_radius(j))).collect();
    for (src, dst) in k.arrays.iter().zip(out.arrays.iter_mut()) {
        let d1 = src.radial_d1.as_ref().ok_or(KernelError::MissingDerivatives)?;
        k.for_each(|idx, _, j, _| {
            let (hh, rh1) = hv[j];
            dst.values[idx] = (d1[idx] + src.values[idx] * 1.5) * hh + src.values[idx] * (0.5 * rh1);
        });
        dst.radial_d1 = None;
        dst.radial_d2 = None;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Scheme;

    fn grids(shells: usize, labels: usize) -> (ModeGrid, ModeGrid, ModeGrid) {
        (
            ModeGrid::build(Channel::Massive, 1.0, 1, Scheme::Midpoint, labels).unwrap(),
            ModeGrid::build(Channel::Neutrino, 1.44, shells, Scheme::Midpoint, labels).unwrap(),
            ModeGrid::build(Channel::Boson, 1.0, 1, Scheme::Midpoint, 1).unwrap(),
        )
    }

    #[test]
    fn cutoff_partition_identities() {
        for i in 0..400 {
            let x = i as f64 * 0.01;
            let (a, b) = (chi0(x), chi_inf(x));
            assert!((a * a + b * b - 1.0).abs() < 1e-12, "x = {x}");
        }
        assert_eq!(chi0(1.0), 1.0);
        assert_eq!(chi0(2.0), 0.0);
        assert_eq!(chi_inf(0.5), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn cutoffs_partition_unity_with_derivatives(r in 0.0f64..5.0, sigma in 0.05f64..3.0) {
            let (a, b, c) = (
                cutoff_jet(Cutoff::Inner, sigma, Jet::var(r)),
                cutoff_jet(Cutoff::Outer, sigma, Jet::var(r)),
                cutoff_jet(Cutoff::Complement, sigma, Jet::var(r)),
            );
            let s = a * a + b * b;
            proptest::prop_assert!((s.v - 1.0).abs() < 1e-12);
            proptest::prop_assert!(s.d1.abs() < 1e-8 * (1.0 + a.d1.abs() + b.d1.abs()) / sigma);
            proptest::prop_assert!((a.v + c.v - 1.0).abs() < 1e-15 && (a.d1 + c.d1).abs() < 1e-12 / sigma);
            proptest::prop_assert!((0.0..=1.0).contains(&a.v) && (0.0..=1.0).contains(&b.v));
        }
    }

    #[test]
    fn cutoff_jet_derivatives_match_differences() {
        let h = 1e-5;
        for &x in &[1.1, 1.3, 1.5, 1.77, 1.95] {
            let j = chi0_jet(Jet::var(x));
            let d = (chi0(x + h) - chi0(x - h)) / (2.0 * h);
            let dd = (chi0(x + h) - 2.0 * chi0(x) + chi0(x - h)) / (h * h);
            assert!((j.d1 - d).abs() < 1e-6, "{x}: {} vs {d}", j.d1);
            assert!((j.d2 - dd).abs() < 1e-3 * (1.0 + dd.abs()), "{x}: {} vs {dd}", j.d2);
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_set() {
        let (m, n, b) = grids(6, 1);
        let fam = KernelFamily::PowerGaussian { amplitude: 0.0, width: 1.0, power: 0.5 };
        let k = sample_kernel(&fam, &SampleOptions { species: 1, uv_cutoff: None, helicity: false }, &m, &n, &b).unwrap();
        assert_eq!(k.k_norm(), 0.0);
        let r = check_hypotheses(&k, 1.2, None, 1.5).unwrap();
        assert!(r.verdicts.all());
        assert_eq!(r.k_tilde, 0.0);
    }

    #[test]
    fn uv_flag_kills_large_momenta() {
        let (m, n, b) = grids(6, 1);
        let k = sample_kernel(
            &KernelFamily::default(),
            &SampleOptions { species: 1, uv_cutoff: Some(1.0), helicity: false },
            &m,
            &n,
            &b,
        )
        .unwrap();
        for a in &k.arrays {
            for j in 0..n.len() {
                if k.neutrino_radius(j) >= 1.0 {
                    assert_eq!(a.values[k.idx(0, j, 0)], C64::new(0.0, 0.0));
                }
            }
        }
        assert!(check_hypotheses(&k, 1.0, None, 1.5).unwrap().verdicts.ultraviolet_iv);
    }

    #[test]
    fn helicity_restriction() {
        let (m, n, b) = grids(3, 2);
        let k = sample_kernel(
            &KernelFamily::default(),
            &SampleOptions { species: 1, uv_cutoff: None, helicity: true },
            &m,
            &n,
            &b,
        )
        .unwrap();
        for a in &k.arrays {
            for p in &n.points {
                let v = a.values[k.idx(0, p.id, 0)];
                assert_eq!(v == C64::new(0.0, 0.0), p.label == a.key.eps.value());
            }
        }
    }

    #[test]
    fn bad_width_rejected() {
        let (m, n, b) = grids(3, 1);
        let fam = KernelFamily::PowerGaussian { amplitude: 1.0, width: 0.0, power: 0.5 };
        assert!(matches!(
            sample_kernel(&fam, &SampleOptions { species: 1, uv_cutoff: None, helicity: false }, &m, &n, &b),
            Err(KernelError::BadFamilyParams(_))
        ));
    }

    #[test]
    fn complement_plus_inner_is_identity() {
        let (m, n, b) = grids(6, 1);
        let k = sample_kernel(&KernelFamily::default(), &SampleOptions { species: 1, uv_cutoff: None, helicity: false }, &m, &n, &b)
            .unwrap();
        let a = apply_cutoff(&k, 0.5, Cutoff::Inner);
        let c = apply_cutoff(&k, 0.5, Cutoff::Complement);
        for t in 0..k.arrays.len() {
            for idx in 0..k.arrays[t].values.len() {
                let s = a.arrays[t].values[idx] + c.arrays[t].values[idx];
                assert!((s - k.arrays[t].values[idx]).norm() < 1e-15);
            }
        }
        let tiny = apply_cutoff(&k, 0.05, Cutoff::Complement);
        assert_eq!(tiny.arrays, k.arrays);
    }
}
