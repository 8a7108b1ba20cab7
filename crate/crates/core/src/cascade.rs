//! Infrared decimation along σ_n: stage Hamiltonians H^n on the space of
//! neutrino modes with radius ≥ σ_n (kernels cut by χ̃^{σ_n}), their ground
//! energies and gaps, and the inequalities tying consecutive stages.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::ConstantLedger;
use crate::fock::{enumerate_basis, BlockKind, FockBasis, FockError, FockState, Layout, ModeId};
use crate::kernels::{apply_cutoff, apply_indicator, Cutoff, KernelError, KernelKey, KernelSet};
use crate::mourre::{build_dilation_generator, operator_norm, virial_check, MourreError, Which};
use crate::ops::{
    assemble_h0, assemble_interaction, assemble_number, ladder_operator, norm, pull_through_operator,
    total_hamiltonian, H0Part, Masses, OpsError, SparseHermitian,
};
use crate::spectral::{decompose, SpectralError, Spectrum};

type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("stage {n}: no neutrino modes with radius ≥ σ = {sigma}")]
    NoModesAboveCutoff { n: usize, sigma: f64 },
    #[error("stage {0} requested but the ledger only holds σ_0..σ_{1}")]
    StageOutOfRange(usize, usize),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Mourre(#[from] MourreError),
}

/// Everything a cascade or Mourre run shares: full layout and basis, sampled
/// kernels (UV factor included), masses, ledger and coupling.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: FockBasis,
    pub kernels: KernelSet,
    pub masses: Masses,
    pub ledger: ConstantLedger,
    pub g: f64,
    pub dense_limit: usize,
    pub basis_limit: usize,
}

impl Model {
    pub fn new(
        layout: &Layout,
        kernels: KernelSet,
        masses: Masses,
        ledger: ConstantLedger,
        g: f64,
        dense_limit: usize,
        basis_limit: usize,
    ) -> Result<Self, CascadeError> {
        let basis = enumerate_basis(layout, basis_limit)?;
        Ok(Model { basis, kernels, masses, ledger, g, dense_limit, basis_limit })
    }

    pub fn layout(&self) -> &Layout {
        &self.basis.layout
    }

    pub fn sigma(&self, n: usize) -> Result<f64, CascadeError> {
        self.ledger.sigma.get(n).copied().ok_or(CascadeError::StageOutOfRange(n, self.ledger.sigma.len() - 1))
    }

    /// χ̃^σ G
    pub fn cut_kernels(&self, sigma: f64) -> KernelSet {
        apply_cutoff(&self.kernels, sigma, Cutoff::Complement)
    }

    pub fn h0(&self) -> Result<SparseHermitian, CascadeError> {
        Ok(assemble_h0(&self.basis, &self.masses, H0Part::All)?)
    }

    /// H = H₀ + gH_I(G) on the full basis.
    pub fn full_hamiltonian(&self) -> Result<SparseHermitian, CascadeError> {
        let hi = assemble_interaction(&self.basis, &self.kernels)?;
        Ok(total_hamiltonian(&self.h0()?, &hi, self.g)?)
    }

    /// H_σ = H₀ + gH_I(χ̃^σ G) on the full basis.
    pub fn cut_hamiltonian(&self, sigma: f64) -> Result<SparseHermitian, CascadeError> {
        let hi = assemble_interaction(&self.basis, &self.cut_kernels(sigma))?;
        Ok(total_hamiltonian(&self.h0()?, &hi, self.g)?)
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub n: usize,
    pub sigma: f64,
    pub basis: FockBasis,
    pub kernels: KernelSet,
    pub h0: SparseHermitian,
    pub hi: SparseHermitian,
    pub h: SparseHermitian,
}

/// H^n on the sub-basis with neutrino radii ≥ σ_n and kernels χ̃^{σ_n}G.
pub fn build_truncated_hamiltonian(model: &Model, n: usize) -> Result<Stage, CascadeError> {
    let sigma = model.sigma(n)?;
    let layout = model.layout().with_infrared_cut(sigma)?;
    if layout.neutrino.is_empty() {
        return Err(CascadeError::NoModesAboveCutoff { n, sigma });
    }
    let basis = enumerate_basis(&layout, model.basis_limit)?;
    let kernels = model.cut_kernels(sigma);
    let h0 = assemble_h0(&basis, &model.masses, H0Part::All)?;
    let hi = assemble_interaction(&basis, &kernels)?;
    let h = total_hamiltonian(&h0, &hi, model.g)?;
    Ok(Stage { n, sigma, basis, kernels, h0, hi, h })
}

// ---------------------------------------------------------------------------
// Tensor factorization 𝔉 ≅ 𝔉^σ ⊗ 𝔉_σ on basis states

/// Splits full-basis states into (sub-basis state, low-mode bits, sign). The
/// sign reorders creation operators so that all retained modes precede the
/// low modes, which is the fermionic identification of the tensor product.
pub struct Factorization<'a> {
    full: &'a FockBasis,
    sub: &'a FockBasis,
    to_sub: Vec<Option<usize>>,
    to_full: Vec<usize>,
    low_mask: u128,
}

impl<'a> Factorization<'a> {
    pub fn new(full: &'a FockBasis, sub: &'a FockBasis) -> Result<Self, CascadeError> {
        let (lf, ls) = (&full.layout, &sub.layout);
        let mut to_sub = vec![None; lf.fermion_modes];
        let mut to_full = vec![0; ls.fermion_modes];
        let mut low_mask = 0u128;
        for bf in lf.blocks.iter().filter(|b| b.kind.is_fermionic()) {
            let bs = ls.block(bf.kind)?;
            let (gf, gs) = (lf.grid_of(bf.kind), ls.grid_of(bf.kind));
            for (p, pt) in gf.points.iter().enumerate() {
                match gs.points.iter().position(|q| q.id == pt.id) {
                    Some(q) => {
                        to_sub[bf.offset + p] = Some(bs.offset + q);
                        to_full[bs.offset + q] = bf.offset + p;
                    }
                    None => low_mask |= 1u128 << (bf.offset + p),
                }
            }
        }
        Ok(Factorization { full, sub, to_sub, to_full, low_mask })
    }

    /// (sub state, low bits, sign)
    pub fn split(&self, s: &FockState) -> (FockState, u128, f64) {
        let mut f = 0u128;
        let mut parity = 0u32;
        let low = s.fermions & self.low_mask;
        for m in 0..self.to_sub.len() {
            if !s.occupied(m) {
                continue;
            }
            if let Some(q) = self.to_sub[m] {
                f |= 1u128 << q;
                // low modes occupied before a retained one must be moved past it
                let below = if m == 0 { 0 } else { low & ((1u128 << m) - 1) };
                parity += below.count_ones();
            }
        }
        (FockState { fermions: f, bosons: s.bosons }, low, if parity % 2 == 0 { 1.0 } else { -1.0 })
    }

    pub fn join(&self, sub: &FockState, low: u128) -> FockState {
        let mut f = low;
        for (q, &m) in self.to_full.iter().enumerate() {
            if sub.occupied(q) {
                f |= 1u128 << m;
            }
        }
        FockState { fermions: f, bosons: sub.bosons }
    }

    /// max |op_full − (op_sub ⊗ 1 + 1 ⊗ diag(low))| over the full basis.
    pub fn defect(&self, op_full: &SparseHermitian, op_sub: &SparseHermitian, low_diag: Option<&[f64]>) -> f64 {
        let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); self.sub.dim()];
        for (r, c, v) in op_sub.triplets() {
            cols[c].push((r, v));
        }
        let mut t = Vec::new();
        for (c, s) in self.full.states().iter().enumerate() {
            let (sc, low, sign_c) = self.split(s);
            let ic = self.sub.index_of(&sc).expect("sub-basis closed under removing low modes");
            for &(r, v) in &cols[ic] {
                let full_r = self.join(self.sub.state(r), low);
                if let Some(ir) = self.full.index_of(&full_r) {
                    let (_, _, sign_r) = self.split(&full_r);
                    t.push((ir, c, v * (sign_r * sign_c)));
                }
            }
            if let Some(d) = low_diag {
                if d[c] != 0.0 {
                    t.push((c, c, C64::new(d[c], 0.0)));
                }
            }
        }
        let expected = SparseHermitian::from_triplets(self.full.dim(), t, false);
        op_full.add_scaled(&expected, C64::new(-1.0, 0.0)).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageFlags {
    /// E^n ∈ [−gK(G)B_βη/(1 − g₁K(G)C_βη), 0]
    pub bracket: bool,
    /// gap ≥ (1 − 3gD̃/γ)σ
    pub gap: bool,
    pub simple: bool,
    /// |E^n − E^{n+1}| ≤ gD̃σ_{n+1}/γ, absent at the last stage
    pub step: Option<bool>,
    pub pull_through: bool,
    pub pull_through_bound: bool,
    pub virial: bool,
    pub factorization: bool,
    pub ground_energy_match: bool,
}

impl StageFlags {
    pub fn all(&self) -> bool {
        self.bracket
            && self.gap
            && self.simple
            && self.step.unwrap_or(true)
            && self.pull_through
            && self.pull_through_bound
            && self.virial
            && self.factorization
            && self.ground_energy_match
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub n: usize,
    pub sigma_n: f64,
    pub dim: usize,
    pub retained_neutrino_points: usize,
    /// σ_n below the smallest neutrino radius
    pub under_resolved: bool,
    pub energy: f64,
    pub gap: f64,
    pub multiplicity: usize,
    pub h_norm: f64,
    pub bracket_bound: f64,
    /// σ used for the gap target (σ₁ at n = 0)
    pub gap_sigma: f64,
    pub gap_target: f64,
    pub step_difference: Option<f64>,
    pub step_bound: Option<f64>,
    /// Σ over retained neutrino modes of ‖c(ξ₂)φ^n‖²
    pub soft_content: f64,
    pub pull_through_residual: f64,
    pub pull_through_tolerance: f64,
    /// worst ‖gVφ‖ / (bound) over modes
    pub pull_through_bound_ratio: f64,
    pub virial_residual: f64,
    pub virial_tolerance: f64,
    pub a_norm: f64,
    /// H_σ vs H^σ ⊗ 1 + 1 ⊗ H^{(2)}_{0,σ}
    pub factorization_defect: f64,
    /// |E_n − E^n| with E_n the ground energy of H_σ on the full space
    pub ground_energy_mismatch: f64,
    /// K_n^{n+1}(G) directly, σ_nK̃(G), and the final bound of the chain
    pub k_window: Option<f64>,
    pub k_window_sigma_bound: Option<f64>,
    pub k_window_chain_bound: Option<f64>,
    pub flags: StageFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interlacing {
    pub n: usize,
    pub difference: f64,
    pub bound: f64,
    pub ok: bool,
}

/// |E^n − E^{n+1}| ≤ gD̃σ_{n+1}/γ for consecutive stages.
pub fn interlacing_check(stages: &[StageReport], g: f64, d_tilde: f64, gamma: f64) -> Vec<Interlacing> {
    stages
        .windows(2)
        .map(|w| {
            let difference = (w[0].energy - w[1].energy).abs();
            let bound = g * d_tilde * w[1].sigma_n / gamma;
            Interlacing { n: w[0].n, difference, bound, ok: difference <= bound }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFits {
    pub full_energy: f64,
    /// |E − E_n| per stage
    pub energy_gaps: Vec<(usize, f64)>,
    /// max_n |E − E_n| / (gσ_n²)
    pub d_measured: f64,
    /// slope of log|E − E_n| against log σ_n
    pub energy_slope: Option<f64>,
    /// ‖f_n(H − E) − f_n(H_n − E_n)‖ per stage
    pub function_gaps: Vec<(usize, f64)>,
    /// max_n of that distance / (gσ_n)
    pub c_measured: f64,
    pub function_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub ledger: ConstantLedger,
    pub g: f64,
    pub full_dim: usize,
    pub stages: Vec<StageReport>,
    pub interlacing: Vec<Interlacing>,
    pub fits: LimitFits,
    /// sup_n (Σ‖cφ^n‖²)^{½}/g, and the g_δ^{(2)} it implies
    pub c_of_g: f64,
    pub g_delta2: f64,
    pub verdict: bool,
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}

fn log_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let kept: Vec<&(f64, f64)> = pairs.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).collect();
    let x: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    fit_slope(&x, &y)
}

/// ⟨φ, N_ν φ⟩ over all neutrino blocks, i.e. Σ_modes ‖c(ξ₂)φ‖².
pub fn soft_content(basis: &FockBasis, phi: &[C64]) -> Result<f64, CascadeError> {
    let mut total = 0.0;
    for b in basis.layout.neutrino_blocks() {
        let n = assemble_number(basis, b.kind)?;
        total += n.diagonal().iter().zip(phi).map(|(d, z)| d.re * z.norm_sqr()).sum::<f64>();
    }
    Ok(total)
}

struct PullThrough {
    residual: f64,
    bound_ratio: f64,
}

fn pull_through(stage: &Stage, masses: &Masses, g: f64, e: f64, phi: &[C64]) -> Result<PullThrough, CascadeError> {
    let l = &stage.basis.layout;
    let h0d: Vec<f64> = stage.h0.diagonal().iter().map(|z| z.re).collect();
    let h0_half = h0d.iter().zip(phi).map(|(d, z)| d * z.norm_sqr()).sum::<f64>().max(0.0).sqrt();
    let (mut residual, mut bound_ratio): (f64, f64) = (0.0, 0.0);
    for b in l.neutrino_blocks() {
        let keys: Vec<KernelKey> =
            KernelKey::all(l.species).into_iter().filter(|k| k.neutrino_block() == b.kind).collect();
        for (p, pt) in l.neutrino.points.iter().enumerate() {
            let c = ladder_operator(&stage.basis, ModeId::Fermion(b.offset + p), false)?;
            let v = pull_through_operator(&stage.basis, &stage.kernels, b.kind, p)?;
            let cphi = c.matvec(phi);
            let hc = stage.h.matvec(&cphi);
            let vphi = v.matvec(phi);
            let w = masses.energy(b.kind, pt.radius);
            let d: Vec<C64> = hc.iter().zip(&cphi).zip(&vphi).map(|((a, x), y)| a + x * (w - e) - y * g).collect();
            residual = residual.max(norm(&d));
            let slices: f64 = keys.iter().map(|&k| stage.kernels.neutrino_slice_norm(k, pt.id)).sum();
            let g2: f64 = keys.iter().filter(|k| k.alpha == 2).map(|&k| stage.kernels.neutrino_slice_norm(k, pt.id)).sum();
            let rhs = g / masses.m_w.sqrt() * slices * h0_half + g * g2 * norm(phi);
            let lhs = g * norm(&vphi);
            bound_ratio = bound_ratio.max(if lhs == 0.0 { 0.0 } else { lhs / rhs });
        }
    }
    Ok(PullThrough { residual, bound_ratio })
}

pub struct CascadeRun {
    pub report: CascadeReport,
    /// wall-clock seconds per stage, kept out of the report
    pub timings: Vec<(usize, f64)>,
}

pub fn run_cascade(model: &Model, nmax: usize) -> Result<CascadeRun, CascadeError> {
    let led = &model.ledger;
    let g = model.g;
    let full_h = model.full_hamiltonian()?;
    let full_spec = decompose(&full_h, model.dense_limit)?;
    let full_ground = full_spec.ground();
    let min_radius = model.layout().neutrino.points.iter().map(|p| p.radius).fold(f64::INFINITY, f64::min);
    let mut stages = Vec::new();
    let mut timings = Vec::new();
    let mut energy_gaps = Vec::new();
    let mut function_gaps = Vec::new();
    let bump = led.bump();
    for n in 0..=nmax {
        let t0 = std::time::Instant::now();
        let stage = build_truncated_hamiltonian(model, n)?;
        let spec = decompose(&stage.h, model.dense_limit)?;
        let gs = spec.ground();
        let h_norm = spec.norm();
        let sigma = stage.sigma;
        let gap = gs.gap.unwrap_or(0.0);
        let gap_sigma = if n == 0 { led.sigma[1] } else { sigma };
        let gap_target = led.gap_fraction * gap_sigma;
        let bracket_bound = led.energy_bound;
        let simple = gs.multiplicity == 1;

        let soft = soft_content(&stage.basis, &gs.vector)?;
        let pt = pull_through(&stage, &model.masses, g, gs.energy, &gs.vector)?;
        let pt_tol = 1e-8 * h_norm;

        let bundle = build_dilation_generator(&model.layout().neutrino, Some(sigma))?;
        let a_n = bundle.second_quantize(&stage.basis, Which::Upper)?;
        let a_norm = operator_norm(&a_n, model.dense_limit)?;
        let vir = virial_check(&stage.h, gs.energy, &gs.vector, &a_n, 1e-8 * h_norm.max(1.0))?;
        let vir_tol = 1e-8 * h_norm * a_norm;

        // H_σ on the full space against H^σ ⊗ 1 + 1 ⊗ H^{(2)}_{0,σ}
        let h_cut_full = model.cut_hamiltonian(sigma)?;
        let fac = Factorization::new(&model.basis, &stage.basis)?;
        let low: Vec<f64> =
            assemble_h0(&model.basis, &model.masses, H0Part::NeutrinoBelow(sigma))?.diagonal().iter().map(|z| z.re).collect();
        let factorization_defect = fac.defect(&h_cut_full, &stage.h, Some(&low));
        let cut_spec = decompose(&h_cut_full, model.dense_limit)?;
        let e_n_full = cut_spec.ground().energy;
        let ground_energy_mismatch = (e_n_full - gs.energy).abs();

        energy_gaps.push((n, (full_ground.energy - e_n_full).abs()));
        let fh = full_spec.function_matrix(|x| bump.scaled(sigma, x - full_ground.energy));
        let fhn = cut_spec.function_matrix(|x| bump.scaled(sigma, x - e_n_full));
        let mut diff = fh.add_scaled(&fhn, C64::new(-1.0, 0.0))?;
        diff.hermitian = true;
        function_gaps.push((n, operator_norm(&diff, model.dense_limit)?));

        let (k_window, k_sig, k_chain) = match led.sigma.get(n + 1) {
            Some(&next) => {
                let kw = apply_indicator(&model.kernels, next, 2.0 * sigma).k_norm();
                (Some(kw), Some(sigma * led.k_tilde), Some(led.window_prefactor() * led.k_tilde * next / led.gamma))
            }
            None => (None, None, None),
        };
        stages.push(StageReport {
            n,
            sigma_n: sigma,
            dim: stage.basis.dim(),
            retained_neutrino_points: stage.basis.layout.neutrino.len(),
            under_resolved: sigma < min_radius,
            energy: gs.energy,
            gap,
            multiplicity: gs.multiplicity,
            h_norm,
            bracket_bound,
            gap_sigma,
            gap_target,
            step_difference: None,
            step_bound: None,
            soft_content: soft,
            pull_through_residual: pt.residual,
            pull_through_tolerance: pt_tol,
            pull_through_bound_ratio: pt.bound_ratio,
            virial_residual: vir.residual,
            virial_tolerance: vir_tol,
            a_norm,
            factorization_defect,
            ground_energy_mismatch,
            k_window,
            k_window_sigma_bound: k_sig,
            k_window_chain_bound: k_chain,
            flags: StageFlags {
                bracket: gs.energy <= 0.0 && gs.energy >= -bracket_bound,
                gap: gap >= gap_target,
                simple,
                step: None,
                pull_through: pt.residual <= pt_tol,
                pull_through_bound: pt.bound_ratio <= 1.0,
                virial: vir.residual <= vir_tol,
                factorization: factorization_defect <= 1e-12,
                ground_energy_match: ground_energy_mismatch <= 1e-10 * h_norm.max(1.0),
            },
        });
        timings.push((n, t0.elapsed().as_secs_f64()));
    }
    let interlacing = interlacing_check(&stages, g, led.d_tilde, led.gamma);
    for il in &interlacing {
        let s = &mut stages[il.n];
        s.step_difference = Some(il.difference);
        s.step_bound = Some(il.bound);
        s.flags.step = Some(il.ok);
    }
    let sig = |n: usize| led.sigma[n];
    let d_measured = if g > 0.0 {
        energy_gaps.iter().map(|&(n, d)| d / (g * sig(n).powi(2))).fold(0.0, f64::max)
    } else {
        0.0
    };
    let c_measured =
        if g > 0.0 { function_gaps.iter().map(|&(n, d)| d / (g * sig(n))).fold(0.0, f64::max) } else { 0.0 };
    let fits = LimitFits {
        full_energy: full_ground.energy,
        energy_slope: log_slope(&energy_gaps.iter().map(|&(n, d)| (sig(n), d)).collect::<Vec<_>>()),
        function_slope: log_slope(&function_gaps.iter().map(|&(n, d)| (sig(n), d)).collect::<Vec<_>>()),
        energy_gaps,
        d_measured,
        function_gaps,
        c_measured,
    };
    let c_of_g = if g > 0.0 { stages.iter().map(|s| s.soft_content.sqrt() / g).fold(0.0, f64::max) } else { 0.0 };
    let g_delta2 = if c_of_g > 0.0 { led.g_delta2(c_of_g) } else { led.g_delta1 };
    let verdict = stages.iter().all(|s| s.flags.all());
    Ok(CascadeRun {
        report: CascadeReport {
            ledger: led.clone(),
            g,
            full_dim: model.basis.dim(),
            stages,
            interlacing,
            fits,
            c_of_g,
            g_delta2,
            verdict,
        },
        timings,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftScaling {
    pub n: usize,
    /// (g, Σ‖cφ^n‖²)
    pub points: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    pub ok: bool,
}

/// Log-log slope of the soft-neutrino content of φ^n against g, reusing the
/// assembled H₀ and H_I of a stage.
pub fn soft_scaling(stage: &Stage, couplings: &[f64], dense_limit: usize) -> Result<SoftScaling, CascadeError> {
    let mut points = Vec::new();
    for &g in couplings {
        let h = total_hamiltonian(&stage.h0, &stage.hi, g)?;
        let gs = decompose(&h, dense_limit)?.ground();
        points.push((g, soft_content(&stage.basis, &gs.vector)?));
    }
    let slope = log_slope(&points);
    let ok = slope.map_or(false, |s| (s - 2.0).abs() <= 0.1);
    Ok(SoftScaling { n: stage.n, points, slope, ok })
}

/// Spectrum of H^n (used by callers that need more than the ground state).
pub fn stage_spectrum(stage: &Stage, dense_limit: usize) -> Result<Spectrum, CascadeError> {
    Ok(decompose(&stage.h, dense_limit)?)
}

/// Neutrino blocks of the layout, in block order.
pub fn neutrino_kinds(layout: &Layout) -> Vec<BlockKind> {
    layout.neutrino_blocks().map(|b| b.kind).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{compute_ledger, Mode, Physics, ThresholdPolicy};
    use crate::fock::Caps;
    use crate::grid::{Channel, ModeGrid, Scheme};
    use crate::kernels::{sample_kernel, KernelFamily, SampleOptions};

    fn model(g_frac: f64, shells: usize) -> Model {
        let phys = Physics { m1: 1.0, m2: 2.0, m3: 3.0, m_w: 4.0, lambda: 1.2, delta: 0.6, g: 0.0 };
        let ms = ModeGrid::build(Channel::Massive, 1.0, 1, Scheme::Midpoint, 1).unwrap();
        let nu = ModeGrid::build(Channel::Neutrino, 1.44, shells, Scheme::Midpoint, 1).unwrap();
        let bo = ModeGrid::build(Channel::Boson, 1.0, 1, Scheme::Midpoint, 1).unwrap();
        let k = sample_kernel(
            &KernelFamily::default(),
            &SampleOptions { species: 1, uv_cutoff: Some(1.2), helicity: false },
            &ms,
            &nu,
            &bo,
        )
        .unwrap();
        let l0 = compute_ledger(k.k_norm(), k.k_tilde(), &phys, 1.0, 1.0, &ThresholdPolicy::default(), 3, Mode::Explore)
            .unwrap();
        let g = g_frac * l0.g_delta1;
        let phys = Physics { g, ..phys };
        let led =
            compute_ledger(k.k_norm(), k.k_tilde(), &phys, 1.0, 1.0, &ThresholdPolicy::default(), 3, Mode::Certify).unwrap();
        let caps = Caps { neutrino: 1, antineutrino: 1, ..Caps::default() };
        let layout = Layout::new(1, ms, nu, bo, caps).unwrap();
        let masses = Masses { leptons: [1.0, 2.0, 3.0], m_w: 4.0 };
        Model::new(&layout, k, masses, led, g, 6000, 200_000).unwrap()
    }

    #[test]
    fn zero_coupling_gives_free_stages() {
        let m = model(0.0, 4);
        let run = run_cascade(&m, 3).unwrap();
        for s in &run.report.stages {
            assert_eq!(s.energy, 0.0);
            assert!(s.gap >= s.gap_sigma, "n={} gap {} σ {}", s.n, s.gap, s.gap_sigma);
            assert!(s.flags.all(), "{s:?}");
        }
        assert!(run.report.interlacing.iter().all(|i| i.difference == 0.0 && i.ok));
    }

    #[test]
    fn stage_zero_has_no_interaction() {
        let m = model(1e-3, 4);
        let st = build_truncated_hamiltonian(&m, 0).unwrap();
        assert_eq!(st.hi.nnz(), 0);
    }

    #[test]
    fn small_coupling_certifies() {
        let m = model(1e-3, 4);
        let run = run_cascade(&m, 3).unwrap();
        assert!(run.report.verdict, "{:#?}", run.report.stages);
        assert!(run.report.stages.iter().all(|s| s.factorization_defect <= 1e-12));
    }

    #[test]
    fn factorization_signs_roundtrip() {
        let m = model(0.0, 4);
        let st = build_truncated_hamiltonian(&m, 2).unwrap();
        let f = Factorization::new(&m.basis, &st.basis).unwrap();
        for s in m.basis.states() {
            let (sub, low, _) = f.split(s);
            assert_eq!(f.join(&sub, low), *s);
        }
    }

    #[test]
    fn interlacing_edge_cases() {
        assert!(interlacing_check(&[], 1.0, 1.0, 0.5).is_empty());
        assert_eq!(fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]), Some(2.0));
    }

    #[test]
    fn missing_modes_reported() {
        let m = model(0.0, 3);
        let mut m2 = m.clone();
        m2.ledger.sigma = vec![5.0];
        assert!(matches!(build_truncated_hamiltonian(&m2, 0), Err(CascadeError::NoModesAboveCutoff { .. })));
    }
}
