//! Discrete dilation generator on the neutrino grid, its infrared split, and
//! commutator-based checks (virial, positivity, resolvent probe).
//!
//! In shell coordinates u_i = (w_i)^{½} f(r_i) the generator is a = iD with
//! D = ½(RΔ + ΔR), Δ the central difference with zero boundary values. Then
//! −i a acts on kernels as r∂_r + 3/2 up to discretization error.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{build_truncated_hamiltonian, CascadeError, Factorization, Model};
use crate::constants::{Bump, ConstantLedger};
use crate::fock::{enumerate_basis, Caps, FockBasis, Layout};
use crate::grid::{Channel, ModeGrid, Scheme};
use crate::jet::Jet;
use crate::kernels::{
    apply_cutoff, apply_generator_to_kernel, cutoff_jet, formula_generator_kernel, sample_kernel, Cutoff, KernelError,
    KernelFamily, KernelSet, SampleOptions,
};
use crate::ops::{assemble_dgamma, assemble_interaction, inner, norm, OpsError, SparseHermitian};
use crate::spectral::{components, decompose, SpectralError, Spectrum};

type C64 = Complex64;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MourreError {
    #[error("the generator needs at least 3 neutrino shells, got {0}")]
    TooFewShells(usize),
    #[error("the generator needs a uniform (midpoint) radial grid")]
    NonUniformGrid,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not an eigenpair: residual {0:e}")]
    NotAnEigenpair(f64),
    #[error("bad probe parameter: {0}")]
    BadProbe(String),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Fock(#[from] crate::fock::FockError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    /// a
    Full,
    /// a^σ = η^σ a η^σ
    Upper,
    /// a_σ = a − a^σ
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBundle {
    pub sigma: Option<f64>,
    /// indexed by parent neutrino ids
    pub a: DMatrix<C64>,
    pub a_upper: DMatrix<C64>,
    pub a_lower: DMatrix<C64>,
    /// η^σ and η_σ at the parent points
    pub eta_upper: Vec<f64>,
    pub eta_lower: Vec<f64>,
    pub radii: Vec<f64>,
}

/// η^σ = χ^{2σ}, η_σ = χ_{2σ}, as jets in r.
pub fn eta_jet(upper: bool, sigma: f64, r: f64) -> Jet {
    let which = if upper { Cutoff::Outer } else { Cutoff::Inner };
    cutoff_jet(which, 2.0 * sigma, Jet::var(r))
}

pub fn build_dilation_generator(grid: &ModeGrid, sigma: Option<f64>) -> Result<GeneratorBundle, MourreError> {
    if grid.channel != Channel::Neutrino {
        return Err(MourreError::ShapeMismatch(format!("{:?} grid given to the generator", grid.channel)));
    }
    let ns = grid.radial.shells();
    if ns < 3 {
        return Err(MourreError::TooFewShells(ns));
    }
    let h = grid.radial.spacing().ok_or(MourreError::NonUniformGrid)?;
    let r = &grid.radial.radii;
    let nl = grid.labels.len();
    let n = ns * nl;
    let mut a = DMatrix::zeros(n, n);
    for l in 0..nl {
        for s in 0..ns - 1 {
            let d = (r[s] + r[s + 1]) / (4.0 * h);
            let (i, j) = (s * nl + l, (s + 1) * nl + l);
            a[(i, j)] = I * d;
            a[(j, i)] = -I * d;
        }
    }
    let radii: Vec<f64> = (0..n).map(|p| r[p / nl]).collect();
    let (eta_upper, eta_lower): (Vec<f64>, Vec<f64>) = match sigma {
        Some(s) => radii.iter().map(|&x| (eta_jet(true, s, x).v, eta_jet(false, s, x).v)).unzip(),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    let mut a_upper = a.clone();
    for i in 0..n {
        for j in 0..n {
            a_upper[(i, j)] *= eta_upper[i] * eta_upper[j];
        }
    }
    let a_lower = &a - &a_upper;
    Ok(GeneratorBundle { sigma, a, a_upper, a_lower, eta_upper, eta_lower, radii })
}

impl GeneratorBundle {
    pub fn matrix(&self, which: Which) -> &DMatrix<C64> {
        match which {
            Which::Full => &self.a,
            Which::Upper => &self.a_upper,
            Which::Lower => &self.a_lower,
        }
    }

    /// Restriction to the retained points of `grid` (a sub-grid of the parent).
    pub fn restricted(&self, which: Which, grid: &ModeGrid) -> DMatrix<C64> {
        let m = self.matrix(which);
        let ids: Vec<usize> = grid.points.iter().map(|p| p.id).collect();
        DMatrix::from_fn(ids.len(), ids.len(), |i, j| m[(ids[i], ids[j])])
    }

    /// A = Σ over neutrino blocks of dΓ(a).
    pub fn second_quantize(&self, basis: &FockBasis, which: Which) -> Result<SparseHermitian, MourreError> {
        let l = &basis.layout;
        if l.neutrino.parent_len() != self.a.nrows() {
            return Err(MourreError::ShapeMismatch("basis neutrino grid differs from the generator grid".into()));
        }
        let m = self.restricted(which, &l.neutrino);
        let mut acc = SparseHermitian::zeros(basis.dim());
        for b in l.neutrino_blocks() {
            acc = acc.add_scaled(&assemble_dgamma(basis, &m, b.kind)?, C64::new(1.0, 0.0))?;
        }
        acc.hermitian = true;
        Ok(acc)
    }

    /// (h(r), r·h′(r)) of the weight attached to `which` in formula mode.
    pub fn weight(&self, which: Which, r: f64) -> (f64, f64) {
        match (which, self.sigma) {
            (Which::Full, _) | (Which::Upper, None) => (1.0, 0.0),
            (Which::Lower, None) => (0.0, 0.0),
            (Which::Upper, Some(s)) | (Which::Lower, Some(s)) => {
                let j = eta_jet(which == Which::Upper, s, r);
                (j.v * j.v, r * 2.0 * j.v * j.d1)
            }
        }
    }
}

/// [H, iA] = i(HA − AH).
pub fn commutator(h: &SparseHermitian, a: &SparseHermitian) -> Result<SparseHermitian, MourreError> {
    let ha = h.matmul(a)?;
    let ah = a.matmul(h)?;
    let mut c = ha.add_scaled(&ah, C64::new(-1.0, 0.0))?.scale(I);
    c.hermitian = true;
    Ok(c)
}

/// dΓ(h·w⁽²⁾) + g·H_I(formula kernels) for the generator part `which`;
/// `cut` selects the H^σ variant with kernels χ̃^σ G.
pub fn formula_commutator(
    basis: &FockBasis,
    kernels: &KernelSet,
    bundle: &GeneratorBundle,
    which: Which,
    g: f64,
    cut: Option<f64>,
) -> Result<SparseHermitian, MourreError> {
    let l = &basis.layout;
    let mut diag = DMatrix::zeros(l.neutrino.len(), l.neutrino.len());
    for (p, pt) in l.neutrino.points.iter().enumerate() {
        diag[(p, p)] = C64::new(bundle.weight(which, pt.radius).0 * pt.radius, 0.0);
    }
    let mut acc = SparseHermitian::zeros(basis.dim());
    for b in l.neutrino_blocks() {
        acc = acc.add_scaled(&assemble_dgamma(basis, &diag, b.kind)?, C64::new(1.0, 0.0))?;
    }
    let k = match cut {
        Some(s) => apply_cutoff(kernels, s, Cutoff::Complement),
        None => kernels.clone(),
    };
    let fk = formula_generator_kernel(&k, |r| bundle.weight(which, r))?;
    let hi = assemble_interaction(basis, &fk)?;
    let mut out = acc.add_scaled(&hi, C64::new(g, 0.0))?;
    out.hermitian = true;
    Ok(out)
}

/// Kernels −i·a G with the generator part `which` restricted to the basis grid.
pub fn algebraic_generator_kernel(
    kernels: &KernelSet,
    bundle: &GeneratorBundle,
    which: Which,
) -> Result<KernelSet, MourreError> {
    Ok(apply_generator_to_kernel(kernels, bundle.matrix(which))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Virial {
    pub residual: f64,
    pub eigen_residual: f64,
}

/// |⟨ψ, [H, iA]ψ⟩| for an eigenpair (E, ψ).
pub fn virial_check(h: &SparseHermitian, e: f64, psi: &[C64], a: &SparseHermitian, tol: f64) -> Result<Virial, MourreError> {
    let hpsi = h.matvec(psi);
    let r: Vec<C64> = hpsi.iter().zip(psi).map(|(x, y)| x - y * e).collect();
    let eigen_residual = norm(&r);
    if eigen_residual > tol {
        return Err(MourreError::NotAnEigenpair(eigen_residual));
    }
    let apsi = a.matvec(psi);
    // ⟨ψ, i(HA − AH)ψ⟩ = i(⟨Hψ, Aψ⟩ − ⟨Aψ, Hψ⟩)
    let v = I * (inner(&hpsi, &apsi) - inner(&apsi, &hpsi));
    Ok(Virial { residual: v.norm(), eigen_residual })
}

/// Exact spectral norm through the component-wise spectrum.
pub fn operator_norm(m: &SparseHermitian, dense_limit: usize) -> Result<f64, MourreError> {
    let mut h = m.clone();
    h.hermitian = true;
    Ok(decompose(&h, dense_limit)?.norm())
}

fn compress(c: &SparseHermitian, v: &DMatrix<C64>) -> DMatrix<C64> {
    let cols: Vec<Vec<C64>> = (0..v.ncols()).map(|k| c.matvec(&v.column(k).iter().copied().collect::<Vec<_>>())).collect();
    let r = v.ncols();
    let mut out = DMatrix::zeros(r, r);
    for i in 0..r {
        let vi: Vec<C64> = v.column(i).iter().copied().collect();
        for j in 0..r {
            out[(i, j)] = inner(&vi, &cols[j]);
        }
    }
    (&out + out.adjoint()) * C64::new(0.5, 0.0)
}

fn min_eig(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// min eig of F·M·F − c·F² with F = diag(w).
fn weighted_form_min(m: &DMatrix<C64>, w: &[f64], c: f64) -> f64 {
    let r = w.len();
    let form = DMatrix::from_fn(r, r, |i, j| {
        let base = m[(i, j)] * (w[i] * w[j]);
        if i == j {
            base - C64::new(c * w[i] * w[i], 0.0)
        } else {
            base
        }
    });
    min_eig(&form)
}

pub struct MourreSetup<'a> {
    pub n: usize,
    pub sigma_n: f64,
    pub g: f64,
    pub ledger: &'a ConstantLedger,
    pub bump: Bump,
    /// full H and its spectrum
    pub h: &'a SparseHermitian,
    pub h_spectrum: &'a Spectrum,
    /// H_n on the full space and its spectrum
    pub h_n_spectrum: &'a Spectrum,
    /// [H, iA] and [H, iA_n] (algebraic)
    pub comm_full: &'a SparseHermitian,
    pub comm_lower: &'a SparseHermitian,
    /// formula-mode [H, iA_n]
    pub formula_lower: Option<&'a SparseHermitian>,
    pub a_norm: f64,
    pub c_tilde_user: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MourreReport {
    pub n: usize,
    pub sigma_n: f64,
    pub target: f64,
    pub tolerance: f64,
    pub range_rank: usize,
    pub empty_range: bool,
    /// min eig of f[H, iA_n]f − c f² on the range of f = f_n(H_n − E_n)
    pub algebraic_min: f64,
    pub algebraic_verdict: bool,
    /// trace of f[H, iA_n]f on that range
    pub algebraic_trace: f64,
    pub formula_min: Option<f64>,
    pub formula_verdict: Option<bool>,
    /// ‖V†([H, iA_n] − formula)V‖ on the range
    pub algebraic_formula_distance: Option<f64>,
    /// measured C̃ from f_n(H−E)[H, iA]f_n(H−E) ≥ c f² − C̃gσ_n
    pub c_tilde_measured: f64,
    pub c_delta_measured: f64,
    pub c_delta_user: Option<f64>,
    pub window: (f64, f64),
    pub window_rank: usize,
    /// min eig of E_Δ[H, iA]E_Δ − C_δγ²N⁻²σ_n E_Δ (measured C_δ)
    pub window_min: f64,
    pub window_trace: f64,
    pub window_verdict: bool,
    pub window_verdict_user: Option<bool>,
}

pub fn mourre_positivity(s: &MourreSetup) -> Result<MourreReport, MourreError> {
    let hnorm = s.h_spectrum.norm();
    let tolerance = 1e-8 * hnorm * s.a_norm.max(1.0);
    let target = s.ledger.mourre_target(s.sigma_n);
    let e_n = s.h_n_spectrum.ground().energy;
    let f = |x: f64| s.bump.scaled(s.sigma_n, x - e_n);
    let (w, v) = s.h_n_spectrum.function_range(f);
    let m = compress(s.comm_lower, &v);
    let algebraic_min = weighted_form_min(&m, &w, target);
    let algebraic_trace: f64 = (0..w.len()).map(|i| m[(i, i)].re * w[i] * w[i]).sum();
    let (formula_min, dist) = match s.formula_lower {
        Some(fc) => {
            let mf = compress(fc, &v);
            let d = if w.is_empty() { 0.0 } else { (&m - &mf).norm() };
            (Some(weighted_form_min(&mf, &w, target)), Some(d))
        }
        None => (None, None),
    };
    let e = s.h_spectrum.ground().energy;
    let f_full = |x: f64| s.bump.scaled(s.sigma_n, x - e);
    let (w2, v2) = s.h_spectrum.function_range(f_full);
    let m2 = compress(s.comm_full, &v2);
    let deficit = -weighted_form_min(&m2, &w2, target);
    let c_tilde_measured = if s.g > 0.0 && deficit.is_finite() { deficit.max(0.0) / (s.g * s.sigma_n) } else { 0.0 };
    let c_delta_measured = s.ledger.c_delta(c_tilde_measured, s.g);
    let c_delta_user = s.c_tilde_user.map(|ct| s.ledger.c_delta(ct, s.g));
    let window = s.ledger.window(s.sigma_n);
    let pairs = s.h_spectrum.pairs_in(e + window.0, e + window.1);
    let v3 = DMatrix::from_fn(s.h.dim(), pairs.len(), |i, k| pairs[k].1[i]);
    let m3 = compress(s.comm_full, &v3);
    let unit = s.ledger.gamma * s.ledger.gamma / (s.ledger.n as f64).powi(2) * s.sigma_n;
    let ones = vec![1.0; pairs.len()];
    let window_min = weighted_form_min(&m3, &ones, c_delta_measured * unit);
    let window_trace: f64 = (0..pairs.len()).map(|i| m3[(i, i)].re).sum();
    let win_ok = |cd: f64| pairs.is_empty() || (cd > 0.0 && weighted_form_min(&m3, &ones, cd * unit) >= -tolerance);
    Ok(MourreReport {
        n: s.n,
        sigma_n: s.sigma_n,
        target,
        tolerance,
        range_rank: w.len(),
        empty_range: w.is_empty(),
        algebraic_min,
        algebraic_verdict: algebraic_min >= -tolerance,
        algebraic_trace,
        formula_min,
        formula_verdict: formula_min.map(|x| x >= -tolerance),
        algebraic_formula_distance: dist,
        c_tilde_measured,
        c_delta_measured,
        c_delta_user,
        window,
        window_rank: pairs.len(),
        window_min,
        window_trace,
        window_verdict: win_ok(c_delta_measured),
        window_verdict_user: c_delta_user.map(win_ok),
    })
}

// ---------------------------------------------------------------------------
// Resolvent probe

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub lambda: f64,
    pub eps: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub s: f64,
    pub sector_dim: usize,
    pub rows: Vec<ProbeRow>,
    /// per λ: norms nondecreasing as ε decreases
    pub monotone_in_eps: Vec<(f64, bool)>,
}

/// ‖⟨A⟩^{−s}(H − λ − iε)^{−1}⟨A⟩^{−s}‖ on the sector of the H ∪ A sparsity
/// graph that contains the ground state of H.
pub fn resolvent_probe(
    h: &SparseHermitian,
    a: &SparseHermitian,
    lambdas: &[f64],
    epsilons: &[f64],
    s: f64,
    dense_limit: usize,
) -> Result<ProbeTable, MourreError> {
    if !(s > 0.5) {
        return Err(MourreError::BadProbe(format!("s must exceed 1/2, got {s}")));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(MourreError::BadProbe("ε must be positive".into()));
    }
    let ground = crate::spectral::ground_state(h, 1e-10, dense_limit)?;
    let mut anchor = 0;
    for (i, z) in ground.vector.iter().enumerate() {
        if z.norm() > ground.vector[anchor].norm() {
            anchor = i;
        }
    }
    let union = h.add_scaled(a, C64::new(1.0, 0.0))?;
    let sector = components(&union).into_iter().find(|c| c.binary_search(&anchor).is_ok()).unwrap();
    if sector.len() > dense_limit {
        return Err(SpectralError::DimensionOverflow { dim: sector.len(), limit: dense_limit }.into());
    }
    let hs = h.submatrix(&sector).to_dense();
    let as_ = a.submatrix(&sector).to_dense();
    let ea = nalgebra::SymmetricEigen::new(as_);
    let wdiag = DMatrix::from_diagonal(&ea.eigenvalues.map(|x| C64::new((1.0 + x * x).powf(-s / 2.0), 0.0)));
    let wa = &ea.eigenvectors * wdiag * ea.eigenvectors.adjoint();
    let eh = nalgebra::SymmetricEigen::new(hs);
    let mut rows = Vec::new();
    let mut monotone = Vec::new();
    let mut eps_sorted = epsilons.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    for &lam in lambdas {
        let mut prev = 0.0;
        let mut mono = true;
        for &eps in &eps_sorted {
            let d = DMatrix::from_diagonal(&eh.eigenvalues.map(|x| C64::new(x - lam, -eps).inv()));
            let r = &eh.eigenvectors * d * eh.eigenvectors.adjoint();
            let m = &wa * r * &wa;
            let nrm = m.singular_values().iter().copied().fold(0.0, f64::max);
            if nrm < prev * (1.0 - 1e-12) {
                mono = false;
            }
            prev = nrm;
            rows.push(ProbeRow { lambda: lam, eps, norm: nrm });
        }
        monotone.push((lam, mono));
    }
    Ok(ProbeTable { s, sector_dim: sector.len(), rows, monotone_in_eps: monotone })
}

// ---------------------------------------------------------------------------
// Refinement study

/// Norm of dΓ(X) on one fermionic block with at most `cap` particles:
/// the extreme sums of at most `cap` distinct eigenvalues of X.
pub fn fock_block_norm(x: &DMatrix<C64>, cap: usize) -> f64 {
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new((x + x.adjoint()) * C64::new(0.5, 0.0)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let mut best: f64 = 0.0;
    for k in 1..=cap.min(ev.len()) {
        let lo: f64 = ev[..k].iter().sum();
        let hi: f64 = ev[ev.len() - k..].iter().sum();
        best = best.max(lo.abs()).max(hi.abs());
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub shells: usize,
    /// ‖i[w,a] − w‖/‖w‖ on one particle
    pub dilation_one_particle: f64,
    /// ‖[H₀, iA] − dΓ(w)‖/‖dΓ(w)‖ on a neutrino block with the configured cap
    pub dilation_fock: f64,
    /// ‖(i[w,a] − w)u‖/‖wu‖ for the sampled kernel profile u
    pub dilation_smooth_probe: f64,
    /// K(−iaG − formula)/K(−iaG)
    pub formula_kernel_distance: f64,
    /// ‖H_I(−iaG) − H_I(formula)‖/‖H_I(−iaG)‖ on a capped Fock space
    pub formula_operator_distance: f64,
    pub fock_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub rows: Vec<RefinementRow>,
    pub dilation_monotone: bool,
    pub dilation_final_ok: bool,
    pub formula_monotone: bool,
}

pub struct RefinementSpec<'a> {
    pub neutrino_pmax: f64,
    pub massive_pmax: f64,
    pub boson_pmax: f64,
    pub shells: &'a [usize],
    pub family: &'a KernelFamily,
    pub uv_cutoff: Option<f64>,
    pub neutrino_cap: usize,
    pub dense_limit: usize,
}

pub fn refinement_study(spec: &RefinementSpec) -> Result<RefinementStudy, MourreError> {
    let mut rows = Vec::new();
    for &ns in spec.shells {
        let nu = ModeGrid::build(Channel::Neutrino, spec.neutrino_pmax, ns, Scheme::Midpoint, 1)
            .map_err(|e| MourreError::ShapeMismatch(e.to_string()))?;
        let ms = ModeGrid::build(Channel::Massive, spec.massive_pmax, 1, Scheme::Midpoint, 1)
            .map_err(|e| MourreError::ShapeMismatch(e.to_string()))?;
        let bo = ModeGrid::build(Channel::Boson, spec.boson_pmax, 1, Scheme::Midpoint, 1)
            .map_err(|e| MourreError::ShapeMismatch(e.to_string()))?;
        let bundle = build_dilation_generator(&nu, None)?;
        let w = DMatrix::from_fn(ns, ns, |i, j| if i == j { C64::new(bundle.radii[i], 0.0) } else { ZERO });
        let iwa = (&w * &bundle.a - &bundle.a * &w) * I;
        let diff = &iwa - &w;
        let op_norm = |m: &DMatrix<C64>| m.singular_values().iter().copied().fold(0.0, f64::max);
        let dilation_one_particle = op_norm(&diff) / op_norm(&w);
        let dilation_fock = fock_block_norm(&diff, spec.neutrino_cap) / fock_block_norm(&w, spec.neutrino_cap);
        let k = sample_kernel(
            spec.family,
            &SampleOptions { species: 1, uv_cutoff: spec.uv_cutoff, helicity: false },
            &ms,
            &nu,
            &bo,
        )?;
        let arr = &k.arrays[0].values;
        let u = nalgebra::DVector::from_fn(ns, |j, _| arr[k.idx(0, j, 0)]);
        let dilation_smooth_probe = (&diff * &u).norm() / (&w * &u).norm();
        let alg = algebraic_generator_kernel(&k, &bundle, Which::Full)?;
        let form = formula_generator_kernel(&k, |r| bundle.weight(Which::Full, r))?;
        let mut delta = alg.clone();
        for (d, f) in delta.arrays.iter_mut().zip(&form.arrays) {
            d.values.iter_mut().zip(&f.values).for_each(|(x, y)| *x -= y);
        }
        let formula_kernel_distance = delta.k_norm() / alg.k_norm();
        let caps = Caps { particle: 1, antiparticle: 1, neutrino: 1, antineutrino: 1, boson: 1 };
        let layout = Layout::new(1, ms.clone(), nu.clone(), bo.clone(), caps)?;
        let basis = enumerate_basis(&layout, 200_000)?;
        let h_alg = assemble_interaction(&basis, &alg)?;
        let h_delta = assemble_interaction(&basis, &delta)?;
        let formula_operator_distance =
            operator_norm(&h_delta, spec.dense_limit)? / operator_norm(&h_alg, spec.dense_limit)?;
        rows.push(RefinementRow {
            shells: ns,
            dilation_one_particle,
            dilation_fock,
            dilation_smooth_probe,
            formula_kernel_distance,
            formula_operator_distance,
            fock_dim: basis.dim(),
        });
    }
    let mono = |f: &dyn Fn(&RefinementRow) -> f64| rows.windows(2).all(|p| f(&p[1]) < f(&p[0]));
    let dilation_monotone = mono(&|r| r.dilation_fock);
    let formula_monotone = mono(&|r| r.formula_operator_distance);
    let dilation_final_ok = rows.last().map_or(false, |r| r.dilation_fock <= 0.05);
    Ok(RefinementStudy { rows, dilation_monotone, dilation_final_ok, formula_monotone })
}

// ---------------------------------------------------------------------------
// Stage runs on a cascade model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MourreStage {
    pub positivity: MourreReport,
    /// |⟨φ^n, [H^n, iA^n]φ^n⟩| and its tolerance 1e-8‖H^n‖‖A^n‖
    pub virial: Virial,
    pub virial_tolerance: f64,
    /// ‖A − A^n − A_n‖
    pub split_defect: f64,
    /// [H_n, iA^n] against [H^n, iA^n] ⊗ 1
    pub factorization_defect: f64,
    /// formula-mode [H_n, iA^n] with cut kernels against the stage version ⊗ 1
    pub formula_factorization_defect: f64,
    pub a_norm: f64,
    pub a_upper_norm: f64,
}

impl MourreStage {
    pub fn factorization_ok(&self) -> bool {
        self.split_defect <= 1e-12 && self.factorization_defect <= 1e-10 && self.formula_factorization_defect <= 1e-10
    }
}

/// Positivity, virial and factorization checks at each stage in `stages`.
pub fn run_mourre(
    model: &Model,
    stages: &[usize],
    formula: bool,
    c_tilde_user: Option<f64>,
) -> Result<Vec<MourreStage>, CascadeError> {
    let dl = model.dense_limit;
    let h = model.full_hamiltonian()?;
    let h_spec = decompose(&h, dl)?;
    let mut out = Vec::new();
    for &n in stages {
        let sigma = model.sigma(n)?;
        let bundle = build_dilation_generator(&model.layout().neutrino, Some(sigma))?;
        let a = bundle.second_quantize(&model.basis, Which::Full)?;
        let a_up = bundle.second_quantize(&model.basis, Which::Upper)?;
        let a_lo = bundle.second_quantize(&model.basis, Which::Lower)?;
        let split_defect = a.add_scaled(&a_up, C64::new(-1.0, 0.0))?.add_scaled(&a_lo, C64::new(-1.0, 0.0))?.max_abs();
        let a_norm = operator_norm(&a, dl)?;
        let comm_full = commutator(&h, &a)?;
        let comm_lower = commutator(&h, &a_lo)?;
        let formula_lower = if formula {
            Some(formula_commutator(&model.basis, &model.kernels, &bundle, Which::Lower, model.g, None)?)
        } else {
            None
        };
        let h_n = model.cut_hamiltonian(sigma)?;
        let h_n_spec = decompose(&h_n, dl)?;
        let positivity = mourre_positivity(&MourreSetup {
            n,
            sigma_n: sigma,
            g: model.g,
            ledger: &model.ledger,
            bump: model.ledger.bump(),
            h: &h,
            h_spectrum: &h_spec,
            h_n_spectrum: &h_n_spec,
            comm_full: &comm_full,
            comm_lower: &comm_lower,
            formula_lower: formula_lower.as_ref(),
            a_norm,
            c_tilde_user,
        })?;

        let stage = build_truncated_hamiltonian(model, n)?;
        let a_stage = bundle.second_quantize(&stage.basis, Which::Upper)?;
        let a_upper_norm = operator_norm(&a_stage, dl)?;
        let gs = decompose(&stage.h, dl)?.ground();
        let hn_norm = operator_norm(&stage.h, dl)?;
        let virial = virial_check(&stage.h, gs.energy, &gs.vector, &a_stage, 1e-8 * hn_norm.max(1.0))?;
        let fac = Factorization::new(&model.basis, &stage.basis)?;
        let factorization_defect = fac.defect(&commutator(&h_n, &a_up)?, &commutator(&stage.h, &a_stage)?, None);
        let f_full = formula_commutator(&model.basis, &model.kernels, &bundle, Which::Upper, model.g, Some(sigma))?;
        let f_stage = formula_commutator(&stage.basis, &model.kernels, &bundle, Which::Upper, model.g, Some(sigma))?;
        let formula_factorization_defect = fac.defect(&f_full, &f_stage, None);
        out.push(MourreStage {
            positivity,
            virial,
            virial_tolerance: 1e-8 * hn_norm * a_upper_norm,
            split_defect,
            factorization_defect,
            formula_factorization_defect,
            a_norm,
            a_upper_norm,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{random_unit_vector, seeded_rng};
    use proptest::prelude::*;

    fn nu(shells: usize) -> ModeGrid {
        ModeGrid::build(Channel::Neutrino, 1.44, shells, Scheme::Midpoint, 1).unwrap()
    }

    #[test]
    fn generator_is_hermitian_and_splits() {
        let b = build_dilation_generator(&nu(12), Some(0.2)).unwrap();
        assert_eq!((&b.a - b.a.adjoint()).norm(), 0.0);
        assert_eq!((&b.a_upper - b.a_upper.adjoint()).norm(), 0.0);
        assert!((&b.a - &b.a_upper - &b.a_lower).norm() == 0.0);
        for (u, l) in b.eta_upper.iter().zip(&b.eta_lower) {
            assert!((u * u + l * l - 1.0).abs() < 1e-12);
        }
        assert!(matches!(build_dilation_generator(&nu(2), None), Err(MourreError::TooFewShells(2))));
        let gauss = ModeGrid::build(Channel::Neutrino, 1.44, 6, Scheme::Gauss, 1).unwrap();
        assert!(matches!(build_dilation_generator(&gauss, None), Err(MourreError::NonUniformGrid)));
    }

    #[test]
    fn constant_profile_gets_three_halves() {
        // G radially constant: stored values ∝ (w_i)^{½} ∝ r_i
        let g = nu(40);
        let b = build_dilation_generator(&g, None).unwrap();
        let u: Vec<C64> = g.points.iter().map(|p| C64::new(p.weight.sqrt(), 0.0)).collect();
        for i in 5..30 {
            let mut acc = ZERO;
            for j in 0..40 {
                acc += -I * b.a[(i, j)] * u[j];
            }
            assert!((acc / u[i] - C64::new(1.5, 0.0)).norm() < 1e-3, "shell {i}: {}", acc / u[i]);
        }
    }

    #[test]
    fn commutator_of_self_vanishes() {
        let mut rng = seeded_rng(2);
        let mut t = Vec::new();
        for i in 0..6 {
            let v = random_unit_vector(1, &mut rng)[0];
            t.push((i, (i + 1) % 6, v));
            t.push(((i + 1) % 6, i, v.conj()));
        }
        let h = SparseHermitian::from_triplets(6, t, true);
        assert!(commutator(&h, &h).unwrap().max_abs() < 1e-15);
        let d = SparseHermitian::from_diagonal(&[1.0, 2.0, 3.0]);
        assert_eq!(commutator(&d, &d).unwrap().nnz(), 0);
    }

    #[test]
    fn fock_norm_matches_brute_force() {
        let g = nu(4);
        let b = build_dilation_generator(&g, None).unwrap();
        let caps = Caps { particle: 0, antiparticle: 0, neutrino: 2, antineutrino: 0, boson: 0 };
        let layout = Layout::new(
            1,
            ModeGrid::build(Channel::Massive, 1.0, 1, Scheme::Midpoint, 1).unwrap(),
            g.clone(),
            ModeGrid::build(Channel::Boson, 1.0, 1, Scheme::Midpoint, 1).unwrap(),
            Caps { boson: 0, ..caps },
        )
        .unwrap();
        let basis = enumerate_basis(&layout, 10_000).unwrap();
        let dg = assemble_dgamma(&basis, &b.a, crate::fock::BlockKind::Neutrino(1)).unwrap();
        let brute = operator_norm(&dg, 1000).unwrap();
        assert!((brute - fock_block_norm(&b.a, 2)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn virial_vanishes_for_random_pairs(seed in 0u64..500) {
            let mut rng = seeded_rng(seed);
            let n = 7;
            let herm = |rng: &mut _| {
                let v = random_unit_vector(n * n, rng);
                let m = DMatrix::from_iterator(n, n, v);
                SparseHermitian::from_dense(&(&m + m.adjoint()), true)
            };
            let h = herm(&mut rng);
            let a = herm(&mut rng);
            let s = decompose(&h, 100).unwrap();
            let g = s.ground();
            let v = virial_check(&h, g.energy, &g.vector, &a, 1e-10).unwrap();
            prop_assert!(v.residual <= 1e-10 * operator_norm(&h, 100).unwrap().max(1.0) * operator_norm(&a, 100).unwrap().max(1.0));
        }
    }
}
