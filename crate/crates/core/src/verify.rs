//! Algebra checks (CAR/CCR, smeared-operator norms) and the N_τ / relative
//! bound inequalities, measured on seeded random vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fock::{enumerate_basis, BlockKind, Caps, FockBasis, Layout, ModeId};
use crate::grid::{Channel, ModeGrid, Scheme};
use crate::kernels::{KernelKey, KernelSet};
use crate::ops::{
    assemble_h0, assemble_interaction, assemble_interaction_term, assemble_species_number, ladder_operator, norm,
    pair_creation, random_unit_vector, seeded_rng, smeared_creation, H0Part, Masses, OpsError, SparseHermitian,
};
use crate::spectral::decompose;

type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub car_dim: usize,
    /// max |{x_i, x_j*} − δ_ij| and |{x_i, x_j}| over same-species pairs
    pub car_defect: f64,
    pub cross_species_defect: f64,
    /// CCR below the boson cap, plus fermion/boson commutation
    pub ccr_defect: f64,
    pub smeared_dim: usize,
    /// max |‖x*(φ)‖ − ‖φ‖| over the random φ
    pub smeared_norm_defect: f64,
    pub smeared_samples: usize,
    pub hermiticity_defect: f64,
    pub car_ok: bool,
    pub ccr_ok: bool,
    pub smeared_ok: bool,
    pub hermitian_ok: bool,
}

impl AlgebraReport {
    pub fn all(&self) -> bool {
        self.car_ok && self.ccr_ok && self.smeared_ok && self.hermitian_ok
    }
}

fn grid(channel: Channel, shells: usize, labels: usize) -> ModeGrid {
    ModeGrid::build(channel, 1.0, shells, Scheme::Midpoint, labels).expect("fixed grid")
}

fn sum(a: &SparseHermitian, b: &SparseHermitian, s: f64) -> Result<SparseHermitian, OpsError> {
    a.add_scaled(b, C64::new(s, 0.0))
}

/// Runs on two fixed small layouts: two species with every fermionic block
/// uncapped (CAR exact everywhere), and one species with a multi-mode block
/// for the smeared-operator norms.
pub fn algebra_suite(seed: u64, kernels_for_hermiticity: Option<(&FockBasis, &SparseHermitian)>) -> Result<AlgebraReport, OpsError> {
    let caps = Caps { particle: 1, antiparticle: 1, neutrino: 1, antineutrino: 1, boson: 1 };
    let layout = Layout::new(
        2,
        grid(Channel::Massive, 1, 1),
        grid(Channel::Neutrino, 1, 1),
        grid(Channel::Boson, 1, 1),
        caps,
    )?;
    let basis = enumerate_basis(&layout, 4096)?;
    let dim = basis.dim();
    let ident = SparseHermitian::identity(dim);
    let fermions: Vec<(usize, u8)> = layout
        .blocks
        .iter()
        .filter(|b| b.kind.is_fermionic())
        .flat_map(|b| b.modes().map(move |m| (m, b.kind.species().unwrap())))
        .collect();
    let ann: Vec<SparseHermitian> =
        fermions.iter().map(|&(m, _)| ladder_operator(&basis, ModeId::Fermion(m), false)).collect::<Result<_, _>>()?;
    let cre: Vec<SparseHermitian> = ann.iter().map(|a| a.adjoint()).collect();
    let (mut car, mut cross): (f64, f64) = (0.0, 0.0);
    for (i, &(_, si)) in fermions.iter().enumerate() {
        for (j, &(_, sj)) in fermions.iter().enumerate() {
            let mut ac = sum(&ann[i].matmul(&cre[j])?, &cre[j].matmul(&ann[i])?, 1.0)?;
            if i == j {
                ac = sum(&ac, &ident, -1.0)?;
            }
            let aa = sum(&ann[i].matmul(&ann[j])?, &ann[j].matmul(&ann[i])?, 1.0)?;
            let d = ac.max_abs().max(aa.max_abs());
            if si == sj {
                car = car.max(d);
            } else {
                cross = cross.max(d);
            }
        }
    }
    let wb = layout.blocks.iter().filter(|b| !b.kind.is_fermionic()).flat_map(|b| b.modes()).collect::<Vec<_>>();
    let mut ccr: f64 = 0.0;
    for &k in &wb {
        let ak = ladder_operator(&basis, ModeId::Boson(k), false)?;
        for &q in &wb {
            let aq = ladder_operator(&basis, ModeId::Boson(q), false)?;
            let mut c = sum(&ak.matmul(&aq.adjoint())?, &aq.adjoint().matmul(&ak)?, -1.0)?;
            if k == q {
                c = sum(&c, &ident, -1.0)?;
            }
            // columns with room in mode q
            for (row, col, v) in c.triplets() {
                let _ = row;
                if basis.state(col).boson_count(q) < layout.caps.boson {
                    ccr = ccr.max(v.norm());
                }
            }
            let cc = sum(&ak.matmul(&aq)?, &aq.matmul(&ak)?, -1.0)?;
            ccr = ccr.max(cc.max_abs());
        }
        for f in &ann {
            let c = sum(&ak.matmul(f)?, &f.matmul(&ak)?, -1.0)?;
            ccr = ccr.max(c.max_abs());
        }
    }

    let caps2 = Caps { particle: 1, antiparticle: 1, neutrino: 2, antineutrino: 2, boson: 1 };
    let layout2 = Layout::new(
        1,
        grid(Channel::Massive, 1, 2),
        grid(Channel::Neutrino, 3, 1),
        grid(Channel::Boson, 1, 1),
        caps2,
    )?;
    let basis2 = enumerate_basis(&layout2, 4096)?;
    let mut rng = seeded_rng(seed);
    let samples = 20;
    let mut smeared: f64 = 0.0;
    for s in 0..samples {
        let block = if s % 2 == 0 { BlockKind::Particle(1) } else { BlockKind::Neutrino(1) };
        let n = layout2.block(block)?.len;
        let raw = random_unit_vector(n, &mut rng);
        let scale = 0.5 + s as f64 / samples as f64;
        let phi: Vec<C64> = raw.iter().map(|z| z * scale).collect();
        let op = smeared_creation(&basis2, block, &phi)?;
        let mut bb = op.adjoint().matmul(&op)?;
        bb.hermitian = true;
        let top = decompose(&bb, 4096).map_err(|e| OpsError::ShapeMismatch(e.to_string()))?.norm().sqrt();
        smeared = smeared.max((top - norm(&phi)).abs());
    }
    let herm = kernels_for_hermiticity.map(|(_, h)| h.hermiticity_defect()).unwrap_or(0.0);
    Ok(AlgebraReport {
        car_dim: dim,
        car_defect: car,
        cross_species_defect: cross,
        ccr_defect: ccr,
        smeared_dim: basis2.dim(),
        smeared_norm_defect: smeared,
        smeared_samples: samples,
        hermiticity_defect: herm,
        car_ok: car <= 1e-12 && cross <= 1e-12,
        ccr_ok: ccr <= 1e-12,
        smeared_ok: smeared <= 1e-10,
        hermitian_ok: herm <= 1e-12,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub holds: bool,
}

impl RatioStats {
    pub fn of(mut r: Vec<f64>) -> Self {
        r.sort_by(f64::total_cmp);
        let count = r.len();
        if count == 0 {
            return RatioStats { count, min: 0.0, median: 0.0, max: 0.0, holds: true };
        }
        let median = if count % 2 == 1 { r[count / 2] } else { 0.5 * (r[count / 2 - 1] + r[count / 2]) };
        RatioStats { count, min: r[0], median, max: r[count - 1], holds: r[count - 1] <= 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    pub seed: u64,
    /// ‖B(k)Φ‖ / (‖G(·,·,k)‖‖(N_ℓ+1)^{½}Φ‖), worst over keys and k
    pub n_tau_creation: RatioStats,
    /// ‖B(k)*Φ‖ / (‖G(·,·,k)‖‖N_ℓ^{½}Φ‖)
    pub n_tau_annihilation: RatioStats,
    /// boson-annihilating half of each term against its bound
    pub boson_annihilating: RatioStats,
    /// boson-creating half, one entry per η, with η‖(N_ℓ+1)Ψ‖²
    pub boson_creating: Vec<(f64, RatioStats)>,
    /// same with η‖(N_ℓ+1)^{½}Ψ‖², diagnostic only
    pub boson_creating_literal: Vec<(f64, RatioStats)>,
    /// ‖H_IΨ‖ / (K(G)(C_βη‖H₀Ψ‖ + B_βη‖Ψ‖))
    pub relative_bound: RatioStats,
}

impl BoundReport {
    pub fn all(&self) -> bool {
        self.n_tau_creation.holds
            && self.n_tau_annihilation.holds
            && self.boson_annihilating.holds
            && self.boson_creating.iter().all(|(_, s)| s.holds)
            && self.relative_bound.holds
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

fn diag_form(d: &[f64], psi: &[C64]) -> f64 {
    d.iter().zip(psi).map(|(x, z)| x * z.norm_sqr()).sum()
}

#[allow(clippy::too_many_arguments)]
pub fn bound_suite(
    basis: &FockBasis,
    kernels: &KernelSet,
    masses: &Masses,
    c_beta_eta: f64,
    b_beta_eta: f64,
    etas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<BoundReport, OpsError> {
    let l = &basis.layout;
    let dim = basis.dim();
    let keys = KernelKey::all(l.species);
    let h0 = assemble_h0(basis, masses, H0Part::All)?;
    let h0d: Vec<f64> = h0.diagonal().iter().map(|z| z.re).collect();
    let hi = assemble_interaction(basis, kernels)?;
    let k = kernels.k_norm();
    let mut rng = seeded_rng(seed);
    let vectors: Vec<Vec<C64>> = (0..samples).map(|_| random_unit_vector(dim, &mut rng)).collect();
    let lepton_only: Vec<Vec<C64>> = vectors
        .iter()
        .map(|v| {
            let mut w: Vec<C64> =
                v.iter().zip(basis.states()).map(|(z, s)| if s.bosons == 0 { *z } else { C64::new(0.0, 0.0) }).collect();
            let n = norm(&w);
            w.iter_mut().for_each(|z| *z /= n);
            w
        })
        .collect();

    let mut number: Vec<Vec<f64>> = Vec::new();
    for sp in 1..=l.species as u8 {
        number.push(assemble_species_number(basis, sp)?.diagonal().iter().map(|z| z.re).collect());
    }
    let mut pairs: Vec<(KernelKey, usize, SparseHermitian, f64)> = Vec::new();
    for &key in &keys {
        for p in 0..l.boson.len() {
            let id = l.boson.points[p].id;
            pairs.push((key, p, pair_creation(basis, kernels, key, id)?, kernels.boson_slice_norm(key, id)));
        }
    }
    let mut terms = Vec::new();
    for &key in &keys {
        let t = assemble_interaction_term(basis, kernels, key)?;
        let h3: Vec<f64> =
            assemble_h0(basis, masses, H0Part::Block(key.boson_block()))?.diagonal().iter().map(|z| z.re).collect();
        let (annih, creat) = if key.alpha == 1 { (t.clone(), t.adjoint()) } else { (t.adjoint(), t) };
        let gw = kernels.term_norm_over_boson_energy(key, masses.m_w);
        let g2 = kernels.term_norm(key).powi(2);
        terms.push((key, annih, creat, h3, gw, g2));
    }

    let (mut cre, mut ann, mut banh) = (Vec::new(), Vec::new(), Vec::new());
    let mut bcre: Vec<Vec<f64>> = vec![Vec::new(); etas.len()];
    let mut blit: Vec<Vec<f64>> = vec![Vec::new(); etas.len()];
    let mut rel = Vec::new();
    for (psi, phi) in vectors.iter().zip(&lepton_only) {
        let (mut wc, mut wa): (f64, f64) = (0.0, 0.0);
        for (key, _, b, gk) in &pairs {
            let nl = &number[key.species as usize - 1];
            let n_half = diag_form(nl, phi).sqrt();
            let n1_half = (diag_form(nl, phi) + 1.0).sqrt();
            wc = wc.max(ratio(norm(&b.matvec(phi)), gk * n1_half));
            wa = wa.max(ratio(norm(&b.adjoint().matvec(phi)), gk * n_half));
        }
        cre.push(wc);
        ann.push(wa);
        let mut wb: f64 = 0.0;
        let mut wcr = vec![0.0f64; etas.len()];
        let mut wlit = vec![0.0f64; etas.len()];
        for (key, annih, creat, h3, gw, g2) in &terms {
            let nl = &number[key.species as usize - 1];
            let n1h3: Vec<f64> = nl.iter().zip(h3).map(|(n, e)| (n + 1.0) * e).collect();
            let q = diag_form(&n1h3, psi);
            let n1: Vec<f64> = nl.iter().map(|n| n + 1.0).collect();
            let n1sq: Vec<f64> = n1.iter().map(|x| x * x).collect();
            let lhs_a = norm(&annih.matvec(psi)).powi(2);
            wb = wb.max(ratio(lhs_a, gw * q));
            let lhs_c = norm(&creat.matvec(psi)).powi(2);
            for (e, &eta) in etas.iter().enumerate() {
                let rhs = gw * q + g2 * (eta * diag_form(&n1sq, psi) + 1.0 / (4.0 * eta));
                let lit = gw * q + g2 * (eta * diag_form(&n1, psi) + 1.0 / (4.0 * eta));
                wcr[e] = wcr[e].max(ratio(lhs_c, rhs));
                wlit[e] = wlit[e].max(ratio(lhs_c, lit));
            }
        }
        banh.push(wb);
        for e in 0..etas.len() {
            bcre[e].push(wcr[e]);
            blit[e].push(wlit[e]);
        }
        let h0psi: Vec<C64> = psi.iter().zip(&h0d).map(|(z, e)| z * e).collect();
        rel.push(ratio(norm(&hi.matvec(psi)), k * (c_beta_eta * norm(&h0psi) + b_beta_eta * norm(psi))));
    }
    Ok(BoundReport {
        samples,
        seed,
        n_tau_creation: RatioStats::of(cre),
        n_tau_annihilation: RatioStats::of(ann),
        boson_annihilating: RatioStats::of(banh),
        boson_creating: etas.iter().copied().zip(bcre.into_iter().map(RatioStats::of)).collect(),
        boson_creating_literal: etas.iter().copied().zip(blit.into_iter().map(RatioStats::of)).collect(),
        relative_bound: RatioStats::of(rel),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{b_beta_eta, c_beta_eta};
    use crate::kernels::{sample_kernel, KernelFamily, SampleOptions};

    #[test]
    fn algebra_suite_passes() {
        let r = algebra_suite(1, None).unwrap();
        assert!(r.car_dim <= 2048 && r.smeared_dim <= 2048);
        assert!(r.all(), "{r:?}");
        assert!(r.cross_species_defect == 0.0);
    }

    #[test]
    fn stats_median() {
        let s = RatioStats::of(vec![0.3, 0.1, 0.2, 0.9]);
        assert_eq!((s.min, s.median, s.max, s.holds), (0.1, 0.25, 0.9, true));
        assert!(!RatioStats::of(vec![1.5]).holds);
    }

    #[test]
    fn bounds_hold_on_small_basis() {
        let layout = Layout::new(
            1,
            grid(Channel::Massive, 2, 1),
            grid(Channel::Neutrino, 3, 1),
            grid(Channel::Boson, 1, 1),
            Caps::default(),
        )
        .unwrap();
        let basis = enumerate_basis(&layout, 100_000).unwrap();
        let k = sample_kernel(
            &KernelFamily::default(),
            &SampleOptions { species: 1, uv_cutoff: None, helicity: false },
            &layout.massive,
            &layout.neutrino,
            &layout.boson,
        )
        .unwrap();
        let m = Masses { leptons: [1.0, 2.0, 3.0], m_w: 4.0 };
        let r = bound_suite(&basis, &k, &m, c_beta_eta(1.0, 4.0, 1.0, 1.0), b_beta_eta(4.0, 1.0, 1.0), &[0.5, 1.0, 2.0], 30, 3)
            .unwrap();
        assert!(r.all(), "{r:?}");
        assert!(r.relative_bound.max > 0.0);
    }
}
