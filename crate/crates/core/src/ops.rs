//! Sparse operators on a truncated Fock basis: H₀, number operators, dΓ(·),
//! the interaction H_I and the pull-through vertex.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{BlockKind, FockBasis, FockError, FockState, ModeId};
use crate::grid::{Channel, ModePoint};
use crate::kernels::{KernelKey, KernelSet};

type C64 = Complex64;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Compressed-row complex matrix. `hermitian` records intent; it is not
/// enforced but [`SparseHermitian::hermiticity_defect`] checks it.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    pub hermitian: bool,
}

impl SparseHermitian {
    /// Sums duplicate entries (in input order) and drops exact zeros.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>, hermitian: bool) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut it = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            while let Some(&(r2, c2, v2)) = it.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                it.next();
            }
            if v != ZERO {
                rows.push(r);
                indices.push(c);
                values.push(v);
            }
        }
        for &r in &rows {
            indptr[r + 1] += 1;
        }
        for i in 0..dim {
            indptr[i + 1] += indptr[i];
        }
        SparseHermitian { dim, indptr, indices, values, hermitian }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, Vec::new(), true)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &x)| (i, i, C64::new(x, 0.0))).collect(), true)
    }

    pub fn from_dense(m: &DMatrix<C64>, hermitian: bool) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != ZERO {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t, hermitian)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => ZERO,
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect(), self.hermitian)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        if s.im != 0.0 {
            out.hermitian = false;
        }
        out
    }

    /// self + s·other.
    pub fn add_scaled(&self, other: &Self, s: C64) -> Result<Self, OpsError> {
        if other.dim != self.dim {
            return Err(OpsError::ShapeMismatch(format!("{} vs {}", self.dim, other.dim)));
        }
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, v * s)));
        Ok(Self::from_triplets(self.dim, t, self.hermitian && other.hermitian && s.im == 0.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, OpsError> {
        if other.dim != self.dim {
            return Err(OpsError::ShapeMismatch(format!("{} vs {}", self.dim, other.dim)));
        }
        let mut acc = vec![ZERO; self.dim];
        let mut touched = vec![false; self.dim];
        let mut cols = Vec::new();
        let mut t = Vec::new();
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                t.push((i, j, acc[j]));
                acc[j] = ZERO;
                touched[j] = false;
            }
            cols.clear();
        }
        Ok(Self::from_triplets(self.dim, t, false))
    }

    /// max |M_ij − conj(M_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, j, v) in self.triplets() {
            d = d.max((v - self.get(j, i).conj()).norm());
        }
        d
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (p, &k) in keep.iter().enumerate() {
            pos[k] = p;
        }
        let mut t = Vec::new();
        for (p, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    t.push((p, pos[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), t, self.hermitian)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Upper bound on the spectral norm: max row/column ℓ¹ geometric mean.
    pub fn norm_bound(&self) -> f64 {
        let mut rows: f64 = 0.0;
        let mut cols = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v.norm();
                cols[j] += v.norm();
            }
            rows = rows.max(s);
        }
        (rows * cols.iter().copied().fold(0.0, f64::max)).sqrt()
    }

    /// One line per triplet `row col re im` after a `dim hermitian` header.
    pub fn dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {}", self.dim, self.hermitian)?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {:.16e} {:.16e}", v.re, v.im)?;
        }
        Ok(())
    }
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Masses {
    /// m₁, m₂, m₃
    pub leptons: [f64; 3],
    pub m_w: f64,
}

impl Masses {
    pub fn lepton(&self, species: u8) -> f64 {
        self.leptons[species as usize - 1]
    }

    pub fn energy(&self, kind: BlockKind, radius: f64) -> f64 {
        match kind {
            BlockKind::Particle(l) | BlockKind::Antiparticle(l) => {
                let m = self.lepton(l);
                (radius * radius + m * m).sqrt()
            }
            BlockKind::Neutrino(_) | BlockKind::Antineutrino(_) => radius,
            BlockKind::WMinus | BlockKind::WPlus => (radius * radius + self.m_w * self.m_w).sqrt(),
        }
    }
}

/// Every mode of the layout with its block and grid point.
pub fn modes_of(basis: &FockBasis) -> Vec<(BlockKind, ModeId, &ModePoint)> {
    let l = &basis.layout;
    let mut out = Vec::new();
    for b in &l.blocks {
        let g = l.grid_of(b.kind);
        for (p, pt) in g.points.iter().enumerate() {
            let id = if b.kind.is_fermionic() { ModeId::Fermion(b.offset + p) } else { ModeId::Boson(b.offset + p) };
            out.push((b.kind, id, pt));
        }
    }
    out
}

fn diagonal_from_modes(basis: &FockBasis, weight: impl Fn(BlockKind, &ModePoint) -> f64) -> SparseHermitian {
    let l = &basis.layout;
    let mut fw = vec![0.0; l.fermion_modes];
    let mut bw = vec![0.0; l.boson_modes];
    for (kind, id, pt) in modes_of(basis) {
        match id {
            ModeId::Fermion(m) => fw[m] = weight(kind, pt),
            ModeId::Boson(m) => bw[m] = weight(kind, pt),
        }
    }
    let d: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| {
            let mut e = 0.0;
            let mut f = s.fermions;
            while f != 0 {
                let m = f.trailing_zeros() as usize;
                e += fw[m];
                f &= f - 1;
            }
            for (m, w) in bw.iter().enumerate() {
                e += s.boson_count(m) as f64 * w;
            }
            e
        })
        .collect();
    SparseHermitian::from_diagonal(&d)
}

/// Channel masks for sub-Hamiltonians of H₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H0Part {
    All,
    Channel(Channel),
    /// H₀^{(2)σ}: neutrino modes with |p₂| ≥ σ
    NeutrinoAbove(f64),
    /// H^{(2)}_{0,σ}: neutrino modes with |p₂| < σ
    NeutrinoBelow(f64),
    Block(BlockKind),
}

impl H0Part {
    fn admits(&self, kind: BlockKind, p: &ModePoint) -> bool {
        match *self {
            H0Part::All => true,
            H0Part::Channel(c) => kind.channel() == c,
            H0Part::NeutrinoAbove(s) => kind.is_neutrino() && p.radius >= s,
            H0Part::NeutrinoBelow(s) => kind.is_neutrino() && p.radius < s,
            H0Part::Block(b) => kind == b,
        }
    }
}

pub fn assemble_h0(basis: &FockBasis, masses: &Masses, part: H0Part) -> Result<SparseHermitian, OpsError> {
    let l = &basis.layout;
    for (g, c) in [(&l.massive, Channel::Massive), (&l.neutrino, Channel::Neutrino), (&l.boson, Channel::Boson)] {
        if g.channel != c {
            return Err(OpsError::ChannelMismatch(format!("{:?} grid in the {c:?} slot", g.channel)));
        }
    }
    if let H0Part::Block(b) = part {
        l.block(b)?;
    }
    Ok(diagonal_from_modes(basis, |kind, p| if part.admits(kind, p) { masses.energy(kind, p.radius) } else { 0.0 }))
}

pub fn assemble_number(basis: &FockBasis, block: BlockKind) -> Result<SparseHermitian, OpsError> {
    basis.layout.block(block)?;
    Ok(diagonal_from_modes(basis, |kind, _| if kind == block { 1.0 } else { 0.0 }))
}

/// N_ℓ: massive leptons of species ℓ (particles and antiparticles).
pub fn assemble_species_number(basis: &FockBasis, species: u8) -> Result<SparseHermitian, OpsError> {
    basis.layout.block(BlockKind::Particle(species))?;
    Ok(diagonal_from_modes(basis, |kind, _| {
        if kind == BlockKind::Particle(species) || kind == BlockKind::Antiparticle(species) {
            1.0
        } else {
            0.0
        }
    }))
}

/// dΓ(X) = Σ X_ij x*_i x_j over the modes of one block.
pub fn assemble_dgamma(basis: &FockBasis, one_particle: &DMatrix<C64>, block: BlockKind) -> Result<SparseHermitian, OpsError> {
    let b = basis.layout.block(block)?.clone();
    if one_particle.nrows() != b.len || one_particle.ncols() != b.len {
        return Err(OpsError::ShapeMismatch(format!(
            "one-particle matrix {}×{} for a block of {} modes",
            one_particle.nrows(),
            one_particle.ncols(),
            b.len
        )));
    }
    let hermitian = (one_particle - one_particle.adjoint()).camax() == 0.0;
    let mk = |p: usize| if block.is_fermionic() { ModeId::Fermion(b.offset + p) } else { ModeId::Boson(b.offset + p) };
    let cols: Vec<Vec<(usize, usize, C64)>> = (0..basis.dim())
        .into_par_iter()
        .map(|col| {
            let s = basis.state(col);
            let mut out = Vec::new();
            for j in 0..b.len {
                let Ok(Some((s1, a1))) = basis.annihilate(s, mk(j)) else { continue };
                for i in 0..b.len {
                    let x = one_particle[(i, j)];
                    if x == ZERO {
                        continue;
                    }
                    if let Ok(Some((s2, a2))) = basis.create(&s1, mk(i)) {
                        if let Some(row) = basis.index_of(&s2) {
                            out.push((row, col, x * (a1 * a2)));
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(SparseHermitian::from_triplets(basis.dim(), cols.into_iter().flatten().collect(), hermitian))
}

/// Matrix of a single ladder operator x♯ on the truncated basis.
pub fn ladder_operator(basis: &FockBasis, mode: ModeId, creation: bool) -> Result<SparseHermitian, OpsError> {
    let mut t = Vec::new();
    for (col, s) in basis.states().iter().enumerate() {
        let r = if creation { basis.create(s, mode)? } else { basis.annihilate(s, mode)? };
        if let Some((s2, amp)) = r {
            if let Some(row) = basis.index_of(&s2) {
                t.push((row, col, C64::new(amp, 0.0)));
            }
        }
    }
    Ok(SparseHermitian::from_triplets(basis.dim(), t, false))
}

/// x*(φ) = Σ φ_i x*_i over one block (φ indexed by block points).
pub fn smeared_creation(basis: &FockBasis, block: BlockKind, phi: &[C64]) -> Result<SparseHermitian, OpsError> {
    let b = basis.layout.block(block)?.clone();
    if phi.len() != b.len {
        return Err(OpsError::ShapeMismatch(format!("mode function of length {} for {} modes", phi.len(), b.len)));
    }
    let mut t = Vec::new();
    for (p, &f) in phi.iter().enumerate() {
        if f == ZERO {
            continue;
        }
        let m = basis.layout.mode(block, p)?;
        t.extend(ladder_operator(basis, m, true)?.triplets().map(|(i, j, v)| (i, j, v * f)));
    }
    Ok(SparseHermitian::from_triplets(basis.dim(), t, false))
}

/// One vertex b*_i c*_j X_k applied to a basis state (rightmost first).
fn apply_vertex(
    basis: &FockBasis,
    s: &FockState,
    b_mode: ModeId,
    c_mode: ModeId,
    x_mode: Option<(ModeId, bool)>,
) -> Option<(FockState, f64)> {
    let (mut cur, mut amp) = (*s, 1.0);
    if let Some((m, create)) = x_mode {
        let r = if create { basis.create(&cur, m) } else { basis.annihilate(&cur, m) };
        let (s1, a1) = r.ok()??;
        cur = s1;
        amp *= a1;
    }
    let (s2, a2) = basis.create(&cur, c_mode).ok()??;
    let (s3, a3) = basis.create(&s2, b_mode).ok()??;
    Some((s3, amp * a2 * a3))
}

fn check_kernel_shape(basis: &FockBasis, k: &KernelSet) -> Result<(), OpsError> {
    let l = &basis.layout;
    let pairs = [(&l.massive, &k.massive), (&l.neutrino, &k.neutrino), (&l.boson, &k.boson)];
    for (g, kg) in pairs {
        if g.parent_len() != kg.parent_len() || g.radial != kg.radial {
            return Err(OpsError::ShapeMismatch(format!("{:?} grid differs from the kernel grid", g.channel)));
        }
    }
    for key in KernelKey::all(l.species) {
        if k.get(key).is_none() {
            return Err(OpsError::ShapeMismatch(format!("kernel set lacks {key:?}")));
        }
    }
    Ok(())
}

/// Triplets of T_key = Σ G(i,j,k) b*_i c*_j X_k (no adjoint).
fn term_triplets(basis: &FockBasis, k: &KernelSet, key: KernelKey) -> Result<Vec<(usize, usize, C64)>, OpsError> {
    let l = &basis.layout;
    let arr = &k.get(key).expect("checked").values;
    let (mb, nb, wb) = (l.block(key.massive_block())?, l.block(key.neutrino_block())?, l.block(key.boson_block())?);
    let mut vertices = Vec::new();
    for (pi, p1) in l.massive.points.iter().enumerate() {
        for (pj, p2) in l.neutrino.points.iter().enumerate() {
            for (pk, p3) in l.boson.points.iter().enumerate() {
                let v = arr[k.idx(p1.id, p2.id, p3.id)];
                if v != ZERO {
                    vertices.push((ModeId::Fermion(mb.offset + pi), ModeId::Fermion(nb.offset + pj), ModeId::Boson(wb.offset + pk), v));
                }
            }
        }
    }
    let create_boson = key.alpha == 2;
    let cols: Vec<Vec<(usize, usize, C64)>> = (0..basis.dim())
        .into_par_iter()
        .map(|col| {
            let s = basis.state(col);
            let mut out = Vec::new();
            for &(bm, cm, xm, v) in &vertices {
                if let Some((s2, amp)) = apply_vertex(basis, s, bm, cm, Some((xm, create_boson))) {
                    if let Some(row) = basis.index_of(&s2) {
                        out.push((row, col, v * amp));
                    }
                }
            }
            out
        })
        .collect();
    Ok(cols.into_iter().flatten().collect())
}

/// T_key + T_key† for one (α, ℓ, ε).
pub fn assemble_interaction_term(basis: &FockBasis, k: &KernelSet, key: KernelKey) -> Result<SparseHermitian, OpsError> {
    check_kernel_shape(basis, k)?;
    let t = term_triplets(basis, k, key)?;
    let mut all = t.clone();
    all.extend(t.into_iter().map(|(i, j, v)| (j, i, v.conj())));
    Ok(SparseHermitian::from_triplets(basis.dim(), all, true))
}

/// H_I = Σ_{α,ℓ,ε} (T + T†).
pub fn assemble_interaction(basis: &FockBasis, k: &KernelSet) -> Result<SparseHermitian, OpsError> {
    check_kernel_shape(basis, k)?;
    let mut all = Vec::new();
    for key in KernelKey::all(basis.layout.species) {
        let t = term_triplets(basis, k, key)?;
        all.extend(t.iter().copied());
        all.extend(t.into_iter().map(|(i, j, v)| (j, i, v.conj())));
    }
    Ok(SparseHermitian::from_triplets(basis.dim(), all, true))
}

/// B_key(k) = Σ_{i,j} G(i,j,k) b*_i c*_j for boson mode `k` (parent id).
pub fn pair_creation(basis: &FockBasis, kernels: &KernelSet, key: KernelKey, k: usize) -> Result<SparseHermitian, OpsError> {
    check_kernel_shape(basis, kernels)?;
    let l = &basis.layout;
    let arr = &kernels.get(key).expect("checked").values;
    let (mb, nb) = (l.block(key.massive_block())?, l.block(key.neutrino_block())?);
    let mut t = Vec::new();
    for (col, s) in basis.states().iter().enumerate() {
        for (pi, p1) in l.massive.points.iter().enumerate() {
            for (pj, p2) in l.neutrino.points.iter().enumerate() {
                let v = arr[kernels.idx(p1.id, p2.id, k)];
                if v == ZERO {
                    continue;
                }
                if let Some((s2, amp)) = apply_vertex(basis, s, ModeId::Fermion(mb.offset + pi), ModeId::Fermion(nb.offset + pj), None) {
                    if let Some(row) = basis.index_of(&s2) {
                        t.push((row, col, v * amp));
                    }
                }
            }
        }
    }
    Ok(SparseHermitian::from_triplets(basis.dim(), t, false))
}

/// V for the neutrino mode at block point `point` of `block`:
/// Σ_α Σ_{i,k} G^{(α)}(i, ξ₂, k) b*_i X_k over the terms whose neutrino is in `block`,
/// so that [H_I, c(ξ₂)] = V.
pub fn pull_through_operator(
    basis: &FockBasis,
    kernels: &KernelSet,
    block: BlockKind,
    point: usize,
) -> Result<SparseHermitian, OpsError> {
    check_kernel_shape(basis, kernels)?;
    let l = &basis.layout;
    if !block.is_neutrino() {
        return Err(OpsError::ChannelMismatch(format!("{block:?} is not a neutrino block")));
    }
    let j = l.neutrino.points.get(point).ok_or(FockError::UnknownBlock(block))?.id;
    let mut t = Vec::new();
    for key in KernelKey::all(l.species).into_iter().filter(|k| k.neutrino_block() == block) {
        let arr = &kernels.get(key).expect("checked").values;
        let (mb, wb) = (l.block(key.massive_block())?, l.block(key.boson_block())?);
        for (col, s) in basis.states().iter().enumerate() {
            for (pi, p1) in l.massive.points.iter().enumerate() {
                for (pk, p3) in l.boson.points.iter().enumerate() {
                    let v = arr[kernels.idx(p1.id, j, p3.id)];
                    if v == ZERO {
                        continue;
                    }
                    let xm = ModeId::Boson(wb.offset + pk);
                    let r = if key.alpha == 2 { basis.create(s, xm)? } else { basis.annihilate(s, xm)? };
                    let Some((s1, a1)) = r else { continue };
                    let Some((s2, a2)) = basis.create(&s1, ModeId::Fermion(mb.offset + pi))? else { continue };
                    if let Some(row) = basis.index_of(&s2) {
                        t.push((row, col, v * (a1 * a2)));
                    }
                }
            }
        }
    }
    Ok(SparseHermitian::from_triplets(basis.dim(), t, false))
}

/// H = H₀ + g·H_I.
pub fn total_hamiltonian(h0: &SparseHermitian, hi: &SparseHermitian, g: f64) -> Result<SparseHermitian, OpsError> {
    if !(g >= 0.0) {
        return Err(OpsError::ShapeMismatch(format!("coupling must be nonnegative, got {g}")));
    }
    h0.add_scaled(hi, C64::new(g, 0.0))
}

/// Thresholds p·m₁ + q·m₂ + r·m₃ + s·m_W with 1 ≤ p+q+r+s ≤ `max_total`,
/// ascending and deduplicated.
pub fn thresholds(masses: &[f64; 4], max_total: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for p in 0..=max_total {
        for q in 0..=max_total - p {
            for r in 0..=max_total - p - q {
                for s in 0..=max_total - p - q - r {
                    if p + q + r + s >= 1 {
                        out.push(p as f64 * masses[0] + q as f64 * masses[1] + r as f64 * masses[2] + s as f64 * masses[3]);
                    }
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    out
}

/// Unit vector with independent complex normal entries.
pub fn random_unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im)
        })
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|z| *z /= n);
    v
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_basis, Caps, Layout};
    use crate::grid::{ModeGrid, Scheme};
    use crate::kernels::{sample_kernel, KernelFamily, SampleOptions, Sign};
    use proptest::prelude::*;

    fn small_basis(nu_shells: usize, caps: Caps) -> FockBasis {
        let l = Layout::new(
            1,
            ModeGrid::build(Channel::Massive, 1.0, 1, Scheme::Midpoint, 1).unwrap(),
            ModeGrid::build(Channel::Neutrino, 1.5, nu_shells, Scheme::Midpoint, 1).unwrap(),
            ModeGrid::build(Channel::Boson, 1.0, 1, Scheme::Midpoint, 1).unwrap(),
            caps,
        )
        .unwrap();
        enumerate_basis(&l, 100_000).unwrap()
    }

    fn masses() -> Masses {
        Masses { leptons: [1.0, 2.0, 3.0], m_w: 4.0 }
    }

    #[test]
    fn h0_examples() {
        let l = Layout::new(
            1,
            ModeGrid::build(Channel::Massive, 1.5, 2, Scheme::Midpoint, 1).unwrap(),
            ModeGrid::build(Channel::Neutrino, 1.5, 2, Scheme::Midpoint, 1).unwrap(),
            ModeGrid::build(Channel::Boson, 1.0, 1, Scheme::Midpoint, 1).unwrap(),
            Caps::default(),
        )
        .unwrap();
        let b = enumerate_basis(&l, 100_000).unwrap();
        let h0 = assemble_h0(&b, &masses(), H0Part::All).unwrap();
        assert_eq!(h0.get(0, 0), ZERO);
        let e = l.mode(BlockKind::Particle(1), 1).unwrap(); // radius 1.125
        let (s, _) = b.create(&FockState::VACUUM, e).unwrap().unwrap();
        let i = b.index_of(&s).unwrap();
        assert!((h0.get(i, i).re - (1.125f64 * 1.125 + 1.0).sqrt()).abs() < 1e-15);
        let e0 = l.mode(BlockKind::Particle(1), 0).unwrap(); // radius 0.375
        let (s2, _) = b.create(&FockState::VACUUM, e0).unwrap().unwrap();
        let nu = l.mode(BlockKind::Neutrino(1), 0).unwrap();
        let (s3, _) = b.create(&s2, nu).unwrap().unwrap();
        let (i2, i3) = (b.index_of(&s2).unwrap(), b.index_of(&s3).unwrap());
        assert!((h0.get(i3, i3).re - h0.get(i2, i2).re - 0.375).abs() < 1e-15);
        let single = assemble_h0(&b, &masses(), H0Part::Block(BlockKind::Particle(1))).unwrap();
        assert_eq!(single.get(i3, i3), h0.get(i2, i2));
    }

    #[test]
    fn number_bounded_by_free_energy() {
        let b = small_basis(2, Caps::default());
        let n = assemble_species_number(&b, 1).unwrap();
        let h = assemble_h0(&b, &masses(), H0Part::Channel(Channel::Massive)).unwrap();
        for i in 0..b.dim() {
            assert!(h.get(i, i).re - n.get(i, i).re >= 0.0);
        }
        assert!(matches!(assemble_number(&b, BlockKind::Particle(2)), Err(OpsError::Fock(_))));
    }

    #[test]
    fn dgamma_of_identity_is_number() {
        let b = small_basis(3, Caps::default());
        let blk = BlockKind::Antineutrino(1);
        let d = assemble_dgamma(&b, &DMatrix::identity(3, 3), blk).unwrap();
        assert_eq!(d, assemble_number(&b, blk).unwrap());
        assert!(assemble_dgamma(&b, &DMatrix::identity(2, 2), blk).is_err());
    }

    #[test]
    fn dgamma_commutator_is_dgamma_of_commutator() {
        let caps = Caps { particle: 1, antiparticle: 1, neutrino: 3, antineutrino: 3, boson: 1 };
        let b = small_basis(3, caps);
        let mut rng = seeded_rng(3);
        let rnd = |rng: &mut ChaCha8Rng| {
            let v = random_unit_vector(9, rng);
            let m = DMatrix::from_iterator(3, 3, v);
            &m + m.adjoint()
        };
        let (x, y) = (rnd(&mut rng), rnd(&mut rng));
        let blk = BlockKind::Neutrino(1);
        let dx = assemble_dgamma(&b, &x, blk).unwrap();
        let dy = assemble_dgamma(&b, &y, blk).unwrap();
        let lhs = dx.matmul(&dy).unwrap().add_scaled(&dy.matmul(&dx).unwrap(), C64::new(-1.0, 0.0)).unwrap();
        let rhs = assemble_dgamma(&b, &(&x * &y - &y * &x), blk).unwrap();
        let diff = lhs.add_scaled(&rhs, C64::new(-1.0, 0.0)).unwrap();
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn interaction_single_entry() {
        let b = small_basis(2, Caps::default());
        let l = &b.layout;
        let mut k = KernelSet::zero(&l.massive, &l.neutrino, &l.boson, 1);
        let key = KernelKey { alpha: 2, species: 1, eps: Sign::Plus };
        let idx = k.idx(0, 1, 0);
        k.arrays.iter_mut().find(|a| a.key == key).unwrap().values[idx] = C64::new(0.7, 0.0);
        let h = assemble_interaction(&b, &k).unwrap();
        assert!(h.hermiticity_defect() == 0.0);
        // b*_q c*_{r̄} a*_{W⁻} Ω
        let s = FockState::VACUUM;
        let (s, _) = b.create(&s, l.mode(BlockKind::WMinus, 0).unwrap()).unwrap().unwrap();
        let (s, _) = b.create(&s, l.mode(BlockKind::Antineutrino(1), 1).unwrap()).unwrap().unwrap();
        let (s, sg) = b.create(&s, l.mode(BlockKind::Particle(1), 0).unwrap()).unwrap().unwrap();
        let row = b.index_of(&s).unwrap();
        assert_eq!(h.get(row, 0), C64::new(0.7 * sg, 0.0));
        assert_eq!(h.get(0, 0), ZERO);
        let zero = KernelSet::zero(&l.massive, &l.neutrino, &l.boson, 1);
        assert_eq!(assemble_interaction(&b, &zero).unwrap().nnz(), 0);
    }

    #[test]
    fn pull_through_commutator_identity() {
        let b = small_basis(3, Caps { neutrino: 3, antineutrino: 3, ..Caps::default() });
        let l = &b.layout;
        let k = sample_kernel(
            &KernelFamily::default(),
            &SampleOptions { species: 1, uv_cutoff: None, helicity: false },
            &l.massive,
            &l.neutrino,
            &l.boson,
        )
        .unwrap();
        let h = assemble_interaction(&b, &k).unwrap();
        let mut rng = seeded_rng(11);
        for blk in [BlockKind::Neutrino(1), BlockKind::Antineutrino(1)] {
            for p in 0..3 {
                let c = ladder_operator(&b, l.mode(blk, p).unwrap(), false).unwrap();
                let v = pull_through_operator(&b, &k, blk, p).unwrap();
                // boson-free vectors stay clear of the boson cap
                let mut phi = random_unit_vector(b.dim(), &mut rng);
                for (i, s) in b.states().iter().enumerate() {
                    if s.bosons != 0 {
                        phi[i] = ZERO;
                    }
                }
                let lhs: Vec<C64> = h
                    .matvec(&c.matvec(&phi))
                    .iter()
                    .zip(c.matvec(&h.matvec(&phi)))
                    .map(|(a, b)| a - b)
                    .collect();
                let rhs = v.matvec(&phi);
                let d: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
                assert!(norm(&d) < 1e-12, "{blk:?} {p}: {}", norm(&d));
            }
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(thresholds(&[1.0, 2.0, 3.0, 80.0], 1), vec![1.0, 2.0, 3.0, 80.0]);
        let t2 = thresholds(&[1.0, 2.0, 3.0, 80.0], 2);
        assert_eq!(t2.iter().filter(|&&x| x == 2.0).count(), 1);
        assert_eq!(thresholds(&[1.0, 2.5, 3.7, 80.3], 2).len(), 14);
    }

    #[test]
    fn linear_in_coupling() {
        let b = small_basis(2, Caps::default());
        let l = &b.layout;
        let k = sample_kernel(&KernelFamily::default(), &SampleOptions { species: 1, uv_cutoff: None, helicity: false }, &l.massive, &l.neutrino, &l.boson)
            .unwrap();
        let h0 = assemble_h0(&b, &masses(), H0Part::All).unwrap();
        let hi = assemble_interaction(&b, &k).unwrap();
        assert_eq!(total_hamiltonian(&h0, &hi, 0.0).unwrap(), h0);
        let d = total_hamiltonian(&h0, &hi, 0.2)
            .unwrap()
            .add_scaled(&total_hamiltonian(&h0, &hi, 0.1).unwrap(), C64::new(-1.0, 0.0))
            .unwrap()
            .add_scaled(&hi, C64::new(-0.1, 0.0))
            .unwrap();
        assert!(d.max_abs() < 1e-15);
        assert!(total_hamiltonian(&h0, &hi, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn triplet_merge_is_hermitian_when_symmetrized(entries in proptest::collection::vec((0usize..6, 0usize..6, -1.0f64..1.0, -1.0f64..1.0), 0..30)) {
            let mut t = Vec::new();
            for (i, j, re, im) in entries {
                t.push((i, j, C64::new(re, im)));
                t.push((j, i, C64::new(re, -im)));
            }
            let m = SparseHermitian::from_triplets(6, t, true);
            prop_assert!(m.hermiticity_defect() < 1e-15);
            prop_assert_eq!(m.adjoint().to_dense(), m.to_dense());
        }

        #[test]
        fn smeared_creation_has_unit_norm(seed in 0u64..1000) {
            let b = small_basis(3, Caps { neutrino: 3, ..Caps::default() });
            let phi = random_unit_vector(3, &mut seeded_rng(seed));
            let op = smeared_creation(&b, BlockKind::Neutrino(1), &phi).unwrap();
            let mut bb = op.adjoint().matmul(&op).unwrap();
            bb.hermitian = true;
            let top = crate::spectral::decompose(&bb, 2000).unwrap().norm();
            prop_assert!((top - 1.0).abs() < 1e-10);
        }
    }
}
