//! Truncated Fock basis and ladder-operator actions.
//!
//! Fermionic modes of every block share one global order: species ℓ = 1, 2, 3,
//! inside a species the blocks particle, antiparticle, neutrino,
//! antineutrino, inside a block the grid order. A creation sign is the parity
//! of occupied fermionic modes strictly before the created one; nesting the
//! blocks this way reproduces the per-species parity prefactors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Channel, ModeGrid};

pub const MAX_FERMION_MODES: usize = 128;
pub const MAX_BOSON_MODES: usize = 32;
pub const MAX_BOSON_CAP: usize = 15;
pub const DEFAULT_BASIS_LIMIT: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("basis dimension {dim} exceeds the configured limit {limit}")]
    DimensionOverflow { dim: u128, limit: usize },
    #[error("unknown mode {0:?}")]
    UnknownMode(ModeId),
    #[error("unknown block {0:?}")]
    UnknownBlock(BlockKind),
    #[error("layout too large: {0}")]
    LayoutTooLarge(String),
    #[error("species count must be 1, 2 or 3, got {0}")]
    BadSpecies(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Particle(u8),
    Antiparticle(u8),
    Neutrino(u8),
    Antineutrino(u8),
    WMinus,
    WPlus,
}

impl BlockKind {
    pub fn channel(self) -> Channel {
        match self {
            BlockKind::Particle(_) | BlockKind::Antiparticle(_) => Channel::Massive,
            BlockKind::Neutrino(_) | BlockKind::Antineutrino(_) => Channel::Neutrino,
            BlockKind::WMinus | BlockKind::WPlus => Channel::Boson,
        }
    }

    pub fn is_fermionic(self) -> bool {
        !matches!(self, BlockKind::WMinus | BlockKind::WPlus)
    }

    pub fn species(self) -> Option<u8> {
        match self {
            BlockKind::Particle(l)
            | BlockKind::Antiparticle(l)
            | BlockKind::Neutrino(l)
            | BlockKind::Antineutrino(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_neutrino(self) -> bool {
        matches!(self, BlockKind::Neutrino(_) | BlockKind::Antineutrino(_))
    }
}

/// Per-block occupation caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub particle: usize,
    pub antiparticle: usize,
    pub neutrino: usize,
    pub antineutrino: usize,
    pub boson: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { particle: 1, antiparticle: 1, neutrino: 2, antineutrino: 2, boson: 1 }
    }
}

impl Caps {
    pub fn for_block(&self, kind: BlockKind) -> usize {
        match kind {
            BlockKind::Particle(_) => self.particle,
            BlockKind::Antiparticle(_) => self.antiparticle,
            BlockKind::Neutrino(_) => self.neutrino,
            BlockKind::Antineutrino(_) => self.antineutrino,
            BlockKind::WMinus | BlockKind::WPlus => self.boson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    /// First global mode number (fermionic or bosonic numbering).
    pub offset: usize,
    pub len: usize,
    /// Fermions: maximal block occupation. Bosons: maximal count per mode.
    pub cap: usize,
}

impl Block {
    pub fn modes(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeId {
    Fermion(usize),
    Boson(usize),
}

/// Block structure over the three channel grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub species: usize,
    pub massive: ModeGrid,
    pub neutrino: ModeGrid,
    pub boson: ModeGrid,
    pub caps: Caps,
    pub blocks: Vec<Block>,
    pub fermion_modes: usize,
    pub boson_modes: usize,
}

impl Layout {
    pub fn new(
        species: usize,
        massive: ModeGrid,
        neutrino: ModeGrid,
        boson: ModeGrid,
        caps: Caps,
    ) -> Result<Self, FockError> {
        if !(1..=3).contains(&species) {
            return Err(FockError::BadSpecies(species));
        }
        let mut blocks = Vec::new();
        let mut f = 0;
        for l in 1..=species as u8 {
            for kind in [
                BlockKind::Particle(l),
                BlockKind::Antiparticle(l),
                BlockKind::Neutrino(l),
                BlockKind::Antineutrino(l),
            ] {
                let len = if kind.channel() == Channel::Massive { massive.len() } else { neutrino.len() };
                blocks.push(Block { kind, offset: f, len, cap: caps.for_block(kind).min(len) });
                f += len;
            }
        }
        let mut b = 0;
        for kind in [BlockKind::WMinus, BlockKind::WPlus] {
            blocks.push(Block { kind, offset: b, len: boson.len(), cap: caps.boson });
            b += boson.len();
        }
        if f > MAX_FERMION_MODES {
            return Err(FockError::LayoutTooLarge(format!("{f} fermionic modes > {MAX_FERMION_MODES}")));
        }
        if b > MAX_BOSON_MODES {
            return Err(FockError::LayoutTooLarge(format!("{b} boson modes > {MAX_BOSON_MODES}")));
        }
        if caps.boson > MAX_BOSON_CAP {
            return Err(FockError::LayoutTooLarge(format!("boson cap {} > {MAX_BOSON_CAP}", caps.boson)));
        }
        Ok(Self { species, massive, neutrino, boson, caps, blocks, fermion_modes: f, boson_modes: b })
    }

    /// Same layout with the neutrino grid restricted to radii ≥ `sigma`.
    pub fn with_infrared_cut(&self, sigma: f64) -> Result<Self, FockError> {
        Layout::new(self.species, self.massive.clone(), self.neutrino.above(sigma), self.boson.clone(), self.caps)
    }

    pub fn block(&self, kind: BlockKind) -> Result<&Block, FockError> {
        self.blocks.iter().find(|b| b.kind == kind).ok_or(FockError::UnknownBlock(kind))
    }

    pub fn grid_of(&self, kind: BlockKind) -> &ModeGrid {
        match kind.channel() {
            Channel::Massive => &self.massive,
            Channel::Neutrino => &self.neutrino,
            Channel::Boson => &self.boson,
        }
    }

    /// Global mode of the `point`-th grid point of a block.
    pub fn mode(&self, kind: BlockKind, point: usize) -> Result<ModeId, FockError> {
        let b = self.block(kind)?;
        if point >= b.len {
            return Err(FockError::UnknownBlock(kind));
        }
        Ok(if kind.is_fermionic() { ModeId::Fermion(b.offset + point) } else { ModeId::Boson(b.offset + point) })
    }

    pub fn neutrino_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind.is_neutrino())
    }

    pub fn fermion_block_of(&self, mode: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind.is_fermionic() && b.modes().contains(&mode))
    }

    /// Dimension implied by the caps, computed without enumeration.
    pub fn predicted_dimension(&self) -> u128 {
        let mut dim: u128 = 1;
        for b in &self.blocks {
            let factor: u128 = if b.kind.is_fermionic() {
                (0..=b.cap).map(|k| binomial(b.len, k)).sum()
            } else {
                (b.cap as u128 + 1).pow(b.len as u32)
            };
            dim = dim.saturating_mul(factor);
        }
        dim
    }

    fn block_mask(&self, b: &Block) -> u128 {
        if b.len == 0 {
            0
        } else if b.len == 128 {
            u128::MAX
        } else {
            ((1u128 << b.len) - 1) << b.offset
        }
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Occupation pattern: one bit per fermionic mode, four bits per boson mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockState {
    pub fermions: u128,
    pub bosons: u128,
}

impl FockState {
    pub const VACUUM: FockState = FockState { fermions: 0, bosons: 0 };

    pub fn occupied(&self, mode: usize) -> bool {
        self.fermions >> mode & 1 == 1
    }

    pub fn boson_count(&self, mode: usize) -> usize {
        (self.bosons >> (4 * mode) & 0xF) as usize
    }

    fn with_boson_count(mut self, mode: usize, n: usize) -> Self {
        self.bosons &= !(0xFu128 << (4 * mode));
        self.bosons |= (n as u128) << (4 * mode);
        self
    }

    /// Occupation of one block (fermions: particle number, bosons: total count).
    pub fn block_count(&self, b: &Block) -> usize {
        if b.kind.is_fermionic() {
            b.modes().filter(|&m| self.occupied(m)).count()
        } else {
            b.modes().map(|m| self.boson_count(m)).sum()
        }
    }

    fn parity_below(&self, mode: usize) -> f64 {
        let below = if mode == 0 { 0 } else { self.fermions & ((1u128 << mode) - 1) };
        if below.count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

fn fermion_cap_ok(layout: &Layout, state: &FockState, mode: usize) -> Option<bool> {
    let b = layout.fermion_block_of(mode)?;
    let count = (state.fermions & layout.block_mask(b)).count_ones() as usize;
    Some(count < b.cap)
}

/// Creation on a basis state. `None` means the result vanishes (Pauli or cap).
pub fn apply_creation(layout: &Layout, state: &FockState, mode: ModeId) -> Result<Option<(FockState, f64)>, FockError> {
    match mode {
        ModeId::Fermion(m) => {
            if m >= layout.fermion_modes {
                return Err(FockError::UnknownMode(mode));
            }
            if state.occupied(m) || !fermion_cap_ok(layout, state, m).unwrap_or(false) {
                return Ok(None);
            }
            let sign = state.parity_below(m);
            Ok(Some((FockState { fermions: state.fermions | 1u128 << m, bosons: state.bosons }, sign)))
        }
        ModeId::Boson(k) => {
            if k >= layout.boson_modes {
                return Err(FockError::UnknownMode(mode));
            }
            let n = state.boson_count(k);
            if n >= layout.caps.boson {
                return Ok(None);
            }
            Ok(Some((state.with_boson_count(k, n + 1), ((n + 1) as f64).sqrt())))
        }
    }
}

/// Annihilation on a basis state, the adjoint of [`apply_creation`].
pub fn apply_annihilation(
    layout: &Layout,
    state: &FockState,
    mode: ModeId,
) -> Result<Option<(FockState, f64)>, FockError> {
    match mode {
        ModeId::Fermion(m) => {
            if m >= layout.fermion_modes {
                return Err(FockError::UnknownMode(mode));
            }
            if !state.occupied(m) {
                return Ok(None);
            }
            let sign = state.parity_below(m);
            Ok(Some((FockState { fermions: state.fermions & !(1u128 << m), bosons: state.bosons }, sign)))
        }
        ModeId::Boson(k) => {
            if k >= layout.boson_modes {
                return Err(FockError::UnknownMode(mode));
            }
            let n = state.boson_count(k);
            if n == 0 {
                return Ok(None);
            }
            Ok(Some((state.with_boson_count(k, n - 1), (n as f64).sqrt())))
        }
    }
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    pub layout: Layout,
    states: Vec<FockState>,
    index: HashMap<FockState, usize>,
}

/// Basis metadata as it appears in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSummary {
    pub dimension: usize,
    pub species: usize,
    pub caps: Caps,
    pub blocks: Vec<Block>,
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &FockState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn create(&self, s: &FockState, mode: ModeId) -> Result<Option<(FockState, f64)>, FockError> {
        apply_creation(&self.layout, s, mode)
    }

    pub fn annihilate(&self, s: &FockState, mode: ModeId) -> Result<Option<(FockState, f64)>, FockError> {
        apply_annihilation(&self.layout, s, mode)
    }

    pub fn summary(&self) -> BasisSummary {
        BasisSummary {
            dimension: self.dim(),
            species: self.layout.species,
            caps: self.layout.caps,
            blocks: self.layout.blocks.clone(),
        }
    }
}

/// Enumerates every admissible occupation pattern, vacuum first, in
/// lexicographic order of the occupation vector (fermionic modes in global
/// order, then boson modes).
pub fn enumerate_basis(layout: &Layout, limit: usize) -> Result<FockBasis, FockError> {
    let predicted = layout.predicted_dimension();
    if predicted > limit as u128 {
        return Err(FockError::DimensionOverflow { dim: predicted, limit });
    }
    // Per-mode block index and cap, in occupation-vector order.
    let mut slots: Vec<(bool, usize, usize)> = Vec::new();
    for (bi, b) in layout.blocks.iter().enumerate().filter(|(_, b)| b.kind.is_fermionic()) {
        for m in b.modes() {
            slots.push((true, m, bi));
        }
    }
    for (bi, b) in layout.blocks.iter().enumerate().filter(|(_, b)| !b.kind.is_fermionic()) {
        for m in b.modes() {
            slots.push((false, m, bi));
        }
    }
    let mut states = Vec::with_capacity(predicted as usize);
    let mut counts = vec![0usize; layout.blocks.len()];
    fn rec(
        layout: &Layout,
        slots: &[(bool, usize, usize)],
        pos: usize,
        cur: FockState,
        counts: &mut Vec<usize>,
        out: &mut Vec<FockState>,
    ) {
        if pos == slots.len() {
            out.push(cur);
            return;
        }
        let (fermionic, m, bi) = slots[pos];
        rec(layout, slots, pos + 1, cur, counts, out);
        if fermionic {
            if counts[bi] < layout.blocks[bi].cap {
                counts[bi] += 1;
                let next = FockState { fermions: cur.fermions | 1u128 << m, bosons: cur.bosons };
                rec(layout, slots, pos + 1, next, counts, out);
                counts[bi] -= 1;
            }
        } else {
            for n in 1..=layout.blocks[bi].cap {
                rec(layout, slots, pos + 1, cur.with_boson_count(m, n), counts, out);
            }
        }
    }
    rec(layout, &slots, 0, FockState::VACUUM, &mut counts, &mut states);
    let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(FockBasis { layout: layout.clone(), states, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ModeGrid, Scheme};

    fn grid(channel: Channel, shells: usize) -> ModeGrid {
        if shells == 0 {
            let mut g = ModeGrid::build(channel, 1.0, 1, Scheme::Midpoint, 1).unwrap();
            g.points.clear();
            return g;
        }
        ModeGrid::build(channel, 1.0, shells, Scheme::Midpoint, 1).unwrap()
    }

    fn layout(massive: usize, neutrino: usize, boson: usize, caps: Caps) -> Layout {
        Layout::new(1, grid(Channel::Massive, massive), grid(Channel::Neutrino, neutrino), grid(Channel::Boson, boson), caps)
            .unwrap()
    }

    #[test]
    fn single_fermion_mode() {
        let caps = Caps { particle: 1, antiparticle: 0, neutrino: 0, antineutrino: 0, boson: 0 };
        let b = enumerate_basis(&layout(1, 0, 0, caps), 100).unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(*b.state(0), FockState::VACUUM);
    }

    #[test]
    fn two_neutrino_modes() {
        let caps = Caps { particle: 0, antiparticle: 0, neutrino: 1, antineutrino: 1, boson: 0 };
        let b = enumerate_basis(&layout(0, 1, 0, caps), 100).unwrap();
        assert_eq!(b.dim(), 4);
    }

    #[test]
    fn electron_block_with_boson() {
        let caps = Caps { particle: 1, antiparticle: 0, neutrino: 0, antineutrino: 0, boson: 2 };
        let mut l = layout(2, 0, 1, caps);
        // keep only the W⁻ block populated
        l.blocks.retain(|b| b.kind != BlockKind::WPlus);
        l.boson_modes = 1;
        let b = enumerate_basis(&l, 100).unwrap();
        assert_eq!(b.dim(), 9);
        assert_eq!(l.predicted_dimension(), 9);
    }

    #[test]
    fn overflow_is_reported() {
        let l = layout(2, 4, 2, Caps::default());
        assert!(matches!(enumerate_basis(&l, 10), Err(FockError::DimensionOverflow { .. })));
    }

    #[test]
    fn cross_species_sign() {
        let l = Layout::new(
            2,
            grid(Channel::Massive, 1),
            grid(Channel::Neutrino, 1),
            grid(Channel::Boson, 1),
            Caps::default(),
        )
        .unwrap();
        let e1 = l.mode(BlockKind::Particle(1), 0).unwrap();
        let e2 = l.mode(BlockKind::Particle(2), 0).unwrap();
        let (s, sign) = apply_creation(&l, &FockState::VACUUM, e1).unwrap().unwrap();
        assert_eq!(sign, 1.0);
        let (_, sign) = apply_creation(&l, &s, e2).unwrap().unwrap();
        assert_eq!(sign, -1.0);
        assert!(apply_creation(&l, &s, e1).unwrap().is_none());
    }

    #[test]
    fn boson_amplitudes() {
        let l = layout(1, 1, 1, Caps { boson: 2, ..Caps::default() });
        let k = l.mode(BlockKind::WMinus, 0).unwrap();
        let (s1, a1) = apply_creation(&l, &FockState::VACUUM, k).unwrap().unwrap();
        let (s2, a2) = apply_creation(&l, &s1, k).unwrap().unwrap();
        assert_eq!((a1, a2), (1.0, 2f64.sqrt()));
        assert!(apply_creation(&l, &s2, k).unwrap().is_none());
        let (back, amp) = apply_annihilation(&l, &s2, k).unwrap().unwrap();
        assert_eq!((back, amp), (s1, 2f64.sqrt()));
        assert!(apply_annihilation(&l, &FockState::VACUUM, k).unwrap().is_none());
        assert!(matches!(
            apply_creation(&l, &FockState::VACUUM, ModeId::Boson(99)),
            Err(FockError::UnknownMode(_))
        ));
    }

    #[test]
    fn block_counts_recover_sector() {
        let l = layout(1, 2, 1, Caps::default());
        let b = enumerate_basis(&l, 10_000).unwrap();
        let sum: usize = b.states().iter().map(|s| s.block_count(l.block(BlockKind::Antineutrino(1)).unwrap())).sum();
        assert!(sum > 0);
        for s in b.states() {
            for blk in &l.blocks {
                assert!(s.block_count(blk) <= if blk.kind.is_fermionic() { blk.cap } else { blk.cap * blk.len });
            }
        }
    }
}
