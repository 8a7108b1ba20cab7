//! Eigenpairs, gaps and functional calculus on sparse Hermitian matrices.
//!
//! The matrix is split into connected components of its sparsity graph
//! (charge sectors in practice); each component is diagonalized densely,
//! or by Lanczos above the dense limit when only low eigenvalues are needed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::{norm, random_unit_vector, seeded_rng, SparseHermitian};

type C64 = Complex64;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub const DEFAULT_DENSE_LIMIT: usize = 6000;
/// Relative degeneracy tolerance (times ‖H‖).
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("no convergence after {iterations} Lanczos iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("component of dimension {dim} exceeds the dense limit {limit}")]
    DimensionOverflow { dim: usize, limit: usize },
    #[error("matrix is not flagged Hermitian")]
    NotHermitian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub energy: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub method: Method,
    pub gap: Option<f64>,
    pub multiplicity: usize,
}

/// Connected components of the sparsity graph, each sorted, ordered by
/// smallest member.
pub fn components(h: &SparseHermitian) -> Vec<Vec<usize>> {
    let n = h.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, j, _) in h.triplets() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            let (lo, hi) = (a.min(b), a.max(b));
            parent[hi] = lo;
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(i);
    }
    out
}

/// Fixes the phase: the largest-magnitude entry (first on ties) becomes real positive.
pub fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() {
            best = i;
        }
    }
    if v.is_empty() || v[best] == ZERO {
        return;
    }
    let ph = v[best].conj() / v[best].norm();
    for z in v.iter_mut() {
        *z *= ph;
    }
    v[best] = C64::new(v[best].re, 0.0);
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBlock {
    pub indices: Vec<usize>,
    /// ascending
    pub values: Vec<f64>,
    /// columns are eigenvectors over `indices`
    pub vectors: DMatrix<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub dim: usize,
    pub blocks: Vec<EigenBlock>,
}

fn dense_block(h: &SparseHermitian, idx: &[usize]) -> EigenBlock {
    let sub = h.submatrix(idx);
    let m = idx.len();
    let real = sub.triplets().all(|(_, _, v)| v.im == 0.0);
    let (vals, vecs): (Vec<f64>, DMatrix<C64>) = if real {
        let mut d = DMatrix::<f64>::zeros(m, m);
        for (i, j, v) in sub.triplets() {
            d[(i, j)] = v.re;
        }
        let e = SymmetricEigen::new(d);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let e = SymmetricEigen::new(sub.to_dense());
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let mut vectors = DMatrix::zeros(m, m);
    let mut values = Vec::with_capacity(m);
    for (c, &o) in order.iter().enumerate() {
        let mut col: Vec<C64> = vecs.column(o).iter().copied().collect();
        fix_phase(&mut col);
        vectors.set_column(c, &DVector::from_vec(col));
        values.push(vals[o]);
    }
    EigenBlock { indices: idx.to_vec(), values, vectors }
}

/// Full eigendecomposition, component by component.
pub fn decompose(h: &SparseHermitian, dense_limit: usize) -> Result<Spectrum, SpectralError> {
    if !h.hermitian {
        return Err(SpectralError::NotHermitian);
    }
    let comps = components(h);
    if let Some(c) = comps.iter().find(|c| c.len() > dense_limit) {
        return Err(SpectralError::DimensionOverflow { dim: c.len(), limit: dense_limit });
    }
    Ok(Spectrum { dim: h.dim(), blocks: comps.iter().map(|c| dense_block(h, c)).collect() })
}

impl Spectrum {
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// max |λ|
    pub fn norm(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.values.iter()).fold(0.0, |a: f64, &x| a.max(x.abs()))
    }

    pub fn degeneracy_tol(&self) -> f64 {
        DEGENERACY_TOL * self.norm().max(f64::MIN_POSITIVE)
    }

    fn full_vector(&self, b: usize, c: usize) -> Vec<C64> {
        let blk = &self.blocks[b];
        let mut v = vec![ZERO; self.dim];
        for (r, &i) in blk.indices.iter().enumerate() {
            v[i] = blk.vectors[(r, c)];
        }
        v
    }

    /// Eigenpairs ordered by (value, block, column).
    fn ordered(&self) -> Vec<(f64, usize, usize)> {
        let mut all: Vec<(f64, usize, usize)> = Vec::new();
        for (b, blk) in self.blocks.iter().enumerate() {
            for (c, &x) in blk.values.iter().enumerate() {
                all.push((x, b, c));
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        all
    }

    /// Ground state with gap and multiplicity.
    pub fn ground(&self) -> EigenResult {
        let all = self.ordered();
        let tol = self.degeneracy_tol();
        let (e, b, c) = all[0];
        let multiplicity = all.iter().take_while(|x| x.0 - e <= tol).count();
        let gap = all.get(multiplicity).map(|x| x.0 - e).unwrap_or(f64::INFINITY);
        EigenResult {
            energy: e,
            vector: self.full_vector(b, c),
            residual: 0.0,
            method: Method::Dense,
            gap: Some(if multiplicity > 1 { 0.0 } else { gap }),
            multiplicity,
        }
    }

    /// All eigenpairs with value in [lo, hi], as full-length vectors.
    pub fn pairs_in(&self, lo: f64, hi: f64) -> Vec<(f64, Vec<C64>)> {
        self.ordered()
            .into_iter()
            .filter(|x| x.0 >= lo && x.0 <= hi)
            .map(|(x, b, c)| (x, self.full_vector(b, c)))
            .collect()
    }

    /// Eigenvectors with f(λ) ≠ 0 as columns of V, with the weights f(λ);
    /// f(H) = V diag(w) V†.
    pub fn function_range(&self, f: impl Fn(f64) -> f64) -> (Vec<f64>, DMatrix<C64>) {
        let picked: Vec<(f64, usize, usize)> =
            self.ordered().into_iter().filter(|x| f(x.0) != 0.0).collect();
        let mut v = DMatrix::zeros(self.dim, picked.len());
        let mut w = Vec::with_capacity(picked.len());
        for (k, &(x, b, c)) in picked.iter().enumerate() {
            let blk = &self.blocks[b];
            for (r, &i) in blk.indices.iter().enumerate() {
                v[(i, k)] = blk.vectors[(r, c)];
            }
            w.push(f(x));
        }
        (w, v)
    }

    /// f(H) assembled block-sparse.
    pub fn function_matrix(&self, f: impl Fn(f64) -> f64) -> SparseHermitian {
        let mut t = Vec::new();
        for blk in &self.blocks {
            let fx: Vec<f64> = blk.values.iter().map(|&x| f(x)).collect();
            if fx.iter().all(|&y| y == 0.0) {
                continue;
            }
            let m = blk.indices.len();
            for r in 0..m {
                for s in 0..m {
                    let mut acc = ZERO;
                    for (c, &y) in fx.iter().enumerate() {
                        if y != 0.0 {
                            acc += blk.vectors[(r, c)] * blk.vectors[(s, c)].conj() * y;
                        }
                    }
                    if acc != ZERO {
                        t.push((blk.indices[r], blk.indices[s], acc));
                    }
                }
            }
        }
        SparseHermitian::from_triplets(self.dim, t, true)
    }
}

pub fn residual(h: &SparseHermitian, e: f64, v: &[C64]) -> f64 {
    let hv = h.matvec(v);
    norm(&hv.iter().zip(v).map(|(a, b)| a - b * e).collect::<Vec<_>>())
}

/// Lowest eigenpair; components above `dense_limit` go through Lanczos.
pub fn ground_state(h: &SparseHermitian, tol: f64, dense_limit: usize) -> Result<EigenResult, SpectralError> {
    if !h.hermitian {
        return Err(SpectralError::NotHermitian);
    }
    let mut lows: Vec<(f64, Vec<C64>, Method)> = Vec::new();
    let mut hnorm: f64 = 0.0;
    for comp in components(h) {
        if comp.len() <= dense_limit {
            let b = dense_block(h, &comp);
            hnorm = b.values.iter().fold(hnorm, |a, &x| a.max(x.abs()));
            for c in 0..b.values.len().min(2) {
                let mut v = vec![ZERO; h.dim()];
                for (r, &i) in comp.iter().enumerate() {
                    v[i] = b.vectors[(r, c)];
                }
                lows.push((b.values[c], v, Method::Dense));
            }
        } else {
            let sub = h.submatrix(&comp);
            hnorm = hnorm.max(sub.norm_bound());
            let (vals, vecs) = lanczos_lowest(&sub, 2, tol, comp.len().min(2000), 0x5eed)?;
            for (x, w) in vals.into_iter().zip(vecs) {
                let mut v = vec![ZERO; h.dim()];
                for (r, &i) in comp.iter().enumerate() {
                    v[i] = w[r];
                }
                lows.push((x, v, Method::Iterative));
            }
        }
    }
    lows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dtol = DEGENERACY_TOL * hnorm.max(f64::MIN_POSITIVE);
    let e = lows[0].0;
    let multiplicity = lows.iter().take_while(|x| x.0 - e <= dtol).count();
    let gap = if multiplicity > 1 { 0.0 } else { lows.get(1).map(|x| x.0 - e).unwrap_or(f64::INFINITY) };
    let (energy, mut vector, method) = lows.swap_remove(0);
    fix_phase(&mut vector);
    let res = residual(h, energy, &vector);
    Ok(EigenResult { energy, vector, residual: res, method, gap: Some(gap), multiplicity })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub gap: f64,
    pub multiplicity: usize,
}

/// Second-smallest eigenvalue minus `e`; a degenerate ground state gives gap 0.
pub fn spectral_gap(h: &SparseHermitian, e: f64, tol: f64, dense_limit: usize) -> Result<Gap, SpectralError> {
    let g = ground_state(h, tol, dense_limit)?;
    let gap = match g.gap {
        Some(x) if g.multiplicity == 1 => g.energy + x - e,
        _ => 0.0,
    };
    Ok(Gap { gap, multiplicity: g.multiplicity })
}

pub fn smooth_function_of(h: &SparseHermitian, f: impl Fn(f64) -> f64, dense_limit: usize) -> Result<SparseHermitian, SpectralError> {
    Ok(decompose(h, dense_limit)?.function_matrix(f))
}

/// E_Δ(H − E) for the closed window Δ = [lo, hi].
pub fn spectral_projection(
    h: &SparseHermitian,
    e: f64,
    window: (f64, f64),
    dense_limit: usize,
) -> Result<SparseHermitian, SpectralError> {
    let (lo, hi) = window;
    Ok(decompose(h, dense_limit)?.function_matrix(|x| if x - e >= lo && x - e <= hi { 1.0 } else { 0.0 }))
}

/// k lowest eigenpairs by Lanczos with full reorthogonalization.
pub fn lanczos_lowest(
    h: &SparseHermitian,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<C64>>), SpectralError> {
    let n = h.dim();
    let k = k.min(n);
    let mut rng = seeded_rng(seed);
    let mut q: Vec<Vec<C64>> = vec![random_unit_vector(n, &mut rng)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_iter = max_iter.min(n).max(k);
    let mut last_res = f64::INFINITY;
    loop {
        let j = alpha.len();
        let mut w = h.matvec(&q[j]);
        let a: f64 = q[j].iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
        alpha.push(a);
        for _ in 0..2 {
            for qi in &q {
                let c: C64 = qi.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                w.iter_mut().zip(qi).for_each(|(y, x)| *y -= x * c);
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        let check = m >= k && (m % 10 == 0 || m == max_iter || b < 1e-14);
        if check {
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let e = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| e.eigenvalues[x].total_cmp(&e.eigenvalues[y]));
            let res = order[..k].iter().map(|&c| (b * e.eigenvectors[(m - 1, c)]).abs()).fold(0.0, f64::max);
            last_res = res;
            if res <= tol || b < 1e-14 || m == max_iter {
                if res > tol && b >= 1e-14 {
                    return Err(SpectralError::NoConvergence { iterations: m, residual: res });
                }
                let mut vals = Vec::new();
                let mut vecs = Vec::new();
                for &c in &order[..k] {
                    let mut v = vec![ZERO; n];
                    for (i, qi) in q.iter().enumerate().take(m) {
                        let s = e.eigenvectors[(i, c)];
                        v.iter_mut().zip(qi).for_each(|(y, x)| *y += x * s);
                    }
                    let nv = norm(&v);
                    v.iter_mut().for_each(|y| *y /= nv);
                    fix_phase(&mut v);
                    vals.push(e.eigenvalues[c]);
                    vecs.push(v);
                }
                return Ok((vals, vecs));
            }
        }
        if m >= max_iter {
            return Err(SpectralError::NoConvergence { iterations: m, residual: last_res });
        }
        beta.push(b);
        q.push(w.into_iter().map(|x| x / b).collect());
    }
}
