//! The explicit constant chain C_βη, B_βη, C̃, B̃, D̃, γ, N, ε_γ, the coupling
//! thresholds and the infrared scale sequence σ_n.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::smooth_step;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("threshold violated: {0}")]
    ThresholdViolated(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Certify,
    Explore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m_w: f64,
    pub lambda: f64,
    pub delta: f64,
    pub g: f64,
}

impl Physics {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0 < self.delta && self.delta < self.m1) {
            v.push("0 < δ < m₁".to_string());
        }
        if !(self.m1 < self.m2 && self.m2 < self.m3 && self.m3 < self.m_w) {
            v.push("m₁ < m₂ < m₃ < m_W".to_string());
        }
        if !(self.lambda > self.m1) {
            v.push("Λ > m₁".to_string());
        }
        if !(self.g >= 0.0) {
            v.push("g ≥ 0".to_string());
        }
        v
    }
}

/// How the free thresholds are picked inside their admissible ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    /// g₁ = fraction / (K(G) C_βη)
    pub g1_fraction: f64,
    /// g_δ^{(1)} = fraction · inf(1, g₁, (γ−γ²)/(3D̃))
    pub g_delta_fraction: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { g1_fraction: 0.5, g_delta_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m_w: f64,
    pub lambda: f64,
    pub delta: f64,
    pub g: f64,
    pub beta: f64,
    pub eta: f64,
    pub k: f64,
    pub k_tilde: f64,
    pub c_beta_eta: f64,
    pub b_beta_eta: f64,
    pub g1: f64,
    /// g₁K(G)C_βη, required < 1
    pub g1_k_c: f64,
    /// 3g₁²/m_W (1/m₁² + 1) K(G)², required < 1
    pub self_adjointness_form: f64,
    pub c_tilde: f64,
    pub b_tilde: f64,
    pub d_tilde: f64,
    pub gamma: f64,
    pub n: u32,
    pub eps_gamma: f64,
    /// inf(1, g₁, (γ−γ²)/(3D̃))
    pub g_delta1_sup: f64,
    pub g_delta1: f64,
    /// 1 − 3gD̃/γ
    pub gap_fraction: f64,
    /// gK(G)B_βη / (1 − g₁K(G)C_βη)
    pub energy_bound: f64,
    pub sigma: Vec<f64>,
}

pub fn c_beta_eta(m1: f64, m_w: f64, beta: f64, eta: f64) -> f64 {
    let m1s = m1 * m1;
    (3.0 / m_w * (1.0 + 1.0 / m1s) + 3.0 * beta / (m_w * m1s) + 12.0 * eta / m1s * (1.0 + beta)).sqrt()
}

pub fn b_beta_eta(m_w: f64, beta: f64, eta: f64) -> f64 {
    let q = 1.0 + 1.0 / (4.0 * beta);
    (3.0 / m_w * q + 12.0 * (eta * q + 1.0 / (4.0 * eta))).sqrt()
}

/// γ = 1 − δ/(2m₁ − δ), evaluated as 2(m₁ − δ)/(2m₁ − δ) (one rounding fewer).
pub fn gamma_of(m1: f64, delta: f64) -> f64 {
    2.0 * (m1 - delta) / (2.0 * m1 - delta)
}

/// Smallest N with Nγ ≥ 1.
pub fn n_of(gamma: f64) -> u32 {
    let mut n = (1.0 / gamma).ceil().max(1.0) as u32;
    while n > 1 && (n - 1) as f64 * gamma >= 1.0 {
        n -= 1;
    }
    while (n as f64) * gamma < 1.0 {
        n += 1;
    }
    n
}

/// σ₀ = Λ, σ₁ = m₁ − δ/2, σ_{n+1} = γσ_n; returns σ₀..σ_nmax.
pub fn sigma_sequence(m1: f64, delta: f64, lambda: f64, nmax: usize) -> Result<Vec<f64>, ConstantsError> {
    if !(delta > 0.0 && delta < m1 && lambda > m1 && nmax >= 1) {
        return Err(ConstantsError::BadParameters(format!(
            "need Λ > m₁ > δ > 0 and nmax ≥ 1 (m₁={m1}, δ={delta}, Λ={lambda}, nmax={nmax})"
        )));
    }
    let gamma = gamma_of(m1, delta);
    let mut s = vec![lambda, m1 - delta / 2.0];
    while s.len() <= nmax {
        let last = *s.last().unwrap();
        s.push(gamma * last);
    }
    Ok(s)
}

pub fn compute_ledger(
    k: f64,
    k_tilde: f64,
    phys: &Physics,
    beta: f64,
    eta: f64,
    policy: &ThresholdPolicy,
    nmax: usize,
    mode: Mode,
) -> Result<ConstantLedger, ConstantsError> {
    let bad = phys.validate();
    if !bad.is_empty() {
        return Err(ConstantsError::BadParameters(bad.join("; ")));
    }
    if !(beta > 0.0 && eta > 0.0) {
        return Err(ConstantsError::BadParameters(format!("β, η must be positive (β={beta}, η={eta})")));
    }
    for f in [policy.g1_fraction, policy.g_delta_fraction] {
        if !(f > 0.0 && f < 1.0) {
            return Err(ConstantsError::BadParameters(format!("threshold fraction {f} outside (0, 1)")));
        }
    }
    if !(k >= 0.0 && k_tilde >= 0.0 && k.is_finite() && k_tilde.is_finite()) {
        return Err(ConstantsError::BadParameters(format!("kernel norms K={k}, K̃={k_tilde}")));
    }
    let c = c_beta_eta(phys.m1, phys.m_w, beta, eta);
    let b = b_beta_eta(phys.m_w, beta, eta);
    let (g1, g1kc) = if k == 0.0 { (f64::INFINITY, 0.0) } else { (policy.g1_fraction / (k * c), policy.g1_fraction) };
    if g1kc >= 1.0 {
        return Err(ConstantsError::ThresholdViolated(format!("g₁K(G)C_βη = {g1kc} ≥ 1")));
    }
    let q = g1kc / (1.0 - g1kc);
    let c_tilde = c * (1.0 + q);
    let b_tilde = (1.0 + q * (2.0 + q * b)) * b;
    let gamma = gamma_of(phys.m1, phys.delta);
    let n = n_of(gamma);
    let pre = (4.0 * phys.lambda * gamma / (2.0 * phys.m1 - phys.delta)).max(1.0);
    let d_tilde = pre * k_tilde * (2.0 * phys.m1 * c_tilde + b_tilde);
    let g_delta1_sup = 1f64.min(g1).min((gamma - gamma * gamma) / (3.0 * d_tilde));
    let g_delta1 = policy.g_delta_fraction * g_delta1_sup;
    let eps_gamma = (1.0 - 3.0 * g_delta1 * d_tilde / gamma - gamma) / (2.0 * n as f64);
    let self_adj = if k == 0.0 { 0.0 } else { 3.0 * g1 * g1 / phys.m_w * (1.0 / (phys.m1 * phys.m1) + 1.0) * k * k };
    let ledger = ConstantLedger {
        m1: phys.m1,
        m2: phys.m2,
        m3: phys.m3,
        m_w: phys.m_w,
        lambda: phys.lambda,
        delta: phys.delta,
        g: phys.g,
        beta,
        eta,
        k,
        k_tilde,
        c_beta_eta: c,
        b_beta_eta: b,
        g1,
        g1_k_c: g1kc,
        self_adjointness_form: self_adj,
        c_tilde,
        b_tilde,
        d_tilde,
        gamma,
        n,
        eps_gamma,
        g_delta1_sup,
        g_delta1,
        gap_fraction: 1.0 - 3.0 * phys.g * d_tilde / gamma,
        energy_bound: phys.g * k * b / (1.0 - g1kc),
        sigma: sigma_sequence(phys.m1, phys.delta, phys.lambda, nmax)?,
    };
    if mode == Mode::Certify && phys.g > g_delta1 {
        return Err(ConstantsError::ThresholdViolated(format!("g = {} exceeds g_δ^(1) = {g_delta1}", phys.g)));
    }
    Ok(ledger)
}

impl ConstantLedger {
    /// g_δ^{(2)} = inf(g_δ^{(1)}, (1−g_δ^{(1)})γ²/(2C(G)N²)) for a measured C(G).
    pub fn g_delta2(&self, c_of_g: f64) -> f64 {
        let n2 = (self.n as f64).powi(2);
        self.g_delta1.min((1.0 - self.g_delta1) * self.gamma * self.gamma / (2.0 * c_of_g * n2))
    }

    /// C̃_δ = (1 − g_δ^{(1)})/2
    pub fn c_tilde_delta(&self) -> f64 {
        (1.0 - self.g_delta1) / 2.0
    }

    /// C_δ = C̃_δ − C̃·(N²/γ²)·g for a measured C̃.
    pub fn c_delta(&self, c_tilde_measured: f64, g: f64) -> f64 {
        self.c_tilde_delta() - c_tilde_measured * (self.n as f64).powi(2) / (self.gamma * self.gamma) * g
    }

    /// Mourre target C̃_δγ²N⁻²σ_n.
    pub fn mourre_target(&self, sigma_n: f64) -> f64 {
        self.c_tilde_delta() * self.gamma * self.gamma / (self.n as f64).powi(2) * sigma_n
    }

    pub fn bump(&self) -> Bump {
        Bump { gamma: self.gamma, eps: self.eps_gamma }
    }

    /// Δ_n = [(γ−ε_γ)²σ_n, (γ+ε_γ)σ_n]
    pub fn window(&self, sigma_n: f64) -> (f64, f64) {
        let (g, e) = (self.gamma, self.eps_gamma);
        ((g - e).powi(2) * sigma_n, (g + e) * sigma_n)
    }

    /// sup(4Λγ/(2m₁−δ), 1)
    pub fn window_prefactor(&self) -> f64 {
        (4.0 * self.lambda * self.gamma / (2.0 * self.m1 - self.delta)).max(1.0)
    }
}

/// Smooth bump equal to 1 on [(γ−ε)², γ+ε] and 0 outside ((γ−2ε)², γ+2ε).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub gamma: f64,
    pub eps: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = ((self.gamma - 2.0 * self.eps).powi(2), (self.gamma - self.eps).powi(2));
        let (c, d) = (self.gamma + self.eps, self.gamma + 2.0 * self.eps);
        smooth_step((x - a) / (b - a)) * (1.0 - smooth_step((x - c) / (d - c)))
    }

    pub fn plateau(&self) -> (f64, f64) {
        ((self.gamma - self.eps).powi(2), self.gamma + self.eps)
    }

    pub fn support(&self) -> (f64, f64) {
        ((self.gamma - 2.0 * self.eps).powi(2), self.gamma + 2.0 * self.eps)
    }

    /// f_n(λ) = f(λ/σ_n)
    pub fn scaled(&self, sigma_n: f64, x: f64) -> f64 {
        self.eval(x / sigma_n)
    }
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEtaChoice {
    pub beta: f64,
    pub eta: f64,
    pub d_tilde: f64,
    /// (β, η, D̃) over the whole search grid, β-major.
    pub landscape: Vec<(f64, f64, f64)>,
}

/// Minimizes D̃ over the grid; ties go to the smallest β, then the smallest η.
pub fn optimize_beta_eta(
    k: f64,
    k_tilde: f64,
    phys: &Physics,
    policy: &ThresholdPolicy,
    betas: &[f64],
    etas: &[f64],
) -> Result<BetaEtaChoice, ConstantsError> {
    if betas.is_empty() || etas.is_empty() {
        return Err(ConstantsError::BadParameters("empty β/η search grid".into()));
    }
    let mut bs = betas.to_vec();
    let mut es = etas.to_vec();
    bs.sort_by(f64::total_cmp);
    es.sort_by(f64::total_cmp);
    let explore = Physics { g: 0.0, ..*phys };
    let mut best: Option<(f64, f64, f64)> = None;
    let mut landscape = Vec::new();
    for &b in &bs {
        for &e in &es {
            let d = compute_ledger(k, k_tilde, &explore, b, e, policy, 1, Mode::Explore)?.d_tilde;
            landscape.push((b, e, d));
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((b, e, d));
            }
        }
    }
    let (beta, eta, d_tilde) = best.unwrap();
    Ok(BetaEtaChoice { beta, eta, d_tilde, landscape })
}

// ---------------------------------------------------------------------------
// Outward-rounded intervals for the ledger

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    fn out(lo: f64, hi: f64) -> Self {
        Interval { lo: lo.next_down(), hi: hi.next_up() }
    }

    pub fn add(self, o: Self) -> Self {
        Self::out(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::out(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn mul(self, o: Self) -> Self {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Self::out(p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Division by an interval not containing zero.
    pub fn div(self, o: Self) -> Self {
        assert!(o.lo > 0.0 || o.hi < 0.0, "interval divisor contains 0");
        self.mul(Self::out(1.0 / o.hi, 1.0 / o.lo))
    }

    pub fn sqrt(self) -> Self {
        Self::out(self.lo.max(0.0).sqrt(), self.hi.sqrt())
    }

    pub fn max(self, o: Self) -> Self {
        Interval { lo: self.lo.max(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn min(self, o: Self) -> Self {
        Interval { lo: self.lo.min(o.lo), hi: self.hi.min(o.hi) }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalLedger {
    pub c_beta_eta: Interval,
    pub b_beta_eta: Interval,
    pub c_tilde: Interval,
    pub b_tilde: Interval,
    pub gamma: Interval,
    pub d_tilde: Interval,
    pub g_delta1_sup: Interval,
    pub eps_gamma: Interval,
}

/// Re-evaluates the chain with outward rounding, taking g₁ and g_δ^{(1)}
/// from the point ledger (they are chosen, not derived).
pub fn interval_ledger(l: &ConstantLedger) -> IntervalLedger {
    let p = Interval::point;
    let one = p(1.0);
    let (m1, mw, b, e) = (p(l.m1), p(l.m_w), p(l.beta), p(l.eta));
    let m1s = m1.mul(m1);
    let three = p(3.0);
    let twelve = p(12.0);
    let c = three
        .div(mw)
        .mul(one.add(one.div(m1s)))
        .add(three.mul(b).div(mw.mul(m1s)))
        .add(twelve.mul(e).div(m1s).mul(one.add(b)))
        .sqrt();
    let q4 = one.add(one.div(p(4.0).mul(b)));
    let bb = three.div(mw).mul(q4).add(twelve.mul(e.mul(q4).add(one.div(p(4.0).mul(e))))).sqrt();
    let g1kc = p(l.g1_k_c);
    let ratio = g1kc.div(one.sub(g1kc));
    let ct = c.mul(one.add(ratio));
    let bt = one.add(ratio.mul(p(2.0).add(ratio.mul(bb)))).mul(bb);
    let delta = p(l.delta);
    let den = p(2.0).mul(m1).sub(delta);
    let gamma = one.sub(delta.div(den));
    let pre = p(4.0).mul(p(l.lambda)).mul(gamma).div(den).max(one);
    let dt = pre.mul(p(l.k_tilde)).mul(p(2.0).mul(m1).mul(ct).add(bt));
    let sup_term = if dt.lo > 0.0 {
        gamma.sub(gamma.mul(gamma)).div(three.mul(dt))
    } else {
        Interval { lo: f64::INFINITY, hi: f64::INFINITY }
    };
    let g1 = p(l.g1);
    let gsup = one.min(g1).min(sup_term);
    let eps = one
        .sub(three.mul(p(l.g_delta1)).mul(dt).div(gamma))
        .sub(gamma)
        .div(p(2.0 * l.n as f64));
    IntervalLedger {
        c_beta_eta: c,
        b_beta_eta: bb,
        c_tilde: ct,
        b_tilde: bt,
        gamma,
        d_tilde: dt,
        g_delta1_sup: gsup,
        eps_gamma: eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn phys() -> Physics {
        Physics { m1: 1.0, m2: 2.0, m3: 3.0, m_w: 4.0, lambda: 1.2, delta: 0.6, g: 0.0 }
    }

    #[test]
    fn c_beta_eta_hand_value() {
        assert!((c_beta_eta(1.0, 1.0, 1.0, 1.0) - 33f64.sqrt()).abs() < 1e-15);
        // 3/1·(1+1/4) + 12(1·(5/4) + 1/4) = 3.75 + 18
        assert!((b_beta_eta(1.0, 1.0, 1.0) - 21.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sigma_example() {
        let s = sigma_sequence(1.0, 0.5, 2.0, 4).unwrap();
        let want = [2.0, 0.75, 0.5, 1.0 / 3.0, 2.0 / 9.0];
        for (a, b) in s.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(s[2], 1.0 - 0.5);
        assert_eq!(gamma_of(1.0, 0.5), 2.0 / 3.0);
        assert_eq!(s[2], gamma_of(1.0, 0.5) * s[1]);
        assert_eq!(n_of(2.0 / 3.0), 2);
        assert_eq!(n_of(0.5), 2);
        assert_eq!(n_of(1.0), 1);
        assert!(sigma_sequence(1.0, 0.0, 2.0, 4).is_err());
        assert!(sigma_sequence(1.0, 0.5, 0.9, 4).is_err());
    }

    #[test]
    fn certification_refuses_large_coupling() {
        let l = compute_ledger(1.0, 1.0, &phys(), 1.0, 1.0, &ThresholdPolicy::default(), 4, Mode::Explore).unwrap();
        let p = Physics { g: 2.0 * l.g_delta1, ..phys() };
        assert!(matches!(
            compute_ledger(1.0, 1.0, &p, 1.0, 1.0, &ThresholdPolicy::default(), 4, Mode::Certify),
            Err(ConstantsError::ThresholdViolated(_))
        ));
        assert!(compute_ledger(1.0, 1.0, &p, 1.0, 1.0, &ThresholdPolicy::default(), 4, Mode::Explore).is_ok());
    }

    #[test]
    fn eps_gamma_definition() {
        let l = compute_ledger(0.3, 0.7, &phys(), 0.5, 0.2, &ThresholdPolicy::default(), 4, Mode::Explore).unwrap();
        let want = (1.0 - 3.0 * l.g_delta1 * l.d_tilde / l.gamma - l.gamma) / (2.0 * l.n as f64);
        assert_eq!(l.eps_gamma, want);
        assert!(l.eps_gamma > 0.0);
        let f = l.bump();
        let (p0, p1) = f.plateau();
        let (s0, s1) = f.support();
        assert_eq!(f.eval(p0), 1.0);
        assert_eq!(f.eval(p1), 1.0);
        assert_eq!(f.eval(s0), 0.0);
        assert_eq!(f.eval(s1), 0.0);
        assert!(f.eval((s0 + p0) / 2.0) > 0.0 && f.eval((s0 + p0) / 2.0) < 1.0);
    }

    #[test]
    fn optimizer_single_point_and_landscape() {
        let c = optimize_beta_eta(0.3, 0.7, &phys(), &ThresholdPolicy::default(), &[2.0], &[0.5]).unwrap();
        assert_eq!((c.beta, c.eta), (2.0, 0.5));
        let grid = log_grid(0.01, 10.0, 9);
        let c = optimize_beta_eta(0.3, 0.7, &phys(), &ThresholdPolicy::default(), &grid, &grid).unwrap();
        let at_one = compute_ledger(0.3, 0.7, &phys(), 1.0, 1.0, &ThresholdPolicy::default(), 1, Mode::Explore).unwrap();
        assert!(c.d_tilde <= at_one.d_tilde);
        for &i in &[3usize, 40, 77] {
            let (b, e, d) = c.landscape[i];
            let l = compute_ledger(0.3, 0.7, &phys(), b, e, &ThresholdPolicy::default(), 1, Mode::Explore).unwrap();
            assert_eq!(l.d_tilde, d);
        }
    }

    #[test]
    fn intervals_enclose_point_ledger() {
        let l = compute_ledger(0.3, 0.7, &phys(), 0.5, 0.2, &ThresholdPolicy::default(), 4, Mode::Explore).unwrap();
        let iv = interval_ledger(&l);
        assert!(iv.c_beta_eta.contains(l.c_beta_eta));
        assert!(iv.b_beta_eta.contains(l.b_beta_eta));
        assert!(iv.c_tilde.contains(l.c_tilde));
        assert!(iv.b_tilde.contains(l.b_tilde));
        assert!(iv.gamma.contains(l.gamma));
        assert!(iv.d_tilde.contains(l.d_tilde));
        assert!(iv.g_delta1_sup.contains(l.g_delta1_sup));
        assert!(iv.eps_gamma.contains(l.eps_gamma));
        assert!(iv.d_tilde.hi - iv.d_tilde.lo < 1e-12 * l.d_tilde);
    }

    proptest! {
        #[test]
        fn d_tilde_monotone_in_k_tilde(kt in 0.01f64..5.0, dk in 0.0f64..5.0, beta in 0.05f64..5.0, eta in 0.05f64..5.0) {
            let a = compute_ledger(0.4, kt, &phys(), beta, eta, &ThresholdPolicy::default(), 2, Mode::Explore).unwrap();
            let b = compute_ledger(0.4, kt + dk, &phys(), beta, eta, &ThresholdPolicy::default(), 2, Mode::Explore).unwrap();
            prop_assert!(b.d_tilde >= a.d_tilde);
        }

        #[test]
        fn threshold_ordering(k in 0.01f64..5.0, kt in 0.01f64..5.0, cg in 0.01f64..100.0) {
            let l = compute_ledger(k, kt, &phys(), 1.0, 1.0, &ThresholdPolicy::default(), 2, Mode::Explore).unwrap();
            prop_assert!(l.g_delta2(cg) <= l.g_delta1);
            prop_assert!(l.g_delta1 <= 1.0);
            prop_assert!(l.g_delta2(cg) * l.d_tilde / l.gamma < 1.0);
            prop_assert!(l.self_adjointness_form < 1.0);
        }

        #[test]
        fn sigma_strictly_decreasing(m1 in 0.5f64..3.0, frac in 0.05f64..0.95, extra in 0.01f64..2.0) {
            let s = sigma_sequence(m1, frac * m1, m1 + extra, 6).unwrap();
            for w in s[1..].windows(2) {
                prop_assert!(w[1] < w[0]);
            }
        }
    }
}
