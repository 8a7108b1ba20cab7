//! Subcommand runners. Each returns its verdicts; reports are written
//! serially into the output directory.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;
use weakfock::cascade::{build_truncated_hamiltonian, run_cascade, soft_scaling, Model, SoftScaling};
use weakfock::constants::{
    compute_ledger, interval_ledger, log_grid, optimize_beta_eta, BetaEtaChoice, ConstantLedger, ConstantsError, Interval,
    IntervalLedger, Mode,
};
use weakfock::fock::{enumerate_basis, BasisSummary, Layout};
use weakfock::grid::{Channel, ModeGrid};
use weakfock::kernels::{check_hypotheses, sample_kernel, HypothesisReport, KernelSet, SampleOptions};
use weakfock::mourre::{
    build_dilation_generator, refinement_study, resolvent_probe, run_mourre, MourreStage, ProbeTable, RefinementSpec,
    RefinementStudy, Which,
};
use weakfock::ops::{thresholds, Masses};
use weakfock::spectral::{components, decompose};
use weakfock::verify::{algebra_suite, bound_suite, AlgebraReport, BoundReport, RatioStats};

use crate::config::RunConfig;
use crate::report::{config_hash, to_json, write_text, Cell, Envelope, Seeds, Table, Verdict};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{module}::{op}: {msg}")]
    Module { module: &'static str, op: &'static str, msg: String },
    #[error("certification refused: {0}")]
    Threshold(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Threshold(_) => 2,
            _ => 1,
        }
    }
}

fn at<E: Display>(module: &'static str, op: &'static str) -> impl FnOnce(E) -> RunError {
    move |e| RunError::Module { module, op, msg: e.to_string() }
}

fn io<E: Display>(e: E) -> RunError {
    RunError::Io(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CheckAlgebra,
    VerifyBounds,
    Constants,
    Thresholds,
    Spectrum,
    Cascade,
    Mourre,
    Probe,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::CheckAlgebra,
        Command::VerifyBounds,
        Command::Constants,
        Command::Thresholds,
        Command::Spectrum,
        Command::Cascade,
        Command::Mourre,
        Command::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::CheckAlgebra => "check-algebra",
            Command::VerifyBounds => "verify-bounds",
            Command::Constants => "constants",
            Command::Thresholds => "thresholds",
            Command::Spectrum => "spectrum",
            Command::Cascade => "cascade",
            Command::Mourre => "mourre",
            Command::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            3
        }
    }
}

// ---------------------------------------------------------------------------
// Shared model preparation

pub struct Prepared {
    pub layout: Layout,
    pub kernels: KernelSet,
    pub masses: Masses,
    pub ledger: ConstantLedger,
    pub g: f64,
    pub optimizer: Option<BetaEtaChoice>,
}

fn grid(channel: Channel, c: &crate::config::ChannelGrid, cfg: &RunConfig) -> Result<ModeGrid, RunError> {
    ModeGrid::build(channel, c.pmax, c.shells, cfg.grid.scheme, c.labels).map_err(at("grid", "build"))
}

fn ledger_err(op: &'static str) -> impl FnOnce(ConstantsError) -> RunError {
    move |e| match e {
        ConstantsError::ThresholdViolated(s) => RunError::Threshold(s),
        other => at("constants", op)(other),
    }
}

pub fn sample(cfg: &RunConfig, neutrino_shells: usize) -> Result<(ModeGrid, ModeGrid, ModeGrid, KernelSet), RunError> {
    let ms = grid(Channel::Massive, &cfg.grid.massive, cfg)?;
    let nc = crate::config::ChannelGrid { shells: neutrino_shells, ..cfg.grid.neutrino.clone() };
    let nu = grid(Channel::Neutrino, &nc, cfg)?;
    let bo = grid(Channel::Boson, &cfg.grid.boson, cfg)?;
    let opts = SampleOptions {
        species: cfg.physics.species,
        uv_cutoff: cfg.kernel.uv_cutoff.then_some(cfg.physics.lambda),
        helicity: cfg.kernel.helicity,
    };
    let k = sample_kernel(&cfg.kernel.family(), &opts, &ms, &nu, &bo).map_err(at("kernels", "sample_kernel"))?;
    Ok((ms, nu, bo, k))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    let (ms, nu, bo, kernels) = sample(cfg, cfg.grid.neutrino.shells)?;
    let (k, kt) = (kernels.k_norm(), kernels.k_tilde());
    let c = &cfg.constants;
    let policy = c.policy();
    let optimizer = if c.optimize {
        let grid = log_grid(c.search_lo, c.search_hi, c.search_points);
        Some(
            optimize_beta_eta(k, kt, &cfg.physics.physics(0.0), &policy, &grid, &grid)
                .map_err(ledger_err("optimize_beta_eta"))?,
        )
    } else {
        None
    };
    let (beta, eta) = optimizer.as_ref().map_or((c.beta, c.eta), |o| (o.beta, o.eta));
    let nmax = cfg.cascade.nmax;
    let free = compute_ledger(k, kt, &cfg.physics.physics(0.0), beta, eta, &policy, nmax, Mode::Explore)
        .map_err(ledger_err("compute_ledger"))?;
    let g = cfg.physics.g.unwrap_or(cfg.physics.g_fraction * free.g_delta1);
    let ledger = compute_ledger(k, kt, &cfg.physics.physics(g), beta, eta, &policy, nmax, cfg.run.mode)
        .map_err(ledger_err("compute_ledger"))?;
    let layout = Layout::new(cfg.physics.species, ms, nu, bo, cfg.caps).map_err(at("fock", "layout"))?;
    let p = &cfg.physics;
    Ok(Prepared { layout, kernels, masses: Masses { leptons: [p.m1, p.m2, p.m3], m_w: p.m_w }, ledger, g, optimizer })
}

fn model(cfg: &RunConfig, p: &Prepared) -> Result<Model, RunError> {
    Model::new(
        &p.layout,
        p.kernels.clone(),
        p.masses,
        p.ledger.clone(),
        p.g,
        cfg.run.dense_limit,
        cfg.run.basis_limit,
    )
    .map_err(at("cascade", "model"))
}

// ---------------------------------------------------------------------------

struct Writer<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn json<T: Serialize>(&mut self, command: &str, verdicts: &[Verdict], result: &T) -> Result<(), RunError> {
        let env = Envelope {
            tool: crate::report::TOOL,
            version: crate::report::VERSION,
            command,
            config_hash: config_hash(self.cfg),
            seeds: Seeds::from_base(self.cfg.run.seed),
            mode: self.cfg.run.mode,
            verdicts,
            pass: verdicts.iter().all(|v| v.pass),
            result,
        };
        let name = format!("{command}.json");
        write_text(self.dir, &name, &to_json(&env).map_err(io)?).map_err(io)?;
        self.files.push(self.dir.join(name));
        Ok(())
    }

    fn table(&mut self, t: &Table) -> Result<(), RunError> {
        std::fs::create_dir_all(self.dir).map_err(io)?;
        t.write(self.dir).map_err(io)?;
        self.files.push(self.dir.join(format!("{}.csv", t.name)));
        Ok(())
    }
}

/// Runs one subcommand and writes its artifacts into `dir`.
pub fn execute(cmd: Command, cfg: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let mut w = Writer { cfg, dir, files: Vec::new() };
    let verdicts = match cmd {
        Command::CheckAlgebra => check_algebra(cfg, &mut w)?,
        Command::VerifyBounds => verify_bounds(cfg, &mut w)?,
        Command::Constants => constants(cfg, &mut w)?,
        Command::Thresholds => threshold_table(cfg, &mut w)?,
        Command::Spectrum => spectrum(cfg, &mut w)?,
        Command::Cascade => cascade(cfg, &mut w)?,
        Command::Mourre => mourre(cfg, &mut w)?,
        Command::Probe => probe(cfg, &mut w)?,
    };
    Ok(Outcome { verdicts, files: w.files })
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AlgebraOut<'a> {
    basis: BasisSummary,
    suite: &'a AlgebraReport,
}

fn check_algebra(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let m = model(cfg, &p)?;
    let h = m.full_hamiltonian().map_err(at("ops", "total_hamiltonian"))?;
    let r = algebra_suite(Seeds::from_base(cfg.run.seed).algebra, Some((&m.basis, &h))).map_err(at("verify", "algebra_suite"))?;
    let v = vec![
        Verdict::new("CAR", r.car_ok),
        Verdict::new("CCR below boson cap", r.ccr_ok),
        Verdict::new("smeared creation norms", r.smeared_ok),
        Verdict::new("H hermitian", r.hermitian_ok),
    ];
    w.json("check-algebra", &v, &AlgebraOut { basis: m.basis.summary(), suite: &r })?;
    Ok(v)
}

fn stats_row(t: &mut Table, name: &str, eta: Option<f64>, s: &RatioStats) {
    t.push(vec![
        Cell::S(name.into()),
        eta.into(),
        s.count.into(),
        s.min.into(),
        s.median.into(),
        s.max.into(),
        s.holds.into(),
    ]);
}

fn verify_bounds(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let basis = enumerate_basis(&p.layout, cfg.run.basis_limit).map_err(at("fock", "enumerate_basis"))?;
    let seed = Seeds::from_base(cfg.run.seed).bounds;
    let r: BoundReport = bound_suite(
        &basis,
        &p.kernels,
        &p.masses,
        p.ledger.c_beta_eta,
        p.ledger.b_beta_eta,
        &cfg.bounds.etas,
        cfg.bounds.samples,
        seed,
    )
    .map_err(at("verify", "bound_suite"))?;
    let mut t = Table::new("bound_ratios", vec!["inequality", "eta", "count", "min", "median", "max", "holds"]);
    stats_row(&mut t, "n_tau_creation", None, &r.n_tau_creation);
    stats_row(&mut t, "n_tau_annihilation", None, &r.n_tau_annihilation);
    stats_row(&mut t, "boson_annihilating", None, &r.boson_annihilating);
    for (e, s) in &r.boson_creating {
        stats_row(&mut t, "boson_creating", Some(*e), s);
    }
    for (e, s) in &r.boson_creating_literal {
        stats_row(&mut t, "boson_creating_literal", Some(*e), s);
    }
    stats_row(&mut t, "relative_bound", None, &r.relative_bound);
    let mut v = vec![
        Verdict::new("N_tau creation form", r.n_tau_creation.holds),
        Verdict::new("N_tau annihilation form", r.n_tau_annihilation.holds),
        Verdict::new("boson-annihilating half", r.boson_annihilating.holds),
    ];
    for (e, s) in &r.boson_creating {
        v.push(Verdict::new(format!("boson-creating half, eta = {e}"), s.holds));
    }
    v.push(Verdict::new("relative bound of H_I", r.relative_bound.holds));
    w.json("verify-bounds", &v, &r)?;
    w.table(&t)?;
    Ok(v)
}

#[derive(Serialize)]
struct ConstantsOut<'a> {
    ledger: &'a ConstantLedger,
    intervals: &'a IntervalLedger,
    hypotheses: &'a HypothesisReport,
    optimizer: Option<&'a BetaEtaChoice>,
    c_tilde_delta: f64,
}

fn constants(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let l = &p.ledger;
    let iv = interval_ledger(l);
    let (_, _, _, refined) = sample(cfg, 2 * cfg.grid.neutrino.shells)?;
    let hyp = check_hypotheses(&p.kernels, cfg.physics.lambda, Some(&refined), cfg.kernel.divergence_factor)
        .map_err(at("kernels", "check_hypotheses"))?;
    let inside = |name: &str, i: Interval, x: f64| Verdict::new(format!("interval encloses {name}"), i.contains(x));
    let mut v = vec![
        inside("C_beta_eta", iv.c_beta_eta, l.c_beta_eta),
        inside("B_beta_eta", iv.b_beta_eta, l.b_beta_eta),
        inside("C_tilde", iv.c_tilde, l.c_tilde),
        inside("B_tilde", iv.b_tilde, l.b_tilde),
        inside("gamma", iv.gamma, l.gamma),
        inside("D_tilde", iv.d_tilde, l.d_tilde),
        inside("g_delta1 sup", iv.g_delta1_sup, l.g_delta1_sup),
        inside("eps_gamma", iv.eps_gamma, l.eps_gamma),
    ];
    let h = &hyp.verdicts;
    v.push(Verdict::new("kernel square integrable", h.square_integrable));
    v.push(Verdict::new("kernel infrared (i)", h.infrared_i));
    v.push(Verdict::new("kernel infrared (ii)", h.infrared_ii));
    v.push(Verdict::new("kernel derivatives (iii)", h.derivatives_iii));
    v.push(Verdict::new("kernel ultraviolet (iv)", h.ultraviolet_iv));
    let out = ConstantsOut {
        ledger: l,
        intervals: &iv,
        hypotheses: &hyp,
        optimizer: p.optimizer.as_ref(),
        c_tilde_delta: l.c_tilde_delta(),
    };
    w.json("constants", &v, &out)?;
    let mut t = Table::new("sigma", vec!["n", "sigma_n"]);
    for (n, s) in l.sigma.iter().enumerate() {
        t.push(vec![n.into(), (*s).into()]);
    }
    w.table(&t)?;
    if let Some(o) = &p.optimizer {
        let mut t = Table::new("beta_eta_landscape", vec!["beta", "eta", "d_tilde"]);
        for &(b, e, d) in &o.landscape {
            t.push(vec![b.into(), e.into(), d.into()]);
        }
        w.table(&t)?;
    }
    Ok(v)
}

#[derive(Serialize)]
struct ThresholdOut {
    g: f64,
    g1: f64,
    g_delta1_sup: f64,
    g_delta1: f64,
    g_over_g_delta1: f64,
    gap_fraction: f64,
    /// m₁ − δ, the top of the window where the estimates are made
    window_top: f64,
    energy_thresholds: Vec<f64>,
}

fn threshold_table(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let l = &p.ledger;
    let ph = &cfg.physics;
    let energies = thresholds(&[ph.m1, ph.m2, ph.m3, ph.m_w], cfg.spectrum.threshold_order);
    let out = ThresholdOut {
        g: p.g,
        g1: l.g1,
        g_delta1_sup: l.g_delta1_sup,
        g_delta1: l.g_delta1,
        g_over_g_delta1: p.g / l.g_delta1,
        gap_fraction: l.gap_fraction,
        window_top: ph.m1 - ph.delta,
        energy_thresholds: energies.clone(),
    };
    let v = vec![
        Verdict::new("g <= g_delta1", p.g <= l.g_delta1),
        Verdict::new("g1 K C_beta_eta < 1", l.g1_k_c < 1.0),
        Verdict::new("gap fraction positive", l.gap_fraction > 0.0),
    ];
    w.json("thresholds", &v, &out)?;
    let mut t = Table::new("thresholds", vec!["index", "energy"]);
    for (i, e) in energies.iter().enumerate() {
        t.push(vec![i.into(), (*e).into()]);
    }
    w.table(&t)?;
    Ok(v)
}

#[derive(Serialize)]
struct SpectrumOut {
    basis: BasisSummary,
    g: f64,
    nnz: usize,
    hermiticity_defect: f64,
    components: usize,
    largest_component: usize,
    ground_energy: f64,
    gap: Option<f64>,
    multiplicity: usize,
    norm: f64,
    lowest: Vec<f64>,
}

fn spectrum(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let m = model(cfg, &p)?;
    let h = m.full_hamiltonian().map_err(at("ops", "total_hamiltonian"))?;
    let comps = components(&h);
    let spec = decompose(&h, cfg.run.dense_limit).map_err(at("spectral", "decompose"))?;
    let gs = spec.ground();
    let lowest: Vec<f64> = spec.eigenvalues().into_iter().take(cfg.spectrum.count).collect();
    let out = SpectrumOut {
        basis: m.basis.summary(),
        g: p.g,
        nnz: h.nnz(),
        hermiticity_defect: h.hermiticity_defect(),
        components: comps.len(),
        largest_component: comps.iter().map(Vec::len).max().unwrap_or(0),
        ground_energy: gs.energy,
        gap: gs.gap,
        multiplicity: gs.multiplicity,
        norm: spec.norm(),
        lowest: lowest.clone(),
    };
    let v = vec![
        Verdict::new("H hermitian", out.hermiticity_defect <= 1e-12),
        Verdict::new("ground energy within bracket", gs.energy <= 0.0 && gs.energy >= -p.ledger.energy_bound),
    ];
    w.json("spectrum", &v, &out)?;
    let mut t = Table::new("eigenvalues", vec!["index", "eigenvalue"]);
    for (i, e) in lowest.iter().enumerate() {
        t.push(vec![i.into(), (*e).into()]);
    }
    w.table(&t)?;
    Ok(v)
}

#[derive(Serialize)]
struct CascadeOut<'a> {
    report: &'a weakfock::cascade::CascadeReport,
    soft_scaling: &'a [SoftScaling],
}

/// Soft-content sweeps for stages 1..=nmax (stage 0 carries no interaction).
pub fn soft_sweeps(cfg: &RunConfig, m: &Model) -> Result<Vec<SoftScaling>, RunError> {
    let gd = m.ledger.g_delta1;
    let gs = log_grid(cfg.cascade.soft_lo * gd, cfg.cascade.soft_hi * gd, cfg.cascade.soft_points);
    let mut out = Vec::new();
    for n in 1..=cfg.cascade.nmax {
        let st = build_truncated_hamiltonian(m, n).map_err(at("cascade", "build_truncated_hamiltonian"))?;
        out.push(soft_scaling(&st, &gs, cfg.run.dense_limit).map_err(at("cascade", "soft_scaling"))?);
    }
    Ok(out)
}

fn cascade(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let m = model(cfg, &p)?;
    let t0 = Instant::now();
    let run = run_cascade(&m, cfg.cascade.nmax).map_err(at("cascade", "run_cascade"))?;
    let soft = soft_sweeps(cfg, &m)?;
    let total = t0.elapsed().as_secs_f64();
    let r = &run.report;
    let mut v = Vec::new();
    for s in &r.stages {
        let f = &s.flags;
        let n = s.n;
        v.push(Verdict::new(format!("stage {n}: E^n in bracket"), f.bracket));
        v.push(Verdict::new(format!("stage {n}: gap"), f.gap));
        v.push(Verdict::new(format!("stage {n}: simple"), f.simple));
        if let Some(ok) = f.step {
            v.push(Verdict::new(format!("stage {n}: step to n+1"), ok));
        }
        v.push(Verdict::new(format!("stage {n}: pull-through identity"), f.pull_through));
        v.push(Verdict::new(format!("stage {n}: pull-through bound"), f.pull_through_bound));
        v.push(Verdict::new(format!("stage {n}: virial"), f.virial));
        v.push(Verdict::new(format!("stage {n}: tensor factorization"), f.factorization));
        v.push(Verdict::new(format!("stage {n}: E_n = E^n"), f.ground_energy_match));
    }
    for s in &soft {
        v.push(Verdict::new(format!("stage {}: soft content slope 2 +- 0.1", s.n), s.ok));
    }
    w.json("cascade", &v, &CascadeOut { report: r, soft_scaling: &soft })?;
    let mut t = Table::new(
        "stages",
        vec![
            "n",
            "sigma_n",
            "dim",
            "energy",
            "gap",
            "gap_target",
            "step_difference",
            "step_bound",
            "soft_content",
            "pull_through_residual",
            "virial_residual",
            "factorization_defect",
            "flags_ok",
        ],
    );
    for s in &r.stages {
        t.push(vec![
            s.n.into(),
            s.sigma_n.into(),
            s.dim.into(),
            s.energy.into(),
            s.gap.into(),
            s.gap_target.into(),
            s.step_difference.into(),
            s.step_bound.into(),
            s.soft_content.into(),
            s.pull_through_residual.into(),
            s.virial_residual.into(),
            s.factorization_defect.into(),
            s.flags.all().into(),
        ]);
    }
    w.table(&t)?;
    let mut t = Table::new("soft_scaling", vec!["n", "g", "soft_content"]);
    for s in &soft {
        for &(g, c) in &s.points {
            t.push(vec![s.n.into(), g.into(), c.into()]);
        }
    }
    w.table(&t)?;
    // wall-clock data lives outside the reports so those stay byte-stable
    let mut t = Table::new("timings", vec!["stage", "seconds"]);
    for &(n, s) in &run.timings {
        t.push(vec![Cell::S(n.to_string()), s.into()]);
    }
    t.push(vec![Cell::S("total".into()), total.into()]);
    w.table(&t)?;
    Ok(v)
}

#[derive(Serialize)]
struct MourreOut<'a> {
    stages: &'a [MourreStage],
    refinement: &'a RefinementStudy,
}

pub fn mourre_verdicts(stages: &[MourreStage], refinement: &RefinementStudy) -> Vec<Verdict> {
    let mut v = Vec::new();
    for s in stages {
        let r = &s.positivity;
        let n = r.n;
        v.push(Verdict::new(format!("n = {n}: positivity (algebraic)"), r.algebraic_verdict));
        if let Some(ok) = r.formula_verdict {
            v.push(Verdict::new(format!("n = {n}: positivity (formula)"), ok));
        }
        v.push(Verdict::new(format!("n = {n}: window estimate, measured C_delta"), r.window_verdict));
        if let Some(ok) = r.window_verdict_user {
            v.push(Verdict::new(format!("n = {n}: window estimate, supplied C_tilde"), ok));
        }
        v.push(Verdict::new(format!("n = {n}: virial"), s.virial.residual <= s.virial_tolerance));
        v.push(Verdict::new(format!("n = {n}: generator split and factorization"), s.factorization_ok()));
    }
    v.push(Verdict::new("dilation commutator error monotone", refinement.dilation_monotone));
    v.push(Verdict::new("dilation commutator error <= 0.05 at finest grid", refinement.dilation_final_ok));
    v.push(Verdict::new("formula vs algebraic distance monotone", refinement.formula_monotone));
    v
}

pub fn refinement(cfg: &RunConfig) -> Result<RefinementStudy, RunError> {
    let family = cfg.kernel.family();
    refinement_study(&RefinementSpec {
        neutrino_pmax: cfg.grid.neutrino.pmax,
        massive_pmax: cfg.grid.massive.pmax,
        boson_pmax: cfg.grid.boson.pmax,
        shells: &cfg.mourre.refinement_shells,
        family: &family,
        uv_cutoff: cfg.kernel.uv_cutoff.then_some(cfg.physics.lambda),
        neutrino_cap: cfg.caps.neutrino,
        dense_limit: cfg.run.dense_limit,
    })
    .map_err(at("mourre", "refinement_study"))
}

fn mourre(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let m = model(cfg, &p)?;
    let stages = run_mourre(&m, &cfg.mourre.stages, cfg.mourre.formula, cfg.mourre.c_tilde)
        .map_err(at("mourre", "run_mourre"))?;
    let refinement = refinement(cfg)?;
    let v = mourre_verdicts(&stages, &refinement);
    w.json("mourre", &v, &MourreOut { stages: &stages, refinement: &refinement })?;
    let mut t = Table::new(
        "mourre_stages",
        vec!["n", "sigma_n", "target", "tolerance", "range_rank", "algebraic_min", "formula_min", "window_rank", "window_min", "c_delta_measured"],
    );
    for s in &stages {
        let r = &s.positivity;
        t.push(vec![
            r.n.into(),
            r.sigma_n.into(),
            r.target.into(),
            r.tolerance.into(),
            r.range_rank.into(),
            r.algebraic_min.into(),
            r.formula_min.into(),
            r.window_rank.into(),
            r.window_min.into(),
            r.c_delta_measured.into(),
        ]);
    }
    w.table(&t)?;
    let mut t = Table::new(
        "refinement",
        vec!["shells", "dilation_one_particle", "dilation_fock", "dilation_smooth_probe", "formula_kernel_distance", "formula_operator_distance"],
    );
    for r in &refinement.rows {
        t.push(vec![
            r.shells.into(),
            r.dilation_one_particle.into(),
            r.dilation_fock.into(),
            r.dilation_smooth_probe.into(),
            r.formula_kernel_distance.into(),
            r.formula_operator_distance.into(),
        ]);
    }
    w.table(&t)?;
    Ok(v)
}

fn probe(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<Verdict>, RunError> {
    let p = prepare(cfg)?;
    let m = model(cfg, &p)?;
    let h = m.full_hamiltonian().map_err(at("ops", "total_hamiltonian"))?;
    let bundle = build_dilation_generator(&m.layout().neutrino, None).map_err(at("mourre", "build_dilation_generator"))?;
    let a = bundle.second_quantize(&m.basis, Which::Full).map_err(at("mourre", "second_quantize"))?;
    let lambdas = if cfg.probe.lambdas.is_empty() {
        let e = decompose(&h, cfg.run.dense_limit).map_err(at("spectral", "decompose"))?.ground().energy;
        let top = cfg.physics.m1 - cfg.physics.delta;
        let k = cfg.probe.auto_points;
        (1..=k).map(|i| e + (top - e) * i as f64 / (k + 1) as f64).collect()
    } else {
        cfg.probe.lambdas.clone()
    };
    let table: ProbeTable = resolvent_probe(&h, &a, &lambdas, &cfg.probe.epsilons, cfg.probe.s, cfg.run.dense_limit)
        .map_err(at("mourre", "resolvent_probe"))?;
    // diagnostic only: no inequality is asserted
    let v = Vec::new();
    w.json("probe", &v, &table)?;
    let mut t = Table::new("probe", vec!["lambda", "eps", "norm"]);
    for r in &table.rows {
        t.push(vec![r.lambda.into(), r.eps.into(), r.norm.into()]);
    }
    w.table(&t)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.grid.neutrino.shells = 4;
        c.caps.neutrino = 1;
        c.caps.antineutrino = 1;
        c.cascade.nmax = 2;
        c.mourre.stages = vec![1];
        c.mourre.refinement_shells = vec![4, 8];
        c.bounds.samples = 10;
        c
    }

    #[test]
    fn certify_refuses_large_coupling() {
        let mut c = small();
        c.physics.g = Some(10.0);
        let dir = std::env::temp_dir().join("weakfock-refuse");
        let e = execute(Command::Cascade, &c, &dir).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
        c.run.mode = Mode::Explore;
        assert!(prepare(&c).is_ok());
    }

    #[test]
    fn constants_pass_on_defaults() {
        let dir = std::env::temp_dir().join("weakfock-constants");
        let o = execute(Command::Constants, &RunConfig::default(), &dir).unwrap();
        assert!(o.pass(), "{:?}", o.failed());
        assert!(dir.join("constants.json").exists());
    }

    #[test]
    fn algebra_command_passes() {
        let dir = std::env::temp_dir().join("weakfock-algebra");
        let o = execute(Command::CheckAlgebra, &small(), &dir).unwrap();
        assert_eq!(o.exit_code(), 0, "{:?}", o.failed());
    }

    #[test]
    fn module_errors_name_the_operation() {
        let mut c = small();
        c.run.basis_limit = 5;
        let e = execute(Command::Spectrum, &c, &std::env::temp_dir().join("weakfock-limit")).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().starts_with("cascade::model"), "{e}");
    }
}
