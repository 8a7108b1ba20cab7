//! Acceptance run on the default configuration: one line per criterion.
//! Exits nonzero when any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use weakfock::cascade::run_cascade;
use weakfock::constants::{compute_ledger, gamma_of, sigma_sequence, Mode, ThresholdPolicy};
use weakfock::fock::enumerate_basis;
use weakfock::mourre::run_mourre;
use weakfock::verify::{algebra_suite, bound_suite};
use weakfock_cli::config::RunConfig;
use weakfock_cli::report::Seeds;
use weakfock_cli::run::{execute, prepare, refinement, soft_sweeps, Command};

struct Line {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// The constants written out directly from their definitions.
struct Hand {
    c: f64,
    b: f64,
    c_tilde: f64,
    b_tilde: f64,
    gamma: f64,
    d_tilde: f64,
    energy_bound: f64,
}

#[allow(clippy::too_many_arguments)]
fn hand(k: f64, kt: f64, m1: f64, mw: f64, lambda: f64, delta: f64, beta: f64, eta: f64, g1: f64, g: f64) -> Hand {
    let c = (3.0 / mw * (1.0 + 1.0 / (m1 * m1)) + 3.0 * beta / (mw * m1 * m1) + 12.0 * eta / (m1 * m1) * (1.0 + beta))
        .sqrt();
    let b = (3.0 / mw * (1.0 + 1.0 / (4.0 * beta)) + 12.0 * (eta * (1.0 + 1.0 / (4.0 * beta)) + 1.0 / (4.0 * eta))).sqrt();
    let x = g1 * k * c;
    let c_tilde = c * (1.0 + x / (1.0 - x));
    let b_tilde = (1.0 + x / (1.0 - x) * (2.0 + g1 * k * b * c / (1.0 - x))) * b;
    let gamma = 1.0 - delta / (2.0 * m1 - delta);
    let d_tilde = f64::max(4.0 * lambda * gamma / (2.0 * m1 - delta), 1.0) * kt * (2.0 * m1 * c_tilde + b_tilde);
    let energy_bound = g * k * b / (1.0 - x);
    Hand { c, b, c_tilde, b_tilde, gamma, d_tilde, energy_bound }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(Result::ok)
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .filter(|(n, _)| n != "timings.csv")
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn main() {
    let cfg = RunConfig::default();
    let seeds = Seeds::from_base(cfg.run.seed);
    let mut lines: Vec<Line> = Vec::new();

    // 1
    let t = Instant::now();
    let line = match algebra_suite(seeds.algebra, None) {
        Ok(r) => {
            let dt = secs(t);
            Line {
                id: 1,
                name: "algebra suite",
                pass: r.car_ok && r.ccr_ok && r.smeared_ok && r.car_dim <= 2048 && r.smeared_dim <= 2048 && dt < 10.0,
                detail: format!(
                    "CAR {:.1e}, cross {:.1e}, CCR {:.1e} (tol 1e-12); |‖b*(φ)‖−‖φ‖| {:.1e} over {} φ (tol 1e-10); dims {}/{}; {:.2} s",
                    r.car_defect, r.cross_species_defect, r.ccr_defect, r.smeared_norm_defect, r.smeared_samples, r.car_dim,
                    r.smeared_dim, dt
                ),
            }
        }
        Err(e) => Line { id: 1, name: "algebra suite", pass: false, detail: e.to_string() },
    };
    lines.push(line);

    let prepared = prepare(&cfg);
    let p = match prepared {
        Ok(p) => p,
        Err(e) => {
            println!("FAIL  setup: {e}");
            std::process::exit(1);
        }
    };

    // 2
    let t = Instant::now();
    let basis = enumerate_basis(&p.layout, cfg.run.basis_limit).expect("basis");
    let line = match bound_suite(&basis, &p.kernels, &p.masses, p.ledger.c_beta_eta, p.ledger.b_beta_eta, &cfg.bounds.etas, 100, seeds.bounds)
    {
        Ok(r) => {
            let dt = secs(t);
            let worst_creating = r.boson_creating.iter().map(|(_, s)| s.max).fold(0.0, f64::max);
            Line {
                id: 2,
                name: "N_tau / relative bounds",
                pass: r.all() && dt < 60.0,
                detail: format!(
                    "max ratios: N_tau {:.3} / {:.3}, boson-annihilating {:.3}, boson-creating {:.3}, relative {:.4} (median {:.4}); {} vectors, dim {}; {:.2} s",
                    r.n_tau_creation.max,
                    r.n_tau_annihilation.max,
                    r.boson_annihilating.max,
                    worst_creating,
                    r.relative_bound.max,
                    r.relative_bound.median,
                    r.samples,
                    basis.dim(),
                    dt
                ),
            }
        }
        Err(e) => Line { id: 2, name: "N_tau / relative bounds", pass: false, detail: e.to_string() },
    };
    lines.push(line);

    // 3
    let l = &p.ledger;
    let h = hand(l.k, l.k_tilde, l.m1, l.m_w, l.lambda, l.delta, l.beta, l.eta, l.g1, l.g);
    let worst = [
        rel(l.c_beta_eta, h.c),
        rel(l.b_beta_eta, h.b),
        rel(l.c_tilde, h.c_tilde),
        rel(l.b_tilde, h.b_tilde),
        rel(l.gamma, h.gamma),
        rel(l.d_tilde, h.d_tilde),
        rel(l.energy_bound, h.energy_bound),
        rel(l.k, p.kernels.k_norm()),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let ex = sigma_sequence(1.0, 0.5, 2.0, 3).expect("σ example");
    let g_ex = gamma_of(1.0, 0.5);
    let exact = g_ex == 2.0 / 3.0 && ex[2] == 1.0 - 0.5 && ex[2] == g_ex * ex[1];
    let ph = cfg.physics.physics(0.0);
    let alt = compute_ledger(2.0, 3.0, &ph, 0.7, 1.3, &ThresholdPolicy::default(), 2, Mode::Explore).expect("ledger");
    let h2 = hand(2.0, 3.0, ph.m1, ph.m_w, ph.lambda, ph.delta, 0.7, 1.3, alt.g1, 0.0);
    let worst2 = [rel(alt.c_beta_eta, h2.c), rel(alt.b_beta_eta, h2.b), rel(alt.c_tilde, h2.c_tilde), rel(alt.b_tilde, h2.b_tilde), rel(alt.d_tilde, h2.d_tilde)]
        .into_iter()
        .fold(0.0, f64::max);
    lines.push(Line {
        id: 3,
        name: "constant ledger golden values",
        pass: worst <= 1e-12 && worst2 <= 1e-12 && exact,
        detail: format!(
            "max relative deviation {worst:.1e} (default), {worst2:.1e} (β=0.7, η=1.3), tol 1e-12; γ(1, 0.5) = {g_ex:?}, σ₂ = {:?} = γσ₁: {exact}",
            ex[2]
        ),
    });

    // 4–7
    let model = weakfock::cascade::Model::new(
        &p.layout,
        p.kernels.clone(),
        p.masses,
        p.ledger.clone(),
        p.g,
        cfg.run.dense_limit,
        cfg.run.basis_limit,
    )
    .expect("model");
    let t = Instant::now();
    match run_cascade(&model, cfg.cascade.nmax) {
        Ok(run) => {
            let dt = secs(t);
            let r = &run.report;
            let max_dim = r.stages.iter().map(|s| s.dim).max().unwrap_or(0);
            let core = |s: &weakfock::cascade::StageReport| {
                s.flags.bracket && s.flags.gap && s.flags.simple && s.flags.step.unwrap_or(true)
            };
            let failed: Vec<usize> = r.stages.iter().filter(|s| !core(s)).map(|s| s.n).collect();
            let min_gap_ratio = r.stages.iter().map(|s| s.gap / s.gap_target).fold(f64::INFINITY, f64::min);
            let max_step = r
                .stages
                .iter()
                .filter_map(|s| Some(s.step_difference? / s.step_bound?))
                .fold(0.0, f64::max);
            lines.push(Line {
                id: 4,
                name: "cascade certification",
                pass: failed.is_empty() && max_dim <= 5000 && dt < 600.0,
                detail: format!(
                    "nmax {}, g = {:.3e} = {:.0e}·g_δ⁽¹⁾; stage dims ≤ {max_dim} (full space {}); min gap/target {min_gap_ratio:.3}; max step/bound {max_step:.2e}; failing stages {failed:?}; {dt:.1} s",
                    cfg.cascade.nmax,
                    r.g,
                    r.g / r.ledger.g_delta1,
                    r.full_dim
                ),
            });
            let t = Instant::now();
            match soft_sweeps(&cfg, &model) {
                Ok(soft) => {
                    let slopes: Vec<String> =
                        soft.iter().map(|s| format!("n={}: {:.4}", s.n, s.slope.unwrap_or(f64::NAN))).collect();
                    lines.push(Line {
                        id: 5,
                        name: "soft-neutrino scaling",
                        pass: !soft.is_empty() && soft.iter().all(|s| s.ok),
                        detail: format!("slopes {} (target 2 ± 0.1, 5 points over [1e-4, 1e-3]·g_δ⁽¹⁾); {:.1} s", slopes.join(", "), secs(t)),
                    });
                }
                Err(e) => lines.push(Line { id: 5, name: "soft-neutrino scaling", pass: false, detail: e.to_string() }),
            }
            let pt = r.stages.iter().map(|s| s.pull_through_residual / s.h_norm).fold(0.0, f64::max);
            lines.push(Line {
                id: 6,
                name: "pull-through identity",
                pass: r.stages.iter().all(|s| s.flags.pull_through),
                detail: format!("max residual/‖H_n‖ = {pt:.2e} over all retained neutrino modes and stages (tol 1e-8)"),
            });
            let vir = r
                .stages
                .iter()
                .map(|s| (s.virial_residual, s.h_norm * s.a_norm))
                .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            lines.push(Line {
                id: 7,
                name: "virial identity",
                pass: r.stages.iter().all(|s| s.flags.virial),
                detail: format!(
                    "max |⟨φ,[H^n,iA^n]φ⟩| = {:.2e}; tolerance 1e-8·‖H^n‖·‖A^n‖ per stage (largest scale {:.2e})",
                    vir.0, vir.1
                ),
            });
        }
        Err(e) => {
            for (id, name) in [(4, "cascade certification"), (5, "soft-neutrino scaling"), (6, "pull-through identity"), (7, "virial identity")] {
                lines.push(Line { id, name, pass: false, detail: e.to_string() });
            }
        }
    }

    // 8
    let t = Instant::now();
    match run_mourre(&model, &[1, 2, 3], true, None) {
        Ok(stages) => {
            let parts: Vec<String> = stages
                .iter()
                .map(|s| {
                    let r = &s.positivity;
                    format!(
                        "n={}: min {:.3e} (≥ −{:.1e}: {}), window C_δ {:.2e} min {:.2e}: {}",
                        r.n, r.algebraic_min, r.tolerance, r.algebraic_verdict, r.c_delta_measured, r.window_min, r.window_verdict
                    )
                })
                .collect();
            lines.push(Line {
                id: 8,
                name: "Mourre positivity (algebraic)",
                pass: stages.iter().all(|s| s.positivity.algebraic_verdict && s.positivity.window_verdict),
                detail: format!("{}; {:.1} s", parts.join("; "), secs(t)),
            });
        }
        Err(e) => lines.push(Line { id: 8, name: "Mourre positivity (algebraic)", pass: false, detail: e.to_string() }),
    }

    // 9
    let mut c9 = cfg.clone();
    c9.mourre.refinement_shells = vec![6, 12, 24];
    match refinement(&c9) {
        Ok(r) => {
            let d: Vec<String> = r.rows.iter().map(|x| format!("{:.4}", x.dilation_fock)).collect();
            let f: Vec<String> = r.rows.iter().map(|x| format!("{:.4}", x.formula_operator_distance)).collect();
            lines.push(Line {
                id: 9,
                name: "discretization convergence",
                pass: r.dilation_monotone && r.dilation_final_ok && r.formula_monotone,
                detail: format!(
                    "‖[H₀,iA]−dΓ(w)‖/‖dΓ(w)‖ over shells 6/12/24: {} (monotone {}, final ≤ 0.05 {}); formula vs algebraic: {} (monotone {})",
                    d.join(" → "),
                    r.dilation_monotone,
                    r.dilation_final_ok,
                    f.join(" → "),
                    r.formula_monotone
                ),
            });
        }
        Err(e) => lines.push(Line { id: 9, name: "discretization convergence", pass: false, detail: e.to_string() }),
    }

    // 10
    let root = std::env::temp_dir().join(format!("weakfock-acceptance-{}", std::process::id()));
    let (a, b) = (root.join("a"), root.join("b"));
    let mut same = true;
    let mut compared = 0;
    let mut note = String::new();
    for cmd in Command::ALL {
        for d in [&a, &b] {
            if let Err(e) = execute(cmd, &cfg, d) {
                same = false;
                note = format!("{}: {e}", cmd.name());
            }
        }
    }
    let (fa, fb) = (files(&a), files(&b));
    if fa.len() != fb.len() || fa.is_empty() {
        same = false;
    }
    for (x, y) in fa.iter().zip(&fb) {
        compared += 1;
        if x != y {
            same = false;
            note = format!("{} differs", x.0);
        }
    }
    let _ = fs::remove_dir_all(&root);
    lines.push(Line {
        id: 10,
        name: "determinism",
        pass: same,
        detail: format!("{compared} report files over {} subcommands byte-identical: {same} {note}", Command::ALL.len()),
    });

    let mut ok = 0;
    for l in &lines {
        if l.pass {
            ok += 1;
        }
        println!("{}  [{:>2}] {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.name, l.detail);
    }
    println!("acceptance: {ok}/{} criteria pass", lines.len());
    if ok != lines.len() {
        std::process::exit(1);
    }
}
