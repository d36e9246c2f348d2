use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::Serialize;
use serde_json::{json, Value};

use rhf_pt::deg_pt::{expand_degenerate, DegOptions};
use rhf_pt::fd::{fd_oracle, MAX_STEP};
use rhf_pt::ground_state::Symmetrizer;
use rhf_pt::io::{save_ground_state, write_table};
use rhf_pt::linalg::frobenius;
use rhf_pt::model::{build_demo_system, DemoKind};
use rhf_pt::mo_pt::{mo_expand, orthogonality_defects};
use rhf_pt::nondeg_pt::{expand, NondegOptions};
use rhf_pt::validation::{run_criterion, CheckResult, Role, SuiteConfig};
use rhf_pt::wigner::{wigner_check_deg, wigner_check_nondeg, SlopeReport, WignerOptions};
use rhf_pt::{Classification, GroundState, LatticeSystem, ScfOptions};

use crate::config::{ExperimentConfig, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Verb {
    /// Converge the unperturbed ground state and save it.
    GroundState,
    /// Rayleigh-Schrödinger coefficients (modes nondeg, deg, mo).
    Expand,
    /// (2n+1)-rule slope checks.
    Wigner,
    /// The numbered validation suite.
    Validate,
    /// Finite-difference energy derivatives against the series.
    FdCheck,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::GroundState => "ground-state",
            Verb::Expand => "expand",
            Verb::Wigner => "wigner",
            Verb::Validate => "validate",
            Verb::FdCheck => "fd-check",
        }
    }
}

/// A module error with the stage it came from.
#[derive(Debug)]
pub struct Failure {
    pub module: &'static str,
    pub operation: &'static str,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn kind(&self) -> &'static str {
        match self.error.downcast_ref::<rhf_pt::Error>() {
            Some(e) => e.kind(),
            None => "input",
        }
    }

    pub fn record(&self) -> Value {
        json!({
            "module": self.module,
            "operation": self.operation,
            "kind": self.kind(),
            "diagnostic": format!("{:#}", self.error),
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{} failed ({}): {:#}", self.module, self.operation, self.kind(), self.error)
    }
}

trait Stage<T> {
    fn at(self, module: &'static str, operation: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn at(self, module: &'static str, operation: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            module,
            operation,
            error: e.into(),
        })
    }
}

/// Files are collected here and written once, by one writer, at the end.
#[derive(Default)]
struct Artifacts {
    tables: Vec<(String, Vec<&'static str>, Vec<Vec<f64>>)>,
    dirs: Vec<(String, Box<dyn Fn(&Path) -> rhf_pt::Result<()>>)>,
}

impl Artifacts {
    fn table(&mut self, name: &str, header: &[&'static str], rows: Vec<Vec<f64>>) {
        self.tables.push((name.to_string(), header.to_vec(), rows));
    }

    fn slope(&mut self, r: &SlopeReport) {
        let rows = (0..r.beta_grid.len())
            .map(|i| vec![r.beta_grid[i], r.errors[i], if r.used[i] { 1.0 } else { 0.0 }])
            .collect();
        self.table(&format!("{}.csv", r.label), &["beta", "error", "used"], rows);
    }
}

pub struct RunOutcome {
    pub verb: Verb,
    pub mode: Option<Mode>,
    pub checks: Vec<CheckResult>,
    /// Extra summary lines, e.g. per-criterion verdicts.
    pub headlines: Vec<String>,
    pub results: Value,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().filter(|c| c.role == Role::Hard).all(|c| c.pass)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for h in &self.headlines {
            s.push_str(h);
            s.push('\n');
        }
        for c in &self.checks {
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s.push_str(if self.pass() { "RESULT PASS\n" } else { "RESULT FAIL\n" });
        s
    }
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    verb: &'a str,
    mode: Option<&'a str>,
    pass: bool,
    checks: &'a [CheckResult],
}

pub struct RunContext {
    pub workers: Option<usize>,
    /// `--seed` as given; already applied to the config.
    pub seed: Option<u64>,
}

fn build_system(cfg: &ExperimentConfig) -> Result<LatticeSystem, Failure> {
    build_demo_system(&cfg.system).at("model", "build_demo_system")
}

fn scf_options(cfg: &ExperimentConfig) -> ScfOptions {
    let mut opts = ScfOptions::default();
    if let DemoKind::Ring(p) = &cfg.system {
        opts.symmetrizer = Some(Symmetrizer::ring(p.n_sites));
    }
    if let Some(t) = cfg.tolerances.scf_residual {
        opts.tol_residual = t;
    }
    opts
}

fn ground_state(cfg: &ExperimentConfig, sys: &LatticeSystem) -> Result<GroundState, Failure> {
    rhf_pt::solve_scf(sys, &scf_options(cfg)).at("ground_state", "solve_scf")
}

fn ground_state_json(gs: &GroundState) -> Value {
    json!({
        "energy": gs.energy,
        "fermi_level": gs.fermi_level,
        "classification": format!("{:?}", gs.classification),
        "n_full": gs.n_full,
        "n_partial": gs.n_partial,
        "n_unocc": gs.n_unocc,
        "gaps": [gs.gaps.0, gs.gaps.1],
        "certificate": gs.report.certificate,
        "oda_iterations": gs.report.oda_iterations,
        "polished": gs.report.polished,
    })
}

fn wigner_options(cfg: &ExperimentConfig) -> WignerOptions {
    let mut o = WignerOptions::default();
    let t = &cfg.tolerances;
    if let Some(x) = t.slope_tol {
        o.slope_tol = x;
    }
    if let Some(x) = t.noise_floor {
        o.noise_floor = x;
    }
    if let Some(x) = t.reference_scf {
        o.reference_tol = x;
    }
    o
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Series mode implied by the ground state when none is given.
fn auto_mode(gs: &GroundState) -> Mode {
    if gs.classification == Classification::Degenerate {
        Mode::Deg
    } else {
        Mode::Nondeg
    }
}

pub fn run(verb: Verb, cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, Failure> {
    let mut art = Artifacts::default();
    let mut checks = Vec::new();
    let mut headlines = Vec::new();
    let mut mode = cfg.mode;
    let results = match verb {
        Verb::GroundState => {
            let sys = build_system(cfg)?;
            let gs = ground_state(cfg, &sys)?;
            let dir = "ground_state".to_string();
            let saved = gs.clone();
            art.dirs.push((dir, Box::new(move |p| save_ground_state(p, &saved))));
            let tol = scf_options(cfg).tol_residual * gs.energy.abs().max(1.0);
            checks.push(CheckResult::at_most("scf_certificate", gs.report.certificate, tol));
            json!({ "ground_state": ground_state_json(&gs) })
        }
        Verb::Expand => {
            let sys = build_system(cfg)?;
            let n = cfg.require_order().at("cli", "config")?;
            let w = cfg.potential(&sys).at("cli", "perturbation")?;
            let gs = ground_state(cfg, &sys)?;
            let m = mode.unwrap_or_else(|| auto_mode(&gs));
            mode = Some(m);
            let series = match m {
                Mode::Nondeg => {
                    let s = expand(&gs, &w, n, &NondegOptions::default()).at("nondeg_pt", "expand")?;
                    let e1 = gs.rho0.dot(w.values());
                    let hf = s.hellmann_feynman_energies();
                    let trace = (1..=n).map(|k| s.gamma_k[k].trace().abs()).fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("trace_gamma_k", trace, 1e-10));
                    checks.push(CheckResult::at_most("e1_vs_density", rel(s.energy_k[1], e1), 1e-8));
                    let hf_dev = (2..=n)
                        .map(|k| (hf[k] - s.energy_k[k]).abs() / hf[k].abs().max(1e-3))
                        .fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("energy_vs_hellmann_feynman", hf_dev, 1e-8));
                    let saved = s.clone();
                    art.dirs.push(("series".into(), Box::new(move |p| saved.export(p))));
                    serde_json::to_value(s.manifest()).map_err(anyhow::Error::from).at("cli", "manifest")?
                }
                Mode::Deg => {
                    let s = expand_degenerate(&gs, &w, n, &DegOptions::default()).at("deg_pt", "expand_degenerate")?;
                    let trace = (1..=n).map(|k| s.gamma_k[k].trace().abs()).fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("trace_gamma_k", trace, 1e-10));
                    let theta = s.theta_residuals.iter().copied().fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("theta_residual", theta, 1e-9));
                    let e1 = gs.rho0.dot(w.values());
                    checks.push(CheckResult::at_most("e1_vs_density", rel(s.energy_k[1], e1), 1e-8));
                    let direct = (2..=n)
                        .map(|k| (s.energy_k[k] - s.energy_direct_k[k]).abs() / s.energy_k[k].abs().max(1e-12))
                        .fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("energy_truncated_vs_direct", direct, 1e-8));
                    let saved = s.clone();
                    art.dirs.push(("series".into(), Box::new(move |p| saved.export(p))));
                    serde_json::to_value(s.manifest()).map_err(anyhow::Error::from).at("cli", "manifest")?
                }
                Mode::Mo => {
                    let s = mo_expand(&gs, &w, n).at("mo_pt", "mo_expand")?;
                    let defect = orthogonality_defects(&s).into_iter().fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("orthogonality_defect", defect, 1e-9));
                    let kmax = n.min(3);
                    let nd = expand(&gs, &w, kmax, &NondegOptions::default()).at("nondeg_pt", "expand")?;
                    let diff = (1..=kmax).map(|k| frobenius(&(s.gamma(k) - &nd.gamma_k[k]))).fold(0.0, f64::max);
                    checks.push(CheckResult::at_most("mo_vs_density_series", diff, 1e-8));
                    let saved = s.clone();
                    art.dirs.push((
                        "series".into(),
                        Box::new(move |p| saved.export_eps_table(&p.join("orbital_energies.csv"))),
                    ));
                    json!({ "order": s.order, "orthogonality_defects": orthogonality_defects(&s), "eps_k": s.eps_k.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>() })
                }
                other => {
                    return Err(anyhow!("mode {} is not an expansion mode", other.as_str())).at("cli", "expand")
                }
            };
            json!({ "ground_state": ground_state_json(&gs), "series": series })
        }
        Verb::Wigner => {
            let sys = build_system(cfg)?;
            let n = cfg.order.unwrap_or(1);
            let grid = cfg.require_grid().at("cli", "config")?;
            let w = cfg.potential(&sys).at("cli", "perturbation")?;
            let gs = ground_state(cfg, &sys)?;
            let opts = wigner_options(cfg);
            let m = match mode {
                None | Some(Mode::Wigner) => auto_mode(&gs),
                Some(m @ (Mode::Nondeg | Mode::Deg)) => m,
                Some(other) => {
                    return Err(anyhow!("mode {} has no Wigner check", other.as_str())).at("cli", "wigner")
                }
            };
            mode = Some(Mode::Wigner);
            let reports = if m == Mode::Nondeg {
                let r = wigner_check_nondeg(&sys, &gs, &w, n, grid, &opts).at("wigner", "wigner_check_nondeg")?;
                vec![r.projected]
            } else {
                let r = wigner_check_deg(&sys, &gs, &w, n, grid, &opts).at("wigner", "wigner_check_deg")?;
                vec![r.chart, r.energy_series]
            };
            for r in &reports {
                art.slope(r);
                checks.push(CheckResult::slope(r));
                headlines.push(r.summary_line());
            }
            json!({ "ground_state": ground_state_json(&gs), "branch": m.as_str(), "reports": reports })
        }
        Verb::FdCheck => {
            let sys = build_system(cfg)?;
            let w = cfg.potential(&sys).at("cli", "perturbation")?;
            let gs = ground_state(cfg, &sys)?;
            let step = cfg.tolerances.fd_step.unwrap_or(MAX_STEP);
            let fd = fd_oracle(&sys, &gs, &w, step, 2).at("fd", "fd_oracle")?;
            let m = auto_mode(&gs);
            let (e1, e2) = if m == Mode::Deg {
                let s = expand_degenerate(&gs, &w, 1, &DegOptions::default()).at("deg_pt", "expand_degenerate")?;
                (s.energy_k[1], s.energy_k[2])
            } else {
                let s = expand(&gs, &w, 2, &NondegOptions::default()).at("nondeg_pt", "expand")?;
                (s.energy_k[1], s.energy_k[2])
            };
            let second = fd.second.unwrap_or(f64::NAN);
            checks.push(CheckResult::at_most("e1_vs_fd", rel(e1, fd.first), 1e-6));
            checks.push(CheckResult::at_most("e2_vs_fd", rel(e2, second), 1e-5));
            art.table(
                "fd_samples.csv",
                &["beta", "energy"],
                fd.samples.iter().map(|(b, e)| vec![*b, *e]).collect(),
            );
            json!({ "ground_state": ground_state_json(&gs), "branch": m.as_str(), "fd": fd, "series": { "e1": e1, "e2": e2 } })
        }
        Verb::Validate => {
            mode = Some(Mode::Validate);
            let suite = SuiteConfig {
                seed: cfg.perturbation.seed,
                ring_sites: match &cfg.system {
                    DemoKind::Ring(p) => p.n_sites,
                    _ => SuiteConfig::default().ring_sites,
                },
            };
            let ids: Vec<usize> = cfg.criteria.clone().unwrap_or_else(|| (1..=rhf_pt::validation::CRITERIA.len()).collect());
            let mut outcomes = Vec::new();
            for id in ids {
                let o = run_criterion(id, &suite).at("validation", "run_criterion")?;
                headlines.push(format!(
                    "CRITERION {} {} {}",
                    o.id,
                    o.name,
                    if o.pass() { "PASS" } else { "FAIL" }
                ));
                checks.extend(o.checks.iter().cloned());
                outcomes.push(o);
            }
            art.table(
                "criteria.csv",
                &["criterion", "pass", "hard_pass", "seconds"],
                outcomes
                    .iter()
                    .map(|o| vec![o.id as f64, o.pass() as u8 as f64, o.hard_pass() as u8 as f64, o.seconds])
                    .collect(),
            );
            json!({ "criteria": outcomes })
        }
    };
    write_artifacts(out_dir, art)?;
    Ok(RunOutcome {
        verb,
        mode,
        checks,
        headlines,
        results,
        out_dir: out_dir.to_path_buf(),
    })
}

fn write_artifacts(out_dir: &Path, art: Artifacts) -> Result<(), Failure> {
    fs::create_dir_all(out_dir).at("cli", "create_output_dir")?;
    for (name, header, rows) in &art.tables {
        write_table(&out_dir.join(name), header, rows).at("io", "write_table")?;
    }
    for (name, write) in &art.dirs {
        let dir = out_dir.join(name);
        fs::create_dir_all(&dir).at("cli", "create_output_dir")?;
        write(&dir).at("io", "export")?;
    }
    Ok(())
}

/// Writes manifest, config echo and summaries for a finished run.
pub fn write_reports(outcome: &RunOutcome, cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<()> {
    let dir = &outcome.out_dir;
    fs::create_dir_all(dir)?;
    let manifest = json!({
        "program": "rhfpt",
        "version": env!("CARGO_PKG_VERSION"),
        "verb": outcome.verb.as_str(),
        "mode": outcome.mode.map(Mode::as_str),
        "config": cfg,
        "workers": ctx.workers,
        "seed_override": ctx.seed,
        "parallel": rhf_pt::par::is_parallel(),
        "pass": outcome.pass(),
        "results": outcome.results,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    fs::write(dir.join("summary.txt"), outcome.summary_text())?;
    let summary = SummaryJson {
        verb: outcome.verb.as_str(),
        mode: outcome.mode.map(Mode::as_str),
        pass: outcome.pass(),
        checks: &outcome.checks,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn write_error(dir: &Path, failure: &Failure) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("error.json"), serde_json::to_string_pretty(&failure.record())?)?;
    Ok(())
}
