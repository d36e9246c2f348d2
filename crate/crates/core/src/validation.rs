//! The property-based validation suite: fourteen numbered criteria, each made
//! of one or more checks that print as `CHECK <name> PASS|FAIL <value> <tolerance>`.
//!
//! A check is `Hard` (asserted), `Literal` (a clause evaluated exactly as
//! worded that is known not to hold in general; reported and counted in the
//! criterion verdict but not in the exit status) or `Info` (a diagnostic,
//! printed as an `INFO` line and never counted).

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::deg_pt::{
    chart_gradient, coercivity_bound, expand_degenerate, gamma1_frame, theta_apply, theta_bilinear,
    BlockCoefficient, BlockFrame, DegOptions, ThetaSolver,
};
use crate::error::Result;
use crate::fd::fd_oracle;
use crate::ground_state::{minimize, solve_scf, uniqueness_kernel_test, Classification, GroundState, ScfOptions, Symmetrizer};
use crate::linalg::{frobenius, max_abs, sym_apply, sym_eigen, symmetrize};
use crate::model::{
    build_demo_system, random_orthogonal, synthetic_degenerate, DemoKind, DoubleWellParams, LatticeSystem, Potential,
    RingParams, SyntheticParams,
};
use crate::mo_pt::{mo_expand, orthogonality_defects};
use crate::nondeg_pt::{contour_q, divided_difference_q, expand, ContourSpec, NondegOptions, ResponseOperator};
use crate::wigner::{pi_project, trace_identity_check, wigner_check_deg, wigner_check_nondeg, SlopeReport, WignerOptions};

pub const CRITERIA: [&str; 14] = [
    "first_order_energy",
    "nondeg_series_consistency",
    "wigner_nondeg",
    "wigner_deg",
    "no_splitting",
    "trace_structure",
    "response_structure",
    "evaluator_cross_check",
    "mo_dm_equivalence",
    "theta_structure",
    "first_order_deg_blocks",
    "uniqueness_condition",
    "pi_projector",
    "chart_gradient",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Hard,
    Literal,
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub role: Role,
    pub note: Option<String>,
}

impl CheckResult {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            pass: value <= tolerance,
            value,
            tolerance,
            relation: Relation::AtMost,
            role: Role::Hard,
            note: None,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            pass: value >= tolerance,
            value,
            tolerance,
            relation: Relation::AtLeast,
            role: Role::Hard,
            note: None,
        }
    }

    /// Deviation of a fitted slope from its target.
    pub fn slope(report: &SlopeReport) -> Self {
        let mut c = CheckResult::at_most(
            format!("{}_slope_dev", report.label),
            (report.fitted_slope - report.expected_slope).abs(),
            report.slope_tol,
        );
        c.pass = report.pass;
        if c.value.is_nan() {
            c.value = f64::INFINITY;
        }
        c
    }

    pub fn literal(mut self, note: &str) -> Self {
        self.role = Role::Literal;
        self.note = Some(note.to_string());
        self
    }

    pub fn info(mut self, note: &str) -> Self {
        self.role = Role::Info;
        self.note = Some(note.to_string());
        self
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let note = self.note.as_deref().unwrap_or("");
        match self.role {
            Role::Info => write!(f, "INFO {} {:.6e} ({note})", self.name, self.value),
            role => {
                write!(
                    f,
                    "CHECK {} {} {:.6e} {:.3e}",
                    self.name,
                    if self.pass { "PASS" } else { "FAIL" },
                    self.value,
                    self.tolerance
                )?;
                if role == Role::Literal {
                    write!(f, " [literal: {note}]")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: String,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// Literal verdict: hard and literal checks all pass.
    pub fn pass(&self) -> bool {
        self.checks.iter().filter(|c| c.role != Role::Info).all(|c| c.pass)
    }

    pub fn hard_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.role == Role::Hard).all(|c| c.pass)
    }

    pub fn summary_line(&self) -> String {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.pass && c.role != Role::Info)
            .map(|c| c.name.as_str()).collect();
        format!(
            "CRITERION {:2} {} {} ({:.1} s){}",
            self.id,
            self.name,
            if self.pass() { "PASS" } else { "FAIL" },
            self.seconds,
            if failed.is_empty() { String::new() } else { format!(" failing: {}", failed.join(", ")) }
        )
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    /// Offset added to every internal seed.
    pub seed: u64,
    pub ring_sites: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 0, ring_sites: 16 }
    }
}

impl SuiteConfig {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(salt))
    }
}

pub fn ring_params(n_sites: usize, n_electrons: usize) -> RingParams {
    RingParams {
        n_sites,
        n_electrons,
        hopping: 1.0,
        yukawa_mass: 1.0,
        coupling: 1.0,
        background: -3.0,
    }
}

/// Ring system and its symmetrized SCF ground state.
pub fn ring_ground_state(n_sites: usize, n_electrons: usize) -> Result<(LatticeSystem, GroundState)> {
    let sys = build_demo_system(&DemoKind::Ring(ring_params(n_sites, n_electrons)))?;
    let opts = ScfOptions {
        symmetrizer: Some(Symmetrizer::ring(n_sites)),
        ..Default::default()
    };
    let gs = solve_scf(&sys, &opts)?;
    Ok((sys, gs))
}

fn nondeg_ring(cfg: &SuiteConfig) -> Result<(LatticeSystem, GroundState)> {
    ring_ground_state(cfg.ring_sites, 3)
}

fn deg_ring(cfg: &SuiteConfig) -> Result<(LatticeSystem, GroundState)> {
    ring_ground_state(cfg.ring_sites, 2)
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, n_el: usize) -> Result<GroundState> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let h = symmetrize(&a) * 4.0;
    let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let k = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1;
    GroundState::from_hamiltonian(h, n_el, k)
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn loglog_slope(betas: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn first_order_energy(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let (sys, gs) = nondeg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(9), 1.0);
    let s = expand(&gs, &w, 1, &NondegOptions::default())?;
    let exact = gs.rho0.dot(w.values());
    out.push(CheckResult::at_most("nondeg_e1_vs_density", rel(s.energy_k[1], exact), 1e-8));
    let fd = fd_oracle(&sys, &gs, &w, 1e-2, 1)?;
    out.push(CheckResult::at_most("nondeg_e1_vs_fd", rel(s.energy_k[1], fd.first), 1e-6));

    let (sys, gs) = deg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(8), 1.0);
    let s = expand_degenerate(&gs, &w, 1, &DegOptions::default())?;
    let exact = gs.rho0.dot(w.values());
    out.push(CheckResult::at_most("deg_e1_vs_density", rel(s.energy_k[1], exact), 1e-8));
    let fd = fd_oracle(&sys, &gs, &w, 1e-2, 1)?;
    out.push(CheckResult::at_most("deg_e1_vs_fd", rel(s.energy_k[1], fd.first), 1e-6));
    Ok(out)
}

fn nondeg_series_consistency(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = nondeg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(1), 3.0);
    let s = expand(&gs, &w, 3, &NondegOptions::default())?;
    let betas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let refs = crate::par::try_map_range(betas.len(), |i| -> Result<DMatrix<f64>> {
        Ok(minimize(&sys, &w.scaled(betas[i]), &ScfOptions::default())?.gamma0)
    })?;
    Ok((1..=3)
        .map(|n| {
            let errs: Vec<f64> = betas
                .iter()
                .zip(&refs)
                .map(|(&b, g)| frobenius(&(g - s.gamma_partial_sum(b, n))))
                .collect();
            let slope = loglog_slope(&betas, &errs);
            CheckResult::at_most(format!("series_n{n}_slope_dev"), (slope - (n + 1) as f64).abs(), 0.3)
        })
        .collect())
}

fn wigner_nondeg(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = nondeg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(7), 1.0);
    let opts = WignerOptions::default();
    let grids = [
        vec![0.2, 0.1, 0.05, 0.025, 0.0125],
        vec![0.4, 0.2, 0.1, 0.05, 0.025],
        vec![0.8, 0.4, 0.2, 0.1, 0.05],
    ];
    let mut out = Vec::new();
    for (n, grid) in grids.iter().enumerate() {
        let r = wigner_check_nondeg(&sys, &gs, &w, n, grid, &opts)?;
        out.push(CheckResult::slope(&r.projected));
        out.push(CheckResult::at_least(format!("wigner_nondeg_n{n}_min_diff"), r.projected.min_error, -1e-12));
    }
    Ok(out)
}

fn wigner_deg(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = deg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(8), 1.0);
    let opts = WignerOptions::default();
    let grids = [
        (1, vec![0.04, 0.02, 0.01, 0.005, 0.0025]),
        (2, vec![0.32, 0.16, 0.08, 0.04, 0.02]),
    ];
    let mut out = Vec::new();
    for (n, grid) in grids.iter() {
        let r = wigner_check_deg(&sys, &gs, &w, *n, grid, &opts)?;
        out.push(CheckResult::slope(&r.chart));
        out.push(CheckResult::at_least(format!("wigner_deg_n{n}_min_diff"), r.chart.min_error, -1e-12));
        out.push(CheckResult::slope(&r.energy_series));
        out.push(CheckResult::at_most(format!("wigner_deg_n{n}_dropped_betas"), r.dropped.len() as f64, 0.0));
    }
    Ok(out)
}

fn no_splitting(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = deg_ring(cfg)?;
    let (nf, np) = (gs.n_full, gs.n_partial);
    let e0 = gs.fermi_level;
    let scale = 1e-2 * gs.gaps.0;
    let mut rng = cfg.rng(500);
    let ws: Vec<Potential> = (0..20).map(|_| sys.random_potential(&mut rng, scale)).collect();
    let results = crate::par::try_map_range(ws.len(), |i| -> Result<(f64, f64, bool)> {
        let p = minimize(&sys, &ws[i], &ScfOptions::default())?;
        let shell = &p.eigvals.as_slice()[nf..nf + np];
        let spread = shell[np - 1] - shell[0];
        let center = shell.iter().sum::<f64>() / np as f64;
        let same = p.classification == Classification::Degenerate && p.n_full == nf && p.n_partial == np;
        Ok((spread, (center - e0).abs(), same))
    })?;
    let max_spread = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_shift = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let changed = results.iter().filter(|r| !r.2).count();
    // exact shift of a constant potential of the same dual norm
    let ones = DVector::from_element(sys.n_sites(), 1.0);
    let uniform_shift = scale / sys.dual_norm(&ones);
    Ok(vec![
        CheckResult::at_most("fermi_cluster_spread", max_spread, 1e-8 * e0.abs()),
        CheckResult::at_most("shell_structure_changes", changed as f64, 0.0),
        CheckResult::at_least("fermi_center_shift", max_shift, 1e-4 * e0.abs())
            .literal("random draws rarely align with the uniform mode; see uniform_potential_shift"),
        CheckResult::at_least("uniform_potential_shift", uniform_shift, 1e-4 * e0.abs()).info("exact shift of a constant potential of the same dual norm"),
        CheckResult::at_least("fermi_center_shift_nonzero", max_shift, 1e3 * max_spread.max(f64::EPSILON)),
    ])
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn trace_structure(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = nondeg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(6), 1.0);
    let s = expand(&gs, &w, 4, &NondegOptions::default())?;
    let max_gamma = (1..=4).map(|k| s.gamma_k[k].trace().abs()).fold(0.0, f64::max);
    let spec = ContourSpec::for_ground_state(&gs);
    let mut rng = cfg.rng(60);
    let tuples: Vec<Vec<DVector<f64>>> = (0..50)
        .flat_map(|_| {
            (1..=4)
                .map(|k| (0..k).map(|_| sys.random_potential(&mut rng, 1.0).values().clone()).collect())
                .collect::<Vec<_>>()
        })
        .collect();
    let traces = crate::par::try_map_range(tuples.len(), |i| -> Result<(f64, f64)> {
        let vs = &tuples[i];
        let plain = contour_q(&gs, vs, &spec)?.trace();
        let mut sym = 0.0;
        for p in permutations(vs.len()) {
            let args: Vec<DVector<f64>> = p.iter().map(|&j| vs[j].clone()).collect();
            sym += contour_q(&gs, &args, &spec)?.trace();
        }
        Ok((plain.abs(), sym.abs()))
    })?;
    let low: f64 = traces
        .iter()
        .zip(&tuples)
        .filter(|(_, t)| t.len() <= 2)
        .map(|(x, _)| x.0)
        .fold(0.0, f64::max);
    let plain = traces.iter().map(|x| x.0).fold(0.0, f64::max);
    let sym = traces.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok(vec![
        CheckResult::at_most("trace_gamma_k", max_gamma, 1e-10),
        CheckResult::at_most("trace_q_ordered_k_le_2", low, 1e-10),
        CheckResult::at_most("trace_q_ordered_k_le_4", plain, 1e-10)
            .literal("ordered tuples are not traceless for k >= 3; see trace_q_symmetrized"),
        CheckResult::at_most("trace_q_symmetrized_k_le_4", sym, 1e-10),
    ])
}

fn response_structure(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (_, gs) = nondeg_ring(cfg)?;
    let spec = ContourSpec::for_ground_state(&gs);
    let op = ResponseOperator::new(&gs, &spec)?;
    let n = op.dim();
    let k = &gs.kernel;
    let lmat = DMatrix::from_columns(&(0..n).map(|j| op.apply_l(&DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))).collect::<Vec<_>>());
    let kl = k * &lmat;
    let sym_defect = max_abs(&(&kl - kl.transpose())) / max_abs(&kl).max(f64::MIN_POSITIVE);
    let mut rng = cfg.rng(70);
    let mut min_rq = f64::INFINITY;
    for _ in 0..100 {
        let rho = random_vector(&mut rng, n);
        let rq = op.apply_l(&rho).dot(&(k * &rho)) / rho.dot(&(k * &rho));
        min_rq = min_rq.min(rq);
    }
    let mut max_iter = 0usize;
    let mut max_resid: f64 = 0.0;
    let mut fallback = 0usize;
    for _ in 0..10 {
        let rhs = random_vector(&mut rng, n);
        let sol = op.solve_screened(&rhs, 1e-11)?;
        max_iter = max_iter.max(sol.iterations);
        max_resid = max_resid.max(sol.relative_residual);
        fallback += sol.used_fallback as usize;
    }
    Ok(vec![
        CheckResult::at_most("response_c_symmetry_defect", sym_defect, 1e-10),
        CheckResult::at_least("response_min_rayleigh", min_rq, -1e-10),
        CheckResult::at_most("cg_iterations", max_iter as f64, n as f64),
        CheckResult::at_most("cg_relative_residual", max_resid, 1e-11),
        CheckResult::at_most("cg_fallbacks", fallback as f64, 0.0),
    ])
}

fn evaluator_cross_check(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut worst = [0.0f64; 2];
    for seed in 0..20 {
        let mut rng = cfg.rng(800 + seed);
        let gs = random_instance(&mut rng, 8, 3)?;
        let spec = ContourSpec::for_ground_state(&gs);
        let v1 = random_vector(&mut rng, 8);
        let v2 = random_vector(&mut rng, 8);
        for (k, vs) in [vec![v1.clone()], vec![v1, v2]].iter().enumerate() {
            let a = contour_q(&gs, vs, &spec)?;
            let b = divided_difference_q(&gs, vs)?;
            worst[k] = worst[k].max(max_abs(&(a - b)));
        }
    }
    Ok(vec![
        CheckResult::at_most("q1_contour_vs_divided_difference", worst[0], 1e-8),
        CheckResult::at_most("q2_contour_vs_divided_difference", worst[1], 1e-8),
    ])
}

pub fn double_well_ground_state(n: usize) -> Result<(LatticeSystem, GroundState)> {
    let sys = build_demo_system(&DemoKind::DoubleWell(DoubleWellParams {
        n_sites: n,
        n_electrons: 2,
        hopping: 1.0,
        yukawa_mass: 1.0,
        coupling: 1.0,
        background: -3.0,
        depths: [2.0, 1.5],
        centers: [n as f64 / 4.0, 0.7 * n as f64],
        width: 1.5,
    }))?;
    let gs = solve_scf(&sys, &ScfOptions::default())?;
    Ok((sys, gs))
}

fn mo_dm_equivalence(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = double_well_ground_state(12)?;
    let w = sys.random_potential(&mut cfg.rng(11), 1.0);
    let nd = expand(&gs, &w, 3, &NondegOptions::default())?;
    let mo = mo_expand(&gs, &w, 4)?;
    let diff = (1..=3).map(|k| frobenius(&(mo.gamma(k) - &nd.gamma_k[k]))).fold(0.0, f64::max);
    let defect = orthogonality_defects(&mo).into_iter().fold(0.0, f64::max);
    Ok(vec![
        CheckResult::at_most("mo_vs_dm_gamma_k_le_3", diff, 1e-8),
        CheckResult::at_most("mo_orthogonality_defect_k_le_4", defect, 1e-9),
    ])
}

fn theta_structure(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (_, gs) = deg_ring(cfg)?;
    let frame = BlockFrame::from_ground_state(&gs)?;
    let solver = ThetaSolver::new(&frame)?;
    let bound = coercivity_bound(&frame);
    let mut rng = cfg.rng(100);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..200 {
        let a = BlockCoefficient::random(&frame, &mut rng, 1.0);
        min_ratio = min_ratio.min(theta_bilinear(&frame, &a, &a) / a.norm_a_squared(&frame));
    }
    let rhs = BlockCoefficient::random(&frame, &mut rng, 1.0);
    let x = solver.solve(&frame, &rhs)?;
    let mut back = theta_apply(&frame, &x);
    back.add_scaled(&rhs, -1.0);
    Ok(vec![
        CheckResult::at_most("theta_symmetry_defect", solver.symmetry_defect, 1e-10),
        CheckResult::at_least("theta_empirical_coercivity", min_ratio, 0.5 * bound),
        CheckResult::at_least("theta_exact_coercivity", solver.coercivity_constant(&frame), 0.5 * bound)
            .info("lowest generalized eigenvalue"),
        CheckResult::at_most("theta_solve_round_trip", back.max_abs(), 1e-9),
    ])
}

fn first_order_deg_blocks(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = deg_ring(cfg)?;
    let frame = BlockFrame::from_ground_state(&gs)?;
    let w = sys.random_potential(&mut cfg.rng(1), 1.0);
    let s = expand_degenerate(&gs, &w, 1, &DegOptions::default())?;
    let a = &s.a_k[1];
    let wf = frame.potential_frame(w.values());
    let (rf, rp, ru) = (frame.range_f(), frame.range_p(), frame.range_u());
    let np = frame.n_p();
    let lam = frame.lambda();
    let one_minus = DMatrix::identity(np, np) - lam;
    let mut pp = frame.block(&wf, rp.clone(), rp.clone()) * 0.5;
    let tr = pp.trace() / np as f64;
    for i in 0..np {
        pp[(i, i)] -= tr;
    }
    let expected = BlockCoefficient {
        a_uf: -frame.block(&wf, ru.clone(), rf.clone()),
        a_up: -(frame.block(&wf, ru.clone(), rp.clone()) * lam),
        a_pf: -(&one_minus * frame.block(&wf, rp.clone(), rf.clone())),
        a_pp: -pp,
    };
    let mut r = theta_apply(&frame, a);
    r.add_scaled(&expected, -1.0);
    let g1 = frame.basis().transpose() * &s.gamma_k[1] * frame.basis();
    let pattern = [
        max_abs(&(frame.block(&g1, rp.clone(), rp.clone()) - &a.a_pp)),
        max_abs(&(frame.block(&g1, ru.clone(), rf.clone()) - &a.a_uf)),
        max_abs(&(frame.block(&g1, ru.clone(), rp.clone()) - &a.a_up * lam)),
        max_abs(&(frame.block(&g1, rp.clone(), rf.clone()) - &one_minus * &a.a_pf)),
        max_abs(&frame.block(&g1, rf.clone(), rf)),
        max_abs(&frame.block(&g1, ru.clone(), ru)),
        max_abs(&(frame.to_site(&gamma1_frame(&frame, a)) - &s.gamma_k[1])),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(vec![
        CheckResult::at_most("a1_equation_residual", r.max_abs(), 1e-9),
        CheckResult::at_most("gamma1_block_pattern", pattern, 1e-9),
    ])
}

fn uniqueness_condition(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (_, gs) = deg_ring(cfg)?;
    let r = uniqueness_kernel_test(&gs)?;
    let c = synthetic_degenerate(&SyntheticParams {
        n_sites: 9,
        n_full: 2,
        n_partial: 2,
        fermi_level: -1.0,
        gap_below: 0.5,
        gap_above: 0.6,
        spacing: 0.3,
        kernel_scale: 0.2,
        occupations: None,
        seed: 11 + cfg.seed,
    })?;
    let mut dup = GroundState::from_synthetic(&c)?;
    let col = dup.eigvecs.column(dup.n_full).into_owned();
    dup.eigvecs.set_column(dup.n_full + 1, &col);
    let bad = uniqueness_kernel_test(&dup)?;
    Ok(vec![
        CheckResult::at_most("ring_shell_size", (gs.n_partial as f64 - 2.0).abs(), 0.0),
        CheckResult::at_least("ring_scaled_sigma_min", r.scaled_sigma_min(), 1e-6),
        CheckResult::at_most("ring_holds_flag", if r.holds { 0.0 } else { 1.0 }, 0.0),
        CheckResult::at_most("duplicated_orbital_holds_flag", if bad.holds { 1.0 } else { 0.0 }, 0.0),
    ])
}

fn pi_projector(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut worst_gap = f64::INFINITY;
    for inst in 0..20 {
        let mut rng = cfg.rng(1300 + inst);
        let (n, m) = (6, 2);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let mut t = symmetrize(&(&a * 0.3));
        for i in 0..m {
            t[(i, i)] += 1.0;
        }
        let p = pi_project(&t, m)?;
        let best = frobenius(&(&t - p.matrix()));
        for _ in 0..200 {
            let q = random_orthogonal(n, &mut rng);
            let cols = q.columns(0, m);
            let cand = cols * cols.transpose();
            worst_gap = worst_gap.min(frobenius(&(&t - cand)) - best);
        }
    }
    let mut worst_resid: f64 = 0.0;
    for inst in 0..50 {
        let mut rng = cfg.rng(1400 + inst);
        let n = 8;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let h = symmetrize(&a);
        let e = sym_eigen(&h).values;
        let eps_f = 0.5 * (e[2] + e[3]);
        let q = random_orthogonal(n, &mut rng);
        let gp = q.columns(0, 3) * q.columns(0, 3).transpose();
        let r = trace_identity_check(&h, eps_f, &gp)?;
        worst_resid = worst_resid.max(r.residual);
        // the aufbau projector itself gives zero on both sides
        let g = sym_apply(&h, |x| if x < eps_f { 1.0 } else { 0.0 });
        worst_resid = worst_resid.max(trace_identity_check(&h, eps_f, &g)?.residual);
    }
    Ok(vec![
        CheckResult::at_least("pi_nearest_projector_margin", worst_gap, -1e-12),
        CheckResult::at_most("trace_identity_residual", worst_resid, 1e-10),
    ])
}

fn chart_gradient_check(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let (sys, gs) = deg_ring(cfg)?;
    let w = sys.random_potential(&mut cfg.rng(3), 1.0);
    let s = expand_degenerate(&gs, &w, 2, &DegOptions::default())?;
    let betas = [2e-2, 1e-2, 5e-3, 2.5e-3];
    (1..=2)
        .map(|n| {
            let errs = betas
                .iter()
                .map(|&b| Ok(chart_gradient(&s.frame, &s.a_partial_sum(b, n), &w.scaled(b))?.norm()))
                .collect::<Result<Vec<f64>>>()?;
            let slope = loglog_slope(&betas, &errs);
            Ok(CheckResult::at_most(format!("gradient_n{n}_slope_dev"), (slope - (n + 1) as f64).abs(), 0.3))
        })
        .collect()
}

/// Runs criterion `id` (1-based).
pub fn run_criterion(id: usize, cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    if id == 0 || id > CRITERIA.len() {
        return Err(crate::error::Error::Input(format!("criterion {id} not in 1..=14")));
    }
    let start = Instant::now();
    let checks = match id {
        1 => first_order_energy(cfg),
        2 => nondeg_series_consistency(cfg),
        3 => wigner_nondeg(cfg),
        4 => wigner_deg(cfg),
        5 => no_splitting(cfg),
        6 => trace_structure(cfg),
        7 => response_structure(cfg),
        8 => evaluator_cross_check(cfg),
        9 => mo_dm_equivalence(cfg),
        10 => theta_structure(cfg),
        11 => first_order_deg_blocks(cfg),
        12 => uniqueness_condition(cfg),
        13 => pi_projector(cfg),
        _ => chart_gradient_check(cfg),
    }?;
    Ok(CriterionOutcome {
        id,
        name: CRITERIA[id - 1].to_string(),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the listed criteria in order; an error in one does not stop the rest.
pub fn run_suite(cfg: &SuiteConfig, ids: &[usize]) -> Vec<(usize, Result<CriterionOutcome>)> {
    ids.iter().map(|&id| (id, run_criterion(id, cfg))).collect()
}
