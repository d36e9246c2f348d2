//! Unperturbed (or perturbed) rHF ground state.
//!
//! The minimizer is found in two stages. Optimal damping (Frank-Wolfe with
//! exact line search over `K_N`) gives a certified but slowly converging
//! iterate; a Newton polish on the self-consistency conditions with the
//! detected Fermi structure then drives it to machine precision. The polished
//! state is accepted only if it satisfies the same optimality certificate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_spd, sym_eigen, symmetrize, trace_product};
use crate::model::{energy, mean_field, random_orthogonal, LatticeSystem, Potential, SyntheticConstruction};
use crate::par;

/// Occupation eigenvalues closer than this to 0 or 1 make the shell a
/// boundary case.
pub const OCCUPATION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    NonDegenerate,
    Degenerate,
    Boundary,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::NonDegenerate => "non_degenerate",
            Classification::Degenerate => "degenerate",
            Classification::Boundary => "boundary",
        };
        f.write_str(s)
    }
}

/// Group of site permutations that leave the problem invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetrizer {
    perms: Vec<Vec<usize>>,
}

impl Symmetrizer {
    pub fn new(perms: Vec<Vec<usize>>) -> Result<Self> {
        if perms.is_empty() {
            return Err(Error::Input("symmetrizer needs at least one element".into()));
        }
        let n = perms[0].len();
        for p in &perms {
            let mut seen = vec![false; n];
            if p.len() != n || p.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Input("symmetrizer element is not a permutation".into()));
            }
        }
        Ok(Symmetrizer { perms })
    }

    /// Dihedral group of the periodic chain (rotations and reflections).
    pub fn ring(n: usize) -> Self {
        let mut perms = Vec::with_capacity(2 * n);
        for s in 0..n {
            perms.push((0..n).map(|i| (i + s) % n).collect());
            perms.push((0..n).map(|i| (n + s - i) % n).collect());
        }
        Symmetrizer { perms }
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    /// Group average `|G|⁻¹ Σ_g P_g γ P_gᵀ`.
    pub fn apply(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let n = gamma.nrows();
        let mut out = DMatrix::zeros(n, n);
        for p in &self.perms {
            for b in 0..n {
                for a in 0..n {
                    out[(a, b)] += gamma[(p[a], p[b])];
                }
            }
        }
        out / self.perms.len() as f64
    }

    fn check_invariance(&self, sys: &LatticeSystem, w: &Potential) -> Result<()> {
        let n = sys.n_sites();
        if self.perms[0].len() != n {
            return Err(Error::Dimension("symmetrizer acts on a different lattice".into()));
        }
        let scale = sys.kinetic().norm() + sys.kernel().norm() + sys.v_ext().norm() + w.values().norm();
        let tol = 1e-12 * scale.max(1.0);
        let ext = sys.v_ext() + w.values();
        for p in &self.perms {
            let mut defect = 0.0_f64;
            for a in 0..n {
                defect = defect.max((ext[p[a]] - ext[a]).abs());
                for b in 0..n {
                    defect = defect
                        .max((sys.kinetic()[(p[a], p[b])] - sys.kinetic()[(a, b)]).abs())
                        .max((sys.kernel()[(p[a], p[b])] - sys.kernel()[(a, b)]).abs());
                }
            }
            if defect > tol {
                return Err(Error::Input(format!(
                    "symmetrizer element does not commute with the problem (defect {defect:e})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScfOptions {
    pub max_iter: usize,
    /// Target for the optimality certificate `−Tr(H(γ_aufbau − γ))`.
    pub tol_residual: f64,
    /// Absolute clustering tolerance; `None` means `1e-8 ×` spectral range.
    pub tol_cluster: Option<f64>,
    pub symmetrizer: Option<Symmetrizer>,
    pub initial_guess: Option<DMatrix<f64>>,
    /// `(N_f, N_p)` to use for the Newton polish instead of detection.
    pub structure_hint: Option<(usize, usize)>,
    pub polish: bool,
}

impl Default for ScfOptions {
    fn default() -> Self {
        ScfOptions {
            max_iter: 20_000,
            tol_residual: 1e-10,
            tol_cluster: None,
            symmetrizer: None,
            initial_guess: None,
            structure_hint: None,
            polish: true,
        }
    }
}

/// Diagnostics from an SCF run.
#[derive(Debug, Clone, Default)]
pub struct ScfReport {
    pub oda_iterations: usize,
    pub energy_history: Vec<f64>,
    pub certificate: f64,
    pub polished: bool,
    pub polish_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub gamma0: DMatrix<f64>,
    pub h0: DMatrix<f64>,
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
    pub rho0: DVector<f64>,
    pub kernel: DMatrix<f64>,
    pub n_electrons: usize,
    pub energy: f64,
    pub fermi_level: f64,
    pub n_full: usize,
    pub n_partial: usize,
    pub n_unocc: usize,
    pub lambda: DMatrix<f64>,
    /// `(g₋, g₊)`, both positive when the structure is well separated.
    pub gaps: (f64, f64),
    pub classification: Classification,
    pub tol_cluster: f64,
    pub report: ScfReport,
}

impl GroundState {
    pub fn n_sites(&self) -> usize {
        self.eigvals.len()
    }

    pub fn basis_f(&self) -> DMatrix<f64> {
        self.eigvecs.columns(0, self.n_full).into_owned()
    }

    pub fn basis_p(&self) -> DMatrix<f64> {
        self.eigvecs.columns(self.n_full, self.n_partial).into_owned()
    }

    pub fn basis_u(&self) -> DMatrix<f64> {
        self.eigvecs
            .columns(self.n_full + self.n_partial, self.n_unocc)
            .into_owned()
    }

    /// Lowest `N` orbitals, the occupied set in the non-degenerate case.
    pub fn occupied(&self) -> DMatrix<f64> {
        self.eigvecs.columns(0, self.n_electrons).into_owned()
    }

    pub fn require(&self, want: Classification, operation: &'static str) -> Result<()> {
        if self.classification != want {
            return Err(Error::precondition(
                operation,
                format!("ground state is {}, expected {}", self.classification, want),
            ));
        }
        Ok(())
    }

    /// Ground state of a fixed Hamiltonian with Aufbau filling (no SCF). Used
    /// for operator-level tests where `h0` is prescribed.
    pub fn from_hamiltonian(h0: DMatrix<f64>, n_electrons: usize, kernel: DMatrix<f64>) -> Result<Self> {
        let n = h0.nrows();
        if !h0.is_square() || kernel.shape() != (n, n) {
            return Err(Error::Dimension("Hamiltonian and kernel shapes differ".into()));
        }
        if n_electrons == 0 || n_electrons > n {
            return Err(Error::Input(format!("electron count {n_electrons} out of range")));
        }
        let h0 = symmetrize(&h0);
        let eig = sym_eigen(&h0);
        let gamma0 = aufbau(&eig, n_electrons, 0.0);
        let band: f64 = eig.values.iter().take(n_electrons).sum();
        Ok(analyze(gamma0, h0, kernel, n_electrons, band, None, ScfReport::default()))
    }

    /// Exact ground state of a synthetic degenerate construction.
    pub fn from_synthetic(c: &SyntheticConstruction) -> Result<Self> {
        let n = c.system.n_sites();
        let e = energy(&c.system, &c.gamma0, &Potential::zeros(n))?;
        let tol = default_tol_cluster(&c.eigvals);
        let mut gs = analyze(
            c.gamma0.clone(),
            c.h0.clone(),
            c.system.kernel().clone(),
            c.system.n_electrons(),
            e,
            Some(tol),
            ScfReport::default(),
        );
        // keep the construction frame and Λ exactly
        if gs.n_full == c.n_full && gs.n_partial == c.n_partial {
            gs.eigvals = c.eigvals.clone();
            gs.eigvecs = c.eigvecs.clone();
            gs.lambda = c.lambda.clone();
        }
        gs.classification = classify(&gs, tol);
        Ok(gs)
    }
}

fn default_tol_cluster(eigvals: &DVector<f64>) -> f64 {
    let n = eigvals.len();
    let range = eigvals[n - 1] - eigvals[0];
    (1e-8 * range).max(1e-12)
}

/// Aufbau density of `eig`: lowest `N` levels filled, ties at the Fermi
/// level (within `tie`) share the remaining electrons evenly.
pub fn aufbau(eig: &crate::linalg::SortedEigen, n_electrons: usize, tie: f64) -> DMatrix<f64> {
    let n = eig.values.len();
    let e_n = eig.values[n_electrons - 1];
    let lo = (0..n_electrons).find(|&j| (eig.values[j] - e_n).abs() <= tie).unwrap_or(n_electrons - 1);
    let hi = (n_electrons..n)
        .find(|&j| (eig.values[j] - e_n).abs() > tie)
        .unwrap_or(n);
    let frac = (n_electrons - lo) as f64 / (hi - lo) as f64;
    let mut scaled = eig.vectors.columns(0, hi).into_owned();
    let mut occ = DVector::zeros(hi);
    for j in 0..hi {
        occ[j] = if j < lo { 1.0 } else { frac };
        scaled.column_mut(j).scale_mut(occ[j]);
    }
    symmetrize(&(scaled * eig.vectors.columns(0, hi).transpose()))
}

/// Uniformly rotated random element of `K_N`, used for random restarts.
pub fn random_density<R: Rng + ?Sized>(n: usize, n_electrons: usize, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(n, rng);
    let mut occ: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = occ.iter().sum();
    let target = n_electrons as f64;
    if s > target {
        occ.iter_mut().for_each(|x| *x *= target / s);
    } else {
        let room: f64 = occ.iter().map(|x| 1.0 - x).sum();
        let t = (target - s) / room;
        occ.iter_mut().for_each(|x| *x += t * (1.0 - *x));
    }
    symmetrize(&(&q * DMatrix::from_diagonal(&DVector::from_vec(occ)) * q.transpose()))
}

/// Ground state of the unperturbed problem.
pub fn solve_scf(sys: &LatticeSystem, opts: &ScfOptions) -> Result<GroundState> {
    minimize(sys, &Potential::zeros(sys.n_sites()), opts)
}

/// Ground state of the problem perturbed by `w`. The returned `h0` includes `w`.
pub fn minimize(sys: &LatticeSystem, w: &Potential, opts: &ScfOptions) -> Result<GroundState> {
    let n = sys.n_sites();
    let n_el = sys.n_electrons();
    if w.len() != n {
        return Err(Error::Dimension(format!("potential has length {}, expected {n}", w.len())));
    }
    if let Some(s) = &opts.symmetrizer {
        s.check_invariance(sys, w)?;
    }
    let sym = |g: DMatrix<f64>| match &opts.symmetrizer {
        Some(s) => s.apply(&g),
        None => g,
    };

    let mut gamma = match &opts.initial_guess {
        Some(g) => {
            if g.shape() != (n, n) {
                return Err(Error::Dimension("initial guess has wrong shape".into()));
            }
            sym(symmetrize(g))
        }
        None => {
            let h = mean_field(sys, &DVector::zeros(n), w)?;
            let eig = sym_eigen(&h);
            sym(aufbau(&eig, n_el, tie_tolerance(&eig.values)))
        }
    };

    let mut report = ScfReport::default();
    let mut e_cur = energy(sys, &gamma, w)?;
    report.energy_history.push(e_cur);
    let scale = e_cur.abs().max(1.0);
    // polish attempts at geometrically shrinking certificates
    let mut next_polish = if opts.polish { (1e-3 * scale).max(opts.tol_residual) } else { 0.0 };
    let mut cert;
    loop {
        let step = oda_step(sys, w, &gamma)?;
        cert = step.certificate;
        if opts.polish && cert <= next_polish {
            next_polish = if next_polish > opts.tol_residual { 0.1 * next_polish } else { 0.0 };
            match polish(sys, w, &gamma, opts) {
                Ok((g, res)) => {
                    let g = sym(g);
                    let e_new = energy(sys, &g, w)?;
                    let c_new = oda_step(sys, w, &g)?.certificate;
                    if e_new <= e_cur + 1e-12 * scale && c_new <= opts.tol_residual {
                        report.polished = true;
                        report.polish_residual = res;
                        report.certificate = c_new;
                        report.energy_history.push(e_new);
                        gamma = g;
                        e_cur = e_new;
                        break;
                    }
                    log::debug!(
                        "polish rejected: energy change {:e}, certificate {:e}",
                        e_new - e_cur,
                        c_new
                    );
                }
                Err(e) => log::debug!("polish failed: {e}"),
            }
        }
        if cert <= opts.tol_residual {
            report.certificate = cert;
            break;
        }
        if report.oda_iterations >= opts.max_iter {
            return Err(Error::Convergence {
                iterations: report.oda_iterations,
                residual: cert,
            });
        }
        let next = sym(&gamma + (&step.target - &gamma) * step.t);
        let e_next = energy(sys, &next, w)?;
        if e_next > e_cur + 1e-12 * scale {
            return Err(Error::Consistency(format!(
                "ODA energy increased by {:e} at iteration {}",
                e_next - e_cur,
                report.oda_iterations
            )));
        }
        gamma = next;
        e_cur = e_next;
        report.energy_history.push(e_cur);
        report.oda_iterations += 1;
    }

    let rho = gamma.diagonal();
    let h = mean_field(sys, &rho, w)?;
    Ok(analyze(
        gamma,
        h,
        sys.kernel().clone(),
        n_el,
        e_cur,
        opts.tol_cluster,
        report,
    ))
}

fn tie_tolerance(values: &DVector<f64>) -> f64 {
    let n = values.len();
    1e-10 * (values[n - 1] - values[0]).max(1.0)
}

struct OdaStep {
    target: DMatrix<f64>,
    t: f64,
    certificate: f64,
}

fn oda_step(sys: &LatticeSystem, w: &Potential, gamma: &DMatrix<f64>) -> Result<OdaStep> {
    let rho = gamma.diagonal();
    let h = mean_field(sys, &rho, w)?;
    let eig = sym_eigen(&h);
    let target = aufbau(&eig, sys.n_electrons(), tie_tolerance(&eig.values));
    let diff = &target - gamma;
    let s = trace_product(&h, &diff);
    let drho = diff.diagonal();
    let c = sys.coulomb_pairing(&drho, &drho);
    let t = if c > 0.0 { (-s / c).clamp(0.0, 1.0) } else { 1.0 };
    Ok(OdaStep {
        target,
        t,
        certificate: (-s).max(0.0),
    })
}

/// Candidate `(N_f, N_p)` splittings near the Fermi index, most specific first.
fn structure_candidates(values: &DVector<f64>, n_el: usize) -> Vec<(usize, usize)> {
    let n = values.len();
    let range = (values[n - 1] - values[0]).max(1e-300);
    let mut out = Vec::new();
    let e_n = values[n_el - 1];
    let gap = if n_el < n { values[n_el] - e_n } else { f64::INFINITY };
    if gap > 1e-3 * range {
        out.push((n_el, 0));
    }
    for rel in [1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
        let tol = rel * range;
        let lo = (0..n_el).find(|&j| e_n - values[j] <= tol).unwrap_or(n_el - 1);
        let hi = (n_el..n).find(|&j| values[j] - e_n > tol).unwrap_or(n);
        let cand = if hi == n_el { (n_el, 0) } else { (lo, hi - lo) };
        if !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

fn polish(
    sys: &LatticeSystem,
    w: &Potential,
    gamma: &DMatrix<f64>,
    opts: &ScfOptions,
) -> Result<(DMatrix<f64>, f64)> {
    let rho = gamma.diagonal();
    let h = mean_field(sys, &rho, w)?;
    let eig = sym_eigen(&h);
    let n_el = sys.n_electrons();
    let candidates = match opts.structure_hint {
        Some(s) => vec![s],
        None => structure_candidates(&eig.values, n_el),
    };
    let mut last_err = Error::Consistency("no structure candidate".into());
    for (nf, np) in candidates {
        if nf + np > sys.n_sites() || (np == 0 && nf != n_el) || nf > n_el || nf + np < n_el {
            continue;
        }
        match newton_polish(sys, w, gamma, &eig, nf, np) {
            Ok(r) => return Ok(r),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Self-consistency residual for a fixed Fermi structure.
struct PolishProblem<'a> {
    sys: &'a LatticeSystem,
    core: DMatrix<f64>,
    nf: usize,
    np: usize,
    reference: DMatrix<f64>,
}

impl PolishProblem<'_> {
    fn n_sites(&self) -> usize {
        self.sys.n_sites()
    }

    fn n_sym(&self) -> usize {
        self.np * (self.np + 1) / 2
    }

    fn n_unknowns(&self) -> usize {
        if self.np == 0 {
            self.n_sites()
        } else {
            self.n_sites() + self.n_sym() + 1
        }
    }

    fn unpack_y(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.np, self.np);
        let mut k = 0;
        for i in 0..self.np {
            for j in i..self.np {
                m[(i, j)] = y[k];
                m[(j, i)] = y[k];
                k += 1;
            }
        }
        m
    }

    /// Density matrix and residual at `x = (v, y, ε)`.
    fn eval(&self, x: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.n_sites();
        let mut h = self.core.clone();
        for i in 0..n {
            h[(i, i)] += x[i];
        }
        let eig = sym_eigen(&h);
        let nf = self.nf;
        let pf = crate::linalg::column_projector(&eig.vectors, 0..nf);
        let mut res = DVector::zeros(self.n_unknowns());
        if self.np == 0 {
            let gamma = pf;
            let r = x.rows(0, n) - self.sys.hartree(&gamma.diagonal());
            res.rows_mut(0, n).copy_from(&r);
            return Ok((gamma, res));
        }
        let np = self.np;
        let c = eig.vectors.columns(nf, np);
        let cb = c.transpose() * &self.reference;
        let m = cb.transpose() * &cb;
        let min_overlap = sym_eigen(&m).values[0];
        if min_overlap < 1e-3 {
            return Err(Error::Consistency("Fermi subspace drifted from its reference".into()));
        }
        let phi = c * &cb * inv_sqrt_spd(&m);
        let y: Vec<f64> = x.rows(n, self.n_sym()).iter().copied().collect();
        let ymat = self.unpack_y(&y);
        let eps = x[n + self.n_sym()];
        let gamma = symmetrize(&(pf + &phi * &ymat * phi.transpose()));
        let r = x.rows(0, n) - self.sys.hartree(&gamma.diagonal());
        res.rows_mut(0, n).copy_from(&r);
        let g = phi.transpose() * &h * &phi;
        let mut k = n;
        for i in 0..np {
            for j in i..np {
                res[k] = if i == j { g[(i, i)] - eps } else { g[(i, j)] };
                k += 1;
            }
        }
        res[k] = ymat.trace() - (self.sys.n_electrons() - nf) as f64;
        Ok((gamma, res))
    }
}

fn newton_polish(
    sys: &LatticeSystem,
    w: &Potential,
    gamma: &DMatrix<f64>,
    eig: &crate::linalg::SortedEigen,
    nf: usize,
    np: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let n = sys.n_sites();
    let core = mean_field(sys, &DVector::zeros(n), w)?;
    let prob = PolishProblem {
        sys,
        core,
        nf,
        np,
        reference: eig.vectors.columns(nf, np).into_owned(),
    };
    let mut x = DVector::zeros(prob.n_unknowns());
    x.rows_mut(0, n).copy_from(&sys.hartree(&gamma.diagonal()));
    if np > 0 {
        let phi = eig.vectors.columns(nf, np);
        let y0 = symmetrize(&(phi.transpose() * gamma * phi));
        let mut k = n;
        for i in 0..np {
            for j in i..np {
                x[k] = y0[(i, j)];
                k += 1;
            }
        }
        x[k] = (0..np).map(|i| eig.values[nf + i]).sum::<f64>() / np as f64;
    }

    let (mut g_cur, mut r) = prob.eval(&x)?;
    let mut rnorm = r.amax();
    let scale = 1.0 + x.amax();
    for _ in 0..40 {
        if rnorm <= 1e-14 * scale {
            break;
        }
        let m = prob.n_unknowns();
        let hstep = 1e-6;
        let cols = par::try_map_range(m, |j| {
            let mut xp = x.clone();
            xp[j] += hstep;
            let mut xm = x.clone();
            xm[j] -= hstep;
            let (_, rp) = prob.eval(&xp)?;
            let (_, rm) = prob.eval(&xm)?;
            Ok::<_, Error>((rp - rm) / (2.0 * hstep))
        })?;
        let jac = DMatrix::from_columns(&cols);
        let dx = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::Consistency("singular self-consistency Jacobian".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt = &x + &dx * t;
            if let Ok((g, rt)) = prob.eval(&xt) {
                let nt = rt.amax();
                if nt < rnorm {
                    x = xt;
                    g_cur = g;
                    r = rt;
                    rnorm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rnorm > 1e-10 * scale {
        return Err(Error::Convergence {
            iterations: 40,
            residual: rnorm,
        });
    }
    if np > 0 {
        let y: Vec<f64> = x.rows(n, prob.n_sym()).iter().copied().collect();
        let occ = sym_eigen(&prob.unpack_y(&y)).values;
        if occ[0] < -1e-10 || occ[np - 1] > 1.0 + 1e-10 {
            return Err(Error::Consistency(format!(
                "polished Fermi-shell occupations [{:e}, {:e}] leave [0, 1]",
                occ[0],
                occ[np - 1]
            )));
        }
    }
    Ok((g_cur, rnorm))
}

/// Fills the spectral and Fermi-structure fields of a ground state.
fn analyze(
    gamma0: DMatrix<f64>,
    h0: DMatrix<f64>,
    kernel: DMatrix<f64>,
    n_electrons: usize,
    energy: f64,
    tol_cluster: Option<f64>,
    report: ScfReport,
) -> GroundState {
    let eig = sym_eigen(&h0);
    let tol = tol_cluster.unwrap_or_else(|| default_tol_cluster(&eig.values));
    let n = eig.values.len();
    let (nf, np) = fermi_structure(&eig.values, n_electrons, tol);
    let phi_p = eig.vectors.columns(nf, np);
    let lambda = symmetrize(&(phi_p.transpose() * &gamma0 * phi_p));
    let mut gs = GroundState {
        rho0: gamma0.diagonal(),
        gamma0,
        h0,
        eigvals: eig.values,
        eigvecs: eig.vectors,
        kernel,
        n_electrons,
        energy,
        fermi_level: 0.0,
        n_full: nf,
        n_partial: np,
        n_unocc: n - nf - np,
        lambda,
        gaps: (0.0, 0.0),
        classification: Classification::Boundary,
        tol_cluster: tol,
        report,
    };
    fill_fermi_data(&mut gs);
    gs.classification = classify(&gs, tol);
    gs
}

fn fermi_structure(values: &DVector<f64>, n_el: usize, tol: f64) -> (usize, usize) {
    let n = values.len();
    if n_el == n || values[n_el] - values[n_el - 1] > tol {
        return (n_el, 0);
    }
    let e_n = values[n_el - 1];
    let lo = (0..n_el).find(|&j| (values[j] - e_n).abs() <= tol).unwrap_or(n_el - 1);
    let hi = (n_el..n).find(|&j| (values[j] - e_n).abs() > tol).unwrap_or(n);
    (lo, hi - lo)
}

fn fill_fermi_data(gs: &mut GroundState) {
    let e = &gs.eigvals;
    let n = e.len();
    let (nf, np) = (gs.n_full, gs.n_partial);
    if np == 0 {
        let below = e[nf - 1];
        let above = if nf < n { e[nf] } else { below + 2.0 };
        gs.fermi_level = 0.5 * (below + above);
        gs.gaps = (gs.fermi_level - below, above - gs.fermi_level);
    } else {
        let ef = (nf..nf + np).map(|j| e[j]).sum::<f64>() / np as f64;
        gs.fermi_level = ef;
        let gm = if nf > 0 { ef - e[nf - 1] } else { ef - e[0] + 1.0 };
        let gp = if nf + np < n { e[nf + np] - ef } else { 1.0 };
        gs.gaps = (gm, gp);
    }
}

/// Case analysis of the Fermi level.
pub fn classify(gs: &GroundState, tol_cluster: f64) -> Classification {
    let e = &gs.eigvals;
    let n = e.len();
    let n_el = gs.n_electrons;
    if n_el == n || e[n_el] - e[n_el - 1] > tol_cluster {
        return Classification::NonDegenerate;
    }
    let (nf, np) = fermi_structure(e, n_el, tol_cluster);
    if np < 2 {
        return Classification::Boundary;
    }
    let lambda = if nf == gs.n_full && np == gs.n_partial {
        gs.lambda.clone()
    } else {
        let phi = gs.eigvecs.columns(nf, np);
        symmetrize(&(phi.transpose() * &gs.gamma0 * phi))
    };
    let occ = sym_eigen(&lambda).values;
    if occ[0] > OCCUPATION_MARGIN && occ[np - 1] < 1.0 - OCCUPATION_MARGIN {
        Classification::Degenerate
    } else {
        Classification::Boundary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub holds: bool,
}

impl UniquenessReport {
    /// `σ_min / σ_max`, infinite when the traceless space is trivial.
    pub fn scaled_sigma_min(&self) -> f64 {
        if self.sigma_min.is_infinite() {
            f64::INFINITY
        } else if self.sigma_max > 0.0 {
            self.sigma_min / self.sigma_max
        } else {
            0.0
        }
    }
}

/// Injectivity of `M ↦ Σ M_ij φ_i φ_j` on traceless symmetric `M`.
pub fn uniqueness_kernel_test(gs: &GroundState) -> Result<UniquenessReport> {
    if gs.n_partial == 0 {
        return Err(Error::precondition(
            "uniqueness_kernel_test",
            "ground state has no partially occupied shell",
        ));
    }
    Ok(uniqueness_for_orbitals(&gs.basis_p()))
}

/// Same test for an explicit set of Fermi-shell orbitals (columns).
pub fn uniqueness_for_orbitals(phi: &DMatrix<f64>) -> UniquenessReport {
    let np = phi.ncols();
    let n = phi.nrows();
    if np <= 1 {
        return UniquenessReport {
            sigma_min: f64::INFINITY,
            sigma_max: f64::INFINITY,
            holds: true,
        };
    }
    let m = np * (np + 1) / 2;
    let mut cols = DMatrix::zeros(n, m);
    let mut trace_dir = DVector::zeros(m);
    let mut k = 0;
    for i in 0..np {
        for j in i..np {
            let scale = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            for a in 0..n {
                cols[(a, k)] = scale * phi[(a, i)] * phi[(a, j)];
            }
            if i == j {
                trace_dir[k] = 1.0 / (np as f64).sqrt();
            }
            k += 1;
        }
    }
    let proj = DMatrix::identity(m, m) - &trace_dir * trace_dir.transpose();
    let pe = sym_eigen(&proj);
    let basis = pe.vectors.columns(1, m - 1).into_owned();
    let restricted = cols * basis;
    let sv = restricted.svd(false, false).singular_values;
    let sigma_max = sv.max();
    let sigma_min = if n < m - 1 { 0.0 } else { sv.min() };
    UniquenessReport {
        sigma_min,
        sigma_max,
        holds: sigma_min > 1e-8 * sigma_max,
    }
}

/// Eigenvalue counts of `H₀ + diag(v)` in the five windows built from
/// `ε₁`, `ε_F` and the gaps.
pub fn stability_ranks(gs: &GroundState, v: &Potential) -> Result<[usize; 5]> {
    if gs.classification == Classification::Boundary {
        return Err(Error::precondition("stability_ranks", "boundary ground state"));
    }
    if v.len() != gs.n_sites() {
        return Err(Error::Dimension("potential length differs from system".into()));
    }
    let (gm, gp) = gs.gaps;
    let ef = gs.fermi_level;
    let a1 = gs.eigvals[0] - 1.0;
    let a2 = ef - 0.75 * gm;
    let a3 = ef - 0.25 * gm;
    let a4 = ef + 0.25 * gp;
    let a5 = ef + 0.75 * gp;
    let mut h = gs.h0.clone();
    for i in 0..gs.n_sites() {
        h[(i, i)] += v.values()[i];
    }
    let e = sym_eigen(&h).values;
    let mut r = [0usize; 5];
    for &x in e.iter() {
        if x <= a1 {
            r[0] += 1;
        } else if x < a2 {
            r[1] += 1;
        } else if x <= a3 {
            r[2] += 1;
        } else if x <= a4 {
            r[3] += 1;
        } else if x <= a5 {
            r[4] += 1;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_demo_system, synthetic_degenerate, DemoKind, RingParams, SyntheticParams, Tolerances};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn ring(n: usize, n_el: usize) -> LatticeSystem {
        build_demo_system(&DemoKind::Ring(RingParams {
            n_sites: n,
            n_electrons: n_el,
            hopping: 1.0,
            yukawa_mass: 1.0,
            coupling: 1.0,
            background: -3.0,
        }))
        .unwrap()
    }

    fn ring_opts(n: usize) -> ScfOptions {
        ScfOptions {
            symmetrizer: Some(Symmetrizer::ring(n)),
            ..Default::default()
        }
    }

    fn synth(np: usize, occ: Option<Vec<f64>>) -> SyntheticConstruction {
        synthetic_degenerate(&SyntheticParams {
            n_sites: 9,
            n_full: 2,
            n_partial: np,
            fermi_level: -1.0,
            gap_below: 0.5,
            gap_above: 0.6,
            spacing: 0.3,
            kernel_scale: 0.2,
            occupations: occ,
            seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn two_level_fills_lowest() {
        let sys = LatticeSystem::new(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::identity(2, 2) * 1e-6,
            1,
            &Tolerances::default(),
        )
        .unwrap();
        let gs = solve_scf(&sys, &ScfOptions::default()).unwrap();
        assert_abs_diff_eq!(gs.gamma0[(0, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gs.gamma0[(1, 1)], 0.0, epsilon = 1e-9);
        assert_eq!(gs.classification, Classification::NonDegenerate);
    }

    #[test]
    fn ring_energy_matches_translation_invariant_minimum() {
        let n = 16;
        let n_el = 2;
        let sys = ring(n, n_el);
        let gs = solve_scf(&sys, &ring_opts(n)).unwrap();
        // shift-invariant states have constant density N/n; only the kinetic
        // occupations remain, and they are filled from the bottom
        let kin = sym_eigen(sys.kinetic()).values;
        let rho = n_el as f64 / n as f64;
        let ksum: f64 = sys.kernel().iter().sum();
        let brute = kin.iter().take(n_el).sum::<f64>() - 3.0 * n_el as f64 + 0.5 * rho * rho * ksum;
        assert_abs_diff_eq!(gs.energy, brute, epsilon = 1e-10);
    }

    #[test]
    fn ring_half_filled_shell_is_degenerate() {
        let n = 16;
        let sys = ring(n, 2);
        let gs = solve_scf(&sys, &ring_opts(n)).unwrap();
        assert_eq!(gs.classification, Classification::Degenerate);
        assert_eq!((gs.n_full, gs.n_partial), (1, 2));
        let occ = sym_eigen(&gs.lambda).values;
        assert_abs_diff_eq!(occ[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(occ[1], 0.5, epsilon = 1e-9);
        let spread = gs.eigvals[2] - gs.eigvals[1];
        assert!(spread <= 1e-11 * gs.fermi_level.abs(), "spread {spread:e}");
        assert!(gs.gaps.0 > 0.0 && gs.gaps.1 > 0.0);
    }

    #[test]
    fn ring_mean_field_is_shift_invariant() {
        let n = 16;
        let gs = solve_scf(&ring(n, 2), &ring_opts(n)).unwrap();
        let s = DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
        let d = &s * &gs.h0 * s.transpose() - &gs.h0;
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn ground_state_invariants() {
        let n = 16;
        for n_el in [2, 3] {
            let gs = solve_scf(&ring(n, n_el), &ring_opts(n)).unwrap();
            let comm = &gs.h0 * &gs.gamma0 - &gs.gamma0 * &gs.h0;
            assert!(comm.norm() <= 1e-8);
            assert_abs_diff_eq!(gs.gamma0.trace(), n_el as f64, epsilon = 1e-9);
            let pf = crate::linalg::column_projector(&gs.eigvecs, 0..gs.n_full);
            let phi = gs.basis_p();
            let rebuilt = pf + &phi * &gs.lambda * phi.transpose();
            assert!((rebuilt - &gs.gamma0).norm() <= 1e-8);
            // Aufbau blocks in the eigenbasis
            let g = gs.eigvecs.transpose() * &gs.gamma0 * &gs.eigvecs;
            let no = gs.n_full + gs.n_partial;
            for i in 0..n {
                for j in 0..n {
                    let in_p = |k: usize| k >= gs.n_full && k < no;
                    if in_p(i) && in_p(j) {
                        continue;
                    }
                    let expect = if i == j && i < gs.n_full { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - expect).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn oda_energy_is_monotone_and_density_unique() {
        let n = 16;
        let sys = ring(n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut densities = Vec::new();
        for _ in 0..2 {
            let opts = ScfOptions {
                initial_guess: Some(random_density(n, 2, &mut rng)),
                ..Default::default()
            };
            let gs = solve_scf(&sys, &opts).unwrap();
            for w in gs.report.energy_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            densities.push(gs.rho0);
        }
        let d = &densities[0] - &densities[1];
        assert!(sys.coulomb_norm(&d) <= 1e-7);
    }

    #[test]
    fn classify_examples() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0, 1.0]));
        let gs = GroundState::from_hamiltonian(h, 2, DMatrix::identity(3, 3)).unwrap();
        assert_eq!(classify(&gs, 1e-6), Classification::NonDegenerate);

        let c = synth(2, Some(vec![1.0, 0.0]));
        let gs = GroundState::from_synthetic(&c).unwrap();
        assert_eq!(gs.classification, Classification::Boundary);

        let c = synth(3, None);
        let gs = GroundState::from_synthetic(&c).unwrap();
        assert_eq!(gs.classification, Classification::Degenerate);
        assert_eq!((gs.n_full, gs.n_partial), (2, 3));
    }

    #[test]
    fn synthetic_state_is_scf_fixed_point() {
        let c = synth(2, None);
        let gs = solve_scf(&c.system, &ScfOptions::default()).unwrap();
        let exact = GroundState::from_synthetic(&c).unwrap();
        assert_abs_diff_eq!(gs.energy, exact.energy, epsilon = 1e-10);
        assert!((gs.rho0 - exact.rho0).norm() < 1e-7);
    }

    #[test]
    fn uniqueness_examples() {
        let n = 16;
        let gs = solve_scf(&ring(n, 2), &ring_opts(n)).unwrap();
        let r = uniqueness_kernel_test(&gs).unwrap();
        assert!(r.holds && r.scaled_sigma_min() > 1e-6);

        let c = synth(2, None);
        let mut gs = GroundState::from_synthetic(&c).unwrap();
        let col = gs.eigvecs.column(gs.n_full).into_owned();
        gs.eigvecs.set_column(gs.n_full + 1, &col);
        let r = uniqueness_kernel_test(&gs).unwrap();
        assert!(!r.holds);

        let one = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(uniqueness_for_orbitals(&one).holds);

        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        let gs = GroundState::from_hamiltonian(h, 1, DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(uniqueness_kernel_test(&gs), Err(Error::Precondition { .. })));
    }

    #[test]
    fn stability_rank_examples() {
        let n = 16;
        let sys = ring(n, 2);
        let gs = solve_scf(&sys, &ring_opts(n)).unwrap();
        let zero = Potential::zeros(n);
        assert_eq!(stability_ranks(&gs, &zero).unwrap(), [0, 1, 0, 2, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = sys.random_potential(&mut rng, 1e-3 * gs.gaps.0);
        assert_eq!(stability_ranks(&gs, &small).unwrap(), [0, 1, 0, 2, 0]);
        let mut big = DVector::zeros(n);
        big[0] = -10.0 * gs.gaps.1;
        let big = Potential::new(big).unwrap();
        assert_ne!(stability_ranks(&gs, &big).unwrap(), [0, 1, 0, 2, 0]);
    }

    #[test]
    fn symmetrizer_rejects_non_invariant_problem() {
        let n = 8;
        let sys = ring(n, 2);
        let mut w = DVector::zeros(n);
        w[0] = 0.1;
        let opts = ring_opts(n);
        let r = minimize(&sys, &Potential::new(w).unwrap(), &opts);
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
