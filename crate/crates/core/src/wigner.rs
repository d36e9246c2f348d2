//! Checks of the (2n+1) rule in both of its forms, the nearest-projector map
//! `Π`, and the trace identity behind the non-negativity of the Wigner gap.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::deg_pt::{expand_degenerate, DegOptions, DegSeries};
use crate::error::{Error, Result};
use crate::ground_state::{minimize, GroundState, ScfOptions};
use crate::io::write_table;
use crate::linalg::{sym_apply, sym_eigen, symmetrize, trace_product};
use crate::model::{energy, DensityMatrix, LatticeSystem, Potential};
use crate::nondeg_pt::{expand, NondegOptions, NondegSeries};
use crate::par;

/// Eigenvalues closer than this to ½ make `Π` ambiguous.
pub const TAU_HALF: f64 = 1e-8;
pub const DEFAULT_SLOPE_TOL: f64 = 0.35;
/// Errors below this times `max(1, |𝓔(0)|)` are treated as round-off and
/// left out of slope fits.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-13;

/// Spectral projector of `t` onto eigenvalues above ½, required to have rank `n`.
pub fn pi_project(t: &DMatrix<f64>, n: usize) -> Result<DensityMatrix> {
    if !t.is_square() {
        return Err(Error::Dimension("pi_project needs a square matrix".into()));
    }
    let eig = sym_eigen(&symmetrize(t));
    if let Some(x) = eig.values.iter().find(|x| (**x - 0.5).abs() <= TAU_HALF) {
        return Err(Error::Domain(format!("eigenvalue {x} is too close to 1/2")));
    }
    let above = eig.values.iter().filter(|x| **x > 0.5).count();
    if above != n {
        return Err(Error::Domain(format!(
            "{above} eigenvalues above 1/2, expected {n}"
        )));
    }
    let m = t.nrows();
    let v = eig.vectors.columns(m - n, n);
    Ok(DensityMatrix::from_matrix_unchecked(symmetrize(&(v * v.transpose()))))
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `Tr(hQ)` against `Tr(|h − ε_F| Q²)` with `Q = γ′ − 1_{(−∞,ε_F)}(h)`.
pub fn trace_identity_check(h: &DMatrix<f64>, eps_f: f64, gamma_prime: &DMatrix<f64>) -> Result<TraceIdentity> {
    let h = symmetrize(h);
    let eig = sym_eigen(&h);
    let scale = eig.values.amax().max(1.0);
    if eig.values.iter().any(|e| (e - eps_f).abs() <= 1e-12 * scale) {
        return Err(Error::precondition("trace_identity_check", "ε_F is an eigenvalue of h"));
    }
    let gamma = sym_apply(&h, |e| if e < eps_f { 1.0 } else { 0.0 });
    if (gamma_prime.trace() - gamma.trace()).abs() > 1e-9 {
        return Err(Error::precondition(
            "trace_identity_check",
            format!("traces differ: {} vs {}", gamma_prime.trace(), gamma.trace()),
        ));
    }
    let q = gamma_prime - &gamma;
    let lhs = trace_product(&h, &q);
    let abs_shift = sym_apply(&h, |e| (e - eps_f).abs());
    let rhs = trace_product(&abs_shift, &(&q * &q));
    if lhs < -1e-12 * scale {
        return Err(Error::Consistency(format!("Tr(hQ) = {lhs:e} is negative")));
    }
    Ok(TraceIdentity {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub label: String,
    pub beta_grid: Vec<f64>,
    pub errors: Vec<f64>,
    /// Points entering the fit.
    pub used: Vec<bool>,
    pub fitted_slope: f64,
    pub expected_slope: f64,
    pub slope_tol: f64,
    pub min_error: f64,
    pub pass: bool,
}

impl SlopeReport {
    /// Fits log(error) against log(β), leaving out the largest β and points
    /// under `floor`. `signed` errors below `−1e−12` fail the report.
    pub fn fit(label: &str, beta_grid: &[f64], errors: &[f64], expected: f64, slope_tol: f64, floor: f64, signed: bool) -> Self {
        let largest = beta_grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i);
        let used: Vec<bool> = (0..beta_grid.len())
            .map(|i| Some(i) != largest && errors[i].abs() >= floor)
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = beta_grid
            .iter()
            .zip(errors)
            .zip(&used)
            .filter(|(_, u)| **u)
            .map(|((b, e), _)| (b.ln(), e.abs().ln()))
            .unzip();
        let fitted = if xs.len() >= 2 { least_squares_slope(&xs, &ys) } else { f64::NAN };
        let min_error = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let sign_ok = !signed || min_error >= -1e-12;
        SlopeReport {
            label: label.to_string(),
            beta_grid: beta_grid.to_vec(),
            errors: errors.to_vec(),
            used,
            fitted_slope: fitted,
            expected_slope: expected,
            slope_tol,
            min_error,
            pass: fitted.is_finite() && (fitted - expected).abs() <= slope_tol && sign_ok,
        }
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = (0..self.beta_grid.len())
            .map(|i| vec![self.beta_grid[i], self.errors[i], if self.used[i] { 1.0 } else { 0.0 }])
            .collect();
        write_table(path, &["beta", "error", "used"], &rows)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} slope {:.3} expected {:.1} ± {:.2} min_error {:.3e} {}",
            self.label,
            self.fitted_slope,
            self.expected_slope,
            self.slope_tol,
            self.min_error,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone)]
pub struct WignerOptions {
    pub slope_tol: f64,
    pub noise_floor: f64,
    /// Certificate target for the reference SCF runs, relative to `|𝓔(0)|`.
    pub reference_tol: f64,
    pub scf: ScfOptions,
}

impl Default for WignerOptions {
    fn default() -> Self {
        WignerOptions {
            slope_tol: DEFAULT_SLOPE_TOL,
            noise_floor: DEFAULT_NOISE_FLOOR,
            reference_tol: 1e-13,
            scf: ScfOptions::default(),
        }
    }
}

fn check_grid(beta_grid: &[f64]) -> Result<()> {
    if beta_grid.len() < 3 {
        return Err(Error::Input("β grid needs at least three points".into()));
    }
    if beta_grid.iter().any(|b| !(*b > 0.0)) || beta_grid.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Input("β grid must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Converged energy `𝓔(βw)`, warm-started from `guess`.
pub fn reference_energy(
    sys: &LatticeSystem,
    w: &Potential,
    beta: f64,
    guess: Option<DMatrix<f64>>,
    opts: &WignerOptions,
    scale: f64,
) -> Result<GroundState> {
    let scf = ScfOptions {
        tol_residual: opts.reference_tol * scale.max(1.0),
        initial_guess: guess,
        ..opts.scf.clone()
    };
    minimize(sys, &w.scaled(beta), &scf).map_err(|e| match e {
        Error::Convergence { iterations, residual } => Error::Consistency(format!(
            "reference SCF at β = {beta:e} stopped after {iterations} iterations (residual {residual:e})"
        )),
        other => other,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerNondegResult {
    pub n: usize,
    pub projected: SlopeReport,
}

/// `E(Π(γ₀ + Σ_{k≤n} βᵏγ⁽ᵏ⁾), βw) − 𝓔(βw)` over the grid.
pub fn wigner_check_nondeg(
    sys: &LatticeSystem,
    gs: &GroundState,
    w: &Potential,
    n: usize,
    beta_grid: &[f64],
    opts: &WignerOptions,
) -> Result<WignerNondegResult> {
    check_grid(beta_grid)?;
    gs.require(crate::ground_state::Classification::NonDegenerate, "wigner_check_nondeg")?;
    let series: Option<NondegSeries> = if n == 0 {
        None
    } else {
        Some(expand(gs, w, n, &NondegOptions::default())?)
    };
    let n_el = gs.n_electrons;
    let errors = par::try_map_range(beta_grid.len(), |i| -> Result<f64> {
        let beta = beta_grid[i];
        let t = match &series {
            Some(s) => s.gamma_partial_sum(beta, n),
            None => gs.gamma0.clone(),
        };
        let trial = pi_project(&t, n_el)?;
        let e_trial = energy(sys, &trial, &w.scaled(beta))?;
        let reference = reference_energy(sys, w, beta, Some(trial.into_matrix()), opts, gs.energy.abs())?;
        Ok(e_trial - reference.energy)
    })?;
    Ok(WignerNondegResult {
        n,
        projected: SlopeReport::fit(
            &format!("wigner_nondeg_n{n}"),
            beta_grid,
            &errors,
            (2 * n + 2) as f64,
            opts.slope_tol,
            opts.noise_floor * gs.energy.abs().max(1.0),
            true,
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerDegResult {
    pub n: usize,
    /// `E(Γ(Σβᵏ A⁽ᵏ⁾), βw) − 𝓔(βw)`.
    pub chart: SlopeReport,
    /// `|Σ_{k≤2n+1} βᵏ𝓔⁽ᵏ⁾ − 𝓔(βw)|`.
    pub energy_series: SlopeReport,
    /// β values left out because `Γ` left its occupancy box.
    pub dropped: Vec<f64>,
    /// Fermi level of each reference SCF.
    pub fermi_levels: Vec<f64>,
}

pub fn wigner_check_deg(
    sys: &LatticeSystem,
    gs: &GroundState,
    w: &Potential,
    n: usize,
    beta_grid: &[f64],
    opts: &WignerOptions,
) -> Result<WignerDegResult> {
    check_grid(beta_grid)?;
    let series = expand_degenerate(gs, w, n.max(1), &DegOptions::default())?;
    wigner_check_deg_series(sys, gs, &series, w, n, beta_grid, opts)
}

/// Same check with a precomputed series.
pub fn wigner_check_deg_series(
    sys: &LatticeSystem,
    gs: &GroundState,
    series: &DegSeries,
    w: &Potential,
    n: usize,
    beta_grid: &[f64],
    opts: &WignerOptions,
) -> Result<WignerDegResult> {
    check_grid(beta_grid)?;
    let results = par::map_range(beta_grid.len(), |i| -> Result<Option<(f64, f64, f64)>> {
        let beta = beta_grid[i];
        let trial = match series.chart_state(beta, n) {
            Ok(t) => t,
            Err(Error::Domain(msg)) => {
                log::warn!("β = {beta:e} dropped: {msg}");
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let e_trial = energy(sys, &trial, &w.scaled(beta))?;
        let reference = reference_energy(sys, w, beta, Some(trial.into_matrix()), opts, gs.energy.abs())?;
        let e_series = series.energy_partial_sum(beta, 2 * n + 1);
        Ok(Some((
            e_trial - reference.energy,
            (e_series - reference.energy).abs(),
            reference.fermi_level,
        )))
    });
    let mut betas = Vec::new();
    let mut chart = Vec::new();
    let mut energies = Vec::new();
    let mut fermi_levels = Vec::new();
    let mut dropped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some((c, e, f)) => {
                betas.push(beta_grid[i]);
                chart.push(c);
                energies.push(e);
                fermi_levels.push(f);
            }
            None => dropped.push(beta_grid[i]),
        }
    }
    let expected = (2 * n + 2) as f64;
    let floor = opts.noise_floor * gs.energy.abs().max(1.0);
    Ok(WignerDegResult {
        n,
        chart: SlopeReport::fit(
            &format!("wigner_deg_chart_n{n}"),
            &betas,
            &chart,
            expected,
            opts.slope_tol,
            floor,
            true,
        ),
        energy_series: SlopeReport::fit(
            &format!("wigner_deg_energy_n{n}"),
            &betas,
            &energies,
            expected,
            opts.slope_tol,
            floor,
            false,
        ),
        dropped,
        fermi_levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::model::random_orthogonal;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projector_fixed_point_and_threshold() {
        let t = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.6, 0.2]));
        let p = pi_project(&t, 2).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert!((p.matrix() - &expected).amax() <= 1e-14);
        let again = pi_project(p.matrix(), 2).unwrap();
        assert!((again.matrix() - p.matrix()).amax() <= 1e-14);
        let ambiguous = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5, 0.2]));
        assert!(matches!(pi_project(&ambiguous, 1), Err(Error::Domain(_))));
        assert!(matches!(pi_project(&t, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn nearest_projector_beats_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() - 0.5);
        let t = symmetrize(&(&a * 0.3)) + DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
        let p = pi_project(&t, 2).unwrap();
        let best = frobenius(&(&t - p.matrix()));
        for _ in 0..200 {
            let q = random_orthogonal(6, &mut rng);
            let i = rng.random_range(0..6);
            let j = (i + 1 + rng.random_range(0..5)) % 6;
            let cand = q.column(i) * q.column(i).transpose() + q.column(j) * q.column(j).transpose();
            assert!(best <= frobenius(&(&t - cand)) + 1e-12);
        }
    }

    #[test]
    fn trace_identity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.random::<f64>() - 0.5);
        let h = symmetrize(&a);
        let e = sym_eigen(&h).values;
        let eps_f = 0.5 * (e[2] + e[3]);
        let gamma = sym_apply(&h, |x| if x < eps_f { 1.0 } else { 0.0 });
        let same = trace_identity_check(&h, eps_f, &gamma).unwrap();
        assert!(same.lhs.abs() <= 1e-13 && same.rhs.abs() <= 1e-13);
        let q = random_orthogonal(8, &mut rng);
        let gp = q.columns(0, 3) * q.columns(0, 3).transpose();
        let r = trace_identity_check(&h, eps_f, &gp).unwrap();
        assert!(r.residual <= 1e-10 && r.lhs > 0.0);
        let bad = q.columns(0, 2) * q.columns(0, 2).transpose();
        assert!(trace_identity_check(&h, eps_f, &bad).is_err());
    }

    #[test]
    fn slope_fit_drops_largest_and_floor() {
        let betas = [1e-1, 5e-2, 2.5e-2, 1.25e-2, 1e-4];
        let errs: Vec<f64> = betas.iter().map(|b: &f64| 7.0 * b.powi(4)).collect();
        let mut errs = errs;
        errs[4] = 1e-15;
        let r = SlopeReport::fit("t", &betas, &errs, 4.0, 0.35, 1e-11, true);
        assert_eq!(r.used, vec![false, true, true, true, false]);
        assert!((r.fitted_slope - 4.0).abs() <= 1e-10 && r.pass);
        let neg = SlopeReport::fit("t", &betas[..4], &[1e-4, -1e-5, 1e-6, 1e-7], 4.0, 0.35, 1e-11, true);
        assert!(!neg.pass);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projector_recovers_top_eigenspace(seed in 0u64..10_000, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_orthogonal(6, &mut rng);
            let vals: Vec<f64> = (0..6)
                .map(|i| if i < n { rng.random_range(0.6..1.4) } else { rng.random_range(-0.4..0.4) })
                .collect();
            let t = &q * DMatrix::from_diagonal(&DVector::from_vec(vals)) * q.transpose();
            let p = pi_project(&t, n).unwrap();
            let pm = p.matrix();
            prop_assert!((pm * pm - pm).amax() <= 1e-12);
            prop_assert!((pm.trace() - n as f64).abs() <= 1e-12);
            let top = q.columns(0, n) * q.columns(0, n).transpose();
            prop_assert!((pm - top).amax() <= 1e-10);
        }

        #[test]
        fn trace_identity_holds_for_rank_n_projectors(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(7, 7, |_, _| rng.random::<f64>() - 0.5);
            let h = symmetrize(&a);
            let e = sym_eigen(&h).values;
            prop_assume!(e[3] - e[2] > 1e-3);
            let eps_f = 0.5 * (e[2] + e[3]);
            let q = random_orthogonal(7, &mut rng);
            let gp = q.columns(0, 3) * q.columns(0, 3).transpose();
            let r = trace_identity_check(&h, eps_f, &gp).unwrap();
            prop_assert!(r.lhs >= -1e-12);
            prop_assert!(r.residual <= 1e-10 * (1.0 + r.lhs.abs()));
        }

        #[test]
        fn slope_fit_is_exact_on_power_laws(c in 0.1f64..10.0, k in 1i32..6) {
            let betas = [0.2, 0.1, 0.05, 0.025, 0.0125];
            let errs: Vec<f64> = betas.iter().map(|b: &f64| c * b.powi(k)).collect();
            let r = SlopeReport::fit("p", &betas, &errs, k as f64, 0.35, 1e-300, true);
            prop_assert!((r.fitted_slope - k as f64).abs() <= 1e-9);
            prop_assert!(r.pass);
        }
    }
}
