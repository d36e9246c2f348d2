//! Density-matrix perturbation theory around a non-degenerate ground state.
//!
//! With `W⁽¹⁾ = W + Kρ⁽¹⁾` and `W⁽ᵏ⁾ = Kρ⁽ᵏ⁾` for `k ≥ 2`, each order solves
//! `(1 + 𝓛)ρ⁽ᵏ⁾ = ρ̃⁽ᵏ⁾` where `ρ̃⁽ᵏ⁾` is the density of
//! `Q̃⁽ᵏ⁾ = Σ_{l≥2} Σ_{j₁+…+j_l=k} Q⁽ˡ⁾(W⁽ʲ¹⁾,…,W⁽ʲˡ⁾)` (and `Q̃⁽¹⁾ = Q⁽¹⁾(W)`).

pub mod contour;
pub mod divided_difference;
pub mod response;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::combinatorics::compositions;
use crate::error::{Error, Result};
use crate::ground_state::{Classification, GroundState};
use crate::io::{write_table, write_vector};
use crate::linalg::{conjugate_diagonal, trace_product};
use crate::model::Potential;
use crate::par;

pub use contour::{contour_q, contour_q_ops, ContourSpec};
pub use divided_difference::divided_difference_q;
pub use response::{apply_response_l, solve_screened, ResponseOperator, ScreenedSolution};

pub const DEFAULT_ORDER_CAP: usize = 6;

#[derive(Debug, Clone)]
pub struct NondegOptions {
    pub contour: Option<ContourSpec>,
    pub order_cap: usize,
    pub tol_lin: f64,
}

impl Default for NondegOptions {
    fn default() -> Self {
        NondegOptions {
            contour: None,
            order_cap: DEFAULT_ORDER_CAP,
            tol_lin: 1e-11,
        }
    }
}

/// Coefficients indexed by order; index 0 holds the unperturbed data
/// (`ρ₀`, `γ₀`, the ground-state energy, and zero potentials).
#[derive(Debug, Clone)]
pub struct NondegSeries {
    pub order: usize,
    pub rho_k: Vec<DVector<f64>>,
    pub rho_tilde_k: Vec<DVector<f64>>,
    pub gamma_k: Vec<DMatrix<f64>>,
    pub energy_k: Vec<f64>,
    pub w_k: Vec<DVector<f64>>,
    pub q_tilde_k: Vec<DMatrix<f64>>,
    pub cg_iterations: Vec<usize>,
    pub perturbation: DVector<f64>,
}

impl NondegSeries {
    /// `γ₀ + Σ_{k≤n} βᵏγ⁽ᵏ⁾`.
    pub fn gamma_partial_sum(&self, beta: f64, n: usize) -> DMatrix<f64> {
        let mut g = self.gamma_k[0].clone();
        let mut b = 1.0;
        for k in 1..=n.min(self.order) {
            b *= beta;
            g += &self.gamma_k[k] * b;
        }
        g
    }

    /// `Σ_{k=0}^{n} βᵏ𝓔⁽ᵏ⁾`.
    pub fn energy_partial_sum(&self, beta: f64, n: usize) -> f64 {
        let mut e = 0.0;
        let mut b = 1.0;
        for k in 0..=n.min(self.order) {
            e += self.energy_k[k] * b;
            b *= beta;
        }
        e
    }

    /// Independent energy coefficients `𝓔⁽ᵏ⁾ = k⁻¹ Wᵀρ⁽ᵏ⁻¹⁾` from the
    /// Hellmann-Feynman identity `d𝓔(βW)/dβ = Wᵀρ_{βW}`.
    pub fn hellmann_feynman_energies(&self) -> Vec<f64> {
        let mut out = vec![self.energy_k[0]];
        for k in 1..=self.order {
            out.push(self.perturbation.dot(&self.rho_k[k - 1]) / k as f64);
        }
        out
    }

    /// Empirical growth ratios `‖ρ⁽ᵏ⁺¹⁾‖ / ‖ρ⁽ᵏ⁾‖`.
    pub fn growth_ratios(&self) -> Vec<f64> {
        (1..self.order)
            .map(|k| self.rho_k[k + 1].norm() / self.rho_k[k].norm())
            .collect()
    }

    pub fn manifest(&self) -> NondegManifest {
        NondegManifest {
            order: self.order,
            energies: self.energy_k.clone(),
            gamma_norms: self.gamma_k.iter().map(|g| g.norm()).collect(),
            gamma_traces: self.gamma_k.iter().map(|g| g.trace()).collect(),
            cg_iterations: self.cg_iterations.clone(),
            growth_ratios: self.growth_ratios(),
        }
    }

    /// Writes `rho_<k>.csv`, `gamma_norms.csv` and `energies.csv` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (k, rho) in self.rho_k.iter().enumerate() {
            write_vector(&dir.join(format!("rho_{k}.csv")), rho)?;
        }
        let rows: Vec<Vec<f64>> = (0..=self.order)
            .map(|k| vec![k as f64, self.gamma_k[k].norm(), self.gamma_k[k].trace()])
            .collect();
        write_table(&dir.join("gamma_norms.csv"), &["order", "frobenius", "trace"], &rows)?;
        let rows: Vec<Vec<f64>> = (0..=self.order)
            .map(|k| vec![k as f64, self.energy_k[k]])
            .collect();
        write_table(&dir.join("energies.csv"), &["order", "energy"], &rows)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NondegManifest {
    pub order: usize,
    pub energies: Vec<f64>,
    pub gamma_norms: Vec<f64>,
    pub gamma_traces: Vec<f64>,
    pub cg_iterations: Vec<usize>,
    pub growth_ratios: Vec<f64>,
}

/// Rayleigh-Schrödinger coefficients through order `n`.
pub fn expand(gs: &GroundState, w: &Potential, n: usize, opts: &NondegOptions) -> Result<NondegSeries> {
    if gs.classification != Classification::NonDegenerate {
        return Err(Error::precondition(
            "expand",
            format!("ground state is {}, expected non_degenerate", gs.classification),
        ));
    }
    if n == 0 {
        return Err(Error::Input("expansion order must be at least 1".into()));
    }
    if n > opts.order_cap {
        return Err(Error::OrderCap {
            requested: n,
            cap: opts.order_cap,
        });
    }
    let dim = gs.n_sites();
    if w.len() != dim {
        return Err(Error::Dimension(format!("potential length {}, expected {dim}", w.len())));
    }
    let spec = opts.contour.unwrap_or_else(|| ContourSpec::for_ground_state(gs));
    spec.validate(gs)?;
    let response = ResponseOperator::new(gs, &spec)?;
    let u = &gs.eigvecs;
    let to_site = |q: &DMatrix<f64>| u * q * u.transpose();
    let wv = w.values().clone();

    let mut series = NondegSeries {
        order: n,
        rho_k: vec![gs.rho0.clone()],
        rho_tilde_k: vec![DVector::zeros(dim)],
        gamma_k: vec![gs.gamma0.clone()],
        energy_k: vec![gs.energy],
        w_k: vec![DVector::zeros(dim)],
        q_tilde_k: vec![DMatrix::zeros(dim, dim)],
        cg_iterations: vec![0],
        perturbation: wv.clone(),
    };
    // effective potentials in the eigenbasis, by order
    let mut w_eig: Vec<DMatrix<f64>> = vec![DMatrix::zeros(dim, dim)];

    for k in 1..=n {
        let q_tilde_e = if k == 1 {
            contour::quadrature(gs, &[conjugate_diagonal(u, &wv)], &spec)?
        } else {
            let terms: Vec<Vec<usize>> = (2..=k).flat_map(|l| compositions(k, l)).collect();
            let parts = par::try_map_range(terms.len(), |t| {
                let ops: Vec<DMatrix<f64>> = terms[t].iter().map(|&j| w_eig[j].clone()).collect();
                contour::quadrature(gs, &ops, &spec)
            })?;
            let mut acc = DMatrix::zeros(dim, dim);
            for p in parts {
                acc += p;
            }
            acc
        };
        let q_tilde = to_site(&q_tilde_e);
        let rho_tilde = q_tilde.diagonal();
        let sol = response.solve_screened(&rho_tilde, opts.tol_lin)?;
        let rho = sol.rho;
        let mut wk = &gs.kernel * &rho;
        if k == 1 {
            wk += &wv;
        }
        let wk_e = conjugate_diagonal(u, &wk);
        let q1 = contour::quadrature(gs, std::slice::from_ref(&wk_e), &spec)?;
        // for k = 1 the external part of W is already inside Q⁽¹⁾(W⁽¹⁾)
        let gamma_e = if k == 1 { q1 } else { q1 + &q_tilde_e };
        let gamma = to_site(&gamma_e);

        let mut e = trace_product(&gs.h0, &gamma) + series.rho_k[k - 1].dot(&wv);
        for l in 1..k {
            e += 0.5 * series.rho_k[l].dot(&(&gs.kernel * &series.rho_k[k - l]));
        }

        series.rho_k.push(rho);
        series.rho_tilde_k.push(rho_tilde);
        series.gamma_k.push(gamma);
        series.energy_k.push(e);
        series.w_k.push(wk);
        series.q_tilde_k.push(q_tilde);
        series.cg_iterations.push(sol.iterations);
        w_eig.push(wk_e);
    }
    Ok(series)
}
