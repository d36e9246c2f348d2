//! Perturbation theory around a ground state with a partially filled,
//! degenerate Fermi shell.
//!
//! The perturbed ground state is `Γ(A(β))` with `A(β) = Σ βᵏA⁽ᵏ⁾` and each
//! coefficient solves `Θ(A⁽ᵏ⁾) = −½B⁽ᵏ⁾`.

pub mod chart;
pub mod frame;
pub mod rhs;
pub mod theta;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ground_state::{uniqueness_kernel_test, GroundState};
use crate::io::write_table;
use crate::linalg::trace_product;
use crate::model::{DensityMatrix, Potential};
use crate::par;

pub use chart::{gamma1_adjoint, gamma1_frame, gamma_l, gamma_l_frame, gamma_of, gamma_of_frame};
pub use frame::{BlockCoefficient, BlockFrame};
pub use rhs::{assemble_b, energy_coefficient, energy_from_gammas, gamma_coefficient_frame};
pub use theta::{coercivity_bound, theta_apply, theta_bilinear, theta_solve, ThetaSolver};

pub const DEFAULT_DEG_ORDER_CAP: usize = 4;

#[derive(Debug, Clone)]
pub struct DegOptions {
    pub order_cap: usize,
}

impl Default for DegOptions {
    fn default() -> Self {
        DegOptions {
            order_cap: DEFAULT_DEG_ORDER_CAP,
        }
    }
}

/// Index 0 of every per-order list holds the unperturbed data.
#[derive(Debug, Clone)]
pub struct DegSeries {
    pub order: usize,
    pub frame: BlockFrame,
    pub a_k: Vec<BlockCoefficient>,
    pub b_k: Vec<BlockCoefficient>,
    /// Site-basis `γ⁽ᵏ⁾` for `k ≤ n`.
    pub gamma_k: Vec<DMatrix<f64>>,
    /// `𝓔⁽ᵏ⁾` for `k ≤ 2n+1`, each from `A⁽¹⁾…A⁽ᵏᐟ²⁾`.
    pub energy_k: Vec<f64>,
    /// `𝓔⁽ᵏ⁾` for `k ≤ n` from the full density coefficients.
    pub energy_direct_k: Vec<f64>,
    pub theta_residuals: Vec<f64>,
    pub perturbation: DVector<f64>,
}

impl DegSeries {
    /// `Σ_{1≤k≤n} βᵏA⁽ᵏ⁾`.
    pub fn a_partial_sum(&self, beta: f64, n: usize) -> BlockCoefficient {
        let mut a = BlockCoefficient::zeros(&self.frame);
        for k in 1..=n.min(self.order) {
            a.add_scaled(&self.a_k[k], beta.powi(k as i32));
        }
        a
    }

    pub fn gamma_partial_sum(&self, beta: f64, n: usize) -> DMatrix<f64> {
        let mut g = self.gamma_k[0].clone();
        for k in 1..=n.min(self.order) {
            g += &self.gamma_k[k] * beta.powi(k as i32);
        }
        g
    }

    /// `Σ_{0≤k≤m} βᵏ𝓔⁽ᵏ⁾` with `m ≤ 2n+1`.
    pub fn energy_partial_sum(&self, beta: f64, m: usize) -> f64 {
        (0..=m.min(self.energy_k.len() - 1))
            .map(|k| self.energy_k[k] * beta.powi(k as i32))
            .sum()
    }

    /// `Γ(Σ_{k≤n} βᵏA⁽ᵏ⁾)`.
    pub fn chart_state(&self, beta: f64, n: usize) -> Result<DensityMatrix> {
        gamma_of(&self.frame, &self.a_partial_sum(beta, n))
    }

    pub fn manifest(&self) -> DegManifest {
        DegManifest {
            order: self.order,
            n_full: self.frame.n_f(),
            n_partial: self.frame.n_p(),
            n_unocc: self.frame.n_u(),
            fermi_level: self.frame.eps_f(),
            lambda_bounds: self.frame.lambda_bounds(),
            a_block_norms: self.a_k.iter().map(|a| a.block_norms()).collect(),
            energies: self.energy_k.clone(),
            energies_direct: self.energy_direct_k.clone(),
            gamma_traces: self.gamma_k.iter().map(|g| g.trace()).collect(),
            theta_residuals: self.theta_residuals.clone(),
        }
    }

    /// Writes `a_blocks.csv` and `energies.csv` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<Vec<f64>> = (1..=self.order)
            .map(|k| {
                let b = self.a_k[k].block_norms();
                vec![k as f64, b[0], b[1], b[2], b[3], self.gamma_k[k].trace()]
            })
            .collect();
        write_table(
            &dir.join("a_blocks.csv"),
            &["order", "uf", "up", "pf", "pp", "gamma_trace"],
            &rows,
        )?;
        let rows: Vec<Vec<f64>> = self
            .energy_k
            .iter()
            .enumerate()
            .map(|(k, e)| vec![k as f64, *e, self.energy_direct_k.get(k).copied().unwrap_or(f64::NAN)])
            .collect();
        write_table(&dir.join("energies.csv"), &["order", "energy", "energy_direct"], &rows)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DegManifest {
    pub order: usize,
    pub n_full: usize,
    pub n_partial: usize,
    pub n_unocc: usize,
    pub fermi_level: f64,
    pub lambda_bounds: (f64, f64),
    pub a_block_norms: Vec<[f64; 4]>,
    pub energies: Vec<f64>,
    pub energies_direct: Vec<f64>,
    pub gamma_traces: Vec<f64>,
    pub theta_residuals: Vec<f64>,
}

/// Degenerate Rayleigh-Schrödinger coefficients through order `n`.
pub fn expand_degenerate(gs: &GroundState, w: &Potential, n: usize, opts: &DegOptions) -> Result<DegSeries> {
    let frame = BlockFrame::from_ground_state(gs)?;
    let uniq = uniqueness_kernel_test(gs)?;
    if !uniq.holds {
        return Err(Error::precondition(
            "expand_degenerate",
            format!(
                "products of Fermi-shell orbitals are linearly dependent (σ_min/σ_max = {:e})",
                uniq.scaled_sigma_min()
            ),
        ));
    }
    expand_in_frame(frame, gs.energy, w, n, opts)
}

/// Same recursion for an explicit frame with reference energy `e0`.
pub fn expand_in_frame(frame: BlockFrame, e0: f64, w: &Potential, n: usize, opts: &DegOptions) -> Result<DegSeries> {
    if n == 0 {
        return Err(Error::Input("expansion order must be at least 1".into()));
    }
    if n > opts.order_cap {
        return Err(Error::OrderCap {
            requested: n,
            cap: opts.order_cap,
        });
    }
    if w.len() != frame.n_sites() {
        return Err(Error::Dimension(format!(
            "potential length {}, expected {}",
            w.len(),
            frame.n_sites()
        )));
    }
    let solver = ThetaSolver::new(&frame)?;
    let mut a_list: Vec<BlockCoefficient> = Vec::new();
    let mut b_k = vec![BlockCoefficient::zeros(&frame)];
    let mut residuals = vec![0.0];
    for k in 1..=n {
        let b = assemble_b(&frame, w, k, &a_list)?;
        let a = solver.solve(&frame, &b.scaled(-0.5))?;
        let back = theta_apply(&frame, &a);
        let mut r = back.clone();
        r.add_scaled(&b, 0.5);
        residuals.push(r.norm() / b.norm().max(f64::MIN_POSITIVE));
        a_list.push(a);
        b_k.push(b);
    }
    let gammas_frame: Vec<DMatrix<f64>> = (0..=n)
        .map(|k| gamma_coefficient_frame(&frame, &a_list, k, k))
        .collect();
    let energy_k: Vec<f64> = std::iter::once(Ok(e0))
        .chain(par::map_range(2 * n + 1, |k| energy_coefficient(&frame, &a_list, w, k + 1)))
        .collect::<Result<_>>()?;
    let energy_direct_k: Vec<f64> = std::iter::once(e0)
        .chain((1..=n).map(|k| energy_from_gammas(&frame, &gammas_frame, w, k)))
        .collect();
    let gamma_k: Vec<DMatrix<f64>> = gammas_frame.iter().map(|g| frame.to_site(g)).collect();
    let mut a_k = vec![BlockCoefficient::zeros(&frame)];
    a_k.extend(a_list);
    Ok(DegSeries {
        order: n,
        frame,
        a_k,
        b_k,
        gamma_k,
        energy_k,
        energy_direct_k,
        theta_residuals: residuals,
        perturbation: w.values().clone(),
    })
}

/// `E(Γ(A), w) − E(γ₀, 0)` from the frame data alone.
pub fn chart_energy_shift(frame: &BlockFrame, a: &BlockCoefficient, w: &Potential) -> f64 {
    let d = gamma_of_frame(frame, a) - frame.gamma0_frame();
    let g = gamma_of_frame(frame, a);
    trace_product(frame.h_frame(), &d) + 0.5 * frame.coulomb_pairing(&d, &d) + frame.density(&g).dot(w.values())
}

/// `∇_A E(Γ(A), w)` as a Euclidean dual coefficient.
pub fn chart_gradient(frame: &BlockFrame, a: &BlockCoefficient, w: &Potential) -> Result<BlockCoefficient> {
    if w.len() != frame.n_sites() {
        return Err(Error::Dimension("potential length does not match the frame".into()));
    }
    let g = gamma_of_frame(frame, a);
    let d = &g - frame.gamma0_frame();
    let h = frame.h_frame() + frame.hartree_frame(&d) + frame.potential_frame(w.values());
    let coords = par::map_range(frame.dim_a(), |b| {
        let e = BlockCoefficient::basis_element(frame, b);
        trace_product(&h, &chart::gamma_derivative_frame(frame, a, &e))
    });
    BlockCoefficient::from_vec(frame, &DVector::from_vec(coords))
}
