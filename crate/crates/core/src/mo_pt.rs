//! Orbital (coupled-perturbed) formulation of the non-degenerate expansion.
//!
//! Each order solves the saddle system
//! `(H₀ − εᵢ)ψᵢ + Σⱼ K⁰ᵢⱼψⱼ − ηᵢφᵢ⁰ = fᵢ`, `φᵢ⁰ᵀψᵢ = αᵢ`
//! with `K⁰ᵢⱼψ = 2 φᵢ⁰ ∘ K(φⱼ⁰ ∘ ψ)`, assembled densely.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ground_state::{Classification, GroundState};
use crate::io::write_table;
use crate::model::Potential;

/// Minimal spacing between occupied levels for the orbital formulation.
pub const SIMPLE_LEVEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CpSolution {
    /// `n × N`, column `i` is `ψᵢ`.
    pub psi: DMatrix<f64>,
    pub eta: DVector<f64>,
    /// Max-norm residual of the assembled system.
    pub residual: f64,
}

fn check_simple(gs: &GroundState, operation: &'static str) -> Result<()> {
    if gs.classification != Classification::NonDegenerate {
        return Err(Error::precondition(
            operation,
            format!("ground state is {}, expected non_degenerate", gs.classification),
        ));
    }
    let e = &gs.eigvals;
    for i in 1..gs.n_electrons {
        if e[i] - e[i - 1] <= SIMPLE_LEVEL_TOL * (1.0 + e[i].abs()) {
            return Err(Error::precondition(
                operation,
                format!("occupied levels {} and {} are degenerate", i - 1, i),
            ));
        }
    }
    Ok(())
}

/// Dense saddle matrix of size `nN + N`.
fn assemble(gs: &GroundState) -> DMatrix<f64> {
    let n = gs.n_sites();
    let nn = gs.n_electrons;
    let phi = gs.occupied();
    let dim = n * nn + nn;
    let mut a = DMatrix::zeros(dim, dim);
    // 2 diag(φᵢ) K diag(φⱼ)
    for i in 0..nn {
        for j in 0..nn {
            let mut block = gs.kernel.clone();
            for r in 0..n {
                for c in 0..n {
                    block[(r, c)] *= 2.0 * phi[(r, i)] * phi[(c, j)];
                }
            }
            if i == j {
                block += &gs.h0;
                for r in 0..n {
                    block[(r, r)] -= gs.eigvals[i];
                }
            }
            a.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
        for r in 0..n {
            a[(i * n + r, n * nn + i)] = -phi[(r, i)];
            a[(n * nn + i, i * n + r)] = phi[(r, i)];
        }
    }
    a
}

/// Unique solution `(Ψ, η)` of the orbital response system.
pub fn solve_cp_system(gs: &GroundState, f: &DMatrix<f64>, alpha: &DVector<f64>) -> Result<CpSolution> {
    check_simple(gs, "solve_cp_system")?;
    let n = gs.n_sites();
    let nn = gs.n_electrons;
    if f.shape() != (n, nn) || alpha.len() != nn {
        return Err(Error::Dimension(format!(
            "rhs shape {:?} / alpha {} for {n} sites and {nn} orbitals",
            f.shape(),
            alpha.len()
        )));
    }
    let a = assemble(gs);
    let mut b = DVector::zeros(n * nn + nn);
    for i in 0..nn {
        b.rows_mut(i * n, n).copy_from(&f.column(i));
        b[n * nn + i] = alpha[i];
    }
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Consistency("orbital response system is singular".into()))?;
    let residual = (&a * &x - &b).amax();
    let psi = DMatrix::from_fn(n, nn, |r, i| x[i * n + r]);
    let eta = x.rows(n * nn, nn).into_owned();
    Ok(CpSolution { psi, eta, residual })
}

#[derive(Debug, Clone)]
pub struct MOSeries {
    pub order: usize,
    /// `phi_k[k]` is `n × N` with column `i` equal to `φᵢ⁽ᵏ⁾`.
    pub phi_k: Vec<DMatrix<f64>>,
    pub eps_k: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
}

impl MOSeries {
    /// `γ⁽ᵏ⁾ = Σᵢ Σ_l φᵢ⁽ˡ⁾ φᵢ⁽ᵏ⁻ˡ⁾ᵀ`.
    pub fn gamma(&self, k: usize) -> DMatrix<f64> {
        let n = self.phi_k[0].nrows();
        let mut g = DMatrix::zeros(n, n);
        for l in 0..=k {
            g += &self.phi_k[l] * self.phi_k[k - l].transpose();
        }
        g
    }

    pub fn export_eps_table(&self, path: &Path) -> Result<()> {
        let nn = self.eps_k[0].len();
        let mut header = vec!["order".to_string()];
        header.extend((1..=nn).map(|i| format!("eps_{i}")));
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = self
            .eps_k
            .iter()
            .enumerate()
            .map(|(k, e)| std::iter::once(k as f64).chain(e.iter().copied()).collect())
            .collect();
        write_table(path, &header_ref, &rows)
    }
}

/// Triangular orbital recursion through order `n`.
pub fn mo_expand(gs: &GroundState, w: &Potential, order: usize) -> Result<MOSeries> {
    check_simple(gs, "mo_expand")?;
    let n = gs.n_sites();
    let nn = gs.n_electrons;
    if w.len() != n {
        return Err(Error::Dimension(format!("potential length {}, expected {n}", w.len())));
    }
    let wv = w.values();
    let mut phi_k = vec![gs.occupied()];
    let mut eps_k = vec![gs.eigvals.rows(0, nn).into_owned()];
    let mut residuals = vec![0.0];
    for k in 1..=order {
        let mut f = DMatrix::zeros(n, nn);
        let mut alpha = DVector::zeros(nn);
        // Hartree potentials of the pair products at each (l1, l2)
        let mut hartree = vec![vec![None; k]; k];
        for i in 0..nn {
            let mut fi = -phi_k[k - 1].column(i).component_mul(wv);
            for l1 in 0..k {
                for l2 in 0..=k - l1 {
                    let l3 = k - l1 - l2;
                    if l2 >= k || l3 >= k {
                        continue;
                    }
                    let vh: &DVector<f64> = hartree[l1][l2].get_or_insert_with(|| {
                        let mut pair = DVector::zeros(n);
                        for j in 0..nn {
                            pair += phi_k[l1].column(j).component_mul(&phi_k[l2].column(j));
                        }
                        &gs.kernel * pair
                    });
                    fi -= vh.component_mul(&phi_k[l3].column(i));
                }
            }
            for l in 1..k {
                fi += phi_k[k - l].column(i) * eps_k[l][i];
                alpha[i] -= 0.5 * phi_k[l].column(i).dot(&phi_k[k - l].column(i));
            }
            f.set_column(i, &fi);
        }
        let sol = solve_cp_system(gs, &f, &alpha)?;
        phi_k.push(sol.psi);
        eps_k.push(sol.eta);
        residuals.push(sol.residual);
    }
    Ok(MOSeries {
        order,
        phi_k,
        eps_k,
        residuals,
    })
}

/// Per-order `max_{i,j} |Σ_l φᵢ⁽ˡ⁾ᵀφⱼ⁽ᵏ⁻ˡ⁾ − δᵢⱼδ_{k0}|`.
pub fn orthogonality_defects(ms: &MOSeries) -> Vec<f64> {
    let nn = ms.phi_k[0].ncols();
    (0..=ms.order)
        .map(|k| {
            let mut g = DMatrix::zeros(nn, nn);
            for l in 0..=k {
                g += ms.phi_k[l].transpose() * &ms.phi_k[k - l];
            }
            if k == 0 {
                g -= DMatrix::identity(nn, nn);
            }
            g.amax()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::{solve_scf, ScfOptions};
    use crate::model::{build_demo_system, DemoKind, DoubleWellParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn double_well_gs(n_sites: usize) -> GroundState {
        let sys = build_demo_system(&DemoKind::DoubleWell(DoubleWellParams {
            n_sites,
            n_electrons: 2,
            hopping: 1.0,
            yukawa_mass: 1.0,
            coupling: 1.0,
            background: -3.0,
            depths: [2.0, 1.5],
            centers: [n_sites as f64 / 4.0, 0.7 * n_sites as f64],
            width: 1.5,
        }))
        .unwrap();
        solve_scf(&sys, &ScfOptions::default()).unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let gs = double_well_gs(8);
        let s = solve_cp_system(&gs, &DMatrix::zeros(8, 2), &DVector::zeros(2)).unwrap();
        assert!(s.psi.amax() <= 1e-14 && s.eta.amax() <= 1e-14);
    }

    #[test]
    fn eigen_direction_rhs_recovers_eta() {
        let gs = double_well_gs(8);
        let eta = DVector::from_vec(vec![0.3, -1.2]);
        let phi = gs.occupied();
        let f = DMatrix::from_fn(8, 2, |r, i| -eta[i] * phi[(r, i)]);
        let s = solve_cp_system(&gs, &f, &DVector::zeros(2)).unwrap();
        assert!(s.psi.amax() <= 1e-12);
        assert!((s.eta - eta).amax() <= 1e-12);
    }

    #[test]
    fn random_rhs_residual_and_symmetric_part() {
        let gs = double_well_gs(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>() - 0.5);
        let alpha = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        let s = solve_cp_system(&gs, &f, &alpha).unwrap();
        assert!(s.residual <= 1e-10);
        let phi = gs.occupied();
        // φⱼᵀψᵢ + φᵢᵀψⱼ = (fᵢᵀφⱼ − fⱼᵀφᵢ)/(εⱼ − εᵢ)
        let (i, j) = (0, 1);
        let lhs = phi.column(j).dot(&s.psi.column(i)) + phi.column(i).dot(&s.psi.column(j));
        let rhs = (f.column(i).dot(&phi.column(j)) - f.column(j).dot(&phi.column(i)))
            / (gs.eigvals[j] - gs.eigvals[i]);
        assert!((lhs - rhs).abs() <= 1e-10);
        // positivity of the coupling operator
        let mut pair = DVector::zeros(8);
        for i in 0..2 {
            pair += phi.column(i).component_mul(&s.psi.column(i));
        }
        assert!(pair.dot(&(&gs.kernel * &pair)) >= -1e-12);
    }

    #[test]
    fn permuted_assembly_gives_same_solution() {
        let gs = double_well_gs(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>() - 0.5);
        let alpha = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        let a = solve_cp_system(&gs, &f, &alpha).unwrap();
        // swap the two orbitals in the frame and the data
        let mut swapped = gs.clone();
        swapped.eigvecs.swap_columns(0, 1);
        swapped.eigvals.swap_rows(0, 1);
        let mut f2 = f.clone();
        f2.swap_columns(0, 1);
        let mut a2 = alpha.clone();
        a2.swap_rows(0, 1);
        // bypass the ordering check by calling the assembly directly
        let m = assemble(&swapped);
        let mut b = DVector::zeros(18);
        for i in 0..2 {
            b.rows_mut(i * 8, 8).copy_from(&f2.column(i));
            b[16 + i] = a2[i];
        }
        let x = m.lu().solve(&b).unwrap();
        for r in 0..8 {
            assert!((x[r] - a.psi[(r, 1)]).abs() <= 1e-10);
            assert!((x[8 + r] - a.psi[(r, 0)]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_potential_gives_zero_series() {
        let gs = double_well_gs(8);
        let ms = mo_expand(&gs, &Potential::zeros(8), 3).unwrap();
        for k in 1..=3 {
            assert!(ms.phi_k[k].amax() <= 1e-14);
            assert!(ms.eps_k[k].amax() <= 1e-14);
        }
        assert!(orthogonality_defects(&ms)[0] <= 1e-12);
    }
}
