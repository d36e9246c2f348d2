//! Linear density response `𝓛ρ = −ρ[Q⁽¹⁾(Kρ)]` and the screened solve
//! `(1 + 𝓛)ρ = ρ̃`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ground_state::GroundState;
use crate::nondeg_pt::contour::{contour_q, quadrature, ContourSpec};

/// `−density(Q⁽¹⁾(Kρ))`, evaluated directly by quadrature.
pub fn apply_response_l(gs: &GroundState, rho: &DVector<f64>, spec: &ContourSpec) -> Result<DVector<f64>> {
    let v = &gs.kernel * rho;
    Ok(-contour_q(gs, &[v], spec)?.diagonal())
}

/// Dense representation of `𝓛 = −χK`, where column `b` of the
/// independent-particle response `χ` is the density of `Q⁽¹⁾(e_b)`.
#[derive(Debug, Clone)]
pub struct ResponseOperator {
    chi: DMatrix<f64>,
    kernel: DMatrix<f64>,
}

impl ResponseOperator {
    pub fn new(gs: &GroundState, spec: &ContourSpec) -> Result<Self> {
        let n = gs.n_sites();
        let u = &gs.eigvecs;
        let mut chi = DMatrix::zeros(n, n);
        for b in 0..n {
            // Uᵀ e_b e_bᵀ U is the outer product of row b of U
            let row = u.row(b).transpose();
            let op = &row * row.transpose();
            let q = quadrature(gs, &[op], spec)?;
            let site = u * q * u.transpose();
            chi.set_column(b, &site.diagonal());
        }
        Ok(ResponseOperator {
            chi: crate::linalg::symmetrize(&chi),
            kernel: gs.kernel.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.chi.nrows()
    }

    pub fn chi(&self) -> &DMatrix<f64> {
        &self.chi
    }

    pub fn apply_l(&self, rho: &DVector<f64>) -> DVector<f64> {
        -(&self.chi * (&self.kernel * rho))
    }

    fn apply_screened(&self, rho: &DVector<f64>) -> DVector<f64> {
        rho + self.apply_l(rho)
    }

    fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.kernel * b))
    }

    /// Solves `(1 + 𝓛)ρ = rhs` by conjugate gradients in the Coulomb inner
    /// product, with a dense LU fallback.
    pub fn solve_screened(&self, rhs: &DVector<f64>, tol: f64) -> Result<ScreenedSolution> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::Dimension(format!("rhs length {}, expected {n}", rhs.len())));
        }
        let bnorm = self.inner(rhs, rhs).max(0.0).sqrt();
        if bnorm == 0.0 {
            return Ok(ScreenedSolution {
                rho: DVector::zeros(n),
                iterations: 0,
                residual_history: vec![],
                relative_residual: 0.0,
                used_fallback: false,
            });
        }
        let mut x = DVector::zeros(n);
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rr = self.inner(&r, &r);
        let mut history = Vec::new();
        let mut iterations = 0;
        while iterations < 2 * n {
            let ap = self.apply_screened(&p);
            let pap = self.inner(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            x += &p * alpha;
            r -= &ap * alpha;
            let rr_new = self.inner(&r, &r);
            iterations += 1;
            history.push(rr_new.max(0.0).sqrt() / bnorm);
            if rr_new.max(0.0).sqrt() <= tol * bnorm {
                break;
            }
            p = &r + &p * (rr_new / rr);
            rr = rr_new;
        }
        let true_res = |x: &DVector<f64>| {
            let d = rhs - self.apply_screened(x);
            self.inner(&d, &d).max(0.0).sqrt() / bnorm
        };
        let rel = true_res(&x);
        if rel <= tol {
            return Ok(ScreenedSolution {
                rho: x,
                iterations,
                residual_history: history,
                relative_residual: rel,
                used_fallback: false,
            });
        }
        log::debug!("screened CG stalled at {rel:e} after {iterations} iterations, using LU");
        let a = DMatrix::identity(n, n) - &self.chi * &self.kernel;
        let lu_x = a.lu().solve(rhs);
        match lu_x {
            Some(y) if true_res(&y) <= tol => {
                let rel = true_res(&y);
                Ok(ScreenedSolution {
                    rho: y,
                    iterations,
                    residual_history: history,
                    relative_residual: rel,
                    used_fallback: true,
                })
            }
            _ => Err(Error::LinearSolver {
                reason: format!("screened solve did not reach {tol:e}"),
                residuals: history,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScreenedSolution {
    pub rho: DVector<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub relative_residual: f64,
    pub used_fallback: bool,
}

/// One-shot screened solve; builds the response operator on the fly.
pub fn solve_screened(gs: &GroundState, rhs: &DVector<f64>, spec: &ContourSpec, tol: f64) -> Result<ScreenedSolution> {
    ResponseOperator::new(gs, spec)?.solve_screened(rhs, tol)
}
