//! The coercive map `Θ : 𝒜 → 𝒜′` and its inverse.

use nalgebra::{DMatrix, DVector};

use super::chart::{gamma1_adjoint, gamma1_frame};
use super::frame::{BlockCoefficient, BlockFrame};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, symmetrize};
use crate::par;

fn shifted(m: DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let mut m = m;
    for i in 0..m.nrows() {
        m[(i, i)] -= eps;
    }
    m
}

/// `𝒥(A)`, the dual of `A′ ↦ D(ρ_{γ₁(A)}, ρ_{γ₁(A′)})`.
pub fn coulomb_part(frame: &BlockFrame, a: &BlockCoefficient) -> BlockCoefficient {
    gamma1_adjoint(frame, &frame.hartree_frame(&gamma1_frame(frame, a)))
}

/// `Θ(A)` as a dual coefficient.
pub fn theta_apply(frame: &BlockFrame, a: &BlockCoefficient) -> BlockCoefficient {
    let eps = frame.eps_f();
    let hm = shifted(frame.h_ff(), eps);
    let hp = shifted(frame.h_uu(), eps);
    let lam = frame.lambda();
    let one_minus = DMatrix::identity(frame.n_p(), frame.n_p()) - lam;
    let mut out = BlockCoefficient {
        a_uf: -&a.a_uf * &hm + &hp * &a.a_uf,
        a_up: &hp * &a.a_up * lam,
        a_pf: -(&one_minus * &a.a_pf * &hm),
        a_pp: DMatrix::zeros(frame.n_p(), frame.n_p()),
    };
    out.add_scaled(&coulomb_part(frame, a), 0.5);
    out
}

/// `⟨Θ(A), A′⟩`.
pub fn theta_bilinear(frame: &BlockFrame, a: &BlockCoefficient, b: &BlockCoefficient) -> f64 {
    theta_apply(frame, a).dot(b)
}

/// Lower bound `min(1, λ₋, (1−λ₊)g₋)` on the coercivity constant of `Θ`
/// relative to the `𝒜` norm, without the Coulomb term.
pub fn coercivity_bound(frame: &BlockFrame) -> f64 {
    let (lm, lp) = frame.lambda_bounds();
    let (gm, _) = frame.gaps();
    let pf = if frame.n_f() == 0 { f64::INFINITY } else { (1.0 - lp) * gm };
    1.0_f64.min(lm).min(pf)
}

/// Gram matrix of the `𝒜` inner product in Euclidean coordinates.
pub fn a_metric(frame: &BlockFrame) -> DMatrix<f64> {
    dense_operator(frame, |e| {
        let mut hu = frame.h_uu();
        for i in 0..hu.nrows() {
            hu[(i, i)] -= frame.eps_f();
        }
        BlockCoefficient {
            a_uf: &hu * &e.a_uf,
            a_up: &hu * &e.a_up,
            a_pf: e.a_pf.clone(),
            a_pp: e.a_pp.clone(),
        }
    })
}

/// Dense matrix of a linear map `𝒜 → 𝒜′` in Euclidean coordinates.
pub fn dense_operator<F>(frame: &BlockFrame, op: F) -> DMatrix<f64>
where
    F: Fn(&BlockCoefficient) -> BlockCoefficient + Sync,
{
    let d = frame.dim_a();
    let cols = par::map_range(d, |b| op(&BlockCoefficient::basis_element(frame, b)).to_vec());
    DMatrix::from_columns(&cols)
}

/// Dense `Θ` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct ThetaSolver {
    matrix: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `max |Θ − Θᵀ|` before symmetrization.
    pub symmetry_defect: f64,
}

impl ThetaSolver {
    pub fn new(frame: &BlockFrame) -> Result<Self> {
        let raw = dense_operator(frame, |e| theta_apply(frame, e));
        let symmetry_defect = (&raw - raw.transpose()).amax();
        let matrix = symmetrize(&raw);
        let chol = matrix.clone().cholesky().ok_or_else(|| {
            Error::Coercivity(
                "Θ is not positive definite; the Fermi-shell occupations or the \
                 uniqueness condition on the degenerate orbitals are violated"
                    .into(),
            )
        })?;
        Ok(ThetaSolver {
            matrix,
            chol,
            symmetry_defect,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Smallest eigenvalue of `Θ` in Euclidean coordinates.
    pub fn min_eigenvalue(&self) -> f64 {
        sym_eigen(&self.matrix).values[0]
    }

    /// Smallest `c` with `⟨Θ(A),A⟩ ≥ c‖A‖²_𝒜`, the lowest generalized
    /// eigenvalue of `(Θ, G_𝒜)`.
    pub fn coercivity_constant(&self, frame: &BlockFrame) -> f64 {
        let g = a_metric(frame);
        let s = crate::linalg::inv_sqrt_spd(&symmetrize(&g));
        sym_eigen(&symmetrize(&(&s * &self.matrix * &s))).values[0]
    }

    /// Solves `Θ(A) = rhs`.
    pub fn solve(&self, frame: &BlockFrame, rhs: &BlockCoefficient) -> Result<BlockCoefficient> {
        let b = rhs.to_vec();
        let x = self.chol.solve(&b);
        let resid = (&self.matrix * &x - &b).norm();
        let scale = b.norm().max(f64::MIN_POSITIVE);
        if !(resid <= 1e-9 * scale || b.norm() == 0.0) {
            return Err(Error::LinearSolver {
                reason: format!("Θ solve residual {:e} relative to {:e}", resid, scale),
                residuals: vec![resid],
            });
        }
        BlockCoefficient::from_vec(frame, &x)
    }

    pub fn apply(&self, frame: &BlockFrame, a: &BlockCoefficient) -> Result<BlockCoefficient> {
        let v: DVector<f64> = &self.matrix * a.to_vec();
        BlockCoefficient::from_vec(frame, &v)
    }
}

pub fn theta_solve(frame: &BlockFrame, rhs: &BlockCoefficient) -> Result<BlockCoefficient> {
    ThetaSolver::new(frame)?.solve(frame, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg_pt::chart::gamma_l_frame;
    use crate::deg_pt::frame::tests::synthetic_frame;
    use crate::linalg::trace_product;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One f, two p, one u orbital, with `K = 0`.
    fn scalar_frame(gm: f64, gp: f64) -> BlockFrame {
        let eps = -1.0;
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![eps - gm, eps, eps, eps + gp]));
        BlockFrame::new(
            DMatrix::identity(4, 4),
            1,
            2,
            &h,
            eps,
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7])),
            DMatrix::zeros(4, 4),
        )
        .unwrap()
    }

    #[test]
    fn scalar_uf_block() {
        let frame = scalar_frame(0.4, 0.9);
        let mut a = BlockCoefficient::zeros(&frame);
        a.a_uf[(0, 0)] = 2.0;
        let t = theta_apply(&frame, &a);
        assert!((t.a_uf[(0, 0)] - 2.0 * 1.3).abs() <= 1e-14);
        assert!(t.a_up.amax() + t.a_pf.amax() + t.a_pp.amax() == 0.0);
    }

    #[test]
    fn scalar_uf_inverse() {
        // with K = 0 the pp block of Θ vanishes, so the inverse is taken on a
        // frame whose uf products have zero density and whose shell orbitals
        // spread over three sites
        let (eps, gm, gp) = (-1.0, 0.4, 0.9);
        let (c, s) = (0.8_f64, 0.6_f64);
        let q = DMatrix::from_row_slice(3, 3, &[c, -s * 0.6, s * 0.8, s, c * 0.6, -c * 0.8, 0.0, 0.8, 0.6]);
        let mut basis = DMatrix::zeros(5, 5);
        basis[(0, 0)] = 1.0;
        basis.view_mut((1, 1), (3, 3)).copy_from(&q);
        basis[(4, 4)] = 1.0;
        let energies = DVector::from_vec(vec![eps - gm, eps, eps, eps + 2.0, eps + gp]);
        let h = &basis * DMatrix::from_diagonal(&energies) * basis.transpose();
        let frame = BlockFrame::new(
            basis,
            1,
            2,
            &h,
            eps,
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7])),
            DMatrix::identity(5, 5) * 0.1,
        )
        .unwrap();
        let mut rhs = BlockCoefficient::zeros(&frame);
        rhs.a_uf[(1, 0)] = 0.65;
        let x = theta_solve(&frame, &rhs).unwrap();
        assert!((x.a_uf[(1, 0)] - 0.65 / (gm + gp)).abs() <= 1e-13);
        rhs.a_uf[(1, 0)] = 0.0;
        rhs.a_uf[(0, 0)] = 1.0;
        let x = theta_solve(&frame, &rhs).unwrap();
        assert!((x.a_uf[(0, 0)] - 1.0 / (gm + 2.0)).abs() <= 1e-13);
    }

    #[test]
    fn zero_maps_to_zero() {
        let frame = synthetic_frame(2, 2, 1);
        let z = BlockCoefficient::zeros(&frame);
        assert_eq!(theta_apply(&frame, &z).max_abs(), 0.0);
        assert_eq!(theta_solve(&frame, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn hessian_form_matches_explicit_blocks() {
        // ⟨Θ(A),A′⟩ = ½Tr(H₀(γ₂(A,A′)+γ₂(A′,A))) + ½D(ρ_{γ₁(A)}, ρ_{γ₁(A′)})
        let frame = synthetic_frame(2, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let a = BlockCoefficient::random(&frame, &mut rng, 1.0);
            let b = BlockCoefficient::random(&frame, &mut rng, 1.0);
            let g2 = gamma_l_frame(&frame, &[&a, &b]) + gamma_l_frame(&frame, &[&b, &a]);
            let d = frame.coulomb_pairing(&gamma1_frame(&frame, &a), &gamma1_frame(&frame, &b));
            let expected = 0.5 * trace_product(frame.h_frame(), &g2) + 0.5 * d;
            assert!((theta_bilinear(&frame, &a, &b) - expected).abs() <= 1e-11);
        }
    }

    #[test]
    fn symmetric_coercive_and_invertible() {
        let frame = synthetic_frame(2, 3, 4);
        let solver = ThetaSolver::new(&frame).unwrap();
        assert!(solver.symmetry_defect <= 1e-10);
        assert!(solver.coercivity_constant(&frame) > 0.0);
        let (lm, lp) = frame.lambda_bounds();
        let (gm, _) = frame.gaps();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = BlockCoefficient::random(&frame, &mut rng, 1.0);
            let mut hu = frame.h_uu();
            for i in 0..hu.nrows() {
                hu[(i, i)] -= frame.eps_f();
            }
            let uf = (a.a_uf.transpose() * &hu * &a.a_uf).trace();
            let up = (a.a_up.transpose() * &hu * &a.a_up).trace();
            let g1 = gamma1_frame(&frame, &a);
            let bound = uf + lm * up + (1.0 - lp) * gm * a.a_pf.norm_squared()
                + 0.5 * frame.coulomb_pairing(&g1, &g1);
            assert!(theta_bilinear(&frame, &a, &a) >= bound - 1e-12);
        }
        let rhs = BlockCoefficient::random(&frame, &mut rng, 1.0);
        let x = solver.solve(&frame, &rhs).unwrap();
        let back = theta_apply(&frame, &x);
        assert!((back.to_vec() - rhs.to_vec()).amax() <= 1e-9);
    }
}
