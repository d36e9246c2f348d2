//! Block frame `ℋ_f ⊕ ℋ_p ⊕ ℋ_u` and the tangent coefficients `A`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::ground_state::{Classification, GroundState};
use crate::linalg::{conjugate_diagonal, diagonal_of_conjugate, max_abs, sym_eigen, symmetrize};

/// Distance of `spec(Λ)` from `{0, 1}` below which the chart is refused.
pub const LAMBDA_MARGIN: f64 = 1e-6;

/// Orthonormal frame `[f | p | u]` with every operator stored in frame
/// coordinates, so `γ₀ = diag(1, Λ, 0)` and `H₀` is block-diagonal.
#[derive(Debug, Clone)]
pub struct BlockFrame {
    basis: DMatrix<f64>,
    n_f: usize,
    n_p: usize,
    h: DMatrix<f64>,
    eps_f: f64,
    lambda: DMatrix<f64>,
    gamma0: DMatrix<f64>,
    kernel: DMatrix<f64>,
    rho0: DVector<f64>,
}

impl BlockFrame {
    /// Builds a frame from explicit site-basis data. `basis` columns are
    /// ordered `f, p, u`.
    pub fn new(
        basis: DMatrix<f64>,
        n_f: usize,
        n_p: usize,
        h0: &DMatrix<f64>,
        eps_f: f64,
        lambda: DMatrix<f64>,
        kernel: DMatrix<f64>,
    ) -> Result<Self> {
        let n = basis.nrows();
        if !basis.is_square() || h0.shape() != (n, n) || kernel.shape() != (n, n) {
            return Err(Error::Dimension("frame, Hamiltonian and kernel sizes differ".into()));
        }
        if n_p < 2 || n_f + n_p > n || lambda.shape() != (n_p, n_p) {
            return Err(Error::Dimension(format!(
                "block sizes N_f={n_f}, N_p={n_p} do not fit {n} sites"
            )));
        }
        let ortho = max_abs(&(basis.transpose() * &basis - DMatrix::identity(n, n)));
        if ortho > 1e-9 {
            return Err(Error::Consistency(format!("frame is not orthonormal ({ortho:e})")));
        }
        let h = symmetrize(&(basis.transpose() * h0 * &basis));
        let lambda = symmetrize(&lambda);
        let lam = sym_eigen(&lambda).values;
        if lam[0] <= LAMBDA_MARGIN || lam[n_p - 1] >= 1.0 - LAMBDA_MARGIN {
            return Err(Error::precondition(
                "block_frame",
                format!(
                    "fractional occupations [{:.3e}, {:.3e}] touch 0 or 1, coercivity is lost",
                    lam[0],
                    lam[n_p - 1]
                ),
            ));
        }
        let mut gamma0 = DMatrix::zeros(n, n);
        for i in 0..n_f {
            gamma0[(i, i)] = 1.0;
        }
        gamma0.view_mut((n_f, n_f), (n_p, n_p)).copy_from(&lambda);
        let rho0 = diagonal_of_conjugate(&basis, &gamma0);
        let frame = BlockFrame {
            basis,
            n_f,
            n_p,
            h,
            eps_f,
            lambda,
            gamma0,
            kernel,
            rho0,
        };
        let off = frame.block_offdiagonal();
        if off > 1e-9 * (1.0 + frame.h.amax()) {
            return Err(Error::Consistency(format!(
                "H₀ is not block-diagonal in the frame ({off:e})"
            )));
        }
        Ok(frame)
    }

    pub fn from_ground_state(gs: &GroundState) -> Result<Self> {
        if gs.classification != Classification::Degenerate {
            return Err(Error::precondition(
                "block_frame",
                format!("ground state is {}, expected degenerate", gs.classification),
            ));
        }
        BlockFrame::new(
            gs.eigvecs.clone(),
            gs.n_full,
            gs.n_partial,
            &gs.h0,
            gs.fermi_level,
            gs.lambda.clone(),
            gs.kernel.clone(),
        )
    }

    pub fn n_sites(&self) -> usize {
        self.basis.nrows()
    }
    pub fn n_f(&self) -> usize {
        self.n_f
    }
    pub fn n_p(&self) -> usize {
        self.n_p
    }
    pub fn n_u(&self) -> usize {
        self.n_sites() - self.n_f - self.n_p
    }
    pub fn range_f(&self) -> Range<usize> {
        0..self.n_f
    }
    pub fn range_p(&self) -> Range<usize> {
        self.n_f..self.n_f + self.n_p
    }
    pub fn range_u(&self) -> Range<usize> {
        self.n_f + self.n_p..self.n_sites()
    }
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
    pub fn basis_f(&self) -> DMatrix<f64> {
        self.basis.columns(0, self.n_f).into_owned()
    }
    pub fn basis_p(&self) -> DMatrix<f64> {
        self.basis.columns(self.n_f, self.n_p).into_owned()
    }
    pub fn basis_u(&self) -> DMatrix<f64> {
        self.basis.columns(self.n_f + self.n_p, self.n_u()).into_owned()
    }
    pub fn eps_f(&self) -> f64 {
        self.eps_f
    }
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }
    pub fn rho0(&self) -> &DVector<f64> {
        &self.rho0
    }
    /// `H₀` in frame coordinates.
    pub fn h_frame(&self) -> &DMatrix<f64> {
        &self.h
    }
    /// `γ₀ = diag(1, Λ, 0)` in frame coordinates.
    pub fn gamma0_frame(&self) -> &DMatrix<f64> {
        &self.gamma0
    }
    pub fn h_ff(&self) -> DMatrix<f64> {
        self.block(&self.h, self.range_f(), self.range_f())
    }
    pub fn h_pp(&self) -> DMatrix<f64> {
        self.block(&self.h, self.range_p(), self.range_p())
    }
    pub fn h_uu(&self) -> DMatrix<f64> {
        self.block(&self.h, self.range_u(), self.range_u())
    }

    pub fn block(&self, m: &DMatrix<f64>, rows: Range<usize>, cols: Range<usize>) -> DMatrix<f64> {
        m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
    }

    /// `(λ₋, λ₊)`, extreme eigenvalues of `Λ`.
    pub fn lambda_bounds(&self) -> (f64, f64) {
        let e = sym_eigen(&self.lambda).values;
        (e[0], e[self.n_p - 1])
    }

    /// `(g₋, g₊)` measured from the frame Hamiltonian. With no fully
    /// occupied block `g₋` is reported as infinite.
    pub fn gaps(&self) -> (f64, f64) {
        let gm = if self.n_f == 0 {
            f64::INFINITY
        } else {
            self.eps_f - sym_eigen(&self.h_ff()).values.max()
        };
        let gp = if self.n_u() == 0 {
            f64::INFINITY
        } else {
            sym_eigen(&self.h_uu()).values.min() - self.eps_f
        };
        (gm, gp)
    }

    /// Largest entry of `H₀` outside the diagonal blocks.
    pub fn block_offdiagonal(&self) -> f64 {
        let ranges = [self.range_f(), self.range_p(), self.range_u()];
        let mut worst: f64 = 0.0;
        for (a, ra) in ranges.iter().enumerate() {
            for (b, rb) in ranges.iter().enumerate() {
                if a != b && !ra.is_empty() && !rb.is_empty() {
                    worst = worst.max(self.block(&self.h, ra.clone(), rb.clone()).amax());
                }
            }
        }
        worst
    }

    /// Frame operator mapped to the site basis, `U M Uᵀ`.
    pub fn to_site(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * m * self.basis.transpose()
    }

    /// Site density of a frame operator.
    pub fn density(&self, m: &DMatrix<f64>) -> DVector<f64> {
        diagonal_of_conjugate(&self.basis, m)
    }

    /// Multiplication by a site potential, in frame coordinates.
    pub fn potential_frame(&self, v: &DVector<f64>) -> DMatrix<f64> {
        conjugate_diagonal(&self.basis, v)
    }

    /// Hartree potential of a frame operator's density, in frame coordinates.
    pub fn hartree_frame(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let rho = self.density(m);
        self.potential_frame(&(&self.kernel * rho))
    }

    pub fn coulomb_pairing(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        self.density(a).dot(&(&self.kernel * self.density(b)))
    }

    /// `dim 𝒜 = N_uN_f + N_uN_p + N_pN_f + N_p(N_p+1)/2 − 1`.
    pub fn dim_a(&self) -> usize {
        let (f, p, u) = (self.n_f, self.n_p, self.n_u());
        u * f + u * p + p * f + p * (p + 1) / 2 - 1
    }
}

/// Tangent parameter `A = (A_uf, A_up, A_pf, A_pp)`. The same layout stores
/// dual coefficients, paired through the Euclidean block trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCoefficient {
    pub a_uf: DMatrix<f64>,
    pub a_up: DMatrix<f64>,
    pub a_pf: DMatrix<f64>,
    pub a_pp: DMatrix<f64>,
}

/// Orthonormal (Frobenius) basis of the traceless diagonal, Helmert style.
fn helmert(np: usize, m: usize) -> DVector<f64> {
    let mut d = DVector::zeros(np);
    let norm = ((m * (m + 1)) as f64).sqrt();
    for i in 0..m {
        d[i] = 1.0 / norm;
    }
    d[m] = -(m as f64) / norm;
    d
}

impl BlockCoefficient {
    pub fn zeros(frame: &BlockFrame) -> Self {
        let (f, p, u) = (frame.n_f(), frame.n_p(), frame.n_u());
        BlockCoefficient {
            a_uf: DMatrix::zeros(u, f),
            a_up: DMatrix::zeros(u, p),
            a_pf: DMatrix::zeros(p, f),
            a_pp: DMatrix::zeros(p, p),
        }
    }

    /// Coordinates in an orthonormal basis for the Euclidean pairing.
    pub fn to_vec(&self) -> DVector<f64> {
        let np = self.a_pp.nrows();
        let mut out: Vec<f64> = Vec::new();
        out.extend(self.a_uf.iter());
        out.extend(self.a_up.iter());
        out.extend(self.a_pf.iter());
        let s2 = std::f64::consts::SQRT_2;
        for j in 0..np {
            for i in 0..j {
                out.push(s2 * 0.5 * (self.a_pp[(i, j)] + self.a_pp[(j, i)]));
            }
        }
        let diag = self.a_pp.diagonal();
        for m in 1..np {
            out.push(helmert(np, m).dot(&diag));
        }
        DVector::from_vec(out)
    }

    pub fn from_vec(frame: &BlockFrame, v: &DVector<f64>) -> Result<Self> {
        if v.len() != frame.dim_a() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {}, expected {}",
                v.len(),
                frame.dim_a()
            )));
        }
        let (f, p, u) = (frame.n_f(), frame.n_p(), frame.n_u());
        let mut it = v.iter().copied();
        let a_uf = DMatrix::from_iterator(u, f, it.by_ref().take(u * f));
        let a_up = DMatrix::from_iterator(u, p, it.by_ref().take(u * p));
        let a_pf = DMatrix::from_iterator(p, f, it.by_ref().take(p * f));
        let mut a_pp = DMatrix::zeros(p, p);
        let s2 = std::f64::consts::SQRT_2;
        for j in 0..p {
            for i in 0..j {
                let x = it.next().unwrap_or(0.0) / s2;
                a_pp[(i, j)] = x;
                a_pp[(j, i)] = x;
            }
        }
        for m in 1..p {
            let c = it.next().unwrap_or(0.0);
            let d = helmert(p, m);
            for i in 0..p {
                a_pp[(i, i)] += c * d[i];
            }
        }
        Ok(BlockCoefficient { a_uf, a_up, a_pf, a_pp })
    }

    /// Unit coordinate vector `b` as a coefficient.
    pub fn basis_element(frame: &BlockFrame, b: usize) -> Self {
        let mut v = DVector::zeros(frame.dim_a());
        v[b] = 1.0;
        Self::from_vec(frame, &v).expect("dimension matches by construction")
    }

    /// Random coefficient with independent normal coordinates scaled to
    /// Euclidean norm `norm`.
    pub fn random<R: Rng + ?Sized>(frame: &BlockFrame, rng: &mut R, norm: f64) -> Self {
        let v = DVector::from_iterator(
            frame.dim_a(),
            (0..frame.dim_a()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        let v = &v * (norm / v.norm().max(f64::MIN_POSITIVE));
        Self::from_vec(frame, &v).expect("dimension matches by construction")
    }

    /// Euclidean block-trace pairing.
    pub fn dot(&self, other: &Self) -> f64 {
        self.a_uf.dot(&other.a_uf) + self.a_up.dot(&other.a_up) + self.a_pf.dot(&other.a_pf) + self.a_pp.dot(&other.a_pp)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Norm of the `𝒜` inner product, u-blocks weighted by `H₀⁺⁺ − ε_F⁰`.
    pub fn norm_a_squared(&self, frame: &BlockFrame) -> f64 {
        let mut hu = frame.h_uu();
        for i in 0..hu.nrows() {
            hu[(i, i)] -= frame.eps_f();
        }
        let uf = (self.a_uf.transpose() * &hu * &self.a_uf).trace();
        let up = (self.a_up.transpose() * &hu * &self.a_up).trace();
        uf + up + self.a_pf.norm_squared() + self.a_pp.norm_squared()
    }

    pub fn scaled(&self, s: f64) -> Self {
        BlockCoefficient {
            a_uf: &self.a_uf * s,
            a_up: &self.a_up * s,
            a_pf: &self.a_pf * s,
            a_pp: &self.a_pp * s,
        }
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        self.a_uf += &other.a_uf * s;
        self.a_up += &other.a_up * s;
        self.a_pf += &other.a_pf * s;
        self.a_pp += &other.a_pp * s;
    }

    pub fn max_abs(&self) -> f64 {
        self.a_uf
            .amax()
            .max(self.a_up.amax())
            .max(self.a_pf.amax())
            .max(self.a_pp.amax())
    }

    /// Per-block Frobenius norms `[uf, up, pf, pp]`.
    pub fn block_norms(&self) -> [f64; 4] {
        [self.a_uf.norm(), self.a_up.norm(), self.a_pf.norm(), self.a_pp.norm()]
    }

    /// `|Tr A_pp|` and the asymmetry of `A_pp`.
    pub fn pp_defects(&self) -> (f64, f64) {
        (self.a_pp.trace().abs(), (&self.a_pp - self.a_pp.transpose()).amax())
    }
}

/// Orthogonal projection of a square block onto symmetric traceless matrices.
pub(crate) fn traceless_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut s = symmetrize(m);
    let t = s.trace() / n as f64;
    for i in 0..n {
        s[(i, i)] -= t;
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{synthetic_degenerate, SyntheticParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn synthetic_frame(n_full: usize, n_partial: usize, seed: u64) -> BlockFrame {
        let c = synthetic_degenerate(&SyntheticParams {
            n_sites: 8,
            n_full,
            n_partial,
            fermi_level: -1.0,
            gap_below: 0.5,
            gap_above: 0.5,
            spacing: 0.3,
            kernel_scale: 0.2,
            occupations: None,
            seed,
        })
        .unwrap();
        let gs = GroundState::from_synthetic(&c).unwrap();
        BlockFrame::from_ground_state(&gs).unwrap()
    }

    #[test]
    fn coordinates_round_trip() {
        let frame = synthetic_frame(2, 3, 1);
        assert_eq!(frame.dim_a(), 3 * 2 + 3 * 3 + 3 * 2 + 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = BlockCoefficient::random(&frame, &mut rng, 1.0);
        let v = a.to_vec();
        let back = BlockCoefficient::from_vec(&frame, &v).unwrap();
        assert!((back.to_vec() - &v).amax() <= 1e-14);
        let (tr, asym) = a.pp_defects();
        assert!(tr <= 1e-12 && asym <= 1e-15);
        // Euclidean pairing equals the coordinate dot product
        let b = BlockCoefficient::random(&frame, &mut rng, 1.0);
        assert!((a.dot(&b) - v.dot(&b.to_vec())).abs() <= 1e-13);
    }

    #[test]
    fn frame_invariants() {
        let frame = synthetic_frame(1, 2, 3);
        assert!(frame.block_offdiagonal() <= 1e-9);
        let (gm, gp) = frame.gaps();
        assert!((gm - 0.5).abs() <= 1e-9 && (gp - 0.5).abs() <= 1e-9);
        let (lm, lp) = frame.lambda_bounds();
        assert!(lm > 0.0 && lp < 1.0);
        assert!((frame.gamma0_frame().trace() - (1.0 + frame.lambda().trace())).abs() <= 1e-12);
    }

    #[test]
    fn boundary_lambda_refused() {
        let frame = synthetic_frame(1, 2, 3);
        let err = BlockFrame::new(
            frame.basis().clone(),
            1,
            2,
            &frame.to_site(frame.h_frame()),
            frame.eps_f(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            frame.kernel().clone(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition { .. }));
    }
}
