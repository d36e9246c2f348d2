//! Exponential chart `Γ(A)` and its multilinear Taylor terms `γ_l`.

use nalgebra::DMatrix;

use super::frame::{traceless_symmetric, BlockCoefficient, BlockFrame};
use crate::combinatorics::factorial;
use crate::error::{Error, Result};
use crate::linalg::{commutator, expm, expm_frechet, sym_eigen, symmetrize};
use crate::model::DensityMatrix;

fn put(m: &mut DMatrix<f64>, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, b: &DMatrix<f64>) {
    m.view_mut((rows.start, cols.start), (rows.len(), cols.len())).copy_from(b);
}

/// Skew lift of `(A_uf, A_up)` coupling the occupied blocks to `ℋ_u`.
pub fn l_uo(frame: &BlockFrame, a: &BlockCoefficient) -> DMatrix<f64> {
    let n = frame.n_sites();
    let mut l = DMatrix::zeros(n, n);
    put(&mut l, frame.range_u(), frame.range_f(), &a.a_uf);
    put(&mut l, frame.range_f(), frame.range_u(), &(-a.a_uf.transpose()));
    put(&mut l, frame.range_u(), frame.range_p(), &a.a_up);
    put(&mut l, frame.range_p(), frame.range_u(), &(-a.a_up.transpose()));
    l
}

pub fn l_pf(frame: &BlockFrame, a: &BlockCoefficient) -> DMatrix<f64> {
    let n = frame.n_sites();
    let mut l = DMatrix::zeros(n, n);
    put(&mut l, frame.range_p(), frame.range_f(), &a.a_pf);
    put(&mut l, frame.range_f(), frame.range_p(), &(-a.a_pf.transpose()));
    l
}

pub fn l_pp(frame: &BlockFrame, a: &BlockCoefficient) -> DMatrix<f64> {
    let n = frame.n_sites();
    let mut l = DMatrix::zeros(n, n);
    put(&mut l, frame.range_p(), frame.range_p(), &a.a_pp);
    l
}

/// `Γ(A)` in frame coordinates, without the occupancy check.
pub fn gamma_of_frame(frame: &BlockFrame, a: &BlockCoefficient) -> DMatrix<f64> {
    let ex = expm(&l_uo(frame, a));
    let ey = expm(&l_pf(frame, a));
    let inner = frame.gamma0_frame() + l_pp(frame, a);
    let r = &ex * &ey;
    symmetrize(&(&r * inner * r.transpose()))
}

/// Checks `0 ≤ Λ + A_pp ≤ 1`.
pub fn check_occupancy_box(frame: &BlockFrame, a: &BlockCoefficient) -> Result<()> {
    let occ = sym_eigen(&(frame.lambda() + &a.a_pp)).values;
    let (lo, hi) = (occ.min(), occ.max());
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::Domain(format!(
            "Λ + A_pp has spectrum [{lo:.3e}, {hi:.3e}], outside [0, 1]"
        )));
    }
    Ok(())
}

/// `Γ(A)` in the site basis.
pub fn gamma_of(frame: &BlockFrame, a: &BlockCoefficient) -> Result<DensityMatrix> {
    check_occupancy_box(frame, a)?;
    Ok(DensityMatrix::from_matrix_unchecked(symmetrize(
        &frame.to_site(&gamma_of_frame(frame, a)),
    )))
}

/// `γ₁(A) = [L_uo + L_pf, γ₀] + L_pp`, frame coordinates.
pub fn gamma1_frame(frame: &BlockFrame, a: &BlockCoefficient) -> DMatrix<f64> {
    let l = l_uo(frame, a) + l_pf(frame, a);
    commutator(&l, frame.gamma0_frame()) + l_pp(frame, a)
}

/// Dual coefficient of `A ↦ Tr(M γ₁(A))` for a symmetric frame matrix `M`.
pub fn gamma1_adjoint(frame: &BlockFrame, m: &DMatrix<f64>) -> BlockCoefficient {
    let (rf, rp, ru) = (frame.range_f(), frame.range_p(), frame.range_u());
    let lam = frame.lambda();
    let one_minus = DMatrix::identity(frame.n_p(), frame.n_p()) - lam;
    BlockCoefficient {
        a_uf: frame.block(m, ru.clone(), rf.clone()) * 2.0,
        a_up: frame.block(m, ru, rp.clone()) * lam * 2.0,
        a_pf: &one_minus * frame.block(m, rp.clone(), rf) * 2.0,
        a_pp: traceless_symmetric(&frame.block(m, rp.clone(), rp)),
    }
}

/// Multilinear term `γ_l(A₁,…,A_l)` in frame coordinates. Not symmetric in
/// its arguments.
pub fn gamma_l_frame(frame: &BlockFrame, args: &[&BlockCoefficient]) -> DMatrix<f64> {
    let l = args.len();
    assert!(l >= 1, "gamma_l needs at least one argument");
    let uo: Vec<DMatrix<f64>> = args.iter().map(|a| l_uo(frame, a)).collect();
    let pf: Vec<DMatrix<f64>> = args.iter().map(|a| l_pf(frame, a)).collect();
    let n = frame.n_sites();
    let mut total = DMatrix::zeros(n, n);
    // ad_{uo(1)}…ad_{uo(i)} ad_{pf(i+1)}…ad_{pf(last)} applied to `seed`
    let chain = |seed: DMatrix<f64>, i: usize, last: usize| {
        let mut m = seed;
        for t in (i..last).rev() {
            m = commutator(&pf[t], &m);
        }
        for t in (0..i).rev() {
            m = commutator(&uo[t], &m);
        }
        m
    };
    for i in 0..=l {
        let c = 1.0 / (factorial(i) * factorial(l - i));
        total += chain(frame.gamma0_frame().clone(), i, l) * c;
    }
    let pp = l_pp(frame, args[l - 1]);
    for i in 0..l {
        let c = 1.0 / (factorial(i) * factorial(l - 1 - i));
        total += chain(pp.clone(), i, l - 1) * c;
    }
    total
}

/// `γ_l` in the site basis.
pub fn gamma_l(frame: &BlockFrame, args: &[&BlockCoefficient]) -> DMatrix<f64> {
    frame.to_site(&gamma_l_frame(frame, args))
}

/// Directional derivative `DΓ(A)[A′]` in frame coordinates.
pub fn gamma_derivative_frame(frame: &BlockFrame, a: &BlockCoefficient, da: &BlockCoefficient) -> DMatrix<f64> {
    let x = l_uo(frame, a);
    let y = l_pf(frame, a);
    let dx = l_uo(frame, da);
    let dy = l_pf(frame, da);
    let p = frame.gamma0_frame() + l_pp(frame, a);
    let dp = l_pp(frame, da);
    let ex = expm(&x);
    let ey = expm(&y);
    let dex = expm_frechet(&x, &dx);
    let dey = expm_frechet(&y, &dy);
    // Γ = R P Rᵀ with R = e^X e^Y orthogonal
    let r = &ex * &ey;
    let dr = &dex * &ey + &ex * &dey;
    let sym = &dr * p * r.transpose();
    &sym + sym.transpose() + &r * dp * r.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deg_pt::frame::tests::synthetic_frame;
    use crate::linalg::{max_abs, trace_product};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gives_reference_state() {
        let frame = synthetic_frame(2, 2, 5);
        let g = gamma_of(&frame, &BlockCoefficient::zeros(&frame)).unwrap();
        let g0 = frame.to_site(frame.gamma0_frame());
        assert!(max_abs(&(g.matrix() - g0)) <= 1e-12);
    }

    #[test]
    fn spectrum_and_trace_preserved() {
        let frame = synthetic_frame(2, 3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n_el = frame.gamma0_frame().trace();
        for _ in 0..100 {
            let a = BlockCoefficient::random(&frame, &mut rng, 0.2);
            let g = gamma_of(&frame, &a).unwrap();
            assert!((g.matrix().trace() - n_el).abs() <= 1e-12);
            let mut expected: Vec<f64> = vec![1.0; 2];
            expected.extend(sym_eigen(&(frame.lambda() + &a.a_pp)).values.iter());
            expected.extend(vec![0.0; frame.n_u()]);
            expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let got = sym_eigen(g.matrix()).values;
            for (x, y) in got.iter().zip(&expected) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn occupancy_box_enforced() {
        let frame = synthetic_frame(1, 2, 8);
        let mut a = BlockCoefficient::zeros(&frame);
        a.a_pp = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]);
        assert!(matches!(gamma_of(&frame, &a), Err(Error::Domain(_))));
    }

    #[test]
    fn first_term_matches_lift_and_pp_injection() {
        let frame = synthetic_frame(2, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = BlockCoefficient::random(&frame, &mut rng, 1.0);
        assert!(max_abs(&(gamma_l_frame(&frame, &[&a]) - gamma1_frame(&frame, &a))) <= 1e-14);
        let mut only_pp = BlockCoefficient::zeros(&frame);
        only_pp.a_pp = a.a_pp.clone();
        assert!(max_abs(&(gamma1_frame(&frame, &only_pp) - l_pp(&frame, &only_pp))) <= 1e-15);
        // Tr(H₀ γ₁(A)) = 0
        assert!(trace_product(frame.h_frame(), &gamma1_frame(&frame, &a)).abs() <= 1e-12);
    }

    #[test]
    fn adjoint_of_first_term() {
        let frame = synthetic_frame(2, 3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = {
            let r = DMatrix::from_fn(frame.n_sites(), frame.n_sites(), |_, _| {
                rand::Rng::random::<f64>(&mut rng) - 0.5
            });
            symmetrize(&r)
        };
        let dual = gamma1_adjoint(&frame, &m);
        for _ in 0..10 {
            let a = BlockCoefficient::random(&frame, &mut rng, 1.0);
            let direct = trace_product(&m, &gamma1_frame(&frame, &a));
            assert!((direct - dual.dot(&a)).abs() <= 1e-12);
        }
    }

    #[test]
    fn taylor_terms_sum_to_chart() {
        let frame = synthetic_frame(2, 2, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let dir = BlockCoefficient::random(&frame, &mut rng, 1.0);
        let mut errs = Vec::new();
        for t in [0.1, 0.05] {
            let a = dir.scaled(t);
            let mut sum = frame.gamma0_frame().clone();
            for l in 1..=6 {
                let args = vec![&a; l];
                sum += gamma_l_frame(&frame, &args);
            }
            errs.push(max_abs(&(gamma_of_frame(&frame, &a) - sum)));
        }
        // remainder is seventh order
        let slope = (errs[0] / errs[1]).log2();
        assert!(errs[0] <= 1e-6 && slope > 6.5, "{errs:?}");
    }

    #[test]
    fn derivative_matches_central_difference() {
        let frame = synthetic_frame(1, 2, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let a = BlockCoefficient::random(&frame, &mut rng, 0.3);
        let da = BlockCoefficient::random(&frame, &mut rng, 1.0);
        let h = 1e-5;
        let mut ap = a.clone();
        ap.add_scaled(&da, h);
        let mut am = a.clone();
        am.add_scaled(&da, -h);
        let fd = (gamma_of_frame(&frame, &ap) - gamma_of_frame(&frame, &am)) / (2.0 * h);
        let exact = gamma_derivative_frame(&frame, &a, &da);
        assert!(max_abs(&(fd - exact)) <= 1e-8);
    }
}
