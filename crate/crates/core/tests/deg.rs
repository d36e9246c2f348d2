mod common;

use common::*;
use nalgebra::DMatrix;
use rhf_pt::deg_pt::{
    chart_gradient, expand_degenerate, gamma1_frame, theta_apply, BlockCoefficient, BlockFrame, DegOptions,
};
use rhf_pt::linalg::max_abs;
use rhf_pt::{Classification, Potential};

fn scaled_w(frame: &BlockFrame, sys: &rhf_pt::LatticeSystem, seed: u64, norm: f64) -> Potential {
    let _ = frame;
    sys.random_potential(&mut rng(seed), norm)
}

#[test]
fn first_order_blocks() {
    let (sys, gs) = ring_ground_state(16, 2);
    assert_eq!(gs.classification, Classification::Degenerate);
    let frame = BlockFrame::from_ground_state(&gs).unwrap();
    let w = scaled_w(&frame, &sys, 1, 1.0);
    let s = expand_degenerate(&gs, &w, 1, &DegOptions::default()).unwrap();
    let a = &s.a_k[1];
    // Θ(A⁽¹⁾) = −(W_uf, W_upΛ, (1−Λ)W_pf, ½W_pp)
    let wf = frame.potential_frame(w.values());
    let (rf, rp, ru) = (frame.range_f(), frame.range_p(), frame.range_u());
    let lam = frame.lambda();
    let one_minus = DMatrix::identity(2, 2) - lam;
    let t = theta_apply(&frame, a);
    let mut pp = frame.block(&wf, rp.clone(), rp.clone()) * 0.5;
    let tr = pp.trace() / 2.0;
    pp[(0, 0)] -= tr;
    pp[(1, 1)] -= tr;
    let expected = BlockCoefficient {
        a_uf: -frame.block(&wf, ru.clone(), rf.clone()),
        a_up: -(frame.block(&wf, ru.clone(), rp.clone()) * lam),
        a_pf: -(&one_minus * frame.block(&wf, rp.clone(), rf.clone())),
        a_pp: -pp,
    };
    let mut r = t.clone();
    r.add_scaled(&expected, -1.0);
    assert!(r.max_abs() <= 1e-9, "{:e}", r.max_abs());
    // γ⁽¹⁾ block pattern
    let g1 = frame.basis().transpose() * &s.gamma_k[1] * frame.basis();
    assert!(max_abs(&(frame.block(&g1, rp.clone(), rp.clone()) - &a.a_pp)) <= 1e-9);
    assert!(max_abs(&(frame.block(&g1, ru.clone(), rf.clone()) - &a.a_uf)) <= 1e-9);
    assert!(max_abs(&(frame.block(&g1, ru.clone(), rp.clone()) - &a.a_up * lam)) <= 1e-9);
    assert!(max_abs(&(frame.block(&g1, rp.clone(), rf.clone()) - &one_minus * &a.a_pf)) <= 1e-9);
    assert!(frame.block(&g1, rf.clone(), rf).amax() <= 1e-12);
    assert!(frame.block(&g1, ru.clone(), ru).amax() <= 1e-12);
    assert!(max_abs(&(frame.to_site(&gamma1_frame(&frame, a)) - &s.gamma_k[1])) <= 1e-12);
}

#[test]
fn energies_agree_and_traces_vanish() {
    let (sys, gs) = ring_ground_state(16, 2);
    let w = sys.random_potential(&mut rng(2), 1.0);
    let s = expand_degenerate(&gs, &w, 3, &DegOptions::default()).unwrap();
    assert!((s.energy_k[1] - gs.rho0.dot(w.values())).abs() <= 1e-12);
    for k in 1..=3 {
        assert!(s.gamma_k[k].trace().abs() <= 1e-10);
        let rel = (s.energy_k[k] - s.energy_direct_k[k]).abs() / s.energy_k[k].abs().max(1e-12);
        assert!(rel <= 1e-8, "order {k}: {} vs {}", s.energy_k[k], s.energy_direct_k[k]);
        assert!(s.theta_residuals[k] <= 1e-9);
    }
    assert_eq!(s.energy_k.len(), 8);
}

#[test]
fn gradient_vanishes_to_next_order() {
    let (sys, gs) = ring_ground_state(16, 2);
    let w = sys.random_potential(&mut rng(3), 1.0);
    let s = expand_degenerate(&gs, &w, 3, &DegOptions::default()).unwrap();
    let betas = [2e-2, 1e-2, 5e-3, 2.5e-3];
    for n in 1..=3 {
        let errs: Vec<f64> = betas
            .iter()
            .map(|&b| chart_gradient(&s.frame, &s.a_partial_sum(b, n), &w.scaled(b)).unwrap().norm())
            .collect();
        let slope = loglog_slope(&betas, &errs);
        assert!((slope - (n + 1) as f64).abs() <= 0.3, "n={n}: slope {slope}, {errs:?}");
    }
}

#[test]
fn refusals() {
    let (sys, gs) = ring_ground_state(16, 3);
    assert_eq!(gs.classification, Classification::NonDegenerate);
    let w = Potential::zeros(sys.n_sites());
    assert!(expand_degenerate(&gs, &w, 1, &DegOptions::default()).is_err());
    let (_, gs) = ring_ground_state(16, 2);
    let err = expand_degenerate(&gs, &w, 5, &DegOptions::default()).unwrap_err();
    assert!(matches!(err, rhf_pt::Error::OrderCap { .. }));
    let s = expand_degenerate(&gs, &w, 2, &DegOptions::default()).unwrap();
    assert!(s.a_k.iter().all(|a| a.max_abs() == 0.0));
}
