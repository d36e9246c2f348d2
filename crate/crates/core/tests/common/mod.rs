#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhf_pt::ground_state::{minimize, Symmetrizer};
use rhf_pt::model::{build_demo_system, DemoKind, RingParams};
use rhf_pt::{GroundState, LatticeSystem, Potential, ScfOptions};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ring(n: usize, n_el: usize) -> LatticeSystem {
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

pub fn ring_ground_state(n: usize, n_el: usize) -> (LatticeSystem, GroundState) {
    let sys = ring(n, n_el);
    let opts = ScfOptions {
        symmetrizer: Some(Symmetrizer::ring(n)),
        ..Default::default()
    };
    let gs = rhf_pt::solve_scf(&sys, &opts).unwrap();
    (sys, gs)
}

pub fn scf_at(sys: &LatticeSystem, w: &Potential, beta: f64) -> GroundState {
    minimize(sys, &w.scaled(beta), &ScfOptions::default()).unwrap()
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    (&a + a.transpose()) * 0.5
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5)
}

/// Least-squares slope of log(err) against log(beta).
pub fn loglog_slope(betas: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
