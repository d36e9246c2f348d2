mod common;

use common::*;
use nalgebra::DMatrix;
use rhf_pt::linalg::{max_abs, sym_eigen};
use rhf_pt::model::{build_demo_system, mean_field, DemoKind, DoubleWellParams};
use rhf_pt::mo_pt::{mo_expand, orthogonality_defects};
use rhf_pt::nondeg_pt::{expand, NondegOptions};
use rhf_pt::{Classification, Error, GroundState, LatticeSystem, Potential, ScfOptions};

fn double_well(n: usize) -> (LatticeSystem, GroundState) {
    let sys = build_demo_system(&DemoKind::DoubleWell(DoubleWellParams {
        n_sites: n,
        n_electrons: 2,
        hopping: 1.0,
        yukawa_mass: 1.0,
        coupling: 1.0,
        background: -3.0,
        depths: [2.0, 1.5],
        centers: [n as f64 / 4.0, 0.7 * n as f64],
        width: 1.5,
    }))
    .unwrap();
    let gs = rhf_pt::solve_scf(&sys, &ScfOptions::default()).unwrap();
    (sys, gs)
}

#[test]
fn density_matrices_agree_with_contour_series() {
    let (sys, gs) = double_well(12);
    assert_eq!(gs.classification, Classification::NonDegenerate);
    let w = sys.random_potential(&mut rng(11), 1.0);
    let nd = expand(&gs, &w, 3, &NondegOptions::default()).unwrap();
    let mo = mo_expand(&gs, &w, 4).unwrap();
    for k in 1..=3 {
        let diff = max_abs(&(mo.gamma(k) - &nd.gamma_k[k]));
        assert!(diff <= 1e-8, "order {k}: {diff:e}");
    }
    let defects = orthogonality_defects(&mo);
    for (k, d) in defects.iter().enumerate() {
        assert!(*d <= 1e-9, "order {k}: {d:e}");
    }
}

#[test]
fn orbital_energies_follow_perturbed_spectrum() {
    let (sys, gs) = double_well(10);
    let w = sys.random_potential(&mut rng(12), 1.0);
    let mo = mo_expand(&gs, &w, 3).unwrap();
    let errs: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&beta| {
            let pert = scf_at(&sys, &w, beta);
            let h = mean_field(&sys, &pert.rho0, &w.scaled(beta)).unwrap();
            let exact = sym_eigen(&h).values;
            (0..2)
                .map(|i| {
                    let series: f64 = (0..=3).map(|k| mo.eps_k[k][i] * beta.powi(k as i32)).sum();
                    (series - exact[i]).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let slope = loglog_slope(&[4e-3, 2e-3, 1e-3], &errs);
    assert!(slope > 3.5, "slope {slope}, errors {errs:?}");
}

#[test]
fn random_hamiltonians_satisfy_orthogonality() {
    for seed in 0..4 {
        let mut r = rng(seed);
        let h = random_symmetric(7, &mut r) * 4.0;
        let a = DMatrix::from_fn(7, 7, |_, _| rand::Rng::random::<f64>(&mut r) - 0.5);
        let k = &a * a.transpose() / 7.0 + DMatrix::identity(7, 7) * 0.1;
        let gs = GroundState::from_hamiltonian(h, 3, k).unwrap();
        let w = Potential::new(random_vector(7, &mut r)).unwrap();
        let mo = mo_expand(&gs, &w, 4).unwrap();
        assert!(orthogonality_defects(&mo).iter().all(|d| *d <= 1e-9));
        let nd = expand(&gs, &w, 3, &NondegOptions::default()).unwrap();
        for k in 1..=3 {
            assert!(max_abs(&(mo.gamma(k) - &nd.gamma_k[k])) <= 1e-8);
        }
    }
}

#[test]
fn degenerate_occupied_levels_are_refused() {
    // ring with N = 3 occupies the ±k pair
    let (sys, gs) = ring_ground_state(12, 3);
    assert_eq!(gs.classification, Classification::NonDegenerate);
    let err = mo_expand(&gs, &Potential::zeros(sys.n_sites()), 2).unwrap_err();
    assert!(matches!(err, Error::Precondition { .. }));
}
