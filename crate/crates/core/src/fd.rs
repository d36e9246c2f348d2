//! Finite-difference derivatives of `β ↦ 𝓔(βw)` from converged SCF energies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ground_state::{minimize, GroundState, ScfOptions};
use crate::model::{LatticeSystem, Potential};
use crate::par;

pub const MIN_STEP: f64 = 1e-6;
pub const MAX_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct FdEstimate {
    pub step: f64,
    /// `d𝓔/dβ` at 0.
    pub first: f64,
    pub first_error: f64,
    /// `½ d²𝓔/dβ²` at 0, when requested.
    pub second: Option<f64>,
    pub second_error: Option<f64>,
    /// `(β, 𝓔(βw))` samples.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct FdOptions {
    /// Certificate target for each SCF, relative to `max(1, |𝓔(0)|)`.
    pub scf_tol: f64,
    pub scf: ScfOptions,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            scf_tol: 1e-13,
            scf: ScfOptions::default(),
        }
    }
}

/// Central differences at `±h` and `±2h`, combined by one Richardson step.
/// `step` is measured in units of `1/‖w‖_𝒞′`.
pub fn fd_oracle(sys: &LatticeSystem, gs: &GroundState, w: &Potential, step: f64, order: usize) -> Result<FdEstimate> {
    fd_oracle_with(sys, gs, w, step, order, &FdOptions::default())
}

pub fn fd_oracle_with(
    sys: &LatticeSystem,
    gs: &GroundState,
    w: &Potential,
    step: f64,
    order: usize,
    opts: &FdOptions,
) -> Result<FdEstimate> {
    if !(1..=2).contains(&order) {
        return Err(Error::Input(format!("derivative order {order} not in 1..=2")));
    }
    if !(MIN_STEP..=MAX_STEP).contains(&step) {
        return Err(Error::Input(format!("step {step:e} outside [{MIN_STEP:e}, {MAX_STEP:e}]")));
    }
    if w.len() != sys.n_sites() {
        return Err(Error::Dimension(format!("potential length {}, expected {}", w.len(), sys.n_sites())));
    }
    let norm = sys.dual_norm(w.values());
    if norm == 0.0 {
        return Ok(FdEstimate {
            step,
            first: 0.0,
            first_error: 0.0,
            second: (order == 2).then_some(0.0),
            second_error: (order == 2).then_some(0.0),
            samples: vec![(0.0, gs.energy)],
        });
    }
    let h = step / norm;
    let mut betas = vec![-2.0 * h, -h, h, 2.0 * h];
    if order == 2 {
        betas.push(0.0);
    }
    let scf = ScfOptions {
        tol_residual: opts.scf_tol * gs.energy.abs().max(1.0),
        initial_guess: Some(gs.gamma0.clone()),
        ..opts.scf.clone()
    };
    let energies = par::try_map_range(betas.len(), |i| -> Result<f64> {
        Ok(minimize(sys, &w.scaled(betas[i]), &scf)?.energy)
    })?;
    let (em2, em1, ep1, ep2) = (energies[0], energies[1], energies[2], energies[3]);
    let d1_h = (ep1 - em1) / (2.0 * h);
    let d1_2h = (ep2 - em2) / (4.0 * h);
    let first = (4.0 * d1_h - d1_2h) / 3.0;
    let (second, second_error) = if order == 2 {
        let e0 = energies[4];
        let d2_h = (ep1 - 2.0 * e0 + em1) / (h * h);
        let d2_2h = (ep2 - 2.0 * e0 + em2) / (4.0 * h * h);
        let d2 = (4.0 * d2_h - d2_2h) / 3.0;
        (Some(0.5 * d2), Some(0.5 * (d2 - d2_h).abs()))
    } else {
        (None, None)
    };
    Ok(FdEstimate {
        step,
        first,
        first_error: (first - d1_h).abs(),
        second,
        second_error,
        samples: betas.into_iter().zip(energies).collect(),
    })
}
