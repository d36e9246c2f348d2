//! Contour-integral operators `Q⁽ᵏ⁾(v₁,…,v_k)`.
//!
//! `Q⁽ᵏ⁾ = (2iπ)⁻¹ ∮ R(z) v₁ R(z) v₂ ⋯ v_k R(z) dz` with `R(z) = (z − H₀)⁻¹`,
//! evaluated in the eigenbasis of `H₀` where `R(z)` is diagonal. The
//! trapezoid rule on a circle converges geometrically; the node count is
//! doubled until two successive results agree.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::{Classification, GroundState};
use crate::linalg::{conjugate_diagonal, max_abs};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    pub center: f64,
    pub radius: f64,
    /// Initial number of trapezoid nodes (even).
    pub n_quad: usize,
    /// Agreement required between successive doublings, relative to the
    /// largest entry of the result (absolute below 1).
    pub tol: f64,
    pub max_quad: usize,
}

impl ContourSpec {
    /// Circle through `ε₁ − 1` and `ε_F`.
    pub fn for_ground_state(gs: &GroundState) -> Self {
        let left = gs.eigvals[0] - 1.0;
        let right = gs.fermi_level;
        ContourSpec {
            center: 0.5 * (left + right),
            radius: 0.5 * (right - left),
            n_quad: 64,
            tol: 1e-13,
            max_quad: 1 << 15,
        }
    }

    /// Checks that the circle encloses exactly the occupied levels and keeps
    /// away from the spectrum.
    pub fn validate(&self, gs: &GroundState) -> Result<()> {
        if !(self.radius > 0.0) || self.n_quad < 2 || !self.n_quad.is_multiple_of(2) {
            return Err(Error::Input(format!(
                "invalid contour: radius {}, n_quad {}",
                self.radius, self.n_quad
            )));
        }
        let mut min_dist = f64::INFINITY;
        for (j, &e) in gs.eigvals.iter().enumerate() {
            let d = (e - self.center).abs() - self.radius;
            let inside = d < 0.0;
            if inside != (j < gs.n_electrons) {
                return Err(Error::precondition(
                    "contour_q",
                    format!("contour does not separate occupied levels (level {j} at {e})"),
                ));
            }
            min_dist = min_dist.min(d.abs());
        }
        if min_dist <= 1e-8 * self.radius {
            return Err(Error::precondition(
                "contour_q",
                format!("contour passes within {min_dist:e} of the spectrum"),
            ));
        }
        Ok(())
    }
}


/// One trapezoid evaluation with `m` nodes, returned in the eigenbasis.
fn trapezoid(eigvals: &DVector<f64>, ops: &[DMatrix<Complex64>], spec: &ContourSpec, m: usize) -> DMatrix<f64> {
    let n = eigvals.len();
    let half = m / 2;
    // nodes θ = 2π(j+½)/m come in conjugate pairs; sum the upper half
    let terms = par::map_range(half, |j| {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
        let e = Complex64::from_polar(1.0, theta);
        let z = spec.center + e * spec.radius;
        let d: Vec<Complex64> = eigvals.iter().map(|&x| (z - x).inv()).collect();
        let mut p = DMatrix::<Complex64>::from_fn(n, n, |a, b| if a == b { d[a] } else { Complex64::new(0.0, 0.0) });
        for v in ops {
            p = &p * v;
            for (c, mut col) in p.column_iter_mut().enumerate() {
                col *= d[c];
            }
        }
        let w = e * spec.radius / m as f64;
        p.map(|x| (x * w).re)
    });
    let mut acc = DMatrix::zeros(n, n);
    for t in terms {
        acc += t;
    }
    acc * 2.0
}

/// Multilinear contour operator for general symmetric operators `ops`
/// (site basis). Returns the result in the site basis.
pub fn contour_q_ops(gs: &GroundState, ops: &[DMatrix<f64>], spec: &ContourSpec) -> Result<DMatrix<f64>> {
    let q = contour_q_eigenbasis(gs, ops, spec)?;
    Ok(&gs.eigvecs * q * gs.eigvecs.transpose())
}

/// As [`contour_q_ops`] but leaves the result in the eigenbasis of `H₀`.
pub fn contour_q_eigenbasis(gs: &GroundState, ops: &[DMatrix<f64>], spec: &ContourSpec) -> Result<DMatrix<f64>> {
    let n = gs.n_sites();
    for v in ops {
        if v.shape() != (n, n) {
            return Err(Error::Dimension(format!("operator shape {:?}, expected {n}x{n}", v.shape())));
        }
    }
    let ops_e: Vec<DMatrix<f64>> = ops.iter().map(|v| gs.eigvecs.transpose() * v * &gs.eigvecs).collect();
    quadrature(gs, &ops_e, spec)
}

/// Quadrature for operators already in the eigenbasis.
pub(crate) fn quadrature(gs: &GroundState, ops_e: &[DMatrix<f64>], spec: &ContourSpec) -> Result<DMatrix<f64>> {
    if gs.classification != Classification::NonDegenerate {
        return Err(Error::precondition(
            "contour_q",
            format!("ground state is {}, expected non_degenerate", gs.classification),
        ));
    }
    if ops_e.is_empty() {
        return Err(Error::Input("contour_q needs at least one operator".into()));
    }
    spec.validate(gs)?;
    let ops_e: Vec<DMatrix<Complex64>> = ops_e.iter().map(|v| v.map(|x| Complex64::new(x, 0.0))).collect();
    let mut m = spec.n_quad;
    let mut prev = trapezoid(&gs.eigvals, &ops_e, spec, m);
    loop {
        m *= 2;
        if m > spec.max_quad {
            return Err(Error::Accuracy(format!(
                "contour quadrature not stable with {} nodes",
                spec.max_quad
            )));
        }
        let next = trapezoid(&gs.eigvals, &ops_e, spec, m);
        let change = max_abs(&(&next - &prev));
        if change <= spec.tol * max_abs(&next).max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
}

/// `Q⁽ᵏ⁾(v₁,…,v_k)` for multiplicative potentials.
pub fn contour_q(gs: &GroundState, vs: &[DVector<f64>], spec: &ContourSpec) -> Result<DMatrix<f64>> {
    let n = gs.n_sites();
    for v in vs {
        if v.len() != n {
            return Err(Error::Dimension(format!("potential length {}, expected {n}", v.len())));
        }
    }
    let ops_e: Vec<DMatrix<f64>> = vs.iter().map(|v| conjugate_diagonal(&gs.eigvecs, v)).collect();
    let q = quadrature(gs, &ops_e, spec)?;
    Ok(&gs.eigvecs * q * gs.eigvecs.transpose())
}
