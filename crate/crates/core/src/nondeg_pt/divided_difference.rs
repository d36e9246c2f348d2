//! Eigenbasis formula for `Q⁽¹⁾` and `Q⁽²⁾` by residues.
//!
//! In the eigenbasis of `H₀` the entries of `Q⁽ᵏ⁾` are sums of
//! `(2iπ)⁻¹ ∮ Π (z − e_p)⁻¹ dz`, i.e. divided differences of the occupation
//! step function. Only used to cross-check the quadrature.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ground_state::{Classification, GroundState};
use crate::linalg::conjugate_diagonal;

/// `(2iπ)⁻¹ ∮ Π_p (z − e_p)⁻¹ dz` over a contour enclosing the levels marked
/// `inside`. Poles closer than `merge` on the same side are treated as one
/// pole of higher order. Supports up to three poles.
pub fn residue_sum(poles: &[(f64, bool)], merge: f64) -> f64 {
    // (value, inside, multiplicity)
    let mut groups: Vec<(f64, bool, usize)> = Vec::new();
    for &(e, inside) in poles {
        match groups
            .iter_mut()
            .find(|(g, gi, _)| *gi == inside && (*g - e).abs() <= merge)
        {
            Some(g) => g.2 += 1,
            None => groups.push((e, inside, 1)),
        }
    }
    let mut total = 0.0;
    for (idx, &(p, inside, m)) in groups.iter().enumerate() {
        if !inside {
            continue;
        }
        // g(z) = Π_{other groups} (z − q)^{−m_q}
        let mut g = 1.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (jdx, &(q, _, mq)) in groups.iter().enumerate() {
            if jdx == idx {
                continue;
            }
            let d = p - q;
            g *= d.powi(-(mq as i32));
            s1 -= mq as f64 / d;
            s2 += mq as f64 / (d * d);
        }
        total += match m {
            1 => g,
            2 => g * s1,
            3 => 0.5 * g * (s1 * s1 + s2),
            _ => panic!("residue_sum supports at most three coincident poles"),
        };
    }
    total
}

/// `Q⁽ᵏ⁾` for `k ≤ 2` via divided differences. Result in the site basis.
pub fn divided_difference_q(gs: &GroundState, vs: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if gs.classification != Classification::NonDegenerate {
        return Err(Error::precondition("divided_difference_q", "ground state is not non-degenerate"));
    }
    let n = gs.n_sites();
    let occ = |j: usize| j < gs.n_electrons;
    let e = &gs.eigvals;
    let merge = 1e-12 * (e[n - 1] - e[0]).abs().max(1.0);
    let ve: Vec<DMatrix<f64>> = vs.iter().map(|v| conjugate_diagonal(&gs.eigvecs, v)).collect();
    let q = match ve.len() {
        1 => DMatrix::from_fn(n, n, |i, j| ve[0][(i, j)] * residue_sum(&[(e[i], occ(i)), (e[j], occ(j))], merge)),
        2 => DMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| {
                    ve[0][(i, k)]
                        * ve[1][(k, j)]
                        * residue_sum(&[(e[i], occ(i)), (e[k], occ(k)), (e[j], occ(j))], merge)
                })
                .sum()
        }),
        k => {
            return Err(Error::Input(format!(
                "divided-difference oracle covers k ≤ 2, got {k}"
            )))
        }
    };
    Ok(&gs.eigvecs * q * gs.eigvecs.transpose())
}
