//! Order-`k` right-hand sides `B⁽ᵏ⁾` and the truncated energy coefficients.
//!
//! With `A(β) = Σ βʲA⁽ʲ⁾` and `Γ(A(β)) − γ₀ = Σ βᵐ g⁽ᵐ⁾`, the order-`k`
//! coefficient of `⟨∇_A E, A′⟩` is
//! `Σ_s Tr(M_s · [βˢ] DΓ(A(β))[A′])` with
//! `M_k = H₀`, `M_s = K ρ(g⁽ᵏ⁻ˢ⁾)` for `s < k` and an extra `W` at `s = k−1`.
//! `B⁽ᵏ⁾` is this sum with every occurrence of `A⁽ᵏ⁾` removed.

use nalgebra::DMatrix;

use super::chart::{gamma1_adjoint, gamma_l_frame};
use super::frame::{BlockCoefficient, BlockFrame};
use crate::combinatorics::{compositions, max_part};
use crate::error::{Error, Result};
use crate::linalg::trace_product;
use crate::model::Potential;
use crate::par;

/// Hard limit on the order of a single assembly.
pub const MAX_ASSEMBLY_ORDER: usize = 8;

fn check_potential(frame: &BlockFrame, w: &Potential) -> Result<()> {
    if w.len() != frame.n_sites() {
        return Err(Error::Dimension(format!(
            "potential length {}, expected {}",
            w.len(),
            frame.n_sites()
        )));
    }
    Ok(())
}

/// `Σ_l Σ_{α ⊨ m, |α|∞ ≤ max}` `γ_l(A⁽α₁⁾,…,A⁽α_l⁾)` in frame coordinates,
/// where `a[j−1] = A⁽ʲ⁾`. Parts beyond `a.len()` are treated as zero.
pub fn gamma_coefficient_frame(frame: &BlockFrame, a: &[BlockCoefficient], m: usize, max: usize) -> DMatrix<f64> {
    let n = frame.n_sites();
    if m == 0 {
        return frame.gamma0_frame().clone();
    }
    let cap = max.min(a.len());
    let alphas: Vec<Vec<usize>> = (1..=m)
        .flat_map(|l| compositions(m, l))
        .filter(|alpha| max_part(alpha) <= cap)
        .collect();
    let terms = par::map_slice(&alphas, |alpha| {
        let args: Vec<&BlockCoefficient> = alpha.iter().map(|&j| &a[j - 1]).collect();
        gamma_l_frame(frame, &args)
    });
    terms.into_iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t)
}

/// `B⁽¹⁾`: the dual of `A ↦ ρ_{γ₁(A)}ᵀw`.
pub fn assemble_b1(frame: &BlockFrame, w: &Potential) -> Result<BlockCoefficient> {
    check_potential(frame, w)?;
    Ok(gamma1_adjoint(frame, &frame.potential_frame(w.values())))
}

/// `B⁽ᵏ⁾` from the prior coefficients `A⁽¹⁾…A⁽ᵏ⁻¹⁾`.
pub fn assemble_b(frame: &BlockFrame, w: &Potential, k: usize, prior: &[BlockCoefficient]) -> Result<BlockCoefficient> {
    check_potential(frame, w)?;
    if k == 0 {
        return Err(Error::Input("right-hand sides start at order 1".into()));
    }
    if k > MAX_ASSEMBLY_ORDER {
        return Err(Error::OrderCap {
            requested: k,
            cap: MAX_ASSEMBLY_ORDER,
        });
    }
    if k == 1 {
        return assemble_b1(frame, w);
    }
    if prior.len() < k - 1 {
        return Err(Error::Input(format!(
            "order {k} needs {} prior coefficients, got {}",
            k - 1,
            prior.len()
        )));
    }
    let prior = &prior[..k - 1];
    let w_frame = frame.potential_frame(w.values());
    // weights M_s for s = 0..=k
    let weights: Vec<DMatrix<f64>> = (0..=k)
        .map(|s| {
            let mut m = if s == k {
                frame.h_frame().clone()
            } else {
                frame.hartree_frame(&gamma_coefficient_frame(frame, prior, k - s, k - 1))
            };
            if s + 1 == k {
                m += &w_frame;
            }
            m
        })
        .collect();

    // (s, α′) pairs with l′ = |α′| + 1 ≥ 2
    let mut shapes: Vec<(usize, Vec<usize>)> = Vec::new();
    for s in 1..=k {
        for parts in 1..=s {
            for alpha in compositions(s, parts) {
                if max_part(&alpha) < k {
                    shapes.push((s, alpha));
                }
            }
        }
    }

    let functional = |e: &BlockCoefficient| -> f64 {
        let mut total = 0.0;
        for (s, alpha) in &shapes {
            let lp = alpha.len() + 1;
            let mut args: Vec<&BlockCoefficient> = alpha.iter().map(|&j| &prior[j - 1]).collect();
            args.push(e);
            for i in 0..lp {
                args.swap(i, lp - 1);
                total += trace_product(&weights[*s], &gamma_l_frame(frame, &args));
                args.swap(i, lp - 1);
            }
        }
        total
    };
    let d = frame.dim_a();
    let coords = par::map_range(d, |b| functional(&BlockCoefficient::basis_element(frame, b)));
    let mut b = BlockCoefficient::from_vec(frame, &nalgebra::DVector::from_vec(coords))?;
    // l′ = 1 term, exact adjoint
    b.add_scaled(&gamma1_adjoint(frame, &weights[0]), 1.0);
    Ok(b)
}

/// Order-`k` energy coefficient computed from `A⁽¹⁾…A⁽ᵏᐟ²⁾` only.
pub fn energy_coefficient(frame: &BlockFrame, a: &[BlockCoefficient], w: &Potential, k: usize) -> Result<f64> {
    check_potential(frame, w)?;
    if k == 0 {
        return Err(Error::Input("order 0 is the reference energy".into()));
    }
    if k == 1 {
        return Ok(frame.rho0().dot(w.values()));
    }
    let n = k / 2;
    if a.len() < n {
        return Err(Error::Input(format!("order {k} needs {n} coefficients, got {}", a.len())));
    }
    let g: Vec<DMatrix<f64>> = (0..=k).map(|m| gamma_coefficient_frame(frame, &a[..n], m, n)).collect();
    let mut e = trace_product(frame.h_frame(), &g[k]);
    for m in 1..k {
        e += 0.5 * frame.coulomb_pairing(&g[m], &g[k - m]);
    }
    e += frame.density(&g[k - 1]).dot(w.values());
    Ok(e)
}

/// Direct energy formula from full density coefficients `γ⁽⁰⁾…γ⁽ᵏ⁾` (frame
/// coordinates). Needs the coefficients through order `k`.
pub fn energy_from_gammas(frame: &BlockFrame, gammas: &[DMatrix<f64>], w: &Potential, k: usize) -> f64 {
    if k == 1 {
        return frame.rho0().dot(w.values());
    }
    let mut e = trace_product(frame.h_frame(), &gammas[k]);
    for m in 1..k {
        e += 0.5 * frame.coulomb_pairing(&gammas[m], &gammas[k - m]);
    }
    e + frame.density(&gammas[k - 1]).dot(w.values())
}
