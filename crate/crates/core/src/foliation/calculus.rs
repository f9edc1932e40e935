//! Coarea and first-variation checks for leaf integrals.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::leaf::{nodal_derivs, point_geometry};
use super::march::FoliationTrace;
use super::structure::ScalarProbe;
use crate::background::Background;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalculusReport {
    /// `∫_S f dΣ` by quadrature along base-plane columns.
    pub coarea_lhs: f64,
    /// `∫∫ f a dμ_u du` over the stored leaves.
    pub coarea_rhs: f64,
    pub coarea_mismatch: f64,
    /// Largest normalised mismatch of `d/du ∫ f dμ = ∫ a (∇_N f + trθ f) dμ`.
    pub du_mismatch: f64,
}

fn sqrt_det(bg: &Background, x: &Vector3<f64>) -> f64 {
    if bg.is_flat_at(x) {
        1.0
    } else {
        bg.metric(x).determinant().sqrt()
    }
}

/// Per-leaf integrals `∫ f dμ` and `∫ a (∇_N f + trθ f) dμ` with its absolute scale.
fn leaf_integrals(trace: &FoliationTrace, bg: &Background, probe: &dyn ScalarProbe, k: usize) -> (f64, f64, f64, f64) {
    let grid = trace.grid;
    let h = &trace.leaves[k].h;
    let w = grid.dq * grid.dq;
    let per: Vec<[f64; 4]> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let (dh, ddh) = nodal_derivs(h, &grid, node);
            let p = point_geometry(bg, &trace.frame, grid.q(node), h[node], dh, ddh);
            let sg = p.gamma.determinant().sqrt();
            let f = probe.value(&p.x);
            let nf = p.n_up.dot(&probe.gradient(&p.x));
            [f * sg, p.a * (nf + p.tr_theta * f) * sg, p.a * (nf.abs() + (p.tr_theta * f).abs()) * sg, p.a * f * sg]
        })
        .collect();
    let mut s = [0.0; 4];
    for v in per {
        for i in 0..4 {
            s[i] += v[i] * w;
        }
    }
    (s[0], s[1], s[2], s[3])
}

/// Both sides of the coarea formula and of the first-variation formula at the stored
/// leaves nearest to each label in `du_at`.
pub fn calculus_checks(trace: &FoliationTrace, bg: &Background, probe: &dyn ScalarProbe, du_at: &[f64]) -> CalculusReport {
    let grid = trace.grid;
    let nl = trace.leaves.len();
    let dus = trace.stored_du();
    let w = grid.dq * grid.dq;
    let columns: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let q = grid.q(node);
            let z0 = trace.leaves[0].h[node];
            let z1 = trace.leaves[nl - 1].h[node];
            let dz = (z1 - z0) / (nl - 1) as f64;
            let mut s = 0.0;
            for m in 0..nl {
                let x = trace.frame.point(q, z0 + m as f64 * dz);
                let wt = if m == 0 || m == nl - 1 { 0.5 } else { 1.0 };
                s += wt * probe.value(&x) * sqrt_det(bg, &x);
            }
            s * dz
        })
        .collect();
    let lhs: f64 = columns.iter().sum::<f64>() * w;

    let per_leaf: Vec<f64> = (0..nl).map(|k| leaf_integrals(trace, bg, probe, k).3).collect();
    let rhs: f64 = per_leaf
        .iter()
        .enumerate()
        .map(|(k, v)| if k == 0 || k == nl - 1 { 0.5 * v } else { *v })
        .sum::<f64>()
        * dus;

    let mut du_mismatch: f64 = 0.0;
    for &u in du_at {
        let k = (((u - trace.leaves[0].u) / dus).round() as usize).clamp(1, nl - 2);
        let (ip, ..) = leaf_integrals(trace, bg, probe, k - 1);
        let (inx, ..) = leaf_integrals(trace, bg, probe, k + 1);
        let (_, rhs_k, scale, _) = leaf_integrals(trace, bg, probe, k);
        let lhs_k = (inx - ip) / (2.0 * dus);
        du_mismatch = du_mismatch.max((lhs_k - rhs_k).abs() / scale.max(f64::MIN_POSITIVE));
    }
    CalculusReport {
        coarea_lhs: lhs,
        coarea_rhs: rhs,
        coarea_mismatch: (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE),
        du_mismatch,
    }
}
