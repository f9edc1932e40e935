//! First- and second-order ω-identities of the phase family.
//!
//! With `du = a⁻¹ N_low`, differentiating in `ω` gives
//! `d(∂_E u) = a⁻¹ ∂_E N_low − a⁻² ∂_E a N_low`, whose tangential part is
//! `∇̸∂_ω u = a⁻¹ ∂_ω N` and whose normal part is `N(∂_ω u) = −a⁻¹ ∂_ω log a`.
//! One more derivative gives
//! `∂²_EF N = a Π∇(∂²_EF u) + ∂_E log a ∂_F N + ∂_F log a ∂_E N − g(∂_E N, ∂_F N) N`.

use nalgebra::Vector3;

use super::atlas::{lattice_gradient, lattice_stencil, PhaseAtlas};
use crate::background::Background;
use crate::error::{Error, Result};
use crate::foliation::{march, Direction, MarchParams, Residual};
use crate::gridfile::Lattice;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OmegaIdentityReport {
    /// `|d(∂_E u) − a⁻¹∂_E N_low + a⁻²∂_E a N_low|` over both frame directions.
    pub first_order: Residual,
    /// Second-order identity for `∂²N`, Euclidean norm of the vector residual.
    pub second_order: Residual,
    /// `max |∂³_ω ũ|` over directions with a 5-point stencil in θ or φ (report only); NaN
    /// when no direction has one.
    pub third_derivative_max: f64,
    pub points: usize,
}

fn finish(values: &[f64], cell: f64) -> Residual {
    Residual {
        max: values.iter().copied().fold(0.0, f64::max),
        l2: (values.iter().map(|v| v * v).sum::<f64>() * cell).sqrt(),
    }
}

/// Both ω-identities at every interior lattice node and interior direction.
pub fn omega_identity_residuals(bg: &Background, atlas: &PhaseAtlas) -> Result<OmegaIdentityReport> {
    let lattice: Lattice = *atlas
        .samples
        .lattice()
        .ok_or_else(|| Error::Config("ω-identities need a lattice-sampled atlas".into()))?;
    let dx = lattice.spacing;
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut third: Option<f64> = None;
    for (i, j) in atlas.grid.interior() {
        let f = atlas.at(i, j).unwrap();
        let u_grad = |k: usize, e: usize| atlas.derivs(i, j, k, |f, k| f.u[k]).unwrap().d.grad[e];
        let u_hess = |k: usize, e: usize, g: usize| atlas.derivs(i, j, k, |f, k| f.u[k]).unwrap().d.hess[e][g];
        for k in 0..lattice.len() {
            for t in atlas.third_derivs(i, j, k).into_iter().flatten() {
                third = Some(third.unwrap_or(0.0).max(t.abs()));
            }
            let Some(st) = lattice_stencil(&lattice, k) else { continue };
            let a = f.a[k];
            let (nl, nu) = (f.n_low[k], f.n_up[k]);
            let da = atlas.derivs(i, j, k, |f, k| f.a[k]).unwrap().d.grad;
            let dnl = atlas.derivs(i, j, k, |f, k| f.n_low[k]).unwrap().d.grad;
            let dnu = atlas.derivs(i, j, k, |f, k| f.n_up[k]).unwrap().d;
            let mut r1: f64 = 0.0;
            for e in 0..2 {
                let lhs = Vector3::from(lattice_gradient(&st, dx, |n| u_grad(n, e)));
                let rhs = (dnl[e] - nl * (da[e] / a)) / a;
                r1 = r1.max((lhs - rhs).norm());
            }
            first.push(r1);
            let x = atlas.samples.point(k);
            let g = bg.metric(&x);
            let ginv = g.try_inverse().expect("metric invertible");
            let mut r2: f64 = 0.0;
            for e in 0..2 {
                for h in e..2 {
                    let grad = ginv * Vector3::from(lattice_gradient(&st, dx, |n| u_hess(n, e, h)));
                    let tangential = grad - nu * nl.dot(&grad);
                    let gnn = (dnu.grad[e].transpose() * g * dnu.grad[h])[0];
                    let rhs = tangential * a + dnu.grad[h] * (da[e] / a) + dnu.grad[e] * (da[h] / a) - nu * gnn;
                    r2 = r2.max((dnu.hess[e][h] - rhs).norm());
                }
            }
            second.push(r2);
        }
    }
    let cell = dx.powi(3);
    Ok(OmegaIdentityReport {
        points: first.len(),
        first_order: finish(&first, cell),
        second_order: finish(&second, cell),
        third_derivative_max: third.unwrap_or(f64::NAN),
    })
}

/// `max |N(x, ω) + N(x, −ω)|` over the given points (report only).
pub fn antipodal_defect(bg: &Background, dir: Direction, params: &MarchParams, points: &[Vector3<f64>]) -> Result<f64> {
    let anti = Direction::new(std::f64::consts::PI - dir.theta, dir.phi + std::f64::consts::PI);
    let t0 = march(bg, dir, params)?;
    let t1 = march(bg, anti, params)?;
    Ok(points
        .iter()
        .map(|x| (t0.glued(bg, x).n_up + t1.glued(bg, x).n_up).norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{OmegaGrid, SampleSet};

    #[test]
    fn flat_identities_hold_exactly() {
        let bg = Background::flat(Lattice::cube(3.0, 0.5));
        let grid = OmegaGrid::patch(Direction::new(0.9, 2.0), 0.08, &[-2, -1, 0, 1, 2], 2).unwrap();
        let atlas = PhaseAtlas::flat(grid, SampleSet::Lattice(Lattice::cube(1.5, 0.5)));
        let rep = omega_identity_residuals(&bg, &atlas).unwrap();
        assert!(rep.points > 0);
        assert!(rep.first_order.max < 1e-8, "{:?}", rep);
        assert!(rep.second_order.max < 1e-6, "{:?}", rep);
        // |∂_θ³(x·ω)| <= |x| and |∂_φ³(x·ω)| / sin³θ <= |x| / sin²θ.
        let bound = 1.5 * 3f64.sqrt() / (0.9f64 - 0.16).sin().powi(2);
        assert!(rep.third_derivative_max <= bound + 1e-6, "{}", rep.third_derivative_max);
    }
}
