//! Comparison of `u(·, ω)` with the linearised phase `Φ_ν · ω` of a nearby direction.

use nalgebra::Vector3;

use super::atlas::PhaseAtlas;
use super::omega::OmegaGrid;
use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::foliation::Direction;

/// Row offsets of a Taylor patch: `ν` at row 0 and comparison directions at rows
/// 1, 2, 4, 8, each with its own ±1 stencil.
pub const TAYLOR_ROWS: [isize; 10] = [-1, 0, 1, 2, 3, 4, 5, 7, 8, 9];
pub const TAYLOR_SEPARATIONS: [isize; 4] = [1, 2, 4, 8];

/// Meridian patch for [`taylor_compare`] with angular step `s0`, returning the grid, the
/// index of `ν` and the indices of the comparison directions.
pub fn taylor_patch(center: Direction, s0: f64) -> Result<(OmegaGrid, (usize, usize), Vec<(usize, usize)>)> {
    let grid = OmegaGrid::patch(center, s0, &TAYLOR_ROWS, 1)?;
    let nu = grid.patch_index(&TAYLOR_ROWS, 0, 0);
    let omegas = TAYLOR_SEPARATIONS.iter().map(|&r| grid.patch_index(&TAYLOR_ROWS, r, 0)).collect();
    Ok((grid, nu, omegas))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaylorReport {
    /// Chordal distances `|ω − ν|`.
    pub separations: Vec<f64>,
    /// `max |u(x, ω) − Φ_ν(x)·ω|` per separation.
    pub value: Vec<f64>,
    /// `max |∂_ω u(x, ω) − ∂_ω(Φ_ν(x)·ω)|`.
    pub first: Vec<f64>,
    /// `max |∂²_ω u(x, ω) − ∂²_ω(Φ_ν(x)·ω)|` (orthonormal components).
    pub second: Vec<f64>,
    /// Log–log `(slope, prefactor)` of each difference; `None` if a fit is impossible.
    pub fits: [Option<(f64, f64)>; 3],
}

/// Differences between `u(·, ω)` and `Φ_ν·ω`, `Φ_ν = u(·, ν)ν + ∂_ω u(·, ν)`, over all samples.
pub fn taylor_compare(atlas: &PhaseAtlas, nu: (usize, usize), omegas: &[(usize, usize)]) -> Result<TaylorReport> {
    let mut seps: Vec<f64> = Vec::new();
    for &(i, j) in omegas {
        let s = (atlas.direction(i, j).omega() - atlas.direction(nu.0, nu.1).omega()).norm();
        if s > 0.0 && !seps.iter().any(|t| (t - s).abs() < 1e-12) {
            seps.push(s);
        }
    }
    if seps.len() < 3 {
        return Err(Error::InsufficientSeparations { needed: 3, have: seps.len() });
    }
    let stencil_err = || Error::Config("Taylor directions need full ω-stencils".into());
    if !atlas.grid.has_stencil(nu.0, nu.1) || omegas.iter().any(|&(i, j)| !atlas.grid.has_stencil(i, j)) {
        return Err(stencil_err());
    }
    let wn = atlas.direction(nu.0, nu.1).omega();
    let fnu = atlas.at(nu.0, nu.1).unwrap();
    let n = atlas.samples.len();
    let phi_nu: Vec<Vector3<f64>> = (0..n).map(|k| wn * fnu.u[k] + atlas.d_omega_u(nu.0, nu.1, k).unwrap()).collect();
    let mut rep = TaylorReport::default();
    for &(i, j) in omegas {
        let dir = atlas.direction(i, j);
        let w = dir.omega();
        rep.separations.push((w - wn).norm());
        let (mut v0, mut v1, mut v2): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for (k, phi) in phi_nu.iter().enumerate() {
            let lin = phi.dot(&w);
            let d = atlas.derivs(i, j, k, |f, k| f.u[k]).unwrap();
            v0 = v0.max((d.value - lin).abs());
            let du = dir.e_theta() * d.d.grad[0] + dir.e_phi() * d.d.grad[1];
            v1 = v1.max((du - (phi - w * lin)).norm());
            for (a, row) in d.d.hess.iter().enumerate() {
                for (b, h) in row.iter().enumerate() {
                    let target = if a == b { -lin } else { 0.0 };
                    v2 = v2.max((h - target).abs());
                }
            }
        }
        rep.value.push(v0);
        rep.first.push(v1);
        rep.second.push(v2);
    }
    rep.fits = [
        loglog_fit(&rep.separations, &rep.value),
        loglog_fit(&rep.separations, &rep.first),
        loglog_fit(&rep.separations, &rep.second),
    ];
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfile::Lattice;
    use crate::phase::SampleSet;

    #[test]
    fn flat_phase_is_its_own_linearisation() {
        let (grid, nu, omegas) = taylor_patch(Direction::new(1.0, 0.7), 0.04).unwrap();
        let atlas = PhaseAtlas::flat(grid, SampleSet::Lattice(Lattice::cube(2.0, 0.5)));
        let rep = taylor_compare(&atlas, nu, &omegas).unwrap();
        for v in rep.value.iter().chain(&rep.first).chain(&rep.second) {
            assert!(*v <= 1e-8, "{v}");
        }
        assert!(matches!(taylor_compare(&atlas, nu, &omegas[..2]), Err(Error::InsufficientSeparations { .. })));
    }
}
