//! Latitude–longitude direction grids and trigonometric difference quotients.
//!
//! Quotients are normalised so that they are exact on first-degree trigonometric
//! polynomials in each angle. Restrictions of linear functions `ω ↦ x·ω` therefore
//! differentiate without truncation error.

use std::ops::{Add, Mul, Sub};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::foliation::Direction;

/// Values that can be differenced: scalars and ambient vectors.
pub trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>> Field for T {}

/// `θ_i = θ_0 + iΔθ`, `φ_j = φ_0 + jΔφ`; directions flagged inactive are never marched.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaGrid {
    pub theta0: f64,
    pub dtheta: f64,
    pub n_theta: usize,
    pub phi0: f64,
    pub dphi: f64,
    pub n_phi: usize,
    /// `φ` wraps around when the grid spans the full circle.
    pub periodic: bool,
    pub active: Vec<bool>,
}

impl OmegaGrid {
    /// Full sphere with cell-centred latitudes `θ_i = π(i + ½)/n_θ`.
    pub fn sphere(n_theta: usize, n_phi: usize) -> Self {
        Self {
            theta0: 0.5 * std::f64::consts::PI / n_theta as f64,
            dtheta: std::f64::consts::PI / n_theta as f64,
            n_theta,
            phi0: 0.0,
            dphi: std::f64::consts::TAU / n_phi as f64,
            n_phi,
            periodic: true,
            active: vec![true; n_theta * n_phi],
        }
    }

    /// Patch around `center` with equal angular steps; only the listed row offsets are
    /// active, each with columns `-col_radius..=col_radius`.
    pub fn patch(center: Direction, step: f64, rows: &[isize], col_radius: usize) -> Result<Self> {
        let (lo, hi) = match (rows.iter().min(), rows.iter().max()) {
            (Some(lo), Some(hi)) => (*lo, *hi),
            _ => return Err(Error::Config("direction patch needs at least one row".into())),
        };
        let n_theta = (hi - lo + 1) as usize;
        let n_phi = 2 * col_radius + 1;
        let theta0 = center.theta + lo as f64 * step;
        if theta0 <= 0.0 || center.theta + hi as f64 * step >= std::f64::consts::PI {
            return Err(Error::Config("direction patch crosses a pole".into()));
        }
        let mut active = vec![false; n_theta * n_phi];
        for r in rows {
            let i = (r - lo) as usize;
            for j in 0..n_phi {
                active[i + n_theta * j] = true;
            }
        }
        Ok(Self {
            theta0,
            dtheta: step,
            n_theta,
            phi0: center.phi - col_radius as f64 * step,
            dphi: step,
            n_phi,
            periodic: false,
            active,
        })
    }

    /// `center` and its four edge neighbours at distance `step`, the smallest grid that
    /// supports first derivatives at the centre (index `(1, 1)`).
    pub fn cross(center: Direction, step: f64) -> Result<Self> {
        let mut g = Self::patch(center, step, &[-1, 0, 1], 1)?;
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            let idx = g.index(i, j);
            g.active[idx] = false;
        }
        Ok(g)
    }

    /// Grid index of the patch centre row offset `r`, column offset `c`.
    pub fn patch_index(&self, rows: &[isize], r: isize, c: isize) -> (usize, usize) {
        let lo = *rows.iter().min().unwrap();
        ((r - lo) as usize, (c + (self.n_phi as isize - 1) / 2) as usize)
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n_theta * j
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.theta0 + i as f64 * self.dtheta
    }

    pub fn phi(&self, j: usize) -> f64 {
        self.phi0 + j as f64 * self.dphi
    }

    pub fn direction(&self, i: usize, j: usize) -> Direction {
        Direction::new(self.theta(i), self.phi(j))
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[self.index(i, j)]
    }

    /// Active neighbour at offset `(di, dj)`, wrapping in `φ` when periodic.
    pub fn neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<(usize, usize)> {
        let ii = i as isize + di;
        if ii < 0 || ii >= self.n_theta as isize {
            return None;
        }
        let mut jj = j as isize + dj;
        if self.periodic {
            jj = jj.rem_euclid(self.n_phi as isize);
        } else if jj < 0 || jj >= self.n_phi as isize {
            return None;
        }
        let (ii, jj) = (ii as usize, jj as usize);
        self.is_active(ii, jj).then_some((ii, jj))
    }

    /// Whether `(i, j)` has the 3×3 stencil needed for first and second derivatives.
    pub fn has_stencil(&self, i: usize, j: usize) -> bool {
        self.is_active(i, j)
            && (-1..=1).all(|di| (-1..=1).all(|dj| self.neighbor(i, j, di, dj).is_some()))
    }

    /// Whether `(i, j)` has its four edge neighbours, enough for first derivatives.
    pub fn has_cross(&self, i: usize, j: usize) -> bool {
        self.is_active(i, j) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().all(|&(di, dj)| self.neighbor(i, j, di, dj).is_some())
    }

    /// Directions that can be differenced twice.
    pub fn interior(&self) -> Vec<(usize, usize)> {
        (0..self.n_phi)
            .flat_map(|j| (0..self.n_theta).map(move |i| (i, j)))
            .filter(|&(i, j)| self.has_stencil(i, j))
            .collect()
    }
}

/// `(f₊ − f₋) / (2 sin Δ)`.
pub fn d1<V: Field>(fp: V, fm: V, step: f64) -> V {
    (fp - fm) * (1.0 / (2.0 * step.sin()))
}

/// `(f₊ − 2f + f₋) / (2(1 − cos Δ))`.
pub fn d2<V: Field>(fp: V, f: V, fm: V, step: f64) -> V {
    (fp + fm - f * 2.0) * (1.0 / (2.0 * (1.0 - step.cos())))
}

/// Mixed quotient `(f₊₊ − f₊₋ − f₋₊ + f₋₋) / (4 sin Δθ sin Δφ)`.
pub fn d12<V: Field>(fpp: V, fpm: V, fmp: V, fmm: V, dt: f64, dp: f64) -> V {
    (fpp - fpm - fmp + fmm) * (1.0 / (4.0 * dt.sin() * dp.sin()))
}

/// `(f₊₂ − 2f₊₁ + 2f₋₁ − f₋₂) / (4 sin Δ (1 − cos Δ))`.
pub fn d3<V: Field>(fp2: V, fp1: V, fm1: V, fm2: V, step: f64) -> V {
    (fp2 - fp1 * 2.0 + fm1 * 2.0 - fm2) * (1.0 / (4.0 * step.sin() * (1.0 - step.cos())))
}

/// Gradient and covariant Hessian on the unit sphere in the orthonormal frame
/// `(e_θ, e_φ)`, from a 3×3 stencil `s[di + 1][dj + 1]`.
#[derive(Clone, Copy, Debug)]
pub struct SphereDerivs<V> {
    pub grad: [V; 2],
    pub hess: [[V; 2]; 2],
}

pub fn sphere_derivs<V: Field>(s: &[[V; 3]; 3], theta: f64, dt: f64, dp: f64) -> SphereDerivs<V> {
    let (sin, cos) = theta.sin_cos();
    let ft = d1(s[2][1], s[0][1], dt);
    let fp = d1(s[1][2], s[1][0], dp);
    let ftt = d2(s[2][1], s[1][1], s[0][1], dt);
    let fpp = d2(s[1][2], s[1][1], s[1][0], dp);
    let ftp = d12(s[2][2], s[2][0], s[0][2], s[0][0], dt, dp);
    let cot = cos / sin;
    let h_tp = (ftp - fp * cot) * (1.0 / sin);
    SphereDerivs {
        grad: [ft, fp * (1.0 / sin)],
        hess: [[ftt, h_tp], [h_tp, fpp * (1.0 / (sin * sin)) + ft * cot]],
    }
}

/// Ambient vector `∂_ω f = f_θ e_θ + f_φ̂ e_φ` of an orthonormal-frame gradient.
pub fn tangent_vector(dir: &Direction, grad: [f64; 2]) -> Vector3<f64> {
    dir.e_theta() * grad[0] + dir.e_phi() * grad[1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotients_are_exact_on_linear_restrictions() {
        let x = Vector3::new(0.7, -1.3, 0.4);
        let grid = OmegaGrid::sphere(9, 17);
        let (i, j) = (3, 5);
        let f = |di: isize, dj: isize| {
            let d = Direction::new(grid.theta(i) + di as f64 * grid.dtheta, grid.phi(j) + dj as f64 * grid.dphi);
            x.dot(&d.omega())
        };
        let s = [-1, 0, 1].map(|di| [-1, 0, 1].map(|dj| f(di, dj)));
        let dir = grid.direction(i, j);
        let der = sphere_derivs(&s, dir.theta, grid.dtheta, grid.dphi);
        let w = dir.omega();
        let tangent = x - w * x.dot(&w);
        assert!((tangent_vector(&dir, der.grad) - tangent).norm() < 1e-13);
        let u = x.dot(&w);
        assert!((der.hess[0][0] + u).abs() < 1e-12);
        assert!((der.hess[1][1] + u).abs() < 1e-12);
        assert!(der.hess[0][1].abs() < 1e-12);
        let third = d3(f(2, 0), f(1, 0), f(-1, 0), f(-2, 0), grid.dtheta);
        // Along a meridian x·ω = A cos θ + B sin θ, whose third derivative is minus its first.
        assert!((third + der.grad[0]).abs() < 1e-12);
    }

    #[test]
    fn patch_layout() {
        let rows = [-1, 0, 1, 2, 4];
        let g = OmegaGrid::patch(Direction::new(1.0, 0.3), 0.05, &rows, 1).unwrap();
        assert_eq!((g.n_theta, g.n_phi), (6, 3));
        let (i, j) = g.patch_index(&rows, 0, 0);
        assert!((g.theta(i) - 1.0).abs() < 1e-15 && (g.phi(j) - 0.3).abs() < 1e-15);
        assert!(g.has_stencil(i, j));
        let (i3, _) = g.patch_index(&rows, 3, 0);
        assert!(!g.is_active(i3, j));
        assert_eq!(g.interior(), vec![(1, 1), (2, 1)]);
        assert!(OmegaGrid::patch(Direction::new(0.05, 0.0), 0.05, &rows, 1).is_err());
        let c = OmegaGrid::cross(Direction::new(1.0, 0.3), 0.05).unwrap();
        assert!(c.has_cross(1, 1) && !c.has_stencil(1, 1));
        assert_eq!(c.active.iter().filter(|a| **a).count(), 5);
    }

    #[test]
    fn sphere_wraps_in_phi() {
        let g = OmegaGrid::sphere(9, 17);
        assert_eq!(g.neighbor(4, 0, 0, -1), Some((4, 16)));
        assert_eq!(g.neighbor(0, 0, -1, 0), None);
        assert_eq!(g.interior().len(), 7 * 17);
    }
}
