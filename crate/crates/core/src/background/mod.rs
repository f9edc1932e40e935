//! Initial data `(g, k)` on R^3: metric families, connection, curvature and the
//! constraint residuals.

mod family;

use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

pub use family::{Bump, FamilyCtor, FamilyParams, FamilyRegistry, Flat, MetricFamily, Table};

use crate::error::{Error, Result};
use crate::gridfile::{GridData, Lattice};

/// Christoffel symbols `Γ^k_ij`, indexed `[k][i][j]`.
pub type Christoffel = [[[f64; 3]; 3]; 3];

/// A background `(g, k)` together with the lattice that fixes its domain and spacing.
#[derive(Clone, Debug)]
pub struct Background {
    pub family: Arc<dyn MetricFamily>,
    pub epsilon: f64,
    pub support_radius: f64,
    pub lattice: Lattice,
}

/// Connection and curvature at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSample {
    pub christoffel: Christoffel,
    pub ricci: Matrix3<f64>,
    pub scalar: f64,
}

/// Maxima of the constraint residuals over the lattice interior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintResiduals {
    pub momentum: f64,
    pub hamiltonian: f64,
    pub trace: f64,
}

/// Builds a background from a registered family and validates it on the lattice.
pub fn make_background(
    registry: &FamilyRegistry,
    name: &str,
    params: &FamilyParams,
    lattice: Lattice,
) -> Result<Background> {
    if params.epsilon < 0.0 || !params.epsilon.is_finite() {
        return Err(Error::Config(format!("epsilon must be >= 0, got {}", params.epsilon)));
    }
    let family = registry.build(name, params)?;
    let bg = Background {
        family,
        epsilon: params.epsilon,
        support_radius: params.support_radius,
        lattice,
    };
    bg.check_ellipticity()?;
    Ok(bg)
}

impl Background {
    pub fn flat(lattice: Lattice) -> Self {
        Self { family: Arc::new(Flat), epsilon: 0.0, support_radius: 1.0, lattice }
    }

    /// The built-in bump with zero `k`.
    pub fn bump(epsilon: f64, lattice: Lattice) -> Result<Self> {
        make_background(&FamilyRegistry::with_builtin(), "bump", &FamilyParams::bump(epsilon), lattice)
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn metric(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.family.metric(x)
    }

    pub fn extrinsic(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.family.extrinsic(x)
    }

    /// True where every field, and every derivative of it, vanishes at `x`.
    pub fn is_flat_at(&self, x: &Vector3<f64>) -> bool {
        x.norm() >= self.family.flat_radius()
    }

    fn check_ellipticity(&self) -> Result<()> {
        let r = self.family.flat_radius();
        if r == 0.0 {
            return Ok(());
        }
        let mut points: Vec<Vector3<f64>> = (0..self.lattice.len())
            .map(|n| Vector3::from(self.lattice.point(n)))
            .filter(|p| p.norm() < r)
            .collect();
        points.extend(self.family.nodes().into_iter().filter(|p| p.norm() < r));
        let bad = points.par_iter().find_first(|p| {
            let ev = SymmetricEigen::new(self.metric(p)).eigenvalues;
            ev.iter().any(|&e| !(0.5..=2.0).contains(&e))
        });
        if let Some(p) = bad {
            let ev = SymmetricEigen::new(self.metric(p)).eigenvalues;
            let worst = ev.iter().copied().fold(1.0, |w: f64, e| if (e - 1.0).abs() > (w - 1.0).abs() { e } else { w });
            return Err(Error::EllipticityViolated { point: [p[0], p[1], p[2]], eigenvalue: worst });
        }
        Ok(())
    }

    /// `∂_m g_ij` at `x`: analytic when the family provides it, else centered differences
    /// with the lattice spacing.
    pub fn metric_gradient(&self, x: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        if self.is_flat_at(x) {
            return [Matrix3::zeros(); 3];
        }
        if let Some(d) = self.family.metric_gradient(x) {
            return d;
        }
        let h = self.spacing();
        let mut out = [Matrix3::zeros(); 3];
        for (m, o) in out.iter_mut().enumerate() {
            let mut e = Vector3::zeros();
            e[m] = h;
            *o = (self.metric(&(x + e)) - self.metric(&(x - e))) / (2.0 * h);
        }
        out
    }

    pub fn christoffel(&self, x: &Vector3<f64>) -> Christoffel {
        let mut gam = [[[0.0; 3]; 3]; 3];
        if self.is_flat_at(x) {
            return gam;
        }
        let ginv = self.metric(x).try_inverse().expect("metric invertible");
        let dg = self.metric_gradient(x);
        // Lowered symbols Γ_lij = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij).
        let mut low = [[[0.0; 3]; 3]; 3];
        for (l, low_l) in low.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    low_l[i][j] = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
            }
        }
        for (k, gk) in gam.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    gk[i][j] = (0..3).map(|l| ginv[(k, l)] * low[l][i][j]).sum();
                }
            }
        }
        gam
    }

    fn check_stencil(&self, x: &Vector3<f64>, reach: f64) -> Result<()> {
        let lo = self.lattice.origin;
        let hi = self.lattice.upper();
        for a in 0..3 {
            if x[a] - reach < lo[a] - 1e-12 || x[a] + reach > hi[a] + 1e-12 {
                return Err(Error::BoundaryStencil { point: [x[0], x[1], x[2]] });
            }
        }
        Ok(())
    }

    /// Curvature with the lattice spacing as difference step.
    pub fn curvature(&self, x: &Vector3<f64>) -> Result<CurvatureSample> {
        self.curvature_with_step(x, self.spacing())
    }

    /// Christoffels at `x` and Ricci by centered differences of the Christoffels with
    /// step `h`.
    pub fn curvature_with_step(&self, x: &Vector3<f64>, h: f64) -> Result<CurvatureSample> {
        let reach = if self.family.metric_gradient(x).is_some() { h } else { 2.0 * h };
        self.check_stencil(x, reach)?;
        let gam = self.christoffel(x);
        if x.norm() >= self.family.flat_radius() + reach {
            return Ok(CurvatureSample { christoffel: gam, ricci: Matrix3::zeros(), scalar: 0.0 });
        }
        // dgam[m][k][i][j] = ∂_m Γ^k_ij
        let mut dgam = [[[[0.0; 3]; 3]; 3]; 3];
        for (m, dm) in dgam.iter_mut().enumerate() {
            let mut e = Vector3::zeros();
            e[m] = h;
            let gp = self.christoffel(&(x + e));
            let gm = self.christoffel(&(x - e));
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        dm[k][i][j] = (gp[k][i][j] - gm[k][i][j]) / (2.0 * h);
                    }
                }
            }
        }
        let mut ric = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut r = 0.0;
                for k in 0..3 {
                    r += dgam[k][k][i][j] - dgam[j][k][i][k];
                    for l in 0..3 {
                        r += gam[k][k][l] * gam[l][i][j] - gam[k][j][l] * gam[l][i][k];
                    }
                }
                ric[(i, j)] = r;
            }
        }
        let ric = 0.5 * (ric + ric.transpose());
        let ginv = self.metric(x).try_inverse().expect("metric invertible");
        let scalar = (ginv * ric).trace();
        Ok(CurvatureSample { christoffel: gam, ricci: ric, scalar })
    }

    /// Momentum, Hamiltonian and trace residuals of the constraint equations, maximised
    /// over lattice nodes whose stencils fit.
    pub fn constraint_residuals(&self) -> ConstraintResiduals {
        let h = self.spacing();
        let r = self.family.flat_radius();
        let nodes: Vec<Vector3<f64>> = (0..self.lattice.len())
            .map(|n| Vector3::from(self.lattice.point(n)))
            .filter(|p| p.norm() < r + 2.0 * h)
            .collect();
        let per_node: Vec<[f64; 3]> = nodes
            .par_iter()
            .filter_map(|x| {
                let c = self.curvature(x).ok()?;
                let ginv = self.metric(x).try_inverse()?;
                if self.family.time_symmetric() {
                    return Some([0.0, c.scalar.abs(), 0.0]);
                }
                let k = self.extrinsic(x);
                let kup = ginv * k * ginv;
                let k2 = (kup * k).trace();
                let trk = (ginv * k).trace();
                let mut dk = [Matrix3::zeros(); 3];
                for (l, d) in dk.iter_mut().enumerate() {
                    let mut e = Vector3::zeros();
                    e[l] = h;
                    *d = (self.extrinsic(&(x + e)) - self.extrinsic(&(x - e))) / (2.0 * h);
                }
                let gam = &c.christoffel;
                let mut mom: f64 = 0.0;
                for i in 0..3 {
                    let mut div = 0.0;
                    for j in 0..3 {
                        for l in 0..3 {
                            let mut cov = dk[l][(i, j)];
                            for m in 0..3 {
                                cov -= gam[m][l][i] * k[(m, j)] + gam[m][l][j] * k[(i, m)];
                            }
                            div += ginv[(j, l)] * cov;
                        }
                    }
                    mom = mom.max(div.abs());
                }
                Some([mom, (c.scalar - k2 + trk * trk).abs(), trk.abs()])
            })
            .collect();
        let mut out = ConstraintResiduals { momentum: 0.0, hamiltonian: 0.0, trace: 0.0 };
        for v in per_node {
            out.momentum = out.momentum.max(v[0]);
            out.hamiltonian = out.hamiltonian.max(v[1]);
            out.trace = out.trace.max(v[2]);
        }
        out
    }

    /// Tabulates the metric on the background lattice in grid-file layout.
    pub fn metric_table(&self) -> GridData {
        let mut values = Vec::with_capacity(self.lattice.len() * 6);
        for n in 0..self.lattice.len() {
            let g = self.metric(&Vector3::from(self.lattice.point(n)));
            values.extend([g[(0, 0)], g[(0, 1)], g[(0, 2)], g[(1, 1)], g[(1, 2)], g[(2, 2)]]);
        }
        GridData { lattice: self.lattice, ncomp: 6, values }
    }
}

/// Smallest ε (to `tol`) at which the built-in bump leaves the ellipticity band, found
/// by bisection on the largest perturbation eigenvalue magnitude over the lattice.
pub fn bump_ellipticity_threshold(lattice: Lattice, tol: f64) -> f64 {
    let ok = |eps: f64| Background::bump(eps, lattice).is_ok();
    let (mut lo, mut hi) = (0.0, 1.0);
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice() -> Lattice {
        Lattice::cube(3.0, 0.1)
    }

    #[test]
    fn flat_curvature_is_zero() {
        let bg = Background::flat(lattice());
        let c = bg.curvature(&Vector3::new(0.3, -0.7, 1.1)).unwrap();
        assert_eq!(c.ricci, Matrix3::zeros());
        assert_eq!(c.scalar, 0.0);
        assert_eq!(bg.constraint_residuals(), ConstraintResiduals { momentum: 0.0, hamiltonian: 0.0, trace: 0.0 });
    }

    #[test]
    fn stencil_outside_domain_is_an_error() {
        let bg = Background::flat(lattice());
        assert!(matches!(bg.curvature(&Vector3::new(2.95, 0.0, 0.0)), Err(Error::BoundaryStencil { .. })));
    }

    #[test]
    fn large_amplitude_is_rejected() {
        assert!(matches!(Background::bump(3.0, lattice()), Err(Error::EllipticityViolated { .. })));
        assert!(Background::bump(0.05, lattice()).is_ok());
    }

    #[test]
    fn ricci_is_symmetric_and_scalar_is_its_trace() {
        let bg = Background::bump(0.05, lattice()).unwrap();
        let x = Vector3::new(0.1, 0.2, -0.15);
        let c = bg.curvature(&x).unwrap();
        assert_eq!(c.ricci, c.ricci.transpose());
        let ginv = bg.metric(&x).try_inverse().unwrap();
        assert!((c.scalar - (ginv * c.ricci).trace()).abs() < 1e-14);
        assert!(c.scalar.abs() > 1e-3);
    }
}
