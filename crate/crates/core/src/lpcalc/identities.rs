//! Integral identities and calculus-inequality ratios on a surface.

use nalgebra::Matrix2;

use super::surface::{Differentiator, Surface2D};
use crate::error::{Error, Result};

fn relative(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-30)
}

/// Covariant Hessian `∇̸²f_AB = ∂_A∂_B f − Γ^C_AB ∂_C f` at every node.
pub fn hessian(surf: &Surface2D, diff: &dyn Differentiator, f: &[f64]) -> Vec<Matrix2<f64>> {
    let g = &surf.grid;
    let (f0, f1) = (diff.d1(g, f, 0), diff.d1(g, f, 1));
    let (f00, f11, f01) = (diff.d2(g, f, 0), diff.d2(g, f, 1), diff.d12(g, f));
    let chr = surf.christoffel(diff);
    (0..surf.nodes())
        .map(|k| {
            let d2 = Matrix2::new(f00[k], f01[k], f01[k], f11[k]);
            d2 - chr[k][0] * f0[k] - chr[k][1] * f1[k]
        })
        .collect()
}

/// `|T|²_γ` for a 2-tensor.
fn norm2_tensor(gi: &Matrix2<f64>, t: &Matrix2<f64>) -> f64 {
    (gi * t * gi * t.transpose()).trace()
}

/// Relative residual of `∫|∇̸²f|² = ∫|Δ̸f|² − ∫K|∇̸f|²`.
pub fn bochner_residual(surf: &Surface2D, diff: &dyn Differentiator, f: &[f64]) -> f64 {
    let hess = hessian(surf, diff, f);
    let k = surf.gauss_curvature(diff);
    let grad = surf.grad_norm(diff, f);
    let w = surf.weights();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for n in 0..surf.nodes() {
        let gi = &surf.gamma_inv[n];
        let lap = (gi * hess[n]).trace();
        lhs += w[n] * norm2_tensor(gi, &hess[n]);
        rhs += w[n] * (lap * lap - k[n] * grad[n] * grad[n]);
    }
    relative(lhs, rhs)
}

/// Traceless symmetric tensor `∇̸²ψ − ½(Δ̸ψ)γ`.
pub fn hodge_potential(surf: &Surface2D, diff: &dyn Differentiator, psi: &[f64]) -> Vec<Matrix2<f64>> {
    hessian(surf, diff, psi)
        .iter()
        .zip(&surf.gamma)
        .zip(&surf.gamma_inv)
        .map(|((h, g), gi)| h - g * (0.5 * (gi * h).trace()))
        .collect()
}

/// Relative residual of `∫(|∇̸F|² + 2K|F|²) = 2∫|div̸F|²` for a symmetric traceless `F`.
pub fn hodge_residual(surf: &Surface2D, diff: &dyn Differentiator, field: &[Matrix2<f64>]) -> Result<f64> {
    for (node, (f, gi)) in field.iter().zip(&surf.gamma_inv).enumerate() {
        let trace = (gi * f).trace();
        if trace.abs() > 1e-10 * f.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::NotTraceless { node, trace });
        }
    }
    let grid = &surf.grid;
    let comp = |a: usize, b: usize| field.iter().map(|f| f[(a, b)]).collect::<Vec<_>>();
    let comps = [comp(0, 0), comp(0, 1), comp(1, 1)];
    // d[c][m] = ∂_c of component m in (00, 01, 11) order.
    let d: [[Vec<f64>; 3]; 2] = [0, 1].map(|c| comps.clone().map(|v| diff.d1(grid, &v, c)));
    let idx = |a: usize, b: usize| a + b;
    let chr = surf.christoffel(diff);
    let k = surf.gauss_curvature(diff);
    let w = surf.weights();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for n in 0..surf.nodes() {
        let f = &field[n];
        let gi = &surf.gamma_inv[n];
        // nf[c](a, b) = ∇_c F_ab.
        let nf: [Matrix2<f64>; 2] = [0, 1].map(|c| {
            Matrix2::from_fn(|a, b| {
                let mut v = d[c][idx(a, b)][n];
                for e in 0..2 {
                    v -= chr[n][e][(c, a)] * f[(e, b)] + chr[n][e][(c, b)] * f[(a, e)];
                }
                v
            })
        });
        let mut grad2 = 0.0;
        for c in 0..2 {
            for c2 in 0..2 {
                grad2 += gi[(c, c2)] * (gi * nf[c] * gi * nf[c2].transpose()).trace();
            }
        }
        let div = [0, 1].map(|b| (0..2).flat_map(|a| (0..2).map(move |c| (a, c))).map(|(a, c)| gi[(a, c)] * nf[c][(a, b)]).sum::<f64>());
        let div2 = (0..2).flat_map(|b| (0..2).map(move |b2| (b, b2))).map(|(b, b2)| gi[(b, b2)] * div[b] * div[b2]).sum::<f64>();
        lhs += w[n] * (grad2 + 2.0 * k[n] * norm2_tensor(gi, f));
        rhs += w[n] * 2.0 * div2;
    }
    Ok(relative(lhs, rhs))
}

/// Relative residual of the flat-torus vector Bochner identity `∫|∇²F|² = ∫|ΔF|²`
/// for a 1-form given by its two components.
pub fn vector_bochner_flat(surf: &Surface2D, diff: &dyn Differentiator, field: &[Vec<f64>; 2]) -> Result<f64> {
    let flat = surf.gamma.iter().all(|g| (g - Matrix2::identity()).amax() < 1e-14);
    if !flat {
        return Err(Error::Config("vector Bochner check is implemented for the flat torus only".into()));
    }
    let g = &surf.grid;
    let w = surf.weights();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for comp in field {
        let (f00, f11, f01) = (diff.d2(g, comp, 0), diff.d2(g, comp, 1), diff.d12(g, comp));
        for n in 0..surf.nodes() {
            lhs += w[n] * (f00[n] * f00[n] + 2.0 * f01[n] * f01[n] + f11[n] * f11[n]);
            rhs += w[n] * (f00[n] + f11[n]).powi(2);
        }
    }
    Ok(relative(lhs, rhs))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InequalityReport {
    /// `(inequality, probe, LHS/RHS)`.
    pub rows: Vec<(&'static str, String, f64)>,
}

impl InequalityReport {
    pub fn max_ratio(&self, inequality: &str) -> f64 {
        self.rows.iter().filter(|r| r.0 == inequality).map(|r| r.2).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Empirical constants of the isoperimetric, Gagliardo–Nirenberg (`p = 4`) and
/// `L^∞` (`p = 4`) inequalities.
pub fn inequality_ratios(
    surf: &Surface2D,
    diff: &dyn Differentiator,
    probes: &[(String, Vec<f64>)],
) -> InequalityReport {
    let mut rows = Vec::new();
    for (name, f) in probes {
        let grad = surf.grad_norm(diff, f);
        let n = |v: &[f64], p: f64| surf.norm_p(v, p);
        rows.push(("isoperimetric", name.clone(), n(f, 2.0) / (n(&grad, 1.0) + n(f, 1.0))));
        rows.push((
            "gagliardo_nirenberg_p4",
            name.clone(),
            n(f, 4.0) / (n(&grad, 2.0).sqrt() * n(f, 2.0).sqrt() + n(f, 2.0)),
        ));
        rows.push(("linfty_p4", name.clone(), n(f, f64::INFINITY) / (n(&grad, 4.0) + n(f, 4.0))));
    }
    InequalityReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpcalc::{Fd2, Spectral};
    use std::f64::consts::TAU;

    fn sample(s: &Surface2D, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..s.nodes()).map(|k| f(s.grid.coord(k))).collect()
    }

    fn wavy(n: usize) -> Surface2D {
        Surface2D::torus([n, n], [TAU, TAU], |[x, y]| {
            Matrix2::new(1.0 + 0.2 * x.sin(), 0.1 * (x + y).cos(), 0.1 * (x + y).cos(), 1.0 + 0.15 * y.cos())
        })
        .unwrap()
    }

    #[test]
    fn flat_bochner_is_exact_spectrally() {
        let s = Surface2D::flat_torus(15, TAU).unwrap();
        let f = sample(&s, |[x, y]| (x + 2.0 * y).cos());
        assert!(bochner_residual(&s, &Spectral, &f) < 1e-10);
        assert_eq!(bochner_residual(&s, &Fd2, &vec![1.0; s.nodes()]), 0.0);
    }

    #[test]
    fn curved_bochner_converges_at_second_order() {
        let r = |n: usize| {
            let s = wavy(n);
            let f = sample(&s, |[x, y]| (x + 2.0 * y).cos() + 0.5 * x.sin());
            bochner_residual(&s, &Fd2, &f)
        };
        let order = (r(32) / r(64)).log2();
        assert!((1.7..2.3).contains(&order), "{order}");
        let s = wavy(31);
        let f = sample(&s, |[x, y]| (x + 2.0 * y).cos() + 0.5 * x.sin());
        assert!(bochner_residual(&s, &Spectral, &f) < 1e-8);
    }

    #[test]
    fn hodge_on_potential_fields() {
        let s = Surface2D::flat_torus(21, TAU).unwrap();
        let psi = sample(&s, |[x, y]| (x + 2.0 * y).cos() + (2.0 * x - y).sin());
        let f = hodge_potential(&s, &Spectral, &psi);
        assert!(hodge_residual(&s, &Spectral, &f).unwrap() < 1e-10);
        let c = vec![Matrix2::new(1.0, 0.5, 0.5, -1.0); s.nodes()];
        assert!(hodge_residual(&s, &Fd2, &c).unwrap() < 1e-12);
        let bad = vec![Matrix2::identity(); s.nodes()];
        assert!(matches!(hodge_residual(&s, &Fd2, &bad), Err(Error::NotTraceless { .. })));
        let curved = wavy(41);
        let psi = sample(&curved, |[x, y]| (x + 2.0 * y).cos());
        let f = hodge_potential(&curved, &Spectral, &psi);
        assert!(hodge_residual(&curved, &Spectral, &f).unwrap() < 1e-6);
    }

    #[test]
    fn vector_bochner_on_flat_torus() {
        let s = Surface2D::flat_torus(15, TAU).unwrap();
        let v = [sample(&s, |[x, y]| (x - y).sin()), sample(&s, |[x, y]| (2.0 * x + y).cos())];
        assert!(vector_bochner_flat(&s, &Spectral, &v).unwrap() < 1e-10);
        assert!(vector_bochner_flat(&wavy(15), &Spectral, &v).is_err());
    }

    #[test]
    fn ratios_for_constants_and_scaling() {
        let s = Surface2D::flat_torus(11, 1.0).unwrap();
        let one = vec![1.0; s.nodes()];
        let f = sample(&s, |[x, _]| (TAU * 3.0 * x).cos());
        let probes = vec![("one".to_string(), one), ("mode".to_string(), f.clone())];
        let rep = inequality_ratios(&s, &Fd2, &probes);
        assert!((rep.rows[0].2 - 1.0).abs() < 1e-12);
        let doubled = vec![("mode".to_string(), f.iter().map(|v| 2.0 * v).collect())];
        let rep2 = inequality_ratios(&s, &Fd2, &doubled);
        for (a, b) in rep.rows[3..].iter().zip(&rep2.rows) {
            assert!((a.2 - b.2).abs() < 1e-12 * a.2);
        }
    }
}
