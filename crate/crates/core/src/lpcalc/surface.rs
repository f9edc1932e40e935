//! Periodic 2D surfaces and derivative schemes on them.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};
use crate::foliation::{brioschi, Leaf};

/// Uniform periodic grid with `n[a]` nodes over period `len[a]`; node index `i + n0 j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicGrid {
    pub n: [usize; 2],
    pub len: [f64; 2],
}

impl PeriodicGrid {
    pub fn nodes(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.len[axis] / self.n[axis] as f64
    }

    pub fn cell(&self) -> f64 {
        self.spacing(0) * self.spacing(1)
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        [(node % self.n[0]) as f64 * self.spacing(0), (node / self.n[0]) as f64 * self.spacing(1)]
    }

    /// Applies a 1D operator `m` (`n[axis] x n[axis]`) along one axis.
    pub fn apply_along(&self, m: &DMatrix<f64>, f: &[f64], axis: usize) -> Vec<f64> {
        let [n0, n1] = self.n;
        let mut out = vec![0.0; f.len()];
        if axis == 0 {
            for j in 0..n1 {
                let row = &f[j * n0..(j + 1) * n0];
                for i in 0..n0 {
                    out[i + n0 * j] = (0..n0).map(|k| m[(i, k)] * row[k]).sum();
                }
            }
        } else {
            for i in 0..n0 {
                for j in 0..n1 {
                    out[i + n0 * j] = (0..n1).map(|k| m[(j, k)] * f[i + n0 * k]).sum();
                }
            }
        }
        out
    }
}

/// Fourier differentiation matrix on `n` (odd) equispaced nodes over period `len`.
pub fn spectral_matrix(n: usize, len: f64) -> DMatrix<f64> {
    assert!(n % 2 == 1, "spectral differentiation needs an odd node count");
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            let d = j as f64 - k as f64;
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            std::f64::consts::PI / len * sign / (std::f64::consts::PI * d / n as f64).sin()
        }
    })
}

/// Derivative scheme on a periodic grid.
pub trait Differentiator: Send + Sync {
    fn name(&self) -> &str;
    fn d1(&self, grid: &PeriodicGrid, f: &[f64], axis: usize) -> Vec<f64>;
    fn d2(&self, grid: &PeriodicGrid, f: &[f64], axis: usize) -> Vec<f64>;
    fn d12(&self, grid: &PeriodicGrid, f: &[f64]) -> Vec<f64> {
        self.d1(grid, &self.d1(grid, f, 0), 1)
    }
}

/// Fourier collocation; exact on resolved trigonometric polynomials. Needs odd sizes.
#[derive(Debug, Default, Clone, Copy)]
pub struct Spectral;

impl Differentiator for Spectral {
    fn name(&self) -> &str {
        "spectral"
    }
    fn d1(&self, grid: &PeriodicGrid, f: &[f64], axis: usize) -> Vec<f64> {
        grid.apply_along(&spectral_matrix(grid.n[axis], grid.len[axis]), f, axis)
    }
    fn d2(&self, grid: &PeriodicGrid, f: &[f64], axis: usize) -> Vec<f64> {
        let d = spectral_matrix(grid.n[axis], grid.len[axis]);
        grid.apply_along(&(&d * &d), f, axis)
    }
}

/// Second-order centered differences.
#[derive(Debug, Default, Clone, Copy)]
pub struct Fd2;

fn shift(grid: &PeriodicGrid, node: usize, axis: usize, s: isize) -> usize {
    let [n0, n1] = grid.n;
    let (i, j) = ((node % n0) as isize, (node / n0) as isize);
    if axis == 0 {
        ((i + s).rem_euclid(n0 as isize) + n0 as isize * j) as usize
    } else {
        (i + n0 as isize * (j + s).rem_euclid(n1 as isize)) as usize
    }
}

impl Differentiator for Fd2 {
    fn name(&self) -> &str {
        "fd2"
    }
    fn d1(&self, grid: &PeriodicGrid, f: &[f64], axis: usize) -> Vec<f64> {
        let h = grid.spacing(axis);
        (0..f.len()).map(|k| (f[shift(grid, k, axis, 1)] - f[shift(grid, k, axis, -1)]) / (2.0 * h)).collect()
    }
    fn d2(&self, grid: &PeriodicGrid, f: &[f64], axis: usize) -> Vec<f64> {
        let h = grid.spacing(axis);
        (0..f.len())
            .map(|k| (f[shift(grid, k, axis, 1)] - 2.0 * f[k] + f[shift(grid, k, axis, -1)]) / (h * h))
            .collect()
    }
}

pub type DifferentiatorCtor = fn() -> Arc<dyn Differentiator>;

/// Name-keyed derivative schemes.
pub struct DifferentiatorRegistry {
    ctors: BTreeMap<String, DifferentiatorCtor>,
}

impl Default for DifferentiatorRegistry {
    fn default() -> Self {
        let mut r = Self { ctors: BTreeMap::new() };
        r.register("spectral", || Arc::new(Spectral));
        r.register("fd2", || Arc::new(Fd2));
        r
    }
}

impl DifferentiatorRegistry {
    pub fn register(&mut self, name: &str, ctor: DifferentiatorCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Differentiator>> {
        self.ctors.get(name).map(|c| c()).ok_or_else(|| Error::UnknownName {
            kind: "derivative scheme",
            name: name.to_string(),
            known: self.ctors.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }
}

/// A periodic surface: grid plus induced metric `γ = (E, F, G)` at the nodes.
#[derive(Clone, Debug)]
pub struct Surface2D {
    pub grid: PeriodicGrid,
    pub gamma: Vec<Matrix2<f64>>,
    pub gamma_inv: Vec<Matrix2<f64>>,
    pub sqrt_gamma: Vec<f64>,
    /// Nodes lying in the flat collar of a leaf patch.
    pub collar: Vec<bool>,
}

impl Surface2D {
    pub fn new(grid: PeriodicGrid, gamma: Vec<Matrix2<f64>>, collar: Vec<bool>) -> Result<Self> {
        if gamma.len() != grid.nodes() || collar.len() != grid.nodes() {
            return Err(Error::Config("surface arrays do not match the grid".into()));
        }
        let mut gamma_inv = Vec::with_capacity(gamma.len());
        let mut sqrt_gamma = Vec::with_capacity(gamma.len());
        for g in &gamma {
            let det = g.determinant();
            if !(det > 0.0 && g[(0, 0)] > 0.0) || (g[(0, 1)] - g[(1, 0)]).abs() > 1e-12 * g.amax() {
                return Err(Error::Config("surface metric must be symmetric positive definite".into()));
            }
            gamma_inv.push(g.try_inverse().unwrap());
            sqrt_gamma.push(det.sqrt());
        }
        Ok(Self { grid, gamma, gamma_inv, sqrt_gamma, collar })
    }

    /// Torus `[0, len0) x [0, len1)` with the metric given in closed form.
    pub fn torus(n: [usize; 2], len: [f64; 2], metric: impl Fn([f64; 2]) -> Matrix2<f64>) -> Result<Self> {
        let grid = PeriodicGrid { n, len };
        let gamma = (0..grid.nodes()).map(|k| metric(grid.coord(k))).collect();
        Self::new(grid, gamma, vec![false; grid.nodes()])
    }

    pub fn flat_torus(n: usize, len: f64) -> Result<Self> {
        Self::torus([n, n], [len, len], |_| Matrix2::identity())
    }

    /// Periodic extension of a leaf across its flat collar: all base nodes are kept and
    /// the period is `n Δq`, so the seam adds one flat cell.
    pub fn from_leaf(leaf: &Leaf, r_collar: f64) -> Result<Self> {
        let n = leaf.grid.n;
        let grid = PeriodicGrid { n: [n, n], len: [n as f64 * leaf.grid.dq; 2] };
        let gamma = leaf.nodes.iter().map(|g| 0.5 * (g.point.gamma + g.point.gamma.transpose())).collect();
        let collar = (0..leaf.grid.len()).map(|k| leaf.grid.sup_norm(k) >= r_collar).collect();
        Self::new(grid, gamma, collar)
    }

    pub fn nodes(&self) -> usize {
        self.grid.nodes()
    }

    /// Quadrature weights `√γ ΔA`.
    pub fn weights(&self) -> Vec<f64> {
        let c = self.grid.cell();
        self.sqrt_gamma.iter().map(|s| s * c).collect()
    }

    pub fn area(&self) -> f64 {
        self.weights().iter().sum()
    }

    fn components(&self) -> [Vec<f64>; 3] {
        [
            self.gamma.iter().map(|g| g[(0, 0)]).collect(),
            self.gamma.iter().map(|g| g[(0, 1)]).collect(),
            self.gamma.iter().map(|g| g[(1, 1)]).collect(),
        ]
    }

    /// Christoffels `Γ^C_AB`, indexed `[node][C](A, B)`.
    pub fn christoffel(&self, diff: &dyn Differentiator) -> Vec<[Matrix2<f64>; 2]> {
        let [e, f, g] = self.components();
        let d = |v: &[f64], ax| diff.d1(&self.grid, v, ax);
        let (de, df, dg) = ([d(&e, 0), d(&e, 1)], [d(&f, 0), d(&f, 1)], [d(&g, 0), d(&g, 1)]);
        (0..self.nodes())
            .map(|k| {
                let dgam = [0, 1].map(|ax| Matrix2::new(de[ax][k], df[ax][k], df[ax][k], dg[ax][k]));
                let gi = self.gamma_inv[k];
                let mut chr = [Matrix2::zeros(); 2];
                for (c, chr_c) in chr.iter_mut().enumerate() {
                    for a in 0..2 {
                        for b in 0..2 {
                            chr_c[(a, b)] = 0.5
                                * (0..2)
                                    .map(|dd| gi[(c, dd)] * (dgam[a][(b, dd)] + dgam[b][(a, dd)] - dgam[dd][(a, b)]))
                                    .sum::<f64>();
                        }
                    }
                }
                chr
            })
            .collect()
    }

    /// Gauss curvature of `γ` by Brioschi's formula.
    pub fn gauss_curvature(&self, diff: &dyn Differentiator) -> Vec<f64> {
        let [e, f, g] = self.components();
        let gr = &self.grid;
        let (e0, e1) = (diff.d1(gr, &e, 0), diff.d1(gr, &e, 1));
        let (f0, f1) = (diff.d1(gr, &f, 0), diff.d1(gr, &f, 1));
        let (g0, g1) = (diff.d1(gr, &g, 0), diff.d1(gr, &g, 1));
        let e_vv = diff.d2(gr, &e, 1);
        let g_uu = diff.d2(gr, &g, 0);
        let f_uv = diff.d12(gr, &f);
        (0..self.nodes())
            .map(|k| brioschi(e[k], f[k], g[k], [e0[k], e1[k]], [f0[k], f1[k]], [g0[k], g1[k]], e_vv[k], f_uv[k], g_uu[k]))
            .collect()
    }

    /// `(∫ |f|^p dμ)^{1/p}`; `p = ∞` gives the max norm.
    pub fn norm_p(&self, f: &[f64], p: f64) -> f64 {
        if p.is_infinite() {
            return f.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        }
        let w = self.weights();
        f.iter().zip(&w).map(|(v, w)| v.abs().powf(p) * w).sum::<f64>().powf(1.0 / p)
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let w = self.weights();
        f.iter().zip(g).zip(&w).map(|((a, b), w)| a * b * w).sum()
    }

    /// Pointwise `|∇̸f|_γ`.
    pub fn grad_norm(&self, diff: &dyn Differentiator, f: &[f64]) -> Vec<f64> {
        let d0 = diff.d1(&self.grid, f, 0);
        let d1 = diff.d1(&self.grid, f, 1);
        (0..self.nodes())
            .map(|k| {
                let gi = self.gamma_inv[k];
                (gi[(0, 0)] * d0[k] * d0[k] + 2.0 * gi[(0, 1)] * d0[k] * d1[k] + gi[(1, 1)] * d1[k] * d1[k]).sqrt()
            })
            .collect()
    }

    /// True when the support of `f` (above `tol · max|f|`) meets the flat collar.
    pub fn touches_collar(&self, f: &[f64], tol: f64) -> bool {
        let m = f.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        f.iter().zip(&self.collar).any(|(v, c)| *c && v.abs() > tol * m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn spectral_derivative_is_exact_on_modes() {
        let s = Surface2D::flat_torus(15, TAU).unwrap();
        let f: Vec<f64> = (0..s.nodes()).map(|k| (3.0 * s.grid.coord(k)[0] - s.grid.coord(k)[1]).sin()).collect();
        let d0 = Spectral.d1(&s.grid, &f, 0);
        let d11 = Spectral.d2(&s.grid, &f, 1);
        for k in 0..s.nodes() {
            let [x, y] = s.grid.coord(k);
            assert!((d0[k] - 3.0 * (3.0 * x - y).cos()).abs() < 1e-12);
            assert!((d11[k] + (3.0 * x - y).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn fd2_is_second_order() {
        let err = |n: usize| {
            let g = PeriodicGrid { n: [n, n], len: [TAU, TAU] };
            let f: Vec<f64> = (0..g.nodes()).map(|k| g.coord(k)[1].sin()).collect();
            let d = Fd2.d1(&g, &f, 1);
            (0..g.nodes()).map(|k| (d[k] - g.coord(k)[1].cos()).abs()).fold(0.0, f64::max)
        };
        let order = (err(20) / err(40)).log2();
        assert!((order - 2.0).abs() < 0.05);
    }

    #[test]
    fn conformal_torus_curvature() {
        // Conformal metric e^{2w}δ with w = 0.1 sin x has K = −e^{−2w}Δw.
        let s = Surface2D::torus([33, 33], [TAU, TAU], |[x, _]| Matrix2::identity() * (0.2 * x.sin()).exp()).unwrap();
        let k = s.gauss_curvature(&Spectral);
        for (n, kv) in k.iter().enumerate() {
            let x = s.grid.coord(n)[0];
            let exact = (-0.2 * x.sin()).exp() * 0.1 * x.sin();
            assert!((kv - exact).abs() < 1e-10);
        }
    }
}
