//! Geometry of a single leaf written as a graph `q ↦ q + h(q) ω` over the plane `ω^⊥`.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use crate::background::{Background, Christoffel};
use crate::error::{Error, Result};

/// A direction on the unit sphere in polar coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn omega(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }

    pub fn e_theta(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(ct * cp, ct * sp, -st)
    }

    pub fn e_phi(&self) -> Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(-sp, cp, 0.0)
    }

    /// `ω` with the right-handed base-plane basis `(b1, b2) = (e_θ, e_φ)`.
    pub fn frame(&self) -> Frame {
        Frame { omega: self.omega(), b: [self.e_theta(), self.e_phi()] }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub omega: Vector3<f64>,
    pub b: [Vector3<f64>; 2],
}

impl Frame {
    pub fn point(&self, q: [f64; 2], h: f64) -> Vector3<f64> {
        self.b[0] * q[0] + self.b[1] * q[1] + self.omega * h
    }

    pub fn split(&self, x: &Vector3<f64>) -> ([f64; 2], f64) {
        ([x.dot(&self.b[0]), x.dot(&self.b[1])], x.dot(&self.omega))
    }
}

/// Square node grid `q_i = -Q + i Δq`, `i = 0..n`, node index `i + n j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseGrid {
    pub n: usize,
    pub half_width: f64,
    pub dq: f64,
}

impl BaseGrid {
    /// Grid of spacing close to `dq` whose end nodes sit exactly at `±half_width`.
    pub fn new(half_width: f64, dq: f64) -> Self {
        let cells = (2.0 * half_width / dq).round().max(4.0) as usize;
        Self { n: cells + 1, half_width, dq: 2.0 * half_width / cells as f64 }
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dq
    }

    pub fn q(&self, node: usize) -> [f64; 2] {
        [self.coord(node % self.n), self.coord(node / self.n)]
    }

    /// Continuous grid coordinates of a base-plane point.
    pub fn coords(&self, q: [f64; 2]) -> (f64, f64) {
        ((q[0] + self.half_width) / self.dq, (q[1] + self.half_width) / self.dq)
    }

    /// Max-norm of the node position.
    pub fn sup_norm(&self, node: usize) -> f64 {
        let q = self.q(node);
        q[0].abs().max(q[1].abs())
    }
}

/// Nodal value with linear extrapolation across the grid edge.
pub(crate) fn ghost(v: &[f64], n: usize, i: isize, j: isize) -> f64 {
    let last = n as isize - 1;
    if i < 0 {
        2.0 * ghost(v, n, 0, j) - ghost(v, n, 1, j)
    } else if i > last {
        2.0 * ghost(v, n, last, j) - ghost(v, n, last - 1, j)
    } else if j < 0 {
        2.0 * ghost(v, n, i, 0) - ghost(v, n, i, 1)
    } else if j > last {
        2.0 * ghost(v, n, i, last) - ghost(v, n, i, last - 1)
    } else {
        v[i as usize + n * j as usize]
    }
}

/// Centered first and compact second differences of a nodal field.
pub(crate) fn nodal_derivs(v: &[f64], grid: &BaseGrid, node: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = grid.n;
    let (i, j) = ((node % n) as isize, (node / n) as isize);
    let f = |di: isize, dj: isize| ghost(v, n, i + di, j + dj);
    let h = grid.dq;
    let c = f(0, 0);
    let d = [(f(1, 0) - f(-1, 0)) / (2.0 * h), (f(0, 1) - f(0, -1)) / (2.0 * h)];
    let d11 = (f(1, 0) - 2.0 * c + f(-1, 0)) / (h * h);
    let d22 = (f(0, 1) - 2.0 * c + f(0, -1)) / (h * h);
    let d12 = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4.0 * h * h);
    (d, [[d11, d12], [d12, d22]])
}

/// Centered first differences only.
pub(crate) fn nodal_grad(v: &[f64], grid: &BaseGrid, node: usize) -> [f64; 2] {
    let n = grid.n;
    let (i, j) = ((node % n) as isize, (node / n) as isize);
    let h = grid.dq;
    [
        (ghost(v, n, i + 1, j) - ghost(v, n, i - 1, j)) / (2.0 * h),
        (ghost(v, n, i, j + 1) - ghost(v, n, i, j - 1)) / (2.0 * h),
    ]
}

/// Extrinsic geometry of the graph at one point.
#[derive(Clone, Copy, Debug)]
pub struct PointGeometry {
    pub x: Vector3<f64>,
    pub g: Matrix3<f64>,
    pub ginv: Matrix3<f64>,
    pub n_low: Vector3<f64>,
    pub n_up: Vector3<f64>,
    /// `N_i ω^i`, the Euclidean angle factor of the graph.
    pub n_omega: f64,
    pub e: [Vector3<f64>; 2],
    pub gamma: Matrix2<f64>,
    pub theta: Matrix2<f64>,
    pub tr_theta: f64,
    pub k_nn: f64,
    pub a: f64,
}

pub(crate) fn contract(gam: &Christoffel, lower: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let mut s = 0.0;
    for (i, gi) in gam.iter().enumerate() {
        let mut t = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                t += gi[j][k] * a[j] * b[k];
            }
        }
        s += lower[i] * t;
    }
    s
}

/// `Γ^i_jk a^j b^k` as a vector.
pub(crate) fn gamma_ab(gam: &Christoffel, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for i in 0..3 {
        let mut t = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                t += gam[i][j][k] * a[j] * b[k];
            }
        }
        out[i] = t;
    }
    out
}

/// Geometry of the graph at base point `q` from the height and its first and second
/// derivatives there.
pub fn point_geometry(
    bg: &Background,
    frame: &Frame,
    q: [f64; 2],
    h: f64,
    dh: [f64; 2],
    ddh: [[f64; 2]; 2],
) -> PointGeometry {
    let x = frame.point(q, h);
    let flat = bg.is_flat_at(&x);
    let (g, ginv) = if flat {
        (Matrix3::identity(), Matrix3::identity())
    } else {
        let g = bg.metric(&x);
        (g, g.try_inverse().expect("metric invertible"))
    };
    let omega = frame.omega;
    let df = omega - frame.b[0] * dh[0] - frame.b[1] * dh[1];
    let norm = (df.transpose() * ginv * df)[0].sqrt();
    let n_low = df / norm;
    let n_up = ginv * n_low;
    let n_omega = n_low.dot(&omega);
    let e = [frame.b[0] + omega * dh[0], frame.b[1] + omega * dh[1]];
    let ge = [g * e[0], g * e[1]];
    let gamma = Matrix2::new(e[0].dot(&ge[0]), e[0].dot(&ge[1]), e[1].dot(&ge[0]), e[1].dot(&ge[1]));
    let mut theta = Matrix2::new(ddh[0][0], ddh[0][1], ddh[1][0], ddh[1][1]) * (-n_omega);
    if !flat {
        let gam = bg.christoffel(&x);
        for a in 0..2 {
            for b in a..2 {
                let v = contract(&gam, &n_low, &e[a], &e[b]);
                theta[(a, b)] -= v;
                if a != b {
                    theta[(b, a)] -= v;
                }
            }
        }
    }
    let gamma_inv = gamma.try_inverse().unwrap_or_else(Matrix2::zeros);
    let tr_theta = (gamma_inv * theta).trace();
    let k_nn = if flat || bg.family.time_symmetric() {
        0.0
    } else {
        (n_up.transpose() * bg.extrinsic(&x) * n_up)[0]
    };
    PointGeometry { x, g, ginv, n_low, n_up, n_omega, e, gamma, theta, tr_theta, k_nn, a: 1.0 + k_nn - tr_theta }
}

/// Cached per-node leaf geometry.
#[derive(Clone, Debug)]
pub struct NodeGeometry {
    pub point: PointGeometry,
    pub gamma_inv: Matrix2<f64>,
    pub sqrt_gamma: f64,
    pub theta_hat: Matrix2<f64>,
    /// `|θ|²_γ`
    pub theta_sq: f64,
    /// Intrinsic Gauss curvature of `γ`.
    pub gauss_k: f64,
    /// Leaf Christoffels `Γ̸^C_AB`, indexed `[C](A, B)`.
    pub christoffel: [Matrix2<f64>; 2],
}

/// A leaf with cached geometry on every base node.
#[derive(Clone, Debug)]
pub struct Leaf {
    pub u: f64,
    pub dir: Direction,
    pub grid: BaseGrid,
    pub h: Vec<f64>,
    pub nodes: Vec<NodeGeometry>,
}

/// Brioschi's formula for the Gauss curvature of `E du² + 2F du dv + G dv²`.
#[allow(clippy::too_many_arguments)]
pub fn brioschi(
    e: f64, f: f64, g: f64,
    de: [f64; 2], df: [f64; 2], dg: [f64; 2],
    e_vv: f64, f_uv: f64, g_uu: f64,
) -> f64 {
    let m1 = Matrix3::new(
        -0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * de[0], df[0] - 0.5 * de[1],
        df[1] - 0.5 * dg[0], e, f,
        0.5 * dg[1], f, g,
    );
    let m2 = Matrix3::new(
        0.0, 0.5 * de[1], 0.5 * dg[0],
        0.5 * de[1], e, f,
        0.5 * dg[0], f, g,
    );
    let w = e * g - f * f;
    (m1.determinant() - m2.determinant()) / (w * w)
}

/// Gauss curvature and Christoffels from nodal `γ` components by finite differences.
pub(crate) fn intrinsic_curvature(
    grid: &BaseGrid,
    e: &[f64],
    f: &[f64],
    g: &[f64],
    gamma_inv: &[Matrix2<f64>],
) -> Vec<(f64, [Matrix2<f64>; 2])> {
    (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let (de, dde) = nodal_derivs(e, grid, node);
            let (df, ddf) = nodal_derivs(f, grid, node);
            let (dg, ddg) = nodal_derivs(g, grid, node);
            let k = brioschi(e[node], f[node], g[node], de, df, dg, dde[1][1], ddf[0][1], ddg[0][0]);
            // dgam[D](A, B) = ∂_D γ_AB
            let dgam = [
                Matrix2::new(de[0], df[0], df[0], dg[0]),
                Matrix2::new(de[1], df[1], df[1], dg[1]),
            ];
            let gi = gamma_inv[node];
            let mut chr = [Matrix2::zeros(); 2];
            for (c, chr_c) in chr.iter_mut().enumerate() {
                for a in 0..2 {
                    for b in 0..2 {
                        let mut s = 0.0;
                        for d in 0..2 {
                            s += gi[(c, d)] * (dgam[a][(b, d)] + dgam[b][(a, d)] - dgam[d][(a, b)]);
                        }
                        chr_c[(a, b)] = 0.5 * s;
                    }
                }
            }
            (k, chr)
        })
        .collect()
}

/// Builds a leaf from its heights, caching all geometric fields.
pub fn leaf_geometry(bg: &Background, dir: Direction, grid: BaseGrid, u: f64, h: Vec<f64>) -> Result<Leaf> {
    assert_eq!(h.len(), grid.len(), "height field does not match the base grid");
    let frame = dir.frame();
    let points: Vec<PointGeometry> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let (dh, ddh) = nodal_derivs(&h, &grid, node);
            point_geometry(bg, &frame, grid.q(node), h[node], dh, ddh)
        })
        .collect();
    let mut min_nw = f64::INFINITY;
    for p in &points {
        min_nw = min_nw.min(p.n_omega);
        if p.gamma.determinant() <= 0.0 || p.gamma[(0, 0)] <= 0.0 {
            return Err(Error::DegenerateMetric { u });
        }
    }
    if min_nw <= 0.1 {
        return Err(Error::GraphBreakdown { u, n_omega: min_nw });
    }
    let gamma_inv: Vec<Matrix2<f64>> = points.iter().map(|p| p.gamma.try_inverse().unwrap()).collect();
    let e: Vec<f64> = points.iter().map(|p| p.gamma[(0, 0)]).collect();
    let f: Vec<f64> = points.iter().map(|p| p.gamma[(0, 1)]).collect();
    let g: Vec<f64> = points.iter().map(|p| p.gamma[(1, 1)]).collect();
    let intrinsic = intrinsic_curvature(&grid, &e, &f, &g, &gamma_inv);
    let nodes = points
        .into_iter()
        .zip(gamma_inv)
        .zip(intrinsic)
        .map(|((p, gi), (k, chr))| {
            let theta_hat = p.theta - p.gamma * (0.5 * p.tr_theta);
            let raised = gi * p.theta;
            NodeGeometry {
                sqrt_gamma: p.gamma.determinant().sqrt(),
                theta_sq: (raised * raised).trace(),
                theta_hat,
                gauss_k: k,
                christoffel: chr,
                gamma_inv: gi,
                point: p,
            }
        })
        .collect();
    Ok(Leaf { u, dir, grid, h, nodes })
}

/// The lapse field of a cached leaf, checked against the degeneracy floor.
pub fn lapse(leaf: &Leaf, a_min: f64) -> Result<Vec<f64>> {
    let a: Vec<f64> = leaf.nodes.iter().map(|n| n.point.a).collect();
    let min_a = a.iter().copied().fold(f64::INFINITY, f64::min);
    if min_a <= a_min {
        return Err(Error::FlowDegenerate { u: leaf.u, min_a, a_min });
    }
    Ok(a)
}

impl Leaf {
    pub fn field(&self, f: impl Fn(&NodeGeometry) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfile::Lattice;

    fn flat() -> Background {
        Background::flat(Lattice::cube(3.0, 0.1))
    }

    #[test]
    fn frame_is_orthonormal_and_right_handed() {
        let d = Direction::new(0.7, -2.1);
        let f = d.frame();
        assert!((f.omega.norm() - 1.0).abs() < 1e-15);
        assert!(f.b[0].dot(&f.omega).abs() < 1e-15 && f.b[1].dot(&f.omega).abs() < 1e-15);
        assert!((f.b[0].cross(&f.b[1]) - f.omega).norm() < 1e-15);
    }

    #[test]
    fn plane_in_flat_space() {
        let grid = BaseGrid::new(2.0, 0.25);
        let leaf = leaf_geometry(&flat(), Direction::new(1.0, 0.4), grid, 0.3, vec![0.3; grid.len()]).unwrap();
        for n in &leaf.nodes {
            assert!(n.point.theta.amax() < 1e-14);
            assert!(n.gauss_k.abs() < 1e-12);
            assert!((n.point.n_up - Direction::new(1.0, 0.4).omega()).norm() < 1e-15);
            assert!((n.point.a - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_cap_geometry() {
        let r = 4.0;
        let grid = BaseGrid::new(2.0, 0.05);
        let h: Vec<f64> = (0..grid.len())
            .map(|k| {
                let q = grid.q(k);
                (r * r - q[0] * q[0] - q[1] * q[1]).sqrt()
            })
            .collect();
        let leaf = leaf_geometry(&flat(), Direction::new(0.3, 0.2), grid, 0.0, h).unwrap();
        let centre = grid.n / 2 + grid.n * (grid.n / 2);
        let c = &leaf.nodes[centre];
        assert!((c.point.tr_theta - 0.5).abs() < 1e-3);
        assert!((c.gauss_k - 0.0625).abs() < 1e-4);
        assert!((c.point.a - 0.5).abs() < 1e-3);
        assert!(matches!(lapse(&leaf, 0.5), Err(Error::FlowDegenerate { .. })));
        assert!(lapse(&leaf, 0.1).is_ok());
    }

    #[test]
    fn steep_graph_breaks_down() {
        let grid = BaseGrid::new(2.0, 0.25);
        let h: Vec<f64> = (0..grid.len()).map(|k| 12.0 * grid.q(k)[0]).collect();
        let err = leaf_geometry(&flat(), Direction::new(0.3, 0.2), grid, 0.0, h).unwrap_err();
        assert!(matches!(err, Error::GraphBreakdown { .. }));
    }

    #[test]
    fn brioschi_round_sphere_in_polar_chart() {
        // ds² = dθ² + sin²θ dφ² has K = 1.
        let t: f64 = 0.8;
        let g = t.sin().powi(2);
        let dg = [2.0 * t.sin() * t.cos(), 0.0];
        let g_uu = 2.0 * (t.cos().powi(2) - t.sin().powi(2));
        let k = brioschi(1.0, 0.0, g, [0.0; 2], [0.0; 2], dg, 0.0, 0.0, g_uu);
        assert!((k - 1.0).abs() < 1e-13);
    }
}
