//! Residuals of the structure equations along a marched foliation.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::leaf::{gamma_ab, leaf_geometry, nodal_derivs, nodal_grad, point_geometry, Leaf, PointGeometry};
use super::march::FoliationTrace;
use crate::background::Background;
use crate::error::{Error, Result};

/// A smooth scalar on R^3 with Euclidean first and second partial derivatives.
pub trait ScalarProbe: Sync {
    fn value(&self, x: &Vector3<f64>) -> f64;
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64>;
    fn hessian(&self, x: &Vector3<f64>) -> Matrix3<f64>;
}

/// `exp(−|x − c|² / 2σ²)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianProbe {
    pub center: Vector3<f64>,
    pub sigma: f64,
}

impl Default for GaussianProbe {
    fn default() -> Self {
        Self { center: Vector3::new(0.1, 0.05, -0.1), sigma: 0.35 }
    }
}

impl ScalarProbe for GaussianProbe {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        (-(x - self.center).norm_squared() / (2.0 * self.sigma * self.sigma)).exp()
    }
    fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        -(x - self.center) * (self.value(x) / (self.sigma * self.sigma))
    }
    fn hessian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let s2 = self.sigma * self.sigma;
        let d = x - self.center;
        (d * d.transpose() / (s2 * s2) - Matrix3::identity() / s2) * self.value(x)
    }
}

/// Maximum and area-weighted L² norm of a residual field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residual {
    pub max: f64,
    pub l2: f64,
}

impl Residual {
    fn merge(&mut self, other: Residual) {
        self.max = self.max.max(other.max);
        self.l2 = self.l2.max(other.l2);
    }
}

fn reduce(values: &[(f64, f64)]) -> Residual {
    let mut r = Residual::default();
    let mut sq = 0.0;
    for (v, w) in values {
        r.max = r.max.max(*v);
        sq += v * v * w;
    }
    r.l2 = sq.sqrt();
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    /// `2K − trθ² + |θ|² − (R − 2R_NN)`
    pub gauss: Residual,
    /// `div̸θ̂ − ½∇̸trθ − R_N·`
    pub codazzi: Residual,
    /// `∇_N a − a⁻¹Δ̸a − |θ|² − ∇_N k_NN − R_NN`
    pub lapse_parabolic: Residual,
    /// `∇_N N + a⁻¹∇̸a`
    pub frame: Residual,
    /// `[∇̸_N, ∇̸]f − a⁻¹∇̸a ∇_N f + θ·∇̸f`
    pub scommut: Residual,
    pub dq: f64,
    pub du: f64,
    pub leaves: usize,
}

impl StructureReport {
    pub fn rows(&self) -> [(&'static str, Residual); 5] {
        [
            ("gauss", self.gauss),
            ("codazzi", self.codazzi),
            ("lapse_parabolic", self.lapse_parabolic),
            ("frame_nabNN", self.frame),
            ("scommut", self.scommut),
        ]
    }
}

/// Single-leaf identities: Gauss and Codazzi.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LeafIdentities {
    pub gauss: Residual,
    pub codazzi: Residual,
}

fn eval_nodes(leaf: &Leaf, r_eval: f64) -> Vec<usize> {
    (0..leaf.grid.len()).filter(|&n| leaf.grid.sup_norm(n) <= r_eval + 1e-12).collect()
}

fn neighbor(leaf: &Leaf, node: usize, axis: usize, step: isize) -> usize {
    let n = leaf.grid.n as isize;
    let (i, j) = (node as isize % n, node as isize / n);
    let (i, j) = if axis == 0 { (i + step, j) } else { (i, j + step) };
    assert!(i >= 0 && j >= 0 && i < n && j < n, "evaluation region touches the grid edge");
    (i + n * j) as usize
}

/// Centered leaf derivative of a nodal quantity computed by `f`.
fn d_node<T>(leaf: &Leaf, node: usize, f: impl Fn(usize) -> T) -> [T; 2]
where
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let inv = 1.0 / (2.0 * leaf.grid.dq);
    [0, 1].map(|ax| (f(neighbor(leaf, node, ax, 1)) - f(neighbor(leaf, node, ax, -1))) * inv)
}

struct NodeIdentities {
    gauss: f64,
    codazzi: f64,
    ricci: Matrix3<f64>,
    christoffel: crate::background::Christoffel,
}

fn node_identities(bg: &Background, leaf: &Leaf, node: usize) -> Result<NodeIdentities> {
    let ng = &leaf.nodes[node];
    let p = &ng.point;
    let c = bg.curvature_with_step(&p.x, leaf.grid.dq)?;
    let r_nn = (p.n_up.transpose() * c.ricci * p.n_up)[0];
    let gauss = 2.0 * ng.gauss_k - p.tr_theta * p.tr_theta + ng.theta_sq - (c.scalar - 2.0 * r_nn);

    let dth = d_node(leaf, node, |m| leaf.nodes[m].theta_hat);
    let dtr = d_node(leaf, node, |m| leaf.nodes[m].point.tr_theta);
    let th = ng.theta_hat;
    let chr = &ng.christoffel;
    let gi = ng.gamma_inv;
    let mut r = Vector2::zeros();
    for a in 0..2 {
        let mut div = 0.0;
        for b in 0..2 {
            for cc in 0..2 {
                let mut cov = dth[cc][(a, b)];
                for d in 0..2 {
                    cov -= chr[d][(cc, a)] * th[(d, b)] + chr[d][(cc, b)] * th[(a, d)];
                }
                div += gi[(b, cc)] * cov;
            }
        }
        let r_na = (p.n_up.transpose() * c.ricci * p.e[a])[0];
        r[a] = div - 0.5 * dtr[a] - r_na;
    }
    let codazzi = (r.transpose() * gi * r)[0].sqrt();
    Ok(NodeIdentities { gauss, codazzi, ricci: c.ricci, christoffel: c.christoffel })
}

/// Gauss and Codazzi residuals on one leaf over nodes with `max |q| <= r_eval`.
/// Ambient curvature is differenced with the leaf spacing.
pub fn leaf_identities(bg: &Background, leaf: &Leaf, r_eval: f64) -> Result<LeafIdentities> {
    let nodes = eval_nodes(leaf, r_eval);
    let w = leaf.grid.dq * leaf.grid.dq;
    let vals: Vec<(f64, f64, f64)> = nodes
        .par_iter()
        .map(|&n| {
            node_identities(bg, leaf, n).map(|r| (r.gauss.abs(), r.codazzi, leaf.nodes[n].sqrt_gamma * w))
        })
        .collect::<Result<_>>()?;
    Ok(LeafIdentities {
        gauss: reduce(&vals.iter().map(|v| (v.0, v.2)).collect::<Vec<_>>()),
        codazzi: reduce(&vals.iter().map(|v| (v.1, v.2)).collect::<Vec<_>>()),
    })
}

fn geometry_at(bg: &Background, leaf: &Leaf, h: &[f64], node: usize) -> PointGeometry {
    let (dh, ddh) = nodal_derivs(h, &leaf.grid, node);
    point_geometry(bg, &leaf.dir.frame(), leaf.grid.q(node), h[node], dh, ddh)
}

/// Residuals of the five structure identities on every retained leaf triple of the
/// trace, over nodes with `max |q| <= r_eval`.
pub fn structure_residuals(
    trace: &FoliationTrace,
    bg: &Background,
    probe: &dyn ScalarProbe,
    r_eval: f64,
) -> Result<StructureReport> {
    if trace.triples.is_empty() {
        return Err(Error::InsufficientLeaves { needed: 3, have: trace.leaves.len().min(2) });
    }
    let du = trace.params.du;
    let mut report = StructureReport {
        gauss: Residual::default(),
        codazzi: Residual::default(),
        lapse_parabolic: Residual::default(),
        frame: Residual::default(),
        scommut: Residual::default(),
        dq: trace.grid.dq,
        du,
        leaves: trace.triples.len(),
    };
    for triple in &trace.triples {
        let leaf = leaf_geometry(bg, trace.dir, trace.grid, triple.u, triple.h[1].clone())?;
        let [hp, _, hn] = &triple.h;
        let omega = trace.frame.omega;
        let a_field = leaf.field(|n| n.point.a);
        let knn_field = leaf.field(|n| n.point.k_nn);
        let w = leaf.grid.dq * leaf.grid.dq;
        let nodes = eval_nodes(&leaf, r_eval);
        let vals: Vec<[f64; 6]> = nodes
            .par_iter()
            .map(|&node| -> Result<[f64; 6]> {
                let ng = &leaf.nodes[node];
                let p = &ng.point;
                let ids = node_identities(bg, &leaf, node)?;
                let gam = &ids.christoffel;
                let gi = ng.gamma_inv;
                let chr = &ng.christoffel;
                let prev = geometry_at(bg, &leaf, hp, node);
                let next = geometry_at(bg, &leaf, hn, node);

                // Flow-line derivative: ∂_u X = V = a_f N + T^A e_A.
                let dh_u = (hn[node] - hp[node]) / (2.0 * du);
                let a_f = dh_u * p.n_low.dot(&omega);
                let gw = p.g * omega;
                let t = gi * Vector2::new(dh_u * gw.dot(&p.e[0]), dh_u * gw.dot(&p.e[1]));
                let flow = |fp: f64, fnx: f64, d: [f64; 2]| ((fnx - fp) / (2.0 * du) - t[0] * d[0] - t[1] * d[1]) / a_f;

                let (da, dda) = nodal_derivs(&a_field, &leaf.grid, node);
                let dk = nodal_grad(&knn_field, &leaf.grid, node);
                let nab_n_a = flow(prev.a, next.a, da);
                let nab_n_k = flow(prev.k_nn, next.k_nn, dk);
                let mut lap_a = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        let cov = dda[a][b] - chr[0][(a, b)] * da[0] - chr[1][(a, b)] * da[1];
                        lap_a += gi[(a, b)] * cov;
                    }
                }
                let r_nn = (p.n_up.transpose() * ids.ricci * p.n_up)[0];
                let lapse_res = nab_n_a - lap_a / p.a - ng.theta_sq - nab_n_k - r_nn;

                // ∇_N N from the flow derivative of the Cartesian components.
                let dn = d_node(&leaf, node, |m| leaf.nodes[m].point.n_up);
                let mut nab_nn = Vector3::zeros();
                for i in 0..3 {
                    nab_nn[i] = flow(prev.n_up[i], next.n_up[i], [dn[0][i], dn[1][i]]);
                }
                nab_nn += gamma_ab(gam, &p.n_up, &p.n_up);
                let grad_a = gi * Vector2::new(da[0], da[1]);
                let grad_a_vec = p.e[0] * grad_a[0] + p.e[1] * grad_a[1];
                let fr = nab_nn + grad_a_vec / p.a;
                let frame_res = (fr.transpose() * p.g * fr)[0].sqrt();

                // Scalar commutator with exact probe derivatives; only the geometric fields
                // are differenced. The Hessian terms cancel by symmetry of ∇²f.
                let df = probe.gradient(&p.x);
                let mut hess = probe.hessian(&p.x);
                for i in 0..3 {
                    for j in 0..3 {
                        hess[(i, j)] -= (0..3).map(|k| gam[k][i][j] * df[k]).sum::<f64>();
                    }
                }
                let nf = p.n_up.dot(&df);
                let grad_f = Vector2::new(p.e[0].dot(&df), p.e[1].dot(&df));
                let theta_up = p.theta * gi;
                let mut r = Vector2::zeros();
                for a in 0..2 {
                    let nab_ea_n = dn[a] + gamma_ab(gam, &p.e[a], &p.n_up);
                    let lhs = (p.n_up.transpose() * hess * p.e[a])[0]
                        - (nab_nn.transpose() * p.g * p.e[a])[0] * nf
                        - (p.e[a].transpose() * hess * p.n_up)[0]
                        - nab_ea_n.dot(&df);
                    let rhs = da[a] / p.a * nf - (theta_up.row(a) * grad_f)[0];
                    r[a] = lhs - rhs;
                }
                let scommut = (r.transpose() * gi * r)[0].sqrt();
                Ok([ids.gauss.abs(), ids.codazzi, lapse_res.abs(), frame_res, scommut, ng.sqrt_gamma * w])
            })
            .collect::<Result<_>>()?;
        let col = |k: usize| vals.iter().map(|v| (v[k], v[5])).collect::<Vec<_>>();
        report.gauss.merge(reduce(&col(0)));
        report.codazzi.merge(reduce(&col(1)));
        report.lapse_parabolic.merge(reduce(&col(2)));
        report.frame.merge(reduce(&col(3)));
        report.scommut.merge(reduce(&col(4)));
    }
    Ok(report)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::{BaseGrid, Direction};
    use crate::gridfile::Lattice;

    #[test]
    fn gaussian_probe_derivatives() {
        let p = GaussianProbe::default();
        let x = Vector3::new(0.3, -0.2, 0.4);
        let h = 1e-5;
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let fd = (p.value(&(x + e)) - p.value(&(x - e))) / (2.0 * h);
            assert!((fd - p.gradient(&x)[i]).abs() < 1e-9);
            let fdg = (p.gradient(&(x + e)) - p.gradient(&(x - e))) / (2.0 * h);
            assert!((fdg - p.hessian(&x).column(i)).norm() < 1e-8);
        }
    }

    #[test]
    fn sphere_cap_gauss_residual_converges_in_flat_space() {
        let bg = Background::flat(Lattice::cube(6.0, 0.1));
        let run = |dq: f64| {
            let grid = BaseGrid::new(2.0, dq);
            let h: Vec<f64> = (0..grid.len())
                .map(|k| {
                    let q = grid.q(k);
                    (16.0 - q[0] * q[0] - q[1] * q[1]).sqrt() - 3.0
                })
                .collect();
            let leaf = leaf_geometry(&bg, Direction::new(0.0, 0.0), grid, 0.0, h).unwrap();
            leaf_identities(&bg, &leaf, 1.5).unwrap()
        };
        let (c, f) = (run(0.1), run(0.05));
        assert!(f.gauss.max < 1e-3 && f.codazzi.max < 1e-3, "{f:?}");
        let order = (c.gauss.max / f.gauss.max).log2();
        assert!((1.8..2.2).contains(&order), "{order}");
    }
}
