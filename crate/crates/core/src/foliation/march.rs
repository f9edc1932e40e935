//! Explicit marching of the graph flow `∂_u h = a / N_ω` and reconstruction of `u`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::leaf::{nodal_derivs, nodal_grad, point_geometry, BaseGrid, Direction, Frame};
use crate::background::Background;
use crate::error::{Error, Result};
use crate::gridfile::{GridData, Lattice};
use crate::interp::{cubic_weights, stencil};

/// First and last leaf labels of the strip.
pub const U_START: f64 = -2.0;
pub const U_END: f64 = 2.0;

/// Discretisation parameters of a march.
#[derive(Clone, Debug, PartialEq)]
pub struct MarchParams {
    /// Half width `Q` of the square base grid.
    pub half_width: f64,
    pub dq: f64,
    pub du: f64,
    pub a_min: f64,
    pub c_stab: f64,
    /// Nodes with `max(|q1|, |q2|) >= r_pin` are pinned to the exact plane.
    pub r_pin: f64,
    /// Keep every `store_every`-th leaf for reconstruction.
    pub store_every: usize,
    /// Leaf labels around which the three consecutive leaves are retained.
    pub keep_u: Vec<f64>,
}

impl Default for MarchParams {
    fn default() -> Self {
        Self::refined(0)
    }
}

impl MarchParams {
    /// Level `l` of the standard refinement ladder `Δq = 0.2 / 2^l`, `Δu = 0.2 Δq²`.
    pub fn refined(level: u32) -> Self {
        let dq = 0.2 / f64::from(1u32 << level);
        Self {
            half_width: 3.0,
            dq,
            du: 0.2 * dq * dq,
            a_min: 0.1,
            c_stab: 0.2,
            r_pin: 2.5,
            store_every: 1,
            keep_u: Vec::new(),
        }
    }

    pub fn grid(&self) -> BaseGrid {
        BaseGrid::new(self.half_width, self.dq)
    }

    /// Number of steps from `U_START` to `U_END`.
    pub fn steps(&self) -> Result<usize> {
        let m = ((U_END - U_START) / self.du).round();
        if m < 2.0 || ((m * self.du) - (U_END - U_START)).abs() > 1e-9 {
            return Err(Error::Config(format!("du = {} does not divide the strip [-2, 2]", self.du)));
        }
        Ok(m as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dq > 0.0 && self.du > 0.0 && self.half_width > 0.0) {
            return Err(Error::Config("spacings and half width must be positive".into()));
        }
        let dq = self.grid().dq;
        let bound = self.c_stab * dq * dq;
        if self.du > bound * (1.0 + 1e-12) {
            return Err(Error::StabilityViolated { du: self.du, bound });
        }
        if self.r_pin >= self.half_width || self.r_pin < 2.0 {
            return Err(Error::Config("r_pin must lie in [2, half_width)".into()));
        }
        if self.store_every == 0 {
            return Err(Error::Config("store_every must be >= 1".into()));
        }
        self.steps().map(|_| ())
    }
}

/// Speed `a / N_ω` on every node of a height field, plus the smallest lapse and angle
/// factor over unpinned nodes.
fn speed(bg: &Background, frame: &Frame, grid: &BaseGrid, h: &[f64], pinned: &[bool]) -> (Vec<f64>, f64, f64) {
    let per: Vec<(f64, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            if pinned[node] {
                return (1.0, f64::INFINITY, f64::INFINITY);
            }
            let (dh, ddh) = nodal_derivs(h, grid, node);
            let p = point_geometry(bg, frame, grid.q(node), h[node], dh, ddh);
            (p.a / p.n_omega, p.a, p.n_omega)
        })
        .collect();
    let mut min_a = f64::INFINITY;
    let mut min_nw = f64::INFINITY;
    let v = per
        .into_iter()
        .map(|(s, a, nw)| {
            min_a = min_a.min(a);
            min_nw = min_nw.min(nw);
            s
        })
        .collect();
    (v, min_a, min_nw)
}

fn pinned_mask(grid: &BaseGrid, r_pin: f64) -> Vec<bool> {
    (0..grid.len()).map(|n| grid.sup_norm(n) >= r_pin - 1e-12).collect()
}

fn check(u: f64, min_a: f64, min_nw: f64, a_min: f64) -> Result<()> {
    if min_nw <= 0.1 {
        return Err(Error::GraphBreakdown { u, n_omega: min_nw });
    }
    if min_a <= a_min {
        return Err(Error::FlowDegenerate { u, min_a, a_min });
    }
    Ok(())
}

/// One Heun (RK2) step of the graph flow. Returns the new heights and the lapse of the
/// input leaf.
pub fn advance(
    bg: &Background,
    dir: Direction,
    params: &MarchParams,
    u: f64,
    h: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = params.grid();
    let bound = params.c_stab * grid.dq * grid.dq;
    if params.du > bound * (1.0 + 1e-12) {
        return Err(Error::StabilityViolated { du: params.du, bound });
    }
    let frame = dir.frame();
    let pinned = pinned_mask(&grid, params.r_pin);
    let du = params.du;
    let (k1, min_a, min_nw) = speed(bg, &frame, &grid, h, &pinned);
    check(u, min_a, min_nw, params.a_min)?;
    let next = u + du;
    let stage: Vec<f64> =
        h.iter().zip(&k1).zip(&pinned).map(|((h, k), p)| if *p { next } else { h + du * k }).collect();
    let (k2, min_a, min_nw) = speed(bg, &frame, &grid, &stage, &pinned);
    check(next, min_a, min_nw, params.a_min)?;
    let out = h
        .iter()
        .zip(k1.iter().zip(&k2))
        .zip(&pinned)
        .map(|((h, (a, b)), p)| if *p { next } else { h + 0.5 * du * (a + b) })
        .collect();
    // Lapse of the input leaf: a = N_ω · speed.
    let lapse = (0..grid.len())
        .map(|node| {
            if pinned[node] {
                1.0
            } else {
                let (dh, ddh) = nodal_derivs(h, &grid, node);
                point_geometry(bg, &frame, grid.q(node), h[node], dh, ddh).a
            }
        })
        .collect();
    Ok((out, lapse))
}

/// A leaf kept for reconstruction: heights and lapse on the base grid.
#[derive(Clone, Debug)]
pub struct StoredLeaf {
    pub index: usize,
    pub u: f64,
    pub h: Vec<f64>,
    pub a: Vec<f64>,
}

/// Three consecutive leaves around a requested label.
#[derive(Clone, Debug)]
pub struct LeafTriple {
    pub center: usize,
    pub u: f64,
    pub h: [Vec<f64>; 3],
}

/// Result of a march: stored leaves, retained triples and reconstruction helpers.
#[derive(Clone, Debug)]
pub struct FoliationTrace {
    pub dir: Direction,
    pub frame: Frame,
    pub grid: BaseGrid,
    pub params: MarchParams,
    pub leaves: Vec<StoredLeaf>,
    pub triples: Vec<LeafTriple>,
    /// Largest `|a − (1 + k_NN − trθ)|` met while marching.
    pub choice_residual: f64,
}

/// Lapse of a height field with all unpinned nodes evaluated.
fn lapse_of(bg: &Background, frame: &Frame, grid: &BaseGrid, h: &[f64], pinned: &[bool]) -> (Vec<f64>, f64) {
    let per: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            if pinned[node] {
                return (1.0, 0.0);
            }
            let (dh, ddh) = nodal_derivs(h, grid, node);
            let p = point_geometry(bg, frame, grid.q(node), h[node], dh, ddh);
            (p.a, (p.a - (1.0 + p.k_nn - p.tr_theta)).abs())
        })
        .collect();
    let mut worst: f64 = 0.0;
    let a = per.into_iter().map(|(a, r)| {
        worst = worst.max(r);
        a
    });
    (a.collect(), worst)
}

/// Marches from the plane `x·ω = −2` to `u = 2`.
pub fn march(bg: &Background, dir: Direction, params: &MarchParams) -> Result<FoliationTrace> {
    params.validate()?;
    let steps = params.steps()?;
    let grid = params.grid();
    let frame = dir.frame();
    let pinned = pinned_mask(&grid, params.r_pin);
    let centers: Vec<usize> = params
        .keep_u
        .iter()
        .map(|u| (((u - U_START) / params.du).round() as usize).clamp(1, steps - 1))
        .collect();
    let mut trace = FoliationTrace {
        dir,
        frame,
        grid,
        params: params.clone(),
        leaves: Vec::new(),
        triples: Vec::new(),
        choice_residual: 0.0,
    };
    let mut h = vec![U_START; grid.len()];
    let mut prev: Option<Vec<f64>> = None;
    let mut pending: Vec<(usize, [Vec<f64>; 2])> = Vec::new();
    for m in 0..=steps {
        let u = U_START + m as f64 * params.du;
        let keep = m % params.store_every == 0 || m == steps;
        if keep {
            let (a, worst) = lapse_of(bg, &frame, &grid, &h, &pinned);
            trace.choice_residual = trace.choice_residual.max(worst);
            trace.leaves.push(StoredLeaf { index: m, u, h: h.clone(), a });
        }
        // Close triples whose centre was the previous leaf.
        pending.retain(|(c, pair)| {
            if *c + 1 == m {
                trace.triples.push(LeafTriple {
                    center: *c,
                    u: U_START + *c as f64 * params.du,
                    h: [pair[0].clone(), pair[1].clone(), h.clone()],
                });
                false
            } else {
                true
            }
        });
        if centers.contains(&m) {
            if let Some(p) = &prev {
                pending.push((m, [p.clone(), h.clone()]));
            }
        }
        if m == steps {
            break;
        }
        let (next, _) = advance(bg, dir, params, u, &h)
            .map_err(|e| Error::Direction { theta: dir.theta, phi: dir.phi, source: Box::new(e) })?;
        prev = Some(std::mem::replace(&mut h, next));
    }
    trace.triples.sort_by_key(|t| t.center);
    Ok(trace)
}

/// Quintic smoothstep cutoff: 1 on `r <= 1`, 0 on `r >= 2`.
pub fn cutoff(r: f64) -> (f64, f64) {
    let t = (r - 1.0).clamp(0.0, 1.0);
    if t <= 0.0 || t >= 1.0 {
        return (1.0 - t, 0.0);
    }
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (1.0 - s, -ds)
}

/// Leaf data at a point of the strip, interpolated between bracketing stored leaves.
#[derive(Clone, Copy, Debug)]
pub struct LeafLookup {
    pub u: f64,
    pub a: f64,
    pub n_low: Vector3<f64>,
    pub n_up: Vector3<f64>,
}

/// The glued phase and its normalised gradient data.
#[derive(Clone, Copy, Debug)]
pub struct GluedSample {
    pub u: f64,
    pub a: f64,
    pub n_low: Vector3<f64>,
    pub n_up: Vector3<f64>,
}

impl FoliationTrace {
    pub fn stored_du(&self) -> f64 {
        self.params.du * self.params.store_every as f64
    }

    fn height_at(&self, k: usize, s0: f64, s1: f64) -> f64 {
        crate::interp::bicubic(&self.leaves[k].h, self.grid.n, self.grid.n, s0, s1)
    }

    /// Bracketing stored leaf index `k` and fraction `t` with `z ≈ (1−t) H_k + t H_{k+1}`.
    fn bracket(&self, s0: f64, s1: f64, z: f64) -> (usize, f64) {
        let last = self.leaves.len() - 1;
        let h0 = self.height_at(0, s0, s1);
        if z <= h0 {
            let h1 = self.height_at(1, s0, s1);
            return (0, (z - h0) / (h1 - h0));
        }
        let hl = self.height_at(last, s0, s1);
        if z >= hl {
            let hp = self.height_at(last - 1, s0, s1);
            return (last - 1, 1.0 + (z - hl) / (hl - hp));
        }
        let (mut lo, mut hi) = (0usize, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.height_at(mid, s0, s1) <= z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = self.height_at(lo, s0, s1);
        let b = self.height_at(hi, s0, s1);
        (lo, (z - a) / (b - a))
    }

    fn label(&self, k: usize, t: f64) -> f64 {
        let u0 = self.leaves[k].u;
        u0 + t * (self.leaves[k + 1].u - u0)
    }

    /// Unglued phase by monotone linear inversion of the stored heights.
    pub fn u_raw(&self, x: &Vector3<f64>) -> f64 {
        let (q, z) = self.frame.split(x);
        let (s0, s1) = self.grid.coords(q);
        let (k, t) = self.bracket(s0, s1, z);
        self.label(k, t)
    }

    /// Glued phase `φ u + (1 − φ) x·ω`.
    pub fn u_glued(&self, x: &Vector3<f64>) -> f64 {
        let r = x.norm();
        let flat = x.dot(&self.frame.omega);
        if r >= 2.0 {
            return flat;
        }
        let (phi, _) = cutoff(r);
        if phi == 1.0 {
            return self.u_raw(x);
        }
        phi * self.u_raw(x) + (1.0 - phi) * flat
    }

    /// Height and base-plane gradient of stored leaf `k` at continuous grid coordinates.
    fn local_gradient(&self, k: usize, s0: f64, s1: f64) -> (f64, [f64; 2]) {
        let n = self.grid.n;
        let (b0, t0) = stencil(s0, n).expect("base grid too small");
        let (b1, t1) = stencil(s1, n).expect("base grid too small");
        let w0 = cubic_weights(t0);
        let w1 = cubic_weights(t1);
        let h = &self.leaves[k].h;
        let mut grad = [0.0; 2];
        let mut val = 0.0;
        for (jj, wj) in w1.iter().enumerate() {
            for (ii, wi) in w0.iter().enumerate() {
                let node = (b0 + ii) + n * (b1 + jj);
                let g = nodal_grad(h, &self.grid, node);
                let w = wi * wj;
                val += w * h[node];
                grad[0] += w * g[0];
                grad[1] += w * g[1];
            }
        }
        (val, grad)
    }

    /// Leaf label, lapse and unit conormal of the leaf through `x`.
    pub fn lookup(&self, bg: &Background, x: &Vector3<f64>) -> LeafLookup {
        let (q, z) = self.frame.split(x);
        let (s0, s1) = self.grid.coords(q);
        let (k, t) = self.bracket(s0, s1, z);
        let n = self.grid.n;
        let a0 = crate::interp::bicubic(&self.leaves[k].a, n, n, s0, s1);
        let a1 = crate::interp::bicubic(&self.leaves[k + 1].a, n, n, s0, s1);
        let (_, g0) = self.local_gradient(k, s0, s1);
        let (_, g1) = self.local_gradient(k + 1, s0, s1);
        let tt = t.clamp(0.0, 1.0);
        let dh = [g0[0] + tt * (g1[0] - g0[0]), g0[1] + tt * (g1[1] - g0[1])];
        let df = self.frame.omega - self.frame.b[0] * dh[0] - self.frame.b[1] * dh[1];
        let ginv = inverse_metric(bg, x);
        let norm = (df.transpose() * ginv * df)[0].sqrt();
        let n_low = df / norm;
        LeafLookup { u: self.label(k, t), a: a0 + tt * (a1 - a0), n_low, n_up: ginv * n_low }
    }

    /// Glued phase with the lapse and conormal of its level sets:
    /// `dũ = φ a⁻¹N + (1 − φ) ω + (u − x·ω) φ' x/|x|`, `a_ũ = |dũ|_g⁻¹`.
    pub fn glued(&self, bg: &Background, x: &Vector3<f64>) -> GluedSample {
        let omega = self.frame.omega;
        let r = x.norm();
        let flat_u = x.dot(&omega);
        if r >= 2.0 {
            return GluedSample { u: flat_u, a: 1.0, n_low: omega, n_up: omega };
        }
        let lk = self.lookup(bg, x);
        let (phi, dphi) = cutoff(r);
        if phi == 1.0 {
            return GluedSample { u: lk.u, a: lk.a, n_low: lk.n_low, n_up: lk.n_up };
        }
        let du = lk.n_low / lk.a * phi + omega * (1.0 - phi) + x * ((lk.u - flat_u) * dphi / r);
        let ginv = inverse_metric(bg, x);
        let len = (du.transpose() * ginv * du)[0].sqrt();
        let n_low = du / len;
        GluedSample { u: phi * lk.u + (1.0 - phi) * flat_u, a: 1.0 / len, n_low, n_up: ginv * n_low }
    }

    /// Glued phase sampled on a lattice, in grid-file layout.
    pub fn field_on(&self, lattice: Lattice) -> GridData {
        let values = (0..lattice.len())
            .into_par_iter()
            .map(|n| self.u_glued(&Vector3::from(lattice.point(n))))
            .collect();
        GridData { lattice, ncomp: 1, values }
    }

    /// Smallest increment `h_{k+1} − h_k` over all stored leaves and nodes.
    pub fn min_height_increment(&self) -> f64 {
        self.leaves
            .windows(2)
            .flat_map(|w| w[0].h.iter().zip(&w[1].h).map(|(a, b)| b - a))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn inverse_metric(bg: &Background, x: &Vector3<f64>) -> Matrix3<f64> {
    if bg.is_flat_at(x) {
        Matrix3::identity()
    } else {
        bg.metric(x).try_inverse().expect("metric invertible")
    }
}

/// `max | |∇ũ|_g · a − 1 |` over lattice nodes with `|x| <= radius`, the gradient taken
/// by centered differences of step `dx`.
pub fn eikonal_residual(trace: &FoliationTrace, bg: &Background, lattice: &Lattice, radius: f64, dx: f64) -> f64 {
    let pts: Vec<Vector3<f64>> = (0..lattice.len())
        .map(|n| Vector3::from(lattice.point(n)))
        .filter(|p| p.norm() <= radius)
        .collect();
    pts.par_iter()
        .map(|x| {
            let mut grad = Vector3::zeros();
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = dx;
                grad[i] = (trace.u_glued(&(x + e)) - trace.u_glued(&(x - e))) / (2.0 * dx);
            }
            let ginv = inverse_metric(bg, x);
            let len = (grad.transpose() * ginv * grad)[0].sqrt();
            (len * trace.lookup(bg, x).a - 1.0).abs()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> MarchParams {
        MarchParams { dq: 0.25, du: 0.0125, ..MarchParams::default() }
    }

    #[test]
    fn flat_advance_is_a_translation() {
        let bg = Background::flat(Lattice::cube(3.0, 0.1));
        let p = coarse();
        let g = p.grid();
        let (h, a) = advance(&bg, Direction::new(0.4, 1.2), &p, -1.0, &vec![-1.0; g.len()]).unwrap();
        assert!(h.iter().all(|v| (v + 1.0 - p.du).abs() < 1e-15));
        assert!(a.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn stability_bound_is_enforced() {
        let bg = Background::flat(Lattice::cube(3.0, 0.1));
        let p = MarchParams { du: 0.05, ..coarse() };
        let g = p.grid();
        let err = advance(&bg, Direction::new(0.4, 1.2), &p, 0.0, &vec![0.0; g.len()]).unwrap_err();
        assert!(matches!(err, Error::StabilityViolated { .. }));
        assert!(matches!(march(&bg, Direction::new(0.4, 1.2), &p), Err(Error::StabilityViolated { .. })));
    }

    #[test]
    fn sphere_cap_apex_moves_at_half_speed() {
        let bg = Background::flat(Lattice::cube(6.0, 0.1));
        let p = MarchParams { half_width: 2.0, r_pin: 5.0, dq: 0.05, du: 1e-4, ..MarchParams::default() };
        let g = p.grid();
        let r = 4.0;
        let h: Vec<f64> = (0..g.len()).map(|k| {
            let q = g.q(k);
            (r * r - q[0] * q[0] - q[1] * q[1]).sqrt()
        }).collect();
        let (next, _) = advance(&bg, Direction::new(0.0, 0.0), &p, 0.0, &h).unwrap();
        let apex = g.n / 2 + g.n * (g.n / 2);
        let moved = (next[apex] - h[apex]) / p.du;
        assert!((moved - 0.5).abs() < 1e-3, "{moved}");
    }

    #[test]
    fn cutoff_is_smooth_step() {
        assert_eq!(cutoff(0.5), (1.0, 0.0));
        assert_eq!(cutoff(2.5), (0.0, 0.0));
        let (v, d) = cutoff(1.5);
        assert!((v - 0.5).abs() < 1e-15);
        assert!((d + 1.875).abs() < 1e-12);
    }
}
