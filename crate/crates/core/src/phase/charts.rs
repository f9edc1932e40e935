//! The leafwise chart `Φ_u = ∂_ω u` and the global chart `Φ = uω + ∂_ω u`.

use std::collections::HashMap;

use nalgebra::{Matrix2, Matrix3, Vector3};

use super::atlas::{lattice_gradient, lattice_stencil, PhaseAtlas};
use crate::background::Background;
use crate::error::{Error, Result};
use crate::foliation::{march, Direction, MarchParams};

/// Threshold below which a Jacobian counts as degenerate.
pub const DET_FLOOR: f64 = 0.1;
/// Image bins per axis for the injectivity scan.
pub const IMAGE_BINS: usize = 256;

#[derive(Clone, Debug, Default)]
pub struct ChartReport {
    pub images: Vec<Vector3<f64>>,
    /// `|det Jac|` at every sample where the Jacobian was formed.
    pub dets: Vec<f64>,
    pub det_min: f64,
    pub det_max: f64,
    /// `max | |det Jac| − 1 |`.
    pub det_deviation: f64,
    /// Image bins holding more than one point, counted with multiplicity.
    pub collisions: usize,
    /// `max |JᵀJ − I|` (leafwise chart only).
    pub orthonormality_defect: f64,
}

impl ChartReport {
    fn finish(images: Vec<Vector3<f64>>, dets: Vec<f64>, dim: usize, orthonormality_defect: f64) -> Result<Self> {
        let det_min = dets.iter().copied().fold(f64::INFINITY, f64::min);
        let det_max = dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if det_min < DET_FLOOR {
            return Err(Error::DegenerateJacobian { det: det_min });
        }
        let det_deviation = dets.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
        let collisions = count_collisions(&images, dim, IMAGE_BINS);
        Ok(Self { images, dets, det_min, det_max, det_deviation, collisions, orthonormality_defect })
    }
}

/// Number of points sharing an image bin with an earlier point, on a `bins^dim` grid
/// over the bounding box of the first `dim` coordinates.
pub fn count_collisions(images: &[Vector3<f64>], dim: usize, bins: usize) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in images {
        for m in 0..dim {
            lo[m] = lo[m].min(p[m]);
            hi[m] = hi[m].max(p[m]);
        }
    }
    let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
    let mut collisions = 0;
    for p in images {
        let mut key = [0; 3];
        for m in 0..dim {
            let w = (hi[m] - lo[m]).max(f64::MIN_POSITIVE);
            key[m] = (((p[m] - lo[m]) / w * bins as f64) as usize).min(bins - 1);
        }
        let c = seen.entry(key).or_insert(0);
        if *c > 0 {
            collisions += 1;
        }
        *c += 1;
    }
    collisions
}

/// The stored leaf of `dir` nearest to label `u`: its exact label and its points.
pub fn leaf_points(bg: &Background, dir: Direction, params: &MarchParams, u: f64) -> Result<(f64, Vec<Vector3<f64>>)> {
    let trace = march(bg, dir, params)?;
    let leaf = trace
        .leaves
        .iter()
        .min_by(|a, b| (a.u - u).abs().total_cmp(&(b.u - u).abs()))
        .expect("a march stores at least two leaves");
    let pts = (0..trace.grid.len()).map(|n| trace.frame.point(trace.grid.q(n), leaf.h[n])).collect();
    Ok((leaf.u, pts))
}

/// A `g`-orthonormal basis of the plane `{v : N_low·v = 0}`.
fn leaf_frame(g: &Matrix3<f64>, n_low: &Vector3<f64>, n_up: &Vector3<f64>, dir: &Direction) -> [Vector3<f64>; 2] {
    let proj = |v: Vector3<f64>| v - n_up * n_low.dot(&v);
    let gnorm = |v: &Vector3<f64>| (v.transpose() * g * v)[0].sqrt();
    let t1 = proj(dir.e_theta());
    let e1 = t1 / gnorm(&t1);
    let t2 = proj(dir.e_phi());
    let t2 = t2 - e1 * (e1.transpose() * g * t2)[0];
    [e1, t2 / gnorm(&t2)]
}

/// `J_u = a⁻¹ [∂_{E_r} N_low · e_A]` in orthonormal frames of `T_ωS²` and the leaf.
pub fn leaf_jacobian(bg: &Background, atlas: &PhaseAtlas, i: usize, j: usize, k: usize) -> Option<Matrix2<f64>> {
    let dn = atlas.gradient(i, j, k, |f, k| f.n_low[k])?;
    let f = atlas.at(i, j)?;
    let x = atlas.samples.point(k);
    let e = leaf_frame(&bg.metric(&x), &f.n_low[k], &f.n_up[k], &atlas.direction(i, j));
    let a = f.a[k];
    Some(Matrix2::from_fn(|r, c| dn[r].dot(&e[c]) / a))
}

/// `Φ_u` on the sample points of the atlas (normally the points of one leaf of
/// direction `(i, j)`), with Jacobians from `dΦ_u = a⁻¹ ∂_ω N`.
pub fn chart_phi_u(bg: &Background, atlas: &PhaseAtlas, i: usize, j: usize) -> Result<ChartReport> {
    if !atlas.grid.has_cross(i, j) {
        return Err(Error::Config("chart direction lacks its four ω-neighbours".into()));
    }
    let dir = atlas.direction(i, j);
    let mut images = Vec::with_capacity(atlas.samples.len());
    let mut dets = Vec::with_capacity(atlas.samples.len());
    let mut ortho: f64 = 0.0;
    for k in 0..atlas.samples.len() {
        let du = atlas.d_omega_u(i, j, k).unwrap();
        images.push(Vector3::new(du.dot(&dir.e_theta()), du.dot(&dir.e_phi()), 0.0));
        let jac = leaf_jacobian(bg, atlas, i, j, k).unwrap();
        dets.push(jac.determinant().abs());
        ortho = ortho.max((jac.transpose() * jac - Matrix2::identity()).amax());
    }
    ChartReport::finish(images, dets, 2, ortho)
}

#[derive(Clone, Debug, Default)]
pub struct GlobalChartReport {
    pub chart: ChartReport,
    /// `max |det(∂Φ/∂x)²/det g − a⁻² det(J_u)²|` over interior nodes with `|x| <= core_radius`.
    pub det_identity: f64,
    pub det_identity_points: usize,
}

/// `Φ = ũω + ∂_ω ũ` on a lattice-sampled atlas, Jacobian by centered differences
/// and normalised by `√det g`.
pub fn chart_phi(bg: &Background, atlas: &PhaseAtlas, i: usize, j: usize, core_radius: f64) -> Result<GlobalChartReport> {
    let lattice = *atlas
        .samples
        .lattice()
        .ok_or_else(|| Error::Config("the global chart needs a lattice-sampled atlas".into()))?;
    if !atlas.grid.has_cross(i, j) {
        return Err(Error::Config("chart direction lacks its four ω-neighbours".into()));
    }
    let w = atlas.direction(i, j).omega();
    let f = atlas.at(i, j).unwrap();
    let images: Vec<Vector3<f64>> =
        (0..lattice.len()).map(|k| w * f.u[k] + atlas.d_omega_u(i, j, k).unwrap()).collect();
    let mut dets = Vec::new();
    let mut det_identity: f64 = 0.0;
    let mut det_identity_points = 0;
    for k in 0..lattice.len() {
        let Some(st) = lattice_stencil(&lattice, k) else { continue };
        let cols = lattice_gradient(&st, lattice.spacing, |n| images[n]);
        let jac = Matrix3::from_columns(&cols);
        let x = atlas.samples.point(k);
        let det_g = bg.metric(&x).determinant();
        let det = jac.determinant();
        dets.push(det.abs() / det_g.sqrt());
        if x.norm() <= core_radius {
            let ju = leaf_jacobian(bg, atlas, i, j, k).unwrap().determinant();
            let a = f.a[k];
            det_identity = det_identity.max((det * det / det_g - ju * ju / (a * a)).abs());
            det_identity_points += 1;
        }
    }
    let chart = ChartReport::finish(images, dets, 3, 0.0)?;
    Ok(GlobalChartReport { chart, det_identity, det_identity_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfile::Lattice;
    use crate::phase::{OmegaGrid, SampleSet};

    #[test]
    fn flat_charts_are_isometries() {
        let bg = Background::flat(Lattice::cube(3.0, 0.5));
        let dir = Direction::new(1.1, 0.4);
        let rows = [-1, 0, 1];
        let grid = OmegaGrid::patch(dir, 0.1, &rows, 1).unwrap();
        let (i, j) = grid.patch_index(&rows, 0, 0);
        let lattice = Lattice::cube(2.0, 0.25);
        let atlas = PhaseAtlas::flat(grid.clone(), SampleSet::Lattice(lattice));
        let rep = chart_phi(&bg, &atlas, i, j, 1.0).unwrap();
        assert!(rep.chart.det_deviation < 1e-10);
        assert_eq!(rep.chart.collisions, 0);
        assert!(rep.det_identity < 1e-10);
        for k in 0..lattice.len() {
            assert!((rep.chart.images[k] - Vector3::from(lattice.point(k))).norm() < 1e-12);
        }
        let pts: Vec<Vector3<f64>> =
            (0..121).map(|n| dir.frame().point([(n % 11) as f64 * 0.5 - 2.5, (n / 11) as f64 * 0.5 - 2.5], 0.3)).collect();
        let leaf_atlas = PhaseAtlas::flat(grid, SampleSet::Points(pts));
        let rep = chart_phi_u(&bg, &leaf_atlas, i, j).unwrap();
        assert!(rep.det_deviation < 1e-12 && rep.orthonormality_defect < 1e-12);
        assert_eq!(rep.collisions, 0);
    }

    #[test]
    fn collision_scan() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.0), Vector3::new(1e-6, 0.0, 0.0)];
        assert_eq!(count_collisions(&pts, 2, 256), 1);
        assert_eq!(count_collisions(&pts[..2], 2, 256), 0);
    }
}
