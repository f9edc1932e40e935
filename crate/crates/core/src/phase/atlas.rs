//! Per-direction phases sampled on a common point set, and their ω-derivatives.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::omega::{d1, d3, sphere_derivs, tangent_vector, Field, OmegaGrid, SphereDerivs};
use crate::background::Background;
use crate::error::{Error, Result};
use crate::foliation::{march, Direction, FoliationTrace, MarchParams};
use crate::gridfile::{GridData, Lattice};

/// Points at which every direction's phase is sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleSet {
    Lattice(Lattice),
    Points(Vec<Vector3<f64>>),
}

impl SampleSet {
    pub fn len(&self) -> usize {
        match self {
            Self::Lattice(l) => l.len(),
            Self::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, k: usize) -> Vector3<f64> {
        match self {
            Self::Lattice(l) => Vector3::from(l.point(k)),
            Self::Points(p) => p[k],
        }
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        match self {
            Self::Lattice(l) => Some(l),
            Self::Points(_) => None,
        }
    }
}

/// `[[k − e_m, k + e_m]; 3]` for a lattice node with neighbours on every axis.
pub(crate) fn lattice_stencil(l: &Lattice, k: usize) -> Option<[[usize; 2]; 3]> {
    let ijk = l.ijk(k);
    if (0..3).any(|m| ijk[m] == 0 || ijk[m] + 1 >= l.n[m]) {
        return None;
    }
    let stride = [1, l.n[0], l.n[0] * l.n[1]];
    Some(stride.map(|s| [k - s, k + s]))
}

/// Centered-difference gradient of a lattice field at an interior node.
pub(crate) fn lattice_gradient<V: Field>(st: &[[usize; 2]; 3], dx: f64, f: impl Fn(usize) -> V) -> [V; 3] {
    st.map(|[m, p]| (f(p) - f(m)) * (0.5 / dx))
}

/// Glued phase `ũ`, lapse and unit conormal/normal of one direction at every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSamples {
    pub u: Vec<f64>,
    pub a: Vec<f64>,
    pub n_low: Vec<Vector3<f64>>,
    pub n_up: Vec<Vector3<f64>>,
    pub choice_residual: f64,
}

impl DirectionSamples {
    pub fn from_trace(trace: &FoliationTrace, bg: &Background, samples: &SampleSet) -> Self {
        let per: Vec<_> = (0..samples.len()).into_par_iter().map(|k| trace.glued(bg, &samples.point(k))).collect();
        Self {
            u: per.iter().map(|s| s.u).collect(),
            a: per.iter().map(|s| s.a).collect(),
            n_low: per.iter().map(|s| s.n_low).collect(),
            n_up: per.iter().map(|s| s.n_up).collect(),
            choice_residual: trace.choice_residual,
        }
    }

    /// Exact flat-space values `u = x·ω`, `a = 1`, `N = ω`.
    pub fn flat(dir: &Direction, samples: &SampleSet) -> Self {
        let w = dir.omega();
        let n = samples.len();
        Self {
            u: (0..n).map(|k| samples.point(k).dot(&w)).collect(),
            a: vec![1.0; n],
            n_low: vec![w; n],
            n_up: vec![w; n],
            choice_residual: 0.0,
        }
    }
}

/// Phases of a direction family over a shared sample set.
#[derive(Clone, Debug)]
pub struct PhaseAtlas {
    pub grid: OmegaGrid,
    pub samples: SampleSet,
    /// Indexed like `grid`; `None` for inactive directions.
    pub fields: Vec<Option<DirectionSamples>>,
}

fn tag(dir: Direction, e: Error) -> Error {
    match e {
        Error::Direction { .. } => e,
        other => Error::Direction { theta: dir.theta, phi: dir.phi, source: Box::new(other) },
    }
}

/// Marches every active direction (in parallel) and samples its glued phase.
pub fn build_atlas(bg: &Background, grid: OmegaGrid, params: &MarchParams, samples: SampleSet) -> Result<PhaseAtlas> {
    Ok(build_atlases(bg, grid, params, vec![samples])?.pop().unwrap())
}

/// One atlas per sample set, marching each direction once.
pub fn build_atlases(
    bg: &Background,
    grid: OmegaGrid,
    params: &MarchParams,
    sets: Vec<SampleSet>,
) -> Result<Vec<PhaseAtlas>> {
    params.validate()?;
    let per_dir = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % grid.n_theta, idx / grid.n_theta);
            if !grid.is_active(i, j) {
                return Ok(None);
            }
            let dir = grid.direction(i, j);
            let trace = march(bg, dir, params).map_err(|e| tag(dir, e))?;
            Ok(Some(sets.iter().map(|s| DirectionSamples::from_trace(&trace, bg, s)).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(m, samples)| PhaseAtlas {
            grid: grid.clone(),
            samples,
            fields: per_dir.iter().map(|d| d.as_ref().map(|v| v[m].clone())).collect(),
        })
        .collect())
}

/// Derivatives of one sampled quantity at one direction and sample point.
#[derive(Clone, Copy, Debug)]
pub struct OmegaDerivs<V> {
    pub value: V,
    pub d: SphereDerivs<V>,
}

impl PhaseAtlas {
    /// Closed-form flat atlas, for exactness checks without marching.
    pub fn flat(grid: OmegaGrid, samples: SampleSet) -> Self {
        let fields = (0..grid.len())
            .map(|idx| {
                let (i, j) = (idx % grid.n_theta, idx / grid.n_theta);
                grid.is_active(i, j).then(|| DirectionSamples::flat(&grid.direction(i, j), &samples))
            })
            .collect();
        Self { grid, samples, fields }
    }

    pub fn at(&self, i: usize, j: usize) -> Option<&DirectionSamples> {
        self.fields[self.grid.index(i, j)].as_ref()
    }

    fn field_at(&self, i: usize, j: usize) -> &DirectionSamples {
        self.at(i, j).expect("direction is active")
    }

    pub fn direction(&self, i: usize, j: usize) -> Direction {
        self.grid.direction(i, j)
    }

    /// Value, gradient and Hessian in `ω` of `get(samples, k)`; `None` without a full stencil.
    pub fn derivs<V: Field>(
        &self,
        i: usize,
        j: usize,
        k: usize,
        get: impl Fn(&DirectionSamples, usize) -> V,
    ) -> Option<OmegaDerivs<V>> {
        if !self.grid.has_stencil(i, j) {
            return None;
        }
        let s = [-1, 0, 1].map(|di| {
            [-1, 0, 1].map(|dj| {
                let (a, b) = self.grid.neighbor(i, j, di, dj).unwrap();
                get(self.field_at(a, b), k)
            })
        });
        let d = sphere_derivs(&s, self.grid.theta(i), self.grid.dtheta, self.grid.dphi);
        Some(OmegaDerivs { value: s[1][1], d })
    }

    /// Orthonormal-frame gradient in `ω`; needs only the four edge neighbours.
    pub fn gradient<V: Field>(
        &self,
        i: usize,
        j: usize,
        k: usize,
        get: impl Fn(&DirectionSamples, usize) -> V,
    ) -> Option<[V; 2]> {
        if !self.grid.has_cross(i, j) {
            return None;
        }
        let f = |di: isize, dj: isize| {
            let (a, b) = self.grid.neighbor(i, j, di, dj).unwrap();
            get(self.field_at(a, b), k)
        };
        let ft = d1(f(1, 0), f(-1, 0), self.grid.dtheta);
        let fp = d1(f(0, 1), f(0, -1), self.grid.dphi);
        Some([ft, fp * (1.0 / self.grid.theta(i).sin())])
    }

    /// Ambient tangent vector `∂_ω ũ(x_k, ω_ij)`.
    pub fn d_omega_u(&self, i: usize, j: usize, k: usize) -> Option<Vector3<f64>> {
        let g = self.gradient(i, j, k, |f, k| f.u[k])?;
        Some(tangent_vector(&self.direction(i, j), g))
    }

    /// Orthonormal-frame third derivatives `(∂_θ³ũ, ∂_φ³ũ / sin³θ)`, each present when its
    /// axis has a 5-point stencil.
    pub fn third_derivs(&self, i: usize, j: usize, k: usize) -> [Option<f64>; 2] {
        let g = &self.grid;
        let u = |di: isize, dj: isize| g.neighbor(i, j, di, dj).map(|(a, b)| self.field_at(a, b).u[k]);
        let t = || Some(d3(u(2, 0)?, u(1, 0)?, u(-1, 0)?, u(-2, 0)?, g.dtheta));
        let p = || Some(d3(u(0, 2)?, u(0, 1)?, u(0, -1)?, u(0, -2)?, g.dphi) / g.theta(i).sin().powi(3));
        [t(), p()]
    }

    /// Largest `|∂_ω ũ · ω|` over interior directions and samples.
    pub fn tangency_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, j) in self.grid.interior() {
            let w = self.direction(i, j).omega();
            for k in 0..self.samples.len() {
                worst = worst.max(self.d_omega_u(i, j, k).unwrap().dot(&w).abs());
            }
        }
        worst
    }

    /// Writes `u_<iθ>_<iφ>.grid` (components `ũ, a, N_low, N_up`) per active direction
    /// plus `manifest.txt`. Needs a lattice sample set.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let lattice = *self
            .samples
            .lattice()
            .ok_or_else(|| Error::Config("only lattice-sampled atlases can be written".into()))?;
        fs::create_dir_all(dir)?;
        let g = &self.grid;
        let mut manifest = format!(
            "theta0 {:.17e} dtheta {:.17e} n_theta {} phi0 {:.17e} dphi {:.17e} n_phi {} periodic {}\n",
            g.theta0, g.dtheta, g.n_theta, g.phi0, g.dphi, g.n_phi, g.periodic
        );
        for j in 0..g.n_phi {
            for i in 0..g.n_theta {
                let Some(f) = self.at(i, j) else { continue };
                let mut values = Vec::with_capacity(8 * f.u.len());
                for k in 0..f.u.len() {
                    values.push(f.u[k]);
                    values.push(f.a[k]);
                    values.extend(f.n_low[k].iter());
                    values.extend(f.n_up[k].iter());
                }
                let name = format!("u_{i}_{j}.grid");
                GridData { lattice, ncomp: 8, values }.write(&dir.join(&name))?;
                let _ = writeln!(manifest, "{i} {j} {:.17e} {:.17e} {name}", g.theta(i), g.phi(j));
            }
        }
        fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    /// Reads an atlas written by [`PhaseAtlas::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.txt"))?;
        let mut lines = text.lines();
        let head: Vec<&str> = lines.next().unwrap_or_default().split_whitespace().collect();
        let num = |k: usize| -> Result<f64> {
            head.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format("bad manifest header".into()))
        };
        if head.len() != 14 {
            return Err(Error::Format("bad manifest header".into()));
        }
        let (n_theta, n_phi) = (num(5)? as usize, num(11)? as usize);
        let mut grid = OmegaGrid {
            theta0: num(1)?,
            dtheta: num(3)?,
            n_theta,
            phi0: num(7)?,
            dphi: num(9)?,
            n_phi,
            periodic: head[13] == "true",
            active: vec![false; n_theta * n_phi],
        };
        let mut fields = vec![None; grid.len()];
        let mut lattice = None;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("bad manifest line '{line}'"));
            let i: usize = parts.first().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let j: usize = parts.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let name = parts.get(4).ok_or_else(bad)?;
            if i >= n_theta || j >= n_phi {
                return Err(bad());
            }
            let data = GridData::read(&dir.join(name))?;
            if data.ncomp != 8 {
                return Err(Error::Format(format!("{name}: expected 8 components")));
            }
            lattice = Some(data.lattice);
            let v3 = |r: &[f64]| Vector3::new(r[0], r[1], r[2]);
            let rows: Vec<&[f64]> = data.values.chunks(8).collect();
            grid.active[i + n_theta * j] = true;
            fields[i + n_theta * j] = Some(DirectionSamples {
                u: rows.iter().map(|r| r[0]).collect(),
                a: rows.iter().map(|r| r[1]).collect(),
                n_low: rows.iter().map(|r| v3(&r[2..5])).collect(),
                n_up: rows.iter().map(|r| v3(&r[5..8])).collect(),
                choice_residual: f64::NAN,
            });
        }
        let lattice = lattice.ok_or_else(|| Error::Format("atlas manifest lists no directions".into()))?;
        Ok(Self { grid, samples: SampleSet::Lattice(lattice), fields })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_atlas_derivative_is_tangential_projection() {
        let samples = SampleSet::Lattice(Lattice::cube(2.5, 0.5));
        let atlas = PhaseAtlas::flat(OmegaGrid::sphere(9, 17), samples);
        let mut worst: f64 = 0.0;
        for (i, j) in atlas.grid.interior() {
            let w = atlas.direction(i, j).omega();
            for k in (0..atlas.samples.len()).step_by(7) {
                let x = atlas.samples.point(k);
                let exact = x - w * x.dot(&w);
                worst = worst.max((atlas.d_omega_u(i, j, k).unwrap() - exact).norm());
            }
        }
        assert!(worst < 1e-12, "{worst}");
        assert!(atlas.tangency_defect() < 1e-12);
        assert!(atlas.d_omega_u(0, 0, 0).is_none());
    }

    #[test]
    fn atlas_directory_round_trip() {
        let samples = SampleSet::Lattice(Lattice::cube(1.0, 0.5));
        let grid = OmegaGrid::patch(Direction::new(1.0, 0.5), 0.1, &[-1, 0, 1], 1).unwrap();
        let atlas = PhaseAtlas::flat(grid, samples);
        let dir = tempfile::tempdir().unwrap();
        atlas.write_dir(dir.path()).unwrap();
        assert!(dir.path().join("u_1_1.grid").exists());
        let back = PhaseAtlas::read_dir(dir.path()).unwrap();
        assert_eq!(back.grid, atlas.grid);
        assert_eq!(back.samples, atlas.samples);
        assert_eq!(back.at(2, 0).unwrap().u, atlas.at(2, 0).unwrap().u);
        assert_eq!(back.at(1, 1).unwrap().n_up, atlas.at(1, 1).unwrap().n_up);
    }
}
