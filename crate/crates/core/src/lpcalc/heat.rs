//! Discrete Laplace–Beltrami operator and heat-semigroup backends.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::surface::{spectral_matrix, Surface2D};
use crate::error::{Error, Result};

/// Default node count above which the dense factorisation is replaced by time stepping.
pub const N_DENSE: usize = 4096;

/// Divergence-form `Δ̸f = W⁻¹ Σ D_A C^{AB} D_B f` with `C = ΔA √γ γ^{AB}`, `W = ΔA √γ`
/// and skew Fourier differentiation `D`. `W Δ̸` is symmetric.
#[derive(Clone, Debug)]
pub struct LaplaceOperator {
    pub surface: Surface2D,
    d: [DMatrix<f64>; 2],
    c: Vec<[f64; 3]>,
    w: Vec<f64>,
}

impl LaplaceOperator {
    pub fn new(surface: Surface2D) -> Result<Self> {
        let g = surface.grid;
        if g.n[0] % 2 == 0 || g.n[1] % 2 == 0 {
            return Err(Error::Config("Laplace-Beltrami discretisation needs odd grid sizes".into()));
        }
        let d = [spectral_matrix(g.n[0], g.len[0]), spectral_matrix(g.n[1], g.len[1])];
        let w = surface.weights();
        let c = surface
            .gamma_inv
            .iter()
            .zip(&w)
            .map(|(gi, w)| [w * gi[(0, 0)], w * gi[(0, 1)], w * gi[(1, 1)]])
            .collect();
        Ok(Self { surface, d, c, w })
    }

    pub fn nodes(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// `W Δ̸ f`.
    pub fn apply_weighted(&self, f: &[f64]) -> Vec<f64> {
        let g = &self.surface.grid;
        let f0 = g.apply_along(&self.d[0], f, 0);
        let f1 = g.apply_along(&self.d[1], f, 1);
        let flux0: Vec<f64> = (0..f.len()).map(|k| self.c[k][0] * f0[k] + self.c[k][1] * f1[k]).collect();
        let flux1: Vec<f64> = (0..f.len()).map(|k| self.c[k][1] * f0[k] + self.c[k][2] * f1[k]).collect();
        let a = g.apply_along(&self.d[0], &flux0, 0);
        let b = g.apply_along(&self.d[1], &flux1, 1);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.apply_weighted(f).iter().zip(&self.w).map(|(v, w)| v / w).collect()
    }

    /// Dense `−W Δ̸` (symmetric positive semidefinite).
    pub fn stiffness(&self) -> DMatrix<f64> {
        let g = self.surface.grid;
        let [n0, n1] = g.n;
        let n = self.nodes();
        let mut m = DMatrix::zeros(n, n);
        let mut cols: Vec<(usize, f64, usize)> = Vec::with_capacity(n0 + n1);
        for r in 0..n {
            let (i, j) = (r % n0, r / n0);
            cols.clear();
            for k in 0..n0 {
                cols.push((k + n0 * j, self.d[0][(i, k)], 0));
            }
            for k in 0..n1 {
                cols.push((i + n0 * k, self.d[1][(j, k)], 1));
            }
            let c = self.c[r];
            for &(p, vp, ap) in &cols {
                if vp == 0.0 {
                    continue;
                }
                for &(q, vq, aq) in &cols {
                    let cab = match (ap, aq) {
                        (0, 0) => c[0],
                        (1, 1) => c[2],
                        _ => c[1],
                    };
                    m[(p, q)] += vp * cab * vq;
                }
            }
        }
        m
    }

    fn stiffness_diagonal(&self) -> Vec<f64> {
        let g = self.surface.grid;
        let [n0, _] = g.n;
        let mut diag = vec![0.0; self.nodes()];
        for (r, c) in self.c.iter().enumerate() {
            let (i, j) = (r % n0, r / n0);
            for k in 0..n0 {
                diag[k + n0 * j] += self.d[0][(i, k)].powi(2) * c[0];
            }
            for k in 0..g.n[1] {
                diag[i + n0 * k] += self.d[1][(j, k)].powi(2) * c[2];
            }
            // Mixed terms vanish since D has a zero diagonal.
        }
        diag
    }
}

/// Heat semigroup `U(τ) = e^{τΔ̸}` on one surface.
pub trait HeatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn evolve(&self, f: &[f64], tau: f64) -> Vec<f64>;
    /// Applies `m(λ)` through the eigenbasis; `None` without a factorisation.
    fn multiplier(&self, _f: &[f64], _m: &dyn Fn(f64) -> f64) -> Option<Vec<f64>> {
        None
    }
    fn lambda_max(&self) -> f64;
    fn eigenpairs(&self) -> Option<(&[f64], &DMatrix<f64>)> {
        None
    }
}

/// Dense generalized eigendecomposition `−Δ̸ φ = λ φ`, `φ` orthonormal in `W`.
pub struct SpectralBackend {
    lambda: Vec<f64>,
    /// Columns are `W`-orthonormal eigenfunctions.
    phi: DMatrix<f64>,
    w: Vec<f64>,
}

impl SpectralBackend {
    pub fn new(op: &LaplaceOperator) -> Self {
        let w = op.weights().to_vec();
        let n = w.len();
        let s: Vec<f64> = w.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut m = op.stiffness();
        for p in 0..n {
            for q in 0..n {
                m[(p, q)] *= s[p] * s[q];
            }
        }
        let m = 0.5 * (&m + m.transpose());
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        let lambda = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let phi = DMatrix::from_fn(n, n, |p, c| eig.eigenvectors[(p, order[c])] * s[p]);
        Self { lambda, phi, w }
    }

    fn coefficients(&self, f: &[f64]) -> DVector<f64> {
        let wf = DVector::from_iterator(f.len(), f.iter().zip(&self.w).map(|(a, b)| a * b));
        self.phi.tr_mul(&wf)
    }
}

impl HeatBackend for SpectralBackend {
    fn name(&self) -> &str {
        "spectral"
    }
    fn evolve(&self, f: &[f64], tau: f64) -> Vec<f64> {
        if tau == 0.0 {
            return f.to_vec();
        }
        self.multiplier(f, &|l| (-l * tau).exp()).unwrap()
    }
    fn multiplier(&self, f: &[f64], m: &dyn Fn(f64) -> f64) -> Option<Vec<f64>> {
        let mut c = self.coefficients(f);
        for (ci, l) in c.iter_mut().zip(&self.lambda) {
            *ci *= m(*l);
        }
        Some((&self.phi * c).iter().copied().collect())
    }
    fn lambda_max(&self) -> f64 {
        *self.lambda.last().unwrap()
    }
    fn eigenpairs(&self) -> Option<(&[f64], &DMatrix<f64>)> {
        Some((&self.lambda, &self.phi))
    }
}

/// Implicit Euler with at least `substeps` steps per evolution, each solved by
/// Jacobi-preconditioned conjugate gradients.
pub struct StepperBackend {
    op: LaplaceOperator,
    diag: Vec<f64>,
    lambda_max: f64,
    pub substeps: usize,
    pub tol: f64,
}

impl StepperBackend {
    pub fn new(op: &LaplaceOperator, substeps: usize) -> Self {
        let op = op.clone();
        let diag = op.stiffness_diagonal();
        let lambda_max = power_iteration(&op, 300);
        Self { op, diag, lambda_max, substeps: substeps.max(16), tol: 1e-13 }
    }

    /// Solves `(W + dt K) v = W b`, `K = −W Δ̸`.
    fn implicit_step(&self, b: &[f64], dt: f64) -> Vec<f64> {
        let w = self.op.weights();
        let apply = |v: &[f64]| -> Vec<f64> {
            let lv = self.op.apply_weighted(v);
            v.iter().zip(w).zip(&lv).map(|((v, w), l)| w * v - dt * l).collect()
        };
        let rhs: Vec<f64> = b.iter().zip(w).map(|(b, w)| b * w).collect();
        let pre: Vec<f64> = w.iter().zip(&self.diag).map(|(w, d)| 1.0 / (w + dt * d)).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = b.to_vec();
        let ax = apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let mut z: Vec<f64> = r.iter().zip(&pre).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let target = self.tol * dot(&rhs, &rhs).sqrt().max(f64::MIN_POSITIVE);
        for _ in 0..10 * b.len() {
            if dot(&r, &r).sqrt() <= target {
                break;
            }
            let ap = apply(&p);
            let alpha = rz / dot(&p, &ap);
            for k in 0..x.len() {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            z = r.iter().zip(&pre).map(|(a, b)| a * b).collect();
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..p.len() {
                p[k] = z[k] + beta * p[k];
            }
        }
        x
    }
}

fn power_iteration(op: &LaplaceOperator, iters: usize) -> f64 {
    let n = op.nodes();
    let mut v: Vec<f64> = (0..n).map(|k| ((k * 7919) % 101) as f64 / 101.0 - 0.5).collect();
    let w = op.weights();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let lv: Vec<f64> = op.apply(&v).iter().map(|x| -x).collect();
        let num: f64 = lv.iter().zip(&v).zip(w).map(|((a, b), w)| a * b * w).sum();
        let den: f64 = v.iter().zip(w).map(|(a, w)| a * a * w).sum();
        lambda = num / den;
        let norm = lv.iter().zip(w).map(|(a, w)| a * a * w).sum::<f64>().sqrt();
        v = lv.iter().map(|x| x / norm).collect();
    }
    lambda
}

impl HeatBackend for StepperBackend {
    fn name(&self) -> &str {
        "stepper"
    }
    fn evolve(&self, f: &[f64], tau: f64) -> Vec<f64> {
        if tau == 0.0 {
            return f.to_vec();
        }
        let dt = tau / self.substeps as f64;
        let mut v = f.to_vec();
        for _ in 0..self.substeps {
            v = self.implicit_step(&v, dt);
        }
        v
    }
    fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
}

pub type HeatCtor = fn(&LaplaceOperator) -> Box<dyn HeatBackend>;

/// Name-keyed heat backends; `auto` picks by node count.
pub struct HeatRegistry {
    ctors: BTreeMap<String, HeatCtor>,
}

impl Default for HeatRegistry {
    fn default() -> Self {
        let mut r = Self { ctors: BTreeMap::new() };
        r.register("spectral", |op| Box::new(SpectralBackend::new(op)));
        r.register("stepper", |op| Box::new(StepperBackend::new(op, 64)));
        r
    }
}

impl HeatRegistry {
    pub fn register(&mut self, name: &str, ctor: HeatCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn build(&self, name: &str, op: &LaplaceOperator) -> Result<Box<dyn HeatBackend>> {
        let name = match name {
            "auto" if op.nodes() <= N_DENSE => "spectral",
            "auto" => "stepper",
            other => other,
        };
        let ctor = self.ctors.get(name).ok_or_else(|| Error::UnknownName {
            kind: "heat backend",
            name: name.to_string(),
            known: self.ctors.keys().cloned().collect::<Vec<_>>().join(", "),
        })?;
        Ok(ctor(op))
    }
}

/// A surface with its Laplace–Beltrami operator and heat semigroup.
pub struct HeatFrame {
    pub op: LaplaceOperator,
    pub backend: Box<dyn HeatBackend>,
}

impl HeatFrame {
    pub fn new(surface: Surface2D, backend: &str) -> Result<Self> {
        let op = LaplaceOperator::new(surface)?;
        let backend = HeatRegistry::default().build(backend, &op)?;
        Ok(Self { op, backend })
    }

    pub fn spectral(surface: Surface2D) -> Result<Self> {
        Self::new(surface, "spectral")
    }

    pub fn surface(&self) -> &Surface2D {
        &self.op.surface
    }

    pub fn heat_evolve(&self, f: &[f64], tau: f64) -> Vec<f64> {
        assert!(tau >= 0.0, "heat flow runs forward only");
        self.backend.evolve(f, tau)
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.op.apply(f)
    }

    pub fn lambda_max(&self) -> f64 {
        self.backend.lambda_max()
    }

    pub fn norm2(&self, f: &[f64]) -> f64 {
        self.surface().inner(f, f).sqrt()
    }

    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().zip(self.op.weights()).map(|(a, w)| a * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use std::f64::consts::TAU;

    fn wavy() -> Surface2D {
        Surface2D::torus([13, 11], [TAU, 5.0], |[x, y]| {
            Matrix2::new(1.0 + 0.2 * x.sin(), 0.1 * (x + y).cos(), 0.1 * (x + y).cos(), 1.0 + 0.15 * y.cos())
        })
        .unwrap()
    }

    #[test]
    fn weighted_operator_is_symmetric_and_kills_constants() {
        let op = LaplaceOperator::new(wavy()).unwrap();
        let k = op.stiffness();
        let asym = (&k - k.transpose()).amax() / k.amax();
        assert!(asym < 1e-13);
        let ones = vec![1.0; op.nodes()];
        assert!(op.apply(&ones).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn eigenpairs_are_accurate() {
        let op = LaplaceOperator::new(wavy()).unwrap();
        let sb = SpectralBackend::new(&op);
        let (lam, phi) = sb.eigenpairs().unwrap();
        assert!(lam[0].abs() < 1e-10 && lam[1] > 0.1);
        for c in [0, 1, 5, 40] {
            let v: Vec<f64> = phi.column(c).iter().copied().collect();
            let lv = op.apply(&v);
            let res = lv.iter().zip(&v).map(|(a, b)| (a + lam[c] * b).abs()).fold(0.0, f64::max);
            assert!(res < 1e-8 * lam[c].max(1.0), "{c}: {res}");
        }
    }

    #[test]
    fn stepper_conserves_mass_and_tracks_spectral() {
        let op = LaplaceOperator::new(wavy()).unwrap();
        let st = StepperBackend::new(&op, 400);
        let sp = SpectralBackend::new(&op);
        let f: Vec<f64> = (0..op.nodes()).map(|k| op.surface.grid.coord(k)[0].cos() + 0.3).collect();
        let a = st.evolve(&f, 0.2);
        let b = sp.evolve(&f, 0.2);
        let w = op.weights();
        let mass = |v: &[f64]| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        assert!((mass(&a) - mass(&f)).abs() < 1e-10 * mass(&f).abs());
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
        assert!((st.lambda_max() - sp.lambda_max()).abs() < 1e-3 * sp.lambda_max());
    }
}
