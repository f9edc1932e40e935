//! Metric families and the name-keyed registry that builds them.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::gridfile::GridData;
use crate::interp::tricubic;

/// A smooth family of initial data `(g, k)` on R^3 that is exactly flat outside some ball.
pub trait MetricFamily: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn metric(&self, x: &Vector3<f64>) -> Matrix3<f64>;

    /// Analytic `∂_m g` for `m = 0, 1, 2`; `None` makes callers difference the metric.
    fn metric_gradient(&self, _x: &Vector3<f64>) -> Option<[Matrix3<f64>; 3]> {
        None
    }

    fn extrinsic(&self, _x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::zeros()
    }

    /// True when `k` vanishes identically.
    fn time_symmetric(&self) -> bool {
        true
    }

    /// Radius outside which `g = δ` and `k = 0` exactly.
    fn flat_radius(&self) -> f64;

    /// Sample points at which ellipticity must be checked (in addition to the grid scan).
    fn nodes(&self) -> Vec<Vector3<f64>> {
        Vec::new()
    }
}

/// Parameters shared by the family constructors.
#[derive(Clone, Debug)]
pub struct FamilyParams {
    pub epsilon: f64,
    pub support_radius: f64,
    /// Amplitude of the optional trace-free extrinsic bump.
    pub k_epsilon: f64,
    pub metric_table: Option<PathBuf>,
    pub k_table: Option<PathBuf>,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self { epsilon: 0.0, support_radius: 1.0, k_epsilon: 0.0, metric_table: None, k_table: None }
    }
}

impl FamilyParams {
    pub fn bump(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }
}

pub type FamilyCtor = fn(&FamilyParams) -> Result<Arc<dyn MetricFamily>>;

/// Name-keyed constructors for metric families.
pub struct FamilyRegistry {
    ctors: BTreeMap<String, FamilyCtor>,
}

impl Default for FamilyRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl FamilyRegistry {
    pub fn empty() -> Self {
        Self { ctors: BTreeMap::new() }
    }

    /// Registry holding `flat`, `bump` and `table`.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("flat", |_| Ok(Arc::new(Flat)));
        r.register("bump", |p| Ok(Arc::new(Bump::new(p.epsilon, p.support_radius, p.k_epsilon))));
        r.register("table", |p| Ok(Arc::new(Table::from_params(p)?)));
        r
    }

    pub fn register(&mut self, name: &str, ctor: FamilyCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.ctors.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, params: &FamilyParams) -> Result<Arc<dyn MetricFamily>> {
        let ctor = self.ctors.get(name).ok_or_else(|| Error::UnknownName {
            kind: "metric family",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        ctor(params)
    }
}

/// Euclidean space with `k = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Flat;

impl MetricFamily for Flat {
    fn name(&self) -> &str {
        "flat"
    }
    fn metric(&self, _x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::identity()
    }
    fn metric_gradient(&self, _x: &Vector3<f64>) -> Option<[Matrix3<f64>; 3]> {
        Some([Matrix3::zeros(); 3])
    }
    fn flat_radius(&self) -> f64 {
        0.0
    }
}

/// `g = δ + ε b(|x|/ρ) H(x)` with `b(r) = (1 - r²)^6` and `H = M + (x cᵀ + c xᵀ)/ρ`,
/// optionally with a `g`-trace-free extrinsic bump of amplitude `κ`.
#[derive(Debug, Clone)]
pub struct Bump {
    pub epsilon: f64,
    pub radius: f64,
    pub kappa: f64,
    m: Matrix3<f64>,
    c: Vector3<f64>,
    k0: Matrix3<f64>,
}

impl Bump {
    pub fn new(epsilon: f64, radius: f64, kappa: f64) -> Self {
        Self {
            epsilon,
            radius,
            kappa,
            m: Matrix3::new(1.0, 0.3, -0.2, 0.3, -0.5, 0.25, -0.2, 0.25, 0.4),
            c: Vector3::new(0.3, -0.2, 0.25),
            k0: Matrix3::new(0.2, 0.5, 0.0, 0.5, -0.1, 0.3, 0.0, 0.3, 0.4),
        }
    }

    /// Profile `b` and its gradient.
    fn profile(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let rho2 = self.radius * self.radius;
        let s = x.norm_squared() / rho2;
        if s >= 1.0 {
            return (0.0, Vector3::zeros());
        }
        let w = 1.0 - s;
        let w5 = w.powi(5);
        (w5 * w, x * (-12.0 * w5 / rho2))
    }

    /// The unscaled perturbation `b H` whose size bounds the eigenvalue deviation.
    pub fn perturbation(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let (b, _) = self.profile(x);
        if b == 0.0 {
            return Matrix3::zeros();
        }
        b * self.shape(x)
    }

    fn shape(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.m + (x * self.c.transpose() + self.c * x.transpose()) / self.radius
    }
}

impl MetricFamily for Bump {
    fn name(&self) -> &str {
        "bump"
    }

    fn metric(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::identity() + self.epsilon * self.perturbation(x)
    }

    fn metric_gradient(&self, x: &Vector3<f64>) -> Option<[Matrix3<f64>; 3]> {
        let (b, db) = self.profile(x);
        let mut out = [Matrix3::zeros(); 3];
        if b == 0.0 {
            return Some(out);
        }
        let h = self.shape(x);
        for (m, o) in out.iter_mut().enumerate() {
            let mut dh = Matrix3::zeros();
            for i in 0..3 {
                dh[(i, m)] += self.c[i];
                dh[(m, i)] += self.c[i];
            }
            *o = self.epsilon * (db[m] * h + b * dh / self.radius);
        }
        Some(out)
    }

    fn extrinsic(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        if self.kappa == 0.0 {
            return Matrix3::zeros();
        }
        let (b, _) = self.profile(x);
        if b == 0.0 {
            return Matrix3::zeros();
        }
        let g = self.metric(x);
        let ginv = g.try_inverse().expect("metric invertible");
        let tr = (ginv * self.k0).trace();
        self.kappa * b * (self.k0 - g * (tr / 3.0))
    }

    fn time_symmetric(&self) -> bool {
        self.kappa == 0.0
    }

    fn flat_radius(&self) -> f64 {
        self.radius
    }
}

/// Metric (and optional `k`) tabulated on a lattice, interpolated tricubically.
/// Outside the table the data is taken to be flat.
#[derive(Debug, Clone)]
pub struct Table {
    metric: GridData,
    extrinsic: Option<GridData>,
    flat_radius: f64,
}

fn sym6(v: &[f64]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5])
}

impl Table {
    pub fn from_params(p: &FamilyParams) -> Result<Self> {
        let path = p
            .metric_table
            .as_ref()
            .ok_or_else(|| Error::Config("table family needs metric_table".into()))?;
        let metric = GridData::read(path)?;
        let extrinsic = p.k_table.as_ref().map(|k| GridData::read(k)).transpose()?;
        Self::new(metric, extrinsic)
    }

    pub fn new(metric: GridData, extrinsic: Option<GridData>) -> Result<Self> {
        if metric.ncomp != 6 {
            return Err(Error::Format("metric table needs 6 components per node".into()));
        }
        if let Some(k) = &extrinsic {
            if k.ncomp != 6 || k.lattice != metric.lattice {
                return Err(Error::Format("k table must match the metric lattice".into()));
            }
        }
        let mut t = Self { metric, extrinsic, flat_radius: 0.0 };
        // Smallest radius enclosing every non-flat node.
        let ident = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let mut r: f64 = 0.0;
        for node in 0..t.metric.lattice.len() {
            let g = &t.metric.values[node * 6..node * 6 + 6];
            let mut flat = g.iter().zip(ident).all(|(a, b)| *a == b);
            if let Some(k) = &t.extrinsic {
                flat &= k.values[node * 6..node * 6 + 6].iter().all(|v| *v == 0.0);
            }
            if !flat {
                let p = t.metric.lattice.point(node);
                r = r.max((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt());
            }
        }
        if r >= 2.0 {
            return Err(Error::CollarNotFlat { point: [r, 0.0, 0.0] });
        }
        // Interpolation stencils reach two nodes beyond the last non-flat node.
        t.flat_radius = if r > 0.0 { r + 2.0 * 3f64.sqrt() * t.metric.lattice.spacing } else { 0.0 };
        Ok(t)
    }

    fn sample(&self, data: &GridData, x: &Vector3<f64>, flat: [f64; 6]) -> Matrix3<f64> {
        let l = &data.lattice;
        let s = l.coords([x[0], x[1], x[2]]);
        let inside = (0..3).all(|a| s[a] >= 1.0 && s[a] <= (l.n[a] - 2) as f64);
        if !inside {
            return sym6(&flat);
        }
        let mut out = [0.0; 6];
        tricubic(&data.values, l.n, 6, s, &mut out);
        sym6(&out)
    }
}

impl MetricFamily for Table {
    fn name(&self) -> &str {
        "table"
    }
    fn metric(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.sample(&self.metric, x, [1.0, 0.0, 0.0, 1.0, 0.0, 1.0])
    }
    fn extrinsic(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        match &self.extrinsic {
            Some(k) => self.sample(k, x, [0.0; 6]),
            None => Matrix3::zeros(),
        }
    }
    fn time_symmetric(&self) -> bool {
        self.extrinsic.is_none()
    }
    fn flat_radius(&self) -> f64 {
        self.flat_radius
    }
    fn nodes(&self) -> Vec<Vector3<f64>> {
        let l = &self.metric.lattice;
        (0..l.len()).map(|n| Vector3::from(l.point(n))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_gradient_matches_differences() {
        let b = Bump::new(0.3, 1.0, 0.0);
        let x = Vector3::new(0.2, -0.35, 0.4);
        let g = b.metric_gradient(&x).unwrap();
        let h = 1e-6;
        for m in 0..3 {
            let mut e = Vector3::zeros();
            e[m] = h;
            let fd = (b.metric(&(x + e)) - b.metric(&(x - e))) / (2.0 * h);
            assert!((fd - g[m]).amax() < 1e-8, "axis {m}");
        }
    }

    #[test]
    fn bump_extrinsic_is_trace_free() {
        let b = Bump::new(0.2, 1.0, 0.1);
        let x = Vector3::new(0.1, 0.3, -0.2);
        let k = b.extrinsic(&x);
        let tr = (b.metric(&x).try_inverse().unwrap() * k).trace();
        assert!(tr.abs() < 1e-15);
        assert!(k.amax() > 1e-3);
    }

    #[test]
    fn registry_rejects_unknown_names() {
        let r = FamilyRegistry::with_builtin();
        assert_eq!(r.names(), vec!["bump", "flat", "table"]);
        assert!(matches!(r.build("wormhole", &FamilyParams::default()), Err(Error::UnknownName { .. })));
    }
}
