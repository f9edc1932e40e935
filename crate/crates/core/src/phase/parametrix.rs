//! Plane-wave parametrix `Sf(x) = ∫_{S²}∫₀^∞ e^{iλu(x,ω)} f(λω) λ² dλ dω` at `t = 0`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::background::Background;
use crate::error::{Error, Result};
use crate::foliation::{march, Direction, MarchParams};

/// Source of the phase `u(x, ω)` for a batch of points.
pub trait PhaseProvider: Send + Sync {
    fn phases(&self, dir: Direction, points: &[Vector3<f64>]) -> Result<Vec<f64>>;
}

/// `u = x·ω`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatPhase;

impl PhaseProvider for FlatPhase {
    fn phases(&self, dir: Direction, points: &[Vector3<f64>]) -> Result<Vec<f64>> {
        let w = dir.omega();
        Ok(points.iter().map(|x| x.dot(&w)).collect())
    }
}

/// Marches each quadrature direction on demand and samples its glued phase.
pub struct MarchedPhase<'a> {
    pub bg: &'a Background,
    pub params: MarchParams,
}

impl PhaseProvider for MarchedPhase<'_> {
    fn phases(&self, dir: Direction, points: &[Vector3<f64>]) -> Result<Vec<f64>> {
        let trace = march(self.bg, dir, &self.params)?;
        Ok(points.iter().map(|x| trace.u_glued(x)).collect())
    }
}

/// `−u` of an inner provider.
pub struct NegatedPhase<P>(pub P);

impl<P: PhaseProvider> PhaseProvider for NegatedPhase<P> {
    fn phases(&self, dir: Direction, points: &[Vector3<f64>]) -> Result<Vec<f64>> {
        Ok(self.0.phases(dir, points)?.into_iter().map(|u| -u).collect())
    }
}

/// Frequency-side symbol `f(λω)`.
pub trait Symbol: Send + Sync {
    fn eval(&self, lambda: f64, omega: &Vector3<f64>) -> Complex64;
    /// Radius beyond which `|f| < 1e-12` times its peak.
    fn lambda_max(&self) -> f64;
}

/// `A e^{−|ξ|²/(2σ²)}`, optionally times `d·ω`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSymbol {
    pub amplitude: Complex64,
    pub sigma: f64,
    pub dipole: Option<Vector3<f64>>,
}

impl Default for GaussianSymbol {
    fn default() -> Self {
        Self { amplitude: Complex64::new(1.0, 0.0), sigma: 1.0, dipole: None }
    }
}

impl Symbol for GaussianSymbol {
    fn eval(&self, lambda: f64, omega: &Vector3<f64>) -> Complex64 {
        let ang = self.dipole.map_or(1.0, |d| d.dot(omega));
        self.amplitude * (ang * (-0.5 * (lambda / self.sigma).powi(2)).exp())
    }
    fn lambda_max(&self) -> f64 {
        self.sigma * (2.0 * 1e12f64.ln()).sqrt()
    }
}

/// `conj f`.
pub struct ConjugateSymbol<S>(pub S);

impl<S: Symbol> Symbol for ConjugateSymbol<S> {
    fn eval(&self, lambda: f64, omega: &Vector3<f64>) -> Complex64 {
        self.0.eval(lambda, omega).conj()
    }
    fn lambda_max(&self) -> f64 {
        self.0.lambda_max()
    }
}

/// `f + g`.
pub struct SumSymbol<A, B>(pub A, pub B);

impl<A: Symbol, B: Symbol> Symbol for SumSymbol<A, B> {
    fn eval(&self, lambda: f64, omega: &Vector3<f64>) -> Complex64 {
        self.0.eval(lambda, omega) + self.1.eval(lambda, omega)
    }
    fn lambda_max(&self) -> f64 {
        self.0.lambda_max().max(self.1.lambda_max())
    }
}

/// Gauss–Legendre in `cos θ` and `λ`, trapezoid in `φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureNodes {
    pub n_cos: usize,
    pub n_phi: usize,
    pub n_lambda: usize,
}

impl Default for QuadratureNodes {
    fn default() -> Self {
        Self { n_cos: 32, n_phi: 64, n_lambda: 48 }
    }
}

impl QuadratureNodes {
    pub fn doubled(&self) -> Self {
        Self { n_cos: 2 * self.n_cos, n_phi: 2 * self.n_phi, n_lambda: 2 * self.n_lambda }
    }
}

fn gl(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let (c, h) = (0.5 * (hi + lo), 0.5 * (hi - lo));
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (c + h * x, h * w)).collect()
}

/// `Sf(x)` at every point; directions are processed in parallel and summed in a fixed order.
pub fn evaluate_parametrix(
    phase: &dyn PhaseProvider,
    symbol: &dyn Symbol,
    points: &[Vector3<f64>],
    nodes: QuadratureNodes,
) -> Result<Vec<Complex64>> {
    let cos_rule = gl(nodes.n_cos, -1.0, 1.0);
    let lam_rule = gl(nodes.n_lambda, 0.0, symbol.lambda_max());
    let dphi = std::f64::consts::TAU / nodes.n_phi as f64;
    let dirs: Vec<(Direction, f64)> = cos_rule
        .iter()
        .flat_map(|&(c, w)| (0..nodes.n_phi).map(move |m| (Direction::new(c.acos(), m as f64 * dphi), w * dphi)))
        .collect();
    let parts = dirs
        .par_iter()
        .map(|&(dir, w_dir)| {
            let u = phase.phases(dir, points)?;
            let omega = dir.omega();
            let f: Vec<Complex64> = lam_rule.iter().map(|&(l, w)| symbol.eval(l, &omega) * (w * l * l)).collect();
            Ok(u.iter()
                .map(|&ux| {
                    lam_rule.iter().zip(&f).map(|(&(l, _), fl)| Complex64::from_polar(1.0, l * ux) * fl).sum::<Complex64>()
                        * w_dir
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<Vec<Complex64>>>>()?;
    let mut out = vec![Complex64::new(0.0, 0.0); points.len()];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametrixResult {
    pub values: Vec<Complex64>,
    /// `max |S_2n − S_n| / max |S_2n|` under node doubling.
    pub doubling_change: f64,
}

/// Evaluates at `nodes` and at doubled nodes, failing if the change exceeds `tol`.
pub fn evaluate_parametrix_checked(
    phase: &dyn PhaseProvider,
    symbol: &dyn Symbol,
    points: &[Vector3<f64>],
    nodes: QuadratureNodes,
    tol: f64,
) -> Result<ParametrixResult> {
    let coarse = evaluate_parametrix(phase, symbol, points, nodes)?;
    let fine = evaluate_parametrix(phase, symbol, points, nodes.doubled())?;
    let scale = fine.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = coarse.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let change = if scale > 0.0 { diff / scale } else { diff };
    if change > tol {
        return Err(Error::QuadratureUnderResolved { change, tol });
    }
    Ok(ParametrixResult { values: fine, doubling_change: change })
}

/// `(2π)^{3/2} e^{−|x|²/2}`, the flat-phase value for the unit Gaussian.
pub fn gaussian_oracle(x: &Vector3<f64>) -> f64 {
    std::f64::consts::TAU.powf(1.5) * (-0.5 * x.norm_squared()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> Vec<Vector3<f64>> {
        (0..20)
            .map(|k| {
                let t = k as f64;
                Vector3::new(0.12 * t * (0.7 * t).cos(), 0.1 * t * (1.3 * t).sin(), 0.05 * t - 0.4)
            })
            .collect()
    }

    #[test]
    fn flat_gaussian_matches_fourier_transform() {
        let pts = points();
        let res =
            evaluate_parametrix_checked(&FlatPhase, &GaussianSymbol::default(), &pts, QuadratureNodes::default(), 1e-3)
                .unwrap();
        for (x, v) in pts.iter().zip(&res.values) {
            let exact = gaussian_oracle(x);
            assert!((v - exact).norm() <= 1e-3 * exact, "{x:?}: {v} vs {exact}");
        }
        let zero = evaluate_parametrix(&FlatPhase, &GaussianSymbol::default(), &[Vector3::zeros()], QuadratureNodes::default())
            .unwrap();
        assert!((zero[0].re - 15.7496).abs() < 1e-4);
    }

    #[test]
    fn zero_symbol_gives_zero() {
        let f = GaussianSymbol { amplitude: Complex64::new(0.0, 0.0), ..Default::default() };
        let v = evaluate_parametrix(&FlatPhase, &f, &points(), QuadratureNodes::default()).unwrap();
        assert!(v.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn coarse_nodes_are_flagged() {
        let coarse = QuadratureNodes { n_cos: 2, n_phi: 3, n_lambda: 3 };
        let r = evaluate_parametrix_checked(&FlatPhase, &GaussianSymbol::default(), &points(), coarse, 1e-3);
        assert!(matches!(r, Err(Error::QuadratureUnderResolved { .. })));
    }
}
