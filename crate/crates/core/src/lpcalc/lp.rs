//! Littlewood–Paley projections, fractional powers and the associated norms.
//!
//! The kernel is the dyadic heat difference `P_j = U(4^{-(j+1)}) − U(4^{-j})` with
//! `P_{<0} = U(1)`, which telescopes to `U(4^{-(J+1)})`.

use std::fmt::Write as _;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use statrs::function::gamma::gamma;

use super::heat::HeatFrame;
use crate::error::{Error, Result};

/// Upper bound on the partition tail `1 − e^{−λ_max 4^{-(J+1)}}`.
pub const TAIL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSettings {
    /// Highest projection level kept in the partition.
    pub j_max: usize,
    /// Log-spaced trapezoid nodes for the Gamma-integral cross-check.
    pub quad_nodes: usize,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl LpSettings {
    /// Smallest `J` meeting the tail bound for this frame.
    pub fn auto(frame: &HeatFrame) -> Self {
        let lmax = frame.lambda_max().max(1.0);
        let mut j = 0;
        while lmax * 0.25f64.powi(j as i32 + 1) > TAIL_TOL {
            j += 1;
        }
        Self { j_max: j, quad_nodes: 400, tau_min: 1e-8, tau_max: 50.0 }
    }

    pub fn validate(&self, frame: &HeatFrame) -> Result<()> {
        let tail = frame.lambda_max() * 0.25f64.powi(self.j_max as i32 + 1);
        if tail > TAIL_TOL {
            return Err(Error::Config(format!(
                "lp cutoff J = {} leaves a partition tail of {tail:e} above {TAIL_TOL:e}",
                self.j_max
            )));
        }
        if self.quad_nodes < 2 || !(0.0 < self.tau_min && self.tau_min < self.tau_max) {
            return Err(Error::Config("lp quadrature needs >= 2 nodes and 0 < tau_min < tau_max".into()));
        }
        Ok(())
    }
}

/// Symbol of `P_j` at eigenvalue `λ`.
pub fn symbol(j: usize, lambda: f64) -> f64 {
    let t = 0.25f64.powi(j as i32);
    (-lambda * t * 0.25).exp() - (-lambda * t).exp()
}

pub fn lp_project(frame: &HeatFrame, settings: &LpSettings, f: &[f64], j: usize) -> Result<Vec<f64>> {
    if j > settings.j_max {
        return Err(Error::LevelOutOfRange { j, max: settings.j_max });
    }
    if let Some(v) = frame.backend.multiplier(f, &|l| symbol(j, l)) {
        return Ok(v);
    }
    let t = 0.25f64.powi(j as i32);
    let fine = frame.heat_evolve(f, 0.25 * t);
    let coarse = frame.heat_evolve(f, t);
    Ok(fine.iter().zip(&coarse).map(|(a, b)| a - b).collect())
}

pub fn lp_low(frame: &HeatFrame, f: &[f64]) -> Vec<f64> {
    frame.heat_evolve(f, 1.0)
}

/// `‖P_{<0}f + Σ_{j≤J} P_j f − f‖₂ / ‖f‖₂`.
pub fn partition_residual(frame: &HeatFrame, settings: &LpSettings, f: &[f64]) -> Result<f64> {
    let mut sum = lp_low(frame, f);
    for j in 0..=settings.j_max {
        for (s, p) in sum.iter_mut().zip(lp_project(frame, settings, f, j)?) {
            *s += p;
        }
    }
    let diff: Vec<f64> = sum.iter().zip(f).map(|(a, b)| a - b).collect();
    Ok(frame.norm2(&diff) / frame.norm2(f).max(f64::MIN_POSITIVE))
}

/// `c* = max_{s≥0} s(e^{−s/4} − e^{−s})` by golden-section search on the unimodal profile.
pub fn band_constant_star() -> f64 {
    let h = |s: f64| s * ((-s / 4.0).exp() - (-s).exp());
    let (mut a, mut b) = (0.0, 20.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if h(c) > h(d) {
            b = d;
        } else {
            a = c;
        }
    }
    h(0.5 * (a + b))
}

/// `max_λ Σ_{j≤J} symbol_j(λ)²` over a log grid of `[0, λ_max]` plus `λ = 0`.
pub fn bessel_symbol_max(lambda_max: f64, j_max: usize) -> f64 {
    let lo = 1e-6f64.ln();
    let hi = lambda_max.max(1.0).ln();
    let n = 20_000;
    (0..=n)
        .map(|k| if k == 0 { 0.0 } else { (lo + (hi - lo) * (k - 1) as f64 / (n - 1) as f64).exp() })
        .map(|l| (0..=j_max).map(|j| symbol(j, l).powi(2)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `½‖f‖² − ½‖U(τ)f‖² − ∫₀^τ ‖∇̸U(s)f‖² ds`, with the dissipation `−⟨U, Δ̸U⟩`
/// integrated by Gauss–Legendre in `s`. Zero for an exact semigroup.
pub fn heat_energy_defect(frame: &HeatFrame, f: &[f64], tau: f64, nodes: usize) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(nodes.max(2)).unwrap());
    let dissipated: f64 = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| {
            let u = frame.heat_evolve(f, 0.5 * tau * (x + 1.0));
            -0.5 * tau * w * frame.surface().inner(&u, &frame.laplacian(&u))
        })
        .sum();
    let u = frame.heat_evolve(f, tau);
    let n2 = |v: &[f64]| frame.surface().inner(v, v);
    0.5 * n2(f) - 0.5 * n2(&u) - dissipated
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMethod {
    Spectral,
    Quadrature,
}

/// `Λ^α f` for `Λ = (I − Δ̸)^{1/2}`.
pub fn lambda_alpha(
    frame: &HeatFrame,
    settings: &LpSettings,
    f: &[f64],
    alpha: f64,
    method: LambdaMethod,
) -> Result<Vec<f64>> {
    match method {
        LambdaMethod::Spectral => frame
            .backend
            .multiplier(f, &|l| (1.0 + l).powf(alpha / 2.0))
            .ok_or_else(|| Error::Config("spectral fractional powers need the spectral heat backend".into())),
        LambdaMethod::Quadrature => {
            if alpha >= 0.0 {
                return Err(Error::QuadratureUnsupported { alpha });
            }
            Ok(gamma_integral(frame, settings, f, -alpha / 2.0))
        }
    }
}

/// `Γ(β)^{-1} ∫ τ^{β−1} e^{−τ} U(τ)f dτ` by the trapezoid rule in `ln τ`, with
/// `∫₀^{τ_min}` approximated by `(τ_min^β / β) U(τ_min) f`.
fn gamma_integral(frame: &HeatFrame, settings: &LpSettings, f: &[f64], beta: f64) -> Vec<f64> {
    let (s0, s1) = (settings.tau_min.ln(), settings.tau_max.ln());
    let n = settings.quad_nodes;
    let h = (s1 - s0) / (n - 1) as f64;
    let mut out = vec![0.0; f.len()];
    for k in 0..n {
        let tau = (s0 + h * k as f64).exp();
        let mut w = h * tau.powf(beta) * (-tau).exp();
        if k == 0 || k == n - 1 {
            w *= 0.5;
        }
        if k == 0 {
            w += settings.tau_min.powf(beta) / beta;
        }
        let u = frame.heat_evolve(f, tau);
        for (o, v) in out.iter_mut().zip(&u) {
            *o += w * v;
        }
    }
    let g = gamma(beta);
    out.iter_mut().for_each(|v| *v /= g);
    out
}

/// `(Σ_j 4^{jb}‖P_j f‖² + ‖P_{<0}f‖²)^{1/2}`.
pub fn sobolev_norm(frame: &HeatFrame, settings: &LpSettings, f: &[f64], b: f64) -> Result<f64> {
    if b.abs() > 4.0 {
        return Err(Error::Config(format!("sobolev exponent {b} outside [-4, 4]")));
    }
    let mut sum = frame.norm2(&lp_low(frame, f)).powi(2);
    for j in 0..=settings.j_max {
        let p = lp_project(frame, settings, f, j)?;
        sum += 4f64.powf(j as f64 * b) * frame.norm2(&p).powi(2);
    }
    Ok(sum.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesovValue {
    pub value: f64,
    /// Bound on the omitted `Σ_{j>J} 2^j max_u ‖P_j F‖`.
    pub tail_bound: f64,
}

/// `Σ_j 2^j max_u ‖P_j F‖₂ + max_u ‖P_{<0}F‖₂` over per-leaf frames and fields.
pub fn besov_norm(leaves: &[(&HeatFrame, &[f64])], j_max: usize) -> Result<BesovValue> {
    if leaves.is_empty() {
        return Err(Error::InsufficientLeaves { needed: 1, have: 0 });
    }
    let mut low: f64 = 0.0;
    let mut bands = vec![0.0f64; j_max + 1];
    let mut tail: f64 = 0.0;
    for (frame, field) in leaves {
        let settings = LpSettings { j_max, ..LpSettings::auto(frame) };
        low = low.max(frame.norm2(&lp_low(frame, field)));
        for (j, b) in bands.iter_mut().enumerate() {
            *b = b.max(frame.norm2(&lp_project(frame, &settings, field, j)?));
        }
        // ‖P_j‖ ≤ λ_max 4^{-j}, so the omitted dyadic sum is below λ_max 2^{-J} ‖F‖.
        tail = tail.max(frame.lambda_max() * frame.norm2(field) * 0.5f64.powi(j_max as i32));
    }
    let value = low + bands.iter().enumerate().map(|(j, b)| 2f64.powi(j as i32) * b).sum::<f64>();
    Ok(BesovValue { value, tail_bound: tail })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryRow {
    pub property: &'static str,
    pub probe: String,
    pub measured: f64,
    /// `None` for report-only rows.
    pub tolerance: Option<f64>,
    /// Level realising the maximum, where meaningful.
    pub level: Option<usize>,
}

impl BatteryRow {
    pub fn passes(&self) -> bool {
        self.tolerance.map_or(true, |t| self.measured <= t)
    }
}

#[derive(Clone, Debug, Default)]
pub struct BatteryReport {
    pub rows: Vec<BatteryRow>,
    pub c_star: f64,
    pub bessel_symbol_max: f64,
}

impl BatteryReport {
    pub fn max_of(&self, property: &str) -> f64 {
        self.rows.iter().filter(|r| r.property == property).map(|r| r.measured).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn row(&self, property: &str, probe: &str) -> Option<&BatteryRow> {
        self.rows.iter().find(|r| r.property == property && r.probe == probe)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("property,probe,measured_constant,tolerance,pass\n");
        for r in &self.rows {
            let tol = r.tolerance.map_or("report".to_string(), |t| format!("{t:.17e}"));
            let _ = writeln!(s, "{},{},{:.17e},{},{}", r.property, r.probe, r.measured, tol, r.passes());
        }
        s
    }
}

/// Measures finite band, Bessel, weak Bernstein (`p = 4`) and `L^4` boundedness
/// constants for each named probe.
pub fn lp_property_battery(
    frame: &HeatFrame,
    settings: &LpSettings,
    probes: &[(String, Vec<f64>)],
) -> Result<BatteryReport> {
    let c_star = band_constant_star();
    let bsm = bessel_symbol_max(frame.lambda_max(), settings.j_max);
    let surf = frame.surface();
    let p = 4.0;
    let mut rows = Vec::new();
    for (name, f) in probes {
        let n2 = frame.norm2(f);
        let np = surf.norm_p(f, p);
        let (mut band, mut band_j, mut bessel, mut bern, mut lp) = (0.0, 0, 0.0, 0.0f64, 0.0f64);
        for j in 0..=settings.j_max {
            let pj = lp_project(frame, settings, f, j)?;
            let pj2 = frame.norm2(&pj);
            let lap = frame.laplacian(&pj);
            let b = frame.norm2(&lap) / (4f64.powi(j as i32) * n2);
            if b > band {
                band = b;
                band_j = j;
            }
            bessel += pj2 * pj2;
            let pjp = surf.norm_p(&pj, p);
            bern = bern.max(pjp / ((2f64.powf((1.0 - 2.0 / p) * j as f64) + 1.0) * n2));
            lp = lp.max(pjp / np);
        }
        let row = |property, measured, tolerance, level| BatteryRow {
            property,
            probe: name.clone(),
            measured,
            tolerance,
            level,
        };
        rows.push(row("finite_band", band, Some(c_star + 1e-6), Some(band_j)));
        rows.push(row("bessel", bessel / (n2 * n2), Some(1.0 + 1e-8), None));
        rows.push(row("weak_bernstein_p4", bern, None, None));
        rows.push(row("lp_bounded_p4", lp, None, None));
    }
    Ok(BatteryReport { rows, c_star, bessel_symbol_max: bsm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpcalc::Surface2D;
    use std::f64::consts::TAU;

    fn torus(n: usize) -> HeatFrame {
        HeatFrame::spectral(Surface2D::flat_torus(n, TAU).unwrap()).unwrap()
    }

    fn field(frame: &HeatFrame, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let g = frame.surface().grid;
        (0..g.nodes()).map(|k| f(g.coord(k))).collect()
    }

    #[test]
    fn heat_on_mode_matches_symbol() {
        let fr = torus(15);
        let f = field(&fr, |[x, _]| (3.0 * x).cos());
        let u = fr.heat_evolve(&f, 0.1);
        for (a, b) in u.iter().zip(&f) {
            assert!((a - (-0.9f64).exp() * b).abs() < 1e-10);
        }
        assert_eq!(fr.heat_evolve(&f, 0.0), f);
    }

    #[test]
    fn projection_on_mode_matches_symbol() {
        let fr = torus(15);
        let s = LpSettings::auto(&fr);
        let f = field(&fr, |[x, _]| (3.0 * x).cos());
        for j in 0..=s.j_max {
            let p = lp_project(&fr, &s, &f, j).unwrap();
            let c = (-9.0 * 0.25f64.powi(j as i32 + 1)).exp() - (-9.0 * 0.25f64.powi(j as i32)).exp();
            assert!(p.iter().zip(&f).all(|(a, b)| (a - c * b).abs() < 1e-10));
        }
        assert!(matches!(lp_project(&fr, &s, &f, s.j_max + 1), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn constants_pass_through_low_part_only() {
        let fr = torus(11);
        let s = LpSettings::auto(&fr);
        let one = vec![2.0; fr.op.nodes()];
        assert!(lp_low(&fr, &one).iter().all(|v| (v - 2.0).abs() < 1e-10));
        assert!(lp_project(&fr, &s, &one, 0).unwrap().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn band_star_is_interior_maximum() {
        let c = band_constant_star();
        let h = |s: f64| s * ((-s / 4.0).exp() - (-s).exp());
        let brute = (0..200_000).map(|k| h(k as f64 * 1e-4)).fold(0.0, f64::max);
        assert!((c - brute).abs() < 1e-8);
        assert!(c > 1.0 && c < 1.5);
    }

    #[test]
    fn first_eigenfunction_band_level() {
        let fr = torus(11);
        let s = LpSettings::auto(&fr);
        let f = field(&fr, |[x, _]| x.sin());
        let rep = lp_property_battery(&fr, &s, &[("phi1".into(), f)]).unwrap();
        assert_eq!(rep.row("finite_band", "phi1").unwrap().level, Some(0));
        assert!(rep.rows.iter().all(BatteryRow::passes));
    }

    #[test]
    fn fractional_powers() {
        let fr = torus(15);
        let s = LpSettings::auto(&fr);
        let f = field(&fr, |[x, y]| (2.0 * x).cos() + 0.5 * (x + 3.0 * y).sin() + 0.2);
        let spectral = lambda_alpha(&fr, &s, &f, -1.0, LambdaMethod::Spectral).unwrap();
        let quad = lambda_alpha(&fr, &s, &f, -1.0, LambdaMethod::Quadrature).unwrap();
        let diff: Vec<f64> = spectral.iter().zip(&quad).map(|(a, b)| a - b).collect();
        assert!(fr.norm2(&diff) / fr.norm2(&spectral) < 1e-4);
        let id = lambda_alpha(&fr, &s, &f, 0.0, LambdaMethod::Spectral).unwrap();
        assert!(id.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(matches!(
            lambda_alpha(&fr, &s, &f, 0.5, LambdaMethod::Quadrature),
            Err(Error::QuadratureUnsupported { .. })
        ));
    }

    #[test]
    fn sobolev_of_mode_is_near_symbol() {
        let fr = torus(15);
        let s = LpSettings::auto(&fr);
        let k = 3.0;
        let f = field(&fr, |[x, _]| (k * x).cos());
        let v = sobolev_norm(&fr, &s, &f, 1.0).unwrap();
        let r = v / ((1.0 + k * k).sqrt() * fr.norm2(&f));
        assert!((0.25..=4.0).contains(&r), "{r}");
        assert_eq!(sobolev_norm(&fr, &s, &vec![0.0; f.len()], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn besov_constant_is_sqrt_area() {
        let fr = torus(11);
        let one = vec![1.0; fr.op.nodes()];
        let b = besov_norm(&[(&fr, &one)], 6).unwrap();
        assert!((b.value - fr.surface().area().sqrt()).abs() < 1e-9);
        assert!(matches!(besov_norm(&[], 3), Err(Error::InsufficientLeaves { .. })));
    }

    #[test]
    fn stepper_backend_serves_projections() {
        let surf = Surface2D::flat_torus(9, TAU).unwrap();
        let fr = HeatFrame::new(surf, "stepper").unwrap();
        let s = LpSettings::auto(&fr);
        let f = field(&fr, |[x, _]| x.cos());
        let p = lp_project(&fr, &s, &f, 0).unwrap();
        let c = (-0.25f64).exp() - (-1.0f64).exp();
        assert!(p.iter().zip(&f).all(|(a, b)| (a - c * b).abs() < 2e-2));
    }

    #[test]
    fn heat_energy_balance() {
        let fr = torus(13);
        let f = field(&fr, |[x, y]| (x + y).sin() + 0.3 * (2.0 * y).cos());
        let d = heat_energy_defect(&fr, &f, 0.5, 40);
        assert!(d.abs() < 1e-10 * fr.norm2(&f).powi(2), "{d}");
    }
}
