//! Property tests for invariants of the LP calculus, the parametrix, the ω-atlas and
//! the file formats.

use std::f64::consts::TAU;

use eikonal_core::foliation::Direction;
use eikonal_core::gridfile::{GridData, Lattice};
use eikonal_core::harness::RunConfig;
use eikonal_core::lpcalc::{
    inequality_ratios, lp_project, DifferentiatorRegistry, HeatFrame, LpSettings, Surface2D,
};
use eikonal_core::phase::{
    build_atlas, evaluate_parametrix, tangent_vector, ConjugateSymbol, FlatPhase, GaussianSymbol, NegatedPhase,
    OmegaGrid, QuadratureNodes, SampleSet, SumSymbol,
};
use nalgebra::Vector3;
use num_complex::Complex64;
use proptest::prelude::*;

const N: usize = 15;

fn frame() -> HeatFrame {
    HeatFrame::new(Surface2D::flat_torus(N, TAU).unwrap(), "spectral").unwrap()
}

fn field(coeffs: &[f64]) -> Vec<f64> {
    let s = Surface2D::flat_torus(N, TAU).unwrap();
    (0..s.nodes())
        .map(|k| {
            let [x, y] = s.grid.coord(k);
            coeffs[0] + coeffs[1] * x.cos() + coeffs[2] * (2.0 * y).sin() + coeffs[3] * (3.0 * x - y).cos()
                + coeffs[4] * (x + 4.0 * y).sin()
        })
        .collect()
}

fn inner(frame: &HeatFrame, f: &[f64], g: &[f64]) -> f64 {
    let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
    frame.integral(&fg)
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 5)
}

fn small_nodes() -> QuadratureNodes {
    QuadratureNodes { n_cos: 12, n_phi: 24, n_lambda: 16 }
}

fn points() -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64).prop_map(|(a, b, c)| Vector3::new(a, b, c)), 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lp_projections_are_self_adjoint(a in coeffs(), b in coeffs(), j in 0usize..4) {
        let fr = frame();
        let s = LpSettings::auto(&fr);
        let (f, g) = (field(&a), field(&b));
        let lhs = inner(&fr, &lp_project(&fr, &s, &f, j).unwrap(), &g);
        let rhs = inner(&fr, &f, &lp_project(&fr, &s, &g, j).unwrap());
        let scale = fr.norm2(&f) * fr.norm2(&g);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn heat_flow_is_a_semigroup(a in coeffs(), s in 0.0..0.5f64, t in 0.0..0.5f64) {
        let fr = frame();
        let f = field(&a);
        let twice = fr.heat_evolve(&fr.heat_evolve(&f, s), t);
        let once = fr.heat_evolve(&f, s + t);
        let diff: Vec<f64> = twice.iter().zip(&once).map(|(x, y)| x - y).collect();
        prop_assert!(fr.norm2(&diff) <= 1e-10 * fr.norm2(&f).max(1.0));
    }

    #[test]
    fn inequality_ratios_are_scale_invariant(a in coeffs(), c in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
        prop_assume!(a[1..].iter().any(|v| v.abs() > 0.1));
        let s = Surface2D::flat_torus(N, TAU).unwrap();
        let diff = DifferentiatorRegistry::default().get("spectral").unwrap();
        let f = field(&a);
        let g: Vec<f64> = f.iter().map(|v| c * v).collect();
        let r0 = inequality_ratios(&s, diff.as_ref(), &[("f".into(), f)]);
        let r1 = inequality_ratios(&s, diff.as_ref(), &[("f".into(), g)]);
        for (x, y) in r0.rows.iter().zip(&r1.rows) {
            prop_assert!((x.2 - y.2).abs() <= 1e-10 * x.2.abs().max(1.0), "{}: {} vs {}", x.0, x.2, y.2);
        }
    }

    #[test]
    fn omega_derivatives_are_tangent(theta in 0.05..3.09f64, phi in -3.1..3.1f64, g0 in -5.0..5.0f64, g1 in -5.0..5.0f64) {
        let d = Direction::new(theta, phi);
        prop_assert!(tangent_vector(&d, [g0, g1]).dot(&d.omega()).abs() <= 1e-12 * (1.0 + g0.abs() + g1.abs()));
    }

    #[test]
    fn grid_files_round_trip(values in prop::collection::vec(-1e6..1e6f64, 2 * 27), dx in 0.01..1.0f64) {
        let lattice = Lattice { n: [3, 3, 3], origin: [-dx, 0.5, 2.0], spacing: dx };
        let g = GridData { lattice, ncomp: 2, values };
        let back = GridData::parse(&g.to_text()).unwrap();
        prop_assert_eq!(back.lattice, g.lattice);
        prop_assert_eq!(back.values, g.values);
    }

    #[test]
    fn config_text_round_trips(eps in 0.001..0.1f64, theta in 0.2..2.9f64, levels in 3usize..5, tol in 1e-9..1e-3f64) {
        let mut c = RunConfig::default();
        c.epsilon = eps;
        c.theta = theta;
        c.levels = levels;
        c.set("tol.chart_identity", &tol.to_string()).unwrap();
        prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn parametrix_is_linear_in_the_symbol(pts in points(), re in -2.0..2.0f64, im in -2.0..2.0f64, sigma in 0.6..1.4f64) {
        // Equal widths give both symbols the same λ range, so the quadrature is shared.
        let a = GaussianSymbol { amplitude: Complex64::new(re, im), sigma, dipole: None };
        let b = GaussianSymbol { sigma, dipole: Some(Vector3::new(0.3, -0.2, 0.9)), ..Default::default() };
        let sa = evaluate_parametrix(&FlatPhase, &a, &pts, small_nodes()).unwrap();
        let sb = evaluate_parametrix(&FlatPhase, &b, &pts, small_nodes()).unwrap();
        let sum = evaluate_parametrix(&FlatPhase, &SumSymbol(a, b), &pts, small_nodes()).unwrap();
        for k in 0..pts.len() {
            let scale = sa[k].norm() + sb[k].norm() + 1.0;
            prop_assert!((sum[k] - sa[k] - sb[k]).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn parametrix_conjugates_under_phase_negation(pts in points(), re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let f = GaussianSymbol {
            amplitude: Complex64::new(re, im),
            dipole: Some(Vector3::new(0.5, 0.1, -0.4)),
            ..Default::default()
        };
        let direct = evaluate_parametrix(&FlatPhase, &f, &pts, small_nodes()).unwrap();
        let mirrored = evaluate_parametrix(&NegatedPhase(FlatPhase), &ConjugateSymbol(f), &pts, small_nodes()).unwrap();
        for (x, y) in direct.iter().zip(&mirrored) {
            prop_assert!((x.conj() - y).norm() <= 1e-10 * (x.norm() + 1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn marched_atlas_derivatives_are_tangent(theta in 0.4..2.7f64, phi in -3.0..3.0f64) {
        let cfg = RunConfig::default();
        let bg = cfg.background().unwrap();
        let grid = OmegaGrid::cross(Direction::new(theta, phi), cfg.omega_step).unwrap();
        let atlas = build_atlas(&bg, grid, &cfg.march_params(0), SampleSet::Lattice(Lattice::cube(1.0, 0.5))).unwrap();
        prop_assert!(atlas.tangency_defect() <= 1e-12, "{}", atlas.tangency_defect());
    }
}
