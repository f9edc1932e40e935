//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment and blank lines are ignored. Unknown
//! keys are rejected so that typos cannot silently fall back to defaults. Tolerances are
//! overridden with `tol.<name> = value`, where `<name>` is one of [`Tolerances::NAMES`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::background::{make_background, Background, FamilyParams, FamilyRegistry};
use crate::error::{Error, Result};
use crate::foliation::{Direction, MarchParams};
use crate::gridfile::Lattice;
use crate::phase::QuadratureNodes;

/// Named acceptance tolerances with their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Tolerances {
    pub const NAMES: [(&'static str, f64); 22] = [
        ("flat", 1e-8),
        ("flat_runtime_s", 30.0),
        ("choice", 1e-12),
        ("eikonal_order_min", 1.5),
        ("structure_order_min", 1.5),
        ("structure_order_max", 2.5),
        ("structure_runtime_s", 600.0),
        ("partition", 1e-6),
        ("band_slack", 1e-6),
        ("bessel_slack", 1e-8),
        ("lambda_quadrature", 1e-4),
        ("lambda_group", 1e-10),
        ("identity_flat", 1e-4),
        ("identity_order_min", 1.8),
        ("identity_order_max", 2.2),
        ("chart_det_min", 0.5),
        ("chart_det_max", 1.5),
        ("chart_identity", 1e-3),
        ("taylor_slope_min", 1.8),
        ("taylor_slope_max", 2.2),
        ("taylor_linearity", 0.3),
        ("parametrix", 1e-3),
    ];

    pub fn get(&self, name: &str) -> f64 {
        *self.0.get(name).unwrap_or_else(|| panic!("unknown tolerance '{name}'"))
    }

    fn set(&mut self, name: &str, v: f64) -> Result<()> {
        match self.0.get_mut(name) {
            Some(t) => {
                *t = v;
                Ok(())
            }
            None => Err(Error::UnknownName {
                kind: "tolerance",
                name: name.into(),
                known: Self::NAMES.iter().map(|n| n.0).collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self(Self::NAMES.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub out: Option<PathBuf>,

    pub family: String,
    pub epsilon: f64,
    pub support_radius: f64,
    pub k_epsilon: f64,
    pub metric_table: Option<PathBuf>,
    pub k_table: Option<PathBuf>,
    /// Amplitudes of the ε-sweeps in the chart and Taylor scenarios.
    pub epsilons: Vec<f64>,
    /// Half width and spacing of the background lattice.
    pub lattice_half_width: f64,
    pub lattice_dx: f64,

    pub half_width: f64,
    pub dq: f64,
    pub du: f64,
    pub a_min: f64,
    pub c_stab: f64,
    pub r_pin: f64,
    /// Target label spacing of stored leaves; each level stores every
    /// `max(1, floor(store_du / du))`-th leaf.
    pub store_du: f64,
    pub levels: usize,

    pub theta: f64,
    pub phi: f64,
    pub omega_step: f64,
    pub sample_half_width: f64,
    pub sample_dx: f64,
    pub core_radius: f64,
    pub core_dx: f64,
    pub chart_levels: usize,
    pub taylor_s0: f64,
    pub taylor_level: u32,
    pub taylor_dx: f64,

    pub flat_half_width: f64,
    pub flat_nodes: usize,
    pub flat_steps: usize,
    pub flat_lattice_nodes: usize,

    pub lp_n: usize,
    /// Fixed LP cutoff; `None` selects the smallest admissible one.
    pub lp_j: Option<usize>,
    pub lp_quad_nodes: usize,
    pub lp_backend: String,
    pub lp_derivative: String,
    pub identity_levels: Vec<usize>,

    pub parametrix_phase: String,
    pub parametrix_nodes: QuadratureNodes,
    pub parametrix_level: u32,

    pub tol: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "all".into(),
            out: None,
            family: "bump".into(),
            epsilon: 0.05,
            support_radius: 1.0,
            k_epsilon: 0.0,
            metric_table: None,
            k_table: None,
            epsilons: vec![0.0125, 0.025, 0.05],
            lattice_half_width: 3.0,
            lattice_dx: 0.1,
            half_width: 3.0,
            dq: 0.2,
            du: 0.008,
            a_min: 0.1,
            c_stab: 0.2,
            r_pin: 2.5,
            store_du: 0.004,
            levels: 3,
            theta: 1.1,
            phi: 0.4,
            omega_step: 0.05,
            sample_half_width: 2.2,
            sample_dx: 0.1,
            core_radius: 1.0,
            core_dx: 0.05,
            chart_levels: 3,
            taylor_s0: 0.04,
            taylor_level: 0,
            taylor_dx: 0.2,
            flat_half_width: 10.0,
            flat_nodes: 64,
            flat_steps: 200,
            flat_lattice_nodes: 64,
            lp_n: 31,
            lp_j: None,
            lp_quad_nodes: 400,
            lp_backend: "auto".into(),
            lp_derivative: "spectral".into(),
            identity_levels: vec![64, 128, 256],
            parametrix_phase: "flat".into(),
            parametrix_nodes: QuadratureNodes::default(),
            parametrix_level: 0,
            tol: Tolerances::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if let Some(name) = key.strip_prefix("tol.") {
            return self.tol.set(name, parse_num(key, v)?);
        }
        match key {
            "scenario" => self.scenario = v.into(),
            "out" => self.out = Some(v.into()),
            "family" => self.family = v.into(),
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "support_radius" => self.support_radius = parse_num(key, v)?,
            "k_epsilon" => self.k_epsilon = parse_num(key, v)?,
            "metric_table" => self.metric_table = Some(v.into()),
            "k_table" => self.k_table = Some(v.into()),
            "epsilons" => self.epsilons = parse_list(key, v)?,
            "lattice_half_width" => self.lattice_half_width = parse_num(key, v)?,
            "lattice_dx" => self.lattice_dx = parse_num(key, v)?,
            "half_width" => self.half_width = parse_num(key, v)?,
            "dq" => self.dq = parse_num(key, v)?,
            "du" => self.du = parse_num(key, v)?,
            "a_min" => self.a_min = parse_num(key, v)?,
            "c_stab" => self.c_stab = parse_num(key, v)?,
            "r_pin" => self.r_pin = parse_num(key, v)?,
            "store_du" => self.store_du = parse_num(key, v)?,
            "levels" => self.levels = parse_num(key, v)?,
            "theta" => self.theta = parse_num(key, v)?,
            "phi" => self.phi = parse_num(key, v)?,
            "omega_step" => self.omega_step = parse_num(key, v)?,
            "sample_half_width" => self.sample_half_width = parse_num(key, v)?,
            "sample_dx" => self.sample_dx = parse_num(key, v)?,
            "core_radius" => self.core_radius = parse_num(key, v)?,
            "core_dx" => self.core_dx = parse_num(key, v)?,
            "chart_levels" => self.chart_levels = parse_num(key, v)?,
            "taylor_s0" => self.taylor_s0 = parse_num(key, v)?,
            "taylor_level" => self.taylor_level = parse_num(key, v)?,
            "taylor_dx" => self.taylor_dx = parse_num(key, v)?,
            "flat_half_width" => self.flat_half_width = parse_num(key, v)?,
            "flat_nodes" => self.flat_nodes = parse_num(key, v)?,
            "flat_steps" => self.flat_steps = parse_num(key, v)?,
            "flat_lattice_nodes" => self.flat_lattice_nodes = parse_num(key, v)?,
            "lp_n" => self.lp_n = parse_num(key, v)?,
            "lp_j" => self.lp_j = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "lp_quad_nodes" => self.lp_quad_nodes = parse_num(key, v)?,
            "lp_backend" => self.lp_backend = v.into(),
            "lp_derivative" => self.lp_derivative = v.into(),
            "identity_levels" => self.identity_levels = parse_list(key, v)?,
            "parametrix_phase" => self.parametrix_phase = v.into(),
            "parametrix_n_cos" => self.parametrix_nodes.n_cos = parse_num(key, v)?,
            "parametrix_n_phi" => self.parametrix_nodes.n_phi = parse_num(key, v)?,
            "parametrix_n_lambda" => self.parametrix_nodes.n_lambda = parse_num(key, v)?,
            "parametrix_level" => self.parametrix_level = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks spacings and the march stability bound at every level before any compute.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lattice_dx", self.lattice_dx),
            ("sample_dx", self.sample_dx),
            ("core_dx", self.core_dx),
            ("taylor_dx", self.taylor_dx),
            ("omega_step", self.omega_step),
            ("taylor_s0", self.taylor_s0),
            ("store_du", self.store_du),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be > 0, got {v}")));
            }
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config("epsilons must be a nonempty list of values >= 0".into()));
        }
        if self.lp_n % 2 == 0 || self.lp_n < 5 {
            return Err(Error::Config(format!("lp_n must be odd and >= 5, got {}", self.lp_n)));
        }
        for l in 0..self.levels.max(self.chart_levels).max(1) {
            self.march_params(l as u32).validate()?;
        }
        self.flat_params().validate()
    }

    pub fn direction(&self) -> Direction {
        Direction::new(self.theta, self.phi)
    }

    pub fn family_params(&self, epsilon: f64) -> FamilyParams {
        FamilyParams {
            epsilon,
            support_radius: self.support_radius,
            k_epsilon: self.k_epsilon,
            metric_table: self.metric_table.clone(),
            k_table: self.k_table.clone(),
        }
    }

    /// Background of the configured family at amplitude `epsilon` on a lattice of spacing `dx`.
    pub fn background_at(&self, epsilon: f64, dx: f64) -> Result<Background> {
        let lattice = Lattice::cube(self.lattice_half_width, dx);
        make_background(&FamilyRegistry::with_builtin(), &self.family, &self.family_params(epsilon), lattice)
    }

    pub fn background(&self) -> Result<Background> {
        self.background_at(self.epsilon, self.lattice_dx)
    }

    /// Level `l` of the refinement ladder: `Δq / 2^l`, `Δu / 4^l`.
    pub fn march_params(&self, level: u32) -> MarchParams {
        let s = f64::from(1u32 << level);
        let du = self.du / (s * s);
        MarchParams {
            half_width: self.half_width,
            dq: self.dq / s,
            du,
            a_min: self.a_min,
            c_stab: self.c_stab,
            r_pin: self.r_pin,
            store_every: ((self.store_du / du) + 1e-9).floor().max(1.0) as usize,
            keep_u: Vec::new(),
        }
    }

    /// Coarse flat-space march: `flat_nodes²` base grid and `flat_steps` steps.
    pub fn flat_params(&self) -> MarchParams {
        let dq = 2.0 * self.flat_half_width / (self.flat_nodes - 1) as f64;
        MarchParams {
            half_width: self.flat_half_width,
            dq,
            du: 4.0 / self.flat_steps as f64,
            a_min: self.a_min,
            c_stab: self.c_stab,
            r_pin: self.r_pin,
            store_every: 1,
            keep_u: vec![-1.0, 0.0, 1.0],
        }
    }

    /// `key = value` echo of every setting, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut out = vec![
            ("scenario", self.scenario.clone()),
            ("family", self.family.clone()),
            ("epsilon", format!("{}", self.epsilon)),
            ("support_radius", format!("{}", self.support_radius)),
            ("k_epsilon", format!("{}", self.k_epsilon)),
            ("epsilons", list(&self.epsilons)),
            ("lattice_half_width", format!("{}", self.lattice_half_width)),
            ("lattice_dx", format!("{}", self.lattice_dx)),
            ("half_width", format!("{}", self.half_width)),
            ("dq", format!("{}", self.dq)),
            ("du", format!("{}", self.du)),
            ("a_min", format!("{}", self.a_min)),
            ("c_stab", format!("{}", self.c_stab)),
            ("r_pin", format!("{}", self.r_pin)),
            ("store_du", format!("{}", self.store_du)),
            ("levels", format!("{}", self.levels)),
            ("theta", format!("{}", self.theta)),
            ("phi", format!("{}", self.phi)),
            ("omega_step", format!("{}", self.omega_step)),
            ("sample_half_width", format!("{}", self.sample_half_width)),
            ("sample_dx", format!("{}", self.sample_dx)),
            ("core_radius", format!("{}", self.core_radius)),
            ("core_dx", format!("{}", self.core_dx)),
            ("chart_levels", format!("{}", self.chart_levels)),
            ("taylor_s0", format!("{}", self.taylor_s0)),
            ("taylor_level", format!("{}", self.taylor_level)),
            ("taylor_dx", format!("{}", self.taylor_dx)),
            ("flat_half_width", format!("{}", self.flat_half_width)),
            ("flat_nodes", format!("{}", self.flat_nodes)),
            ("flat_steps", format!("{}", self.flat_steps)),
            ("flat_lattice_nodes", format!("{}", self.flat_lattice_nodes)),
            ("lp_n", format!("{}", self.lp_n)),
            ("lp_j", self.lp_j.map_or("auto".into(), |j| j.to_string())),
            ("lp_quad_nodes", format!("{}", self.lp_quad_nodes)),
            ("lp_backend", self.lp_backend.clone()),
            ("lp_derivative", self.lp_derivative.clone()),
            (
                "identity_levels",
                self.identity_levels.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("parametrix_phase", self.parametrix_phase.clone()),
            ("parametrix_n_cos", self.parametrix_nodes.n_cos.to_string()),
            ("parametrix_n_phi", self.parametrix_nodes.n_phi.to_string()),
            ("parametrix_n_lambda", self.parametrix_nodes.n_lambda.to_string()),
            ("parametrix_level", self.parametrix_level.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect::<Vec<_>>();
        if let Some(p) = &self.metric_table {
            out.push(("metric_table".into(), p.display().to_string()));
        }
        if let Some(p) = &self.k_table {
            out.push(("k_table".into(), p.display().to_string()));
        }
        for (k, v) in &self.tol.0 {
            out.push((format!("tol.{k}"), format!("{v}")));
        }
        out
    }

    /// The echo as a config file that parses back to the same settings (minus `out`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.echo() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_echo_round_trip() {
        let text = "# bump run\nfamily = bump\nepsilon = 0.025  # halved\nlevels = 4\nlp_j = 6\ntol.chart_identity = 5e-4\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.epsilon, 0.025);
        assert_eq!(c.levels, 4);
        assert_eq!(c.lp_j, Some(6));
        assert_eq!(c.tol.get("chart_identity"), 5e-4);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(matches!(RunConfig::parse("epsilom = 0.1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("tol.nope = 1"), Err(Error::UnknownName { .. })));
        assert!(matches!(RunConfig::parse("epsilon 0.1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("levels = many"), Err(Error::Config(_))));
    }

    #[test]
    fn unstable_step_is_caught_before_compute() {
        let c = RunConfig::parse("du = 0.05").unwrap();
        assert!(matches!(c.validate(), Err(Error::StabilityViolated { .. })));
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn ladder_and_storage() {
        let c = RunConfig::default();
        let p: Vec<_> = (0..3).map(|l| c.march_params(l)).collect();
        assert_eq!(p.iter().map(|p| p.store_every).collect::<Vec<_>>(), vec![1, 2, 8]);
        assert!((p[2].dq - 0.05).abs() < 1e-15 && (p[2].du - 0.0005).abs() < 1e-15);
        let f = c.flat_params();
        assert_eq!(f.grid().n, 64);
        assert_eq!(f.steps().unwrap(), 200);
    }
}
