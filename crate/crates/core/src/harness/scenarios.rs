//! Named scenarios selected at runtime.

use std::collections::BTreeMap;
use std::time::Instant;

use super::checks;
use super::config::RunConfig;
use super::report::{Bound, ReportBundle, SummaryRow};
use crate::error::{Error, Result};

/// A unit of verification work that appends rows and tables to a bundle.
pub trait Scenario: Send + Sync {
    fn name(&self) -> &str;
    fn description(&self) -> &str;
    fn run(&self, cfg: &RunConfig, out: &mut ReportBundle) -> Result<()>;
}

type Body = fn(&RunConfig, &mut ReportBundle) -> Result<()>;

/// Scenario backed by a plain function.
struct FnScenario {
    name: &'static str,
    description: &'static str,
    body: Body,
}

impl Scenario for FnScenario {
    fn name(&self) -> &str {
        self.name
    }
    fn description(&self) -> &str {
        self.description
    }
    fn run(&self, cfg: &RunConfig, out: &mut ReportBundle) -> Result<()> {
        (self.body)(cfg, out)
    }
}

/// Runs a fixed list of other scenarios in order.
struct Sequence {
    name: &'static str,
    parts: Vec<Box<dyn Scenario>>,
}

impl Scenario for Sequence {
    fn name(&self) -> &str {
        self.name
    }
    fn description(&self) -> &str {
        "every scenario in sequence"
    }
    fn run(&self, cfg: &RunConfig, out: &mut ReportBundle) -> Result<()> {
        self.parts.iter().try_for_each(|s| s.run(cfg, out))
    }
}

pub type ScenarioCtor = fn() -> Box<dyn Scenario>;

const BUILTIN: [(&str, &str, Body); 6] = [
    ("flat-exactness", "flat background reproduces the plane foliation", checks::flat_exactness),
    ("structure", "structure-equation residuals and their convergence", checks::structure),
    ("lp-battery", "Littlewood–Paley properties, fractional powers, Bochner and Hodge", checks::lp_battery),
    ("charts", "global chart determinant and injectivity", checks::charts),
    ("taylor", "Taylor comparison in ω and ω-derivative identities", checks::taylor),
    ("parametrix", "plane-wave parametrix against the Gaussian oracle", checks::parametrix),
];

fn builtin(name: &str) -> Option<Box<dyn Scenario>> {
    BUILTIN.iter().find(|b| b.0 == name).map(|&(name, description, body)| {
        Box::new(FnScenario { name, description, body }) as Box<dyn Scenario>
    })
}

/// Name-keyed scenario constructors.
pub struct ScenarioRegistry {
    ctors: BTreeMap<String, ScenarioCtor>,
}

impl Default for ScenarioRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl ScenarioRegistry {
    pub fn empty() -> Self {
        Self { ctors: BTreeMap::new() }
    }

    /// Registry holding every built-in scenario plus `all`.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("flat-exactness", || builtin("flat-exactness").unwrap());
        r.register("structure", || builtin("structure").unwrap());
        r.register("lp-battery", || builtin("lp-battery").unwrap());
        r.register("charts", || builtin("charts").unwrap());
        r.register("taylor", || builtin("taylor").unwrap());
        r.register("parametrix", || builtin("parametrix").unwrap());
        r.register("all", || {
            Box::new(Sequence { name: "all", parts: BUILTIN.iter().filter_map(|b| builtin(b.0)).collect() })
        });
        r
    }

    pub fn register(&mut self, name: &str, ctor: ScenarioCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.ctors.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn Scenario>> {
        let ctor = self.ctors.get(name).ok_or_else(|| Error::UnknownName {
            kind: "scenario",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        Ok(ctor())
    }
}

/// Validates `cfg`, runs its scenario, appends the run-wide choice row and provenance,
/// and writes the bundle to `cfg.out` when set.
pub fn run_scenario(cfg: &RunConfig) -> Result<ReportBundle> {
    run_with(&ScenarioRegistry::default(), cfg)
}

pub fn run_with(registry: &ScenarioRegistry, cfg: &RunConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let scenario = registry.build(&cfg.scenario)?;
    let start = Instant::now();
    let mut out = ReportBundle::default();
    scenario.run(cfg, &mut out)?;
    if let Some(choice) = out.choice_max {
        let part = SummaryRow::check("choice_residual_max", "a = 1 + k_NN − trθ", choice, Bound::AtMost(cfg.tol.get("choice")));
        out.push(SummaryRow::criterion(2, "lapse_choice", "a = 1 + k_NN − trθ", std::slice::from_ref(&part)));
        out.push(part);
    }
    out.wall_time = start.elapsed().as_secs_f64();
    out.provenance.push(("scenario".into(), scenario.name().into()));
    out.provenance.push(("crate_version".into(), env!("CARGO_PKG_VERSION").into()));
    out.provenance.extend(cfg.echo());
    if let Some(dir) = &cfg.out {
        out.write(dir)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_and_rejects() {
        let r = ScenarioRegistry::default();
        assert_eq!(r.names(), ["all", "charts", "flat-exactness", "lp-battery", "parametrix", "structure", "taylor"]);
        assert!(matches!(r.build("nope"), Err(Error::UnknownName { .. })));
        assert_eq!(r.build("taylor").unwrap().name(), "taylor");
    }

    #[test]
    fn parametrix_scenario_passes_and_writes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.scenario = "parametrix".into();
        cfg.out = Some(dir.path().to_path_buf());
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(b.criterion(12).unwrap().status, super::super::report::Status::Pass);
        assert!(b.criterion(2).is_none());
        assert!(dir.path().join("parametrix.csv").exists());
        assert!(dir.path().join("provenance.txt").exists());
    }

    #[test]
    fn convergence_needs_three_levels() {
        let cfg = RunConfig::default();
        assert!(matches!(checks::convergence_study(&cfg, 2), Err(Error::InsufficientLevels { needed: 3, have: 2 })));
    }
}
