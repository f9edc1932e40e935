//! Run configuration, scenario registry, convergence studies and CSV reports.

mod checks;
mod config;
mod report;
mod scenarios;

pub use checks::{convergence_study, parametrix_points, structure_ladder, wavy_metric, LevelRun, FLOOR, KEEP_U, R_EVAL};
pub use config::{RunConfig, Tolerances};
pub use report::{num, Bound, ReportBundle, Status, SummaryRow, Table};
pub use scenarios::{run_scenario, run_with, Scenario, ScenarioCtor, ScenarioRegistry};
