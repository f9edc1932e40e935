//! Acceptance run: every scenario at default settings, one line per criterion.
//!
//! The full report bundle is written to `<target>/tmp/acceptance/`.

use std::path::PathBuf;
use std::process::ExitCode;

use eikonal_core::harness::{run_scenario, RunConfig, Status};

const CRITERIA: [(u8, &str); 12] = [
    (1, "flat background reproduces the plane foliation"),
    (2, "lapse choice holds to rounding"),
    (3, "eikonal defect converges at order >= 1.5"),
    (4, "structure residuals converge at order in [1.5, 2.5]"),
    (5, "LP partition of unity"),
    (6, "finite-band property"),
    (7, "Bessel inequality"),
    (8, "fractional powers: quadrature and group law"),
    (9, "Bochner and Hodge identities"),
    (10, "global chart determinant, injectivity and identity"),
    (11, "Taylor comparison in ω"),
    (12, "plane-wave parametrix"),
];

fn main() -> ExitCode {
    let mut cfg = RunConfig::default();
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    cfg.out = Some(out.clone());
    let bundle = match run_scenario(&cfg) {
        Ok(b) => b,
        Err(e) => {
            println!("FAIL  run aborted: {e}");
            return ExitCode::FAILURE;
        }
    };

    let mut failed = 0;
    for (id, what) in CRITERIA {
        let (status, detail) = match bundle.criterion(id) {
            Some(r) if r.status == Status::Pass => ("PASS", format!("worst ratio {:.3e}", r.value)),
            Some(r) => {
                let parts: Vec<&str> = bundle
                    .rows
                    .iter()
                    .filter(|p| p.criterion.is_none() && p.status == Status::Fail)
                    .map(|p| p.check.as_str())
                    .collect();
                ("FAIL", format!("worst ratio {:.3e}; failing checks: {}", r.value, parts.join(", ")))
            }
            None => ("FAIL", "no result".to_string()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status}  criterion {id:>2}: {what} ({detail})");
    }
    println!("report: {}  wall time {:.1} s", out.display(), bundle.wall_time);
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
