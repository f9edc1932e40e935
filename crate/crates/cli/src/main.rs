//! `eikonal`: march foliations, build ω-atlases and run verification scenarios.
//!
//! Thread count comes from `EIKONAL_THREADS` (default: all cores).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eikonal_core::foliation::{march, structure_csv, structure_residuals, write_leaves, GaussianProbe, MarchParams};
use eikonal_core::gridfile::Lattice;
use eikonal_core::harness::{
    convergence_study, run_scenario, ReportBundle, RunConfig, ScenarioRegistry, Status, KEEP_U, R_EVAL,
};
use eikonal_core::phase::{build_atlas, OmegaGrid, SampleSet};
use eikonal_core::Result;

#[derive(Parser)]
#[command(name = "eikonal", version, about = "Lapse-parabolic foliation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set epsilon=0.025`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// March the configured direction at one refinement level and dump its leaves.
    March {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        level: u32,
    },
    /// Build a cross-shaped ω-atlas on the sample lattice and write it as grid files.
    Atlas {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        level: u32,
    },
    /// Littlewood–Paley battery, fractional powers, Bochner and Hodge identities.
    Lp(Common),
    /// Global chart diagnostics.
    Charts(Common),
    /// Taylor comparison in ω and ω-derivative identities.
    Taylor(Common),
    /// Plane-wave parametrix against its Gaussian oracle.
    Parametrix(Common),
    /// Run a named scenario (default: the configured one, `all` unless overridden).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<String>,
        /// List registered scenarios and exit.
        #[arg(long)]
        list: bool,
    },
    /// Structure-residual convergence study over the march refinement ladder.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| eikonal_core::Error::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_bundle(b: &ReportBundle) {
    for r in &b.rows {
        if r.criterion.is_some() || matches!(r.status, Status::Fail) {
            println!("{:<7} {:<40} {:>12.4e}  {}", r.status.to_string(), r.check, r.value, r.bound);
        }
    }
    println!("wall time {:.1} s", b.wall_time);
}

fn scenario(common: &Common, name: &str) -> Result<bool> {
    let mut cfg = load(common)?;
    cfg.scenario = name.to_string();
    let b = run_scenario(&cfg)?;
    print_bundle(&b);
    Ok(!b.has_failures())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::March { common, level } => {
            let cfg = load(&common)?;
            let bg = cfg.background()?;
            let params = MarchParams { keep_u: KEEP_U.to_vec(), ..cfg.march_params(level) };
            let trace = march(&bg, cfg.direction(), &params)?;
            let rep = structure_residuals(&trace, &bg, &GaussianProbe::default(), R_EVAL)?;
            print!("{}", structure_csv(&rep));
            println!("choice_residual,{:e}", trace.choice_residual);
            if let Some(dir) = &cfg.out {
                std::fs::create_dir_all(dir)?;
                write_leaves(&trace, &dir.join("leaves.txt"))?;
                std::fs::write(dir.join("structure.csv"), structure_csv(&rep))?;
            }
            Ok(true)
        }
        Command::Atlas { common, level } => {
            let cfg = load(&common)?;
            let dir = cfg
                .out
                .clone()
                .ok_or_else(|| eikonal_core::Error::Config("atlas needs --out".into()))?;
            let bg = cfg.background()?;
            let grid = OmegaGrid::cross(cfg.direction(), cfg.omega_step)?;
            let lattice = Lattice::cube(cfg.sample_half_width, cfg.sample_dx);
            let atlas = build_atlas(&bg, grid, &cfg.march_params(level), SampleSet::Lattice(lattice))?;
            atlas.write_dir(&dir)?;
            println!("tangency_defect,{:e}", atlas.tangency_defect());
            Ok(true)
        }
        Command::Lp(c) => scenario(&c, "lp-battery"),
        Command::Charts(c) => scenario(&c, "charts"),
        Command::Taylor(c) => scenario(&c, "taylor"),
        Command::Parametrix(c) => scenario(&c, "parametrix"),
        Command::Verify { common, scenario: name, list } => {
            if list {
                let reg = ScenarioRegistry::default();
                for n in reg.names() {
                    println!("{n:<16} {}", reg.build(n)?.description());
                }
                return Ok(true);
            }
            let name = match name {
                Some(n) => n,
                None => load(&common)?.scenario,
            };
            scenario(&common, &name)
        }
        Command::Converge { common, levels } => {
            let cfg = load(&common)?;
            let b = convergence_study(&cfg, levels)?;
            if let Some(dir) = &cfg.out {
                b.write(dir)?;
            }
            for r in &b.rows {
                println!("{:<9} {:<24} {:>10.4}  {}", r.status.to_string(), r.check, r.value, r.bound);
            }
            Ok(!b.has_failures())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("EIKONAL_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
