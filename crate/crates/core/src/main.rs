use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gridflex::dynamics::{simulate, Policy, SimConfig};
use gridflex::grid::{parse_grid, Grid, ParseOptions};
use gridflex::harness::{run_comparison, verify_report, CompareConfig, SUMMARY};
use gridflex::opt::{initial_policy, optimize, LbfgsSettings, SchemeId, SchemeSpec};
use gridflex::scenarios::{read_scenario_csv, read_scenario_dir, write_scenario_dir, ScenarioConfig};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "gridflex", version, about = "Ensemble-tuned frequency and line-flow feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a grid file.
    Validate {
        #[arg(long)]
        grid: PathBuf,
        /// Merge co-located generators.
        #[arg(long)]
        aggregate: bool,
        /// Control period length for default energy targets.
        #[arg(long, default_value_t = 1.0)]
        horizon_hours: f64,
    },
    /// Generate a scenario ensemble directory.
    GenScenarios {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 5.0)]
        delta_min: f64,
    },
    /// Optimize one scheme on a scenario directory.
    Optimize {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        scheme: SchemeId,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with optimizer settings.
        #[arg(long)]
        optimizer: Option<PathBuf>,
        /// JSON file with simulation settings.
        #[arg(long)]
        simulation: Option<PathBuf>,
    },
    /// Simulate a policy on one scenario CSV.
    Simulate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        simulation: Option<PathBuf>,
    },
    /// Optimize every configured scheme and write a report directory.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate one random scheme/scenario pair of a report.
    VerifyReport {
        dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_grid(path: &Path, opts: &ParseOptions) -> Result<Grid> {
    parse_grid(&read(path)?, opts).with_context(|| format!("grid {}", path.display()))
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(T::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate {
            grid,
            aggregate,
            horizon_hours,
        } => {
            let opts = ParseOptions {
                horizon_hours,
                aggregate,
                ..ParseOptions::default()
            };
            let g = load_grid(&grid, &opts)?;
            println!(
                "ok: {} buses, {} lines, {} online generators, reference bus {}",
                g.n_buses(),
                g.n_lines(),
                g.online_generators().len(),
                g.reference_bus()
            );
        }
        Command::GenScenarios {
            config,
            grid,
            out,
            seed,
            delta_min,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let opts = ParseOptions {
                horizon_hours: cfg.horizon as f64 * delta_min / 60.0,
                ..ParseOptions::default()
            };
            let g = load_grid(&grid, &opts)?;
            let Some(seed) = seed.or(cfg.seed) else {
                bail!("no seed: set \"seed\" in {} or pass --seed", config.display());
            };
            let set = cfg.generate(&g, seed)?;
            write_scenario_dir(&set, &out)?;
            println!("wrote {} scenarios to {}", set.len(), out.display());
        }
        Command::Optimize {
            grid,
            scenarios,
            scheme,
            out,
            optimizer,
            simulation,
        } => {
            let settings: LbfgsSettings = load_json(optimizer.as_deref())?;
            let sim: SimConfig = load_json(simulation.as_deref())?;
            sim.validate()?;
            let ensemble = read_scenario_dir(&scenarios)?;
            if ensemble.is_empty() {
                bail!("{} holds no scenarios", scenarios.display());
            }
            let opts = ParseOptions {
                horizon_hours: ensemble.horizon() as f64 * sim.delta_min / 60.0,
                ..ParseOptions::default()
            };
            let g = load_grid(&grid, &opts)?;
            let initial = initial_policy(&g, &ensemble.scenarios[0]);
            let (policy, report) = optimize(&initial, &g, &ensemble, &SchemeSpec::new(scheme), &settings, &sim)?;
            fs::write(&out, policy.to_json(&g)).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "{scheme}: objective {:e} -> {:e} in {} iterations ({:?})",
                report.initial_objective(),
                report.final_objective(),
                report.iterations,
                report.termination
            );
        }
        Command::Simulate {
            grid,
            policy,
            scenario,
            out,
            simulation,
        } => {
            let sim: SimConfig = load_json(simulation.as_deref())?;
            let g = load_grid(&grid, &ParseOptions::default())?;
            let p = Policy::from_json(&read(&policy)?, &g)?;
            let sc = read_scenario_csv(&scenario, 0, p.horizon() + 1, g.n_buses(), g.online_generators(), 1.0)?;
            let tr = simulate(&g, &p, &sc, sim)?;
            fs::write(&out, tr.to_csv(&g)).with_context(|| format!("writing {}", out.display()))?;
            let (w, t) = tr.max_abs_omega();
            println!("max |omega| {w:e} Hz at t = {t}");
        }
        Command::Compare { config, out } => {
            let cfg = CompareConfig::load(&config)?;
            let report = run_comparison(&cfg, &out)?;
            for s in &report.schemes {
                println!(
                    "{:16} train {:.6e}  validation {:.6e}  worst |omega| {:.4e} Hz (scenario {}, t {})",
                    s.scheme.slug(),
                    s.training_objective,
                    s.validation_objective,
                    s.worst_case.max_abs_omega_hz,
                    s.worst_case.scenario_id,
                    s.worst_case.t
                );
            }
            println!("report: {}", out.join(SUMMARY).display());
        }
        Command::VerifyReport { dir, seed } => {
            let v = verify_report(&dir, seed)?;
            println!(
                "ok: {} scenario {} max trajectory difference {:e}",
                v.scheme.slug(),
                v.scenario_id,
                v.max_abs_diff
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridflex::bundled::DeskCase;

    fn cli(args: &[&str]) -> Result<()> {
        run(Cli::try_parse_from(std::iter::once("gridflex").chain(args.iter().copied()))?)
    }

    #[test]
    fn pipeline_on_a_small_case() {
        let tmp = tempfile::tempdir().unwrap();
        let case = DeskCase {
            horizon: 3,
            scenarios: 3,
            n_train: 2,
            ..Default::default()
        };
        case.write(tmp.path()).unwrap();
        let p = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
        cli(&["validate", "--grid", &p("grid.json")]).unwrap();
        cli(&["gen-scenarios", "--config", &p("scenarios.json"), "--grid", &p("grid.json"), "--out", &p("sc")]).unwrap();
        fs::write(tmp.path().join("opt.json"), r#"{"max_iterations": 20}"#).unwrap();
        cli(&[
            "optimize", "--grid", &p("grid.json"), "--scenarios", &p("sc"), "--scheme", "flow-p",
            "--optimizer", &p("opt.json"), "--out", &p("policy.json"),
        ])
        .unwrap();
        cli(&[
            "simulate", "--grid", &p("grid.json"), "--policy", &p("policy.json"),
            "--scenario", &p("sc/scenario_001.csv"), "--out", &p("traj.csv"),
        ])
        .unwrap();
        let traj = fs::read_to_string(tmp.path().join("traj.csv")).unwrap();
        assert!(traj.starts_with("t,entity,id,quantity,value\n"));
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(Cli::try_parse_from(["gridflex", "optimize", "--scheme", "bogus"]).is_err());
        let err = cli(&["validate", "--grid", "/nonexistent/grid.json"]).unwrap_err();
        assert!(format!("{err:#}").contains("/nonexistent/grid.json"));
        let err = cli(&["verify-report", "/nonexistent/report"]).unwrap_err();
        assert!(err.to_string().contains("summary.json"));
    }
}
