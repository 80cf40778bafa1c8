//! End-to-end comparison of the four control schemes.
//!
//! generate → split → optimize each scheme on the training part → simulate the
//! validation part → write a report directory. The directory is assembled
//! under a temporary sibling and renamed into place once complete.

use crate::costs::{count_violations, scenario_cost, sum_breakdowns, CostBreakdown, ViolationCounts};
use crate::costs::ensemble_objective;
use crate::dynamics::{simulate, ClosedLoop, Policy, SimConfig, Trajectory};
use crate::grid::{parse_grid, Grid, ParseOptions};
use crate::opt::{initial_policy, optimize, LbfgsSettings, OptReport, SchemeId, SchemeSpec};
use crate::scenarios::{read_scenario_dir, split, write_scenario_dir, ScenarioConfig, ScenarioSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("stage '{stage}' failed: {message}{}", completed_note(.completed))]
    Stage {
        stage: &'static str,
        message: String,
        completed: Option<PathBuf>,
    },
    #[error("worst-case scan needs at least one trajectory")]
    NoTrajectories,
}

fn completed_note(p: &Option<PathBuf>) -> String {
    match p {
        Some(p) => format!(" (completed artifacts kept in {})", p.display()),
        None => String::new(),
    }
}

fn stage_err<'a>(stage: &'static str, completed: Option<&'a Path>) -> impl Fn(String) -> HarnessError + 'a {
    move |message| HarnessError::Stage {
        stage,
        message,
        completed: completed.map(Path::to_path_buf),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub n_train: usize,
}

/// Experiment configuration. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub grid: PathBuf,
    #[serde(default)]
    pub aggregate: bool,
    pub scenarios: ScenarioConfig,
    pub schemes: Vec<SchemeId>,
    #[serde(default)]
    pub optimizer: LbfgsSettings,
    pub split: SplitConfig,
    pub seed: u64,
    #[serde(default)]
    pub simulation: SimConfig,
}

impl CompareConfig {
    pub fn load(path: &Path) -> Result<CompareConfig, HarnessError> {
        let err = stage_err("config", None);
        let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let mut cfg: CompareConfig =
            serde_json::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if cfg.grid.is_relative() {
            cfg.grid = dir.join(&cfg.grid);
        }
        cfg.scenarios.resolve_paths(dir);
        Ok(cfg)
    }

    pub fn scenario_seed(&self) -> u64 {
        self.scenarios.seed.unwrap_or(self.seed)
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn horizon_hours(&self) -> f64 {
        self.scenarios.horizon as f64 * self.simulation.delta_min / 60.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub max_abs_omega_hz: f64,
    pub scenario_id: usize,
    pub t: usize,
}

/// Exact max |ω(t)| over the control period `t = 0..T−1` of every trajectory.
/// The terminal step only fixes `x(T)` and carries no frequency cost.
pub fn worst_case_frequency(trajectories: &[Trajectory]) -> Result<WorstCase, HarnessError> {
    let mut best: Option<WorstCase> = None;
    for tr in trajectories {
        for s in control_period(tr) {
            let v = s.omega.abs();
            if best.as_ref().is_none_or(|b| v > b.max_abs_omega_hz) {
                best = Some(WorstCase {
                    max_abs_omega_hz: v,
                    scenario_id: tr.scenario_id,
                    t: s.t,
                });
            }
        }
    }
    best.ok_or(HarnessError::NoTrajectories)
}

fn control_period(tr: &Trajectory) -> &[crate::dynamics::TrajectoryStep] {
    &tr.steps[..tr.steps.len().saturating_sub(1).max(1.min(tr.steps.len()))]
}

fn worst_abs_omega_int(trajectories: &[Trajectory]) -> f64 {
    trajectories
        .iter()
        .flat_map(|t| control_period(t).iter())
        .map(|s| s.state.omega_int.abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub iterations: usize,
    pub termination: crate::opt::Termination,
    pub final_grad_norm: f64,
    pub initial_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: SchemeId,
    pub policy_file: String,
    pub training_objective: f64,
    pub validation_objective: f64,
    pub worst_case: WorstCase,
    #[serde(rename = "worst_abs_Omega")]
    pub worst_abs_omega_int: f64,
    pub violations: ViolationCounts,
    /// Mean over validation scenarios of the summed stage costs.
    pub validation_costs: CostBreakdown,
    pub generation_cost: f64,
    pub optimizer: OptimizerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub total_s: f64,
    pub per_scheme_s: Vec<(SchemeId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub scenario_seed: u64,
    pub split_seed: u64,
    pub n_scenarios: usize,
    pub train_ids: Vec<usize>,
    pub validation_ids: Vec<usize>,
    pub simulation: SimConfig,
    pub schemes: Vec<SchemeResult>,
    pub runtime: Runtime,
}

impl ComparisonReport {
    pub fn scheme(&self, id: SchemeId) -> Option<&SchemeResult> {
        self.schemes.iter().find(|s| s.scheme == id)
    }
}

pub const SUMMARY: &str = "summary.json";
pub const WORST_CASE_CSV: &str = "freq_worst_case.csv";
const GRID_FILE: &str = "grid.json";
const SCENARIO_DIR: &str = "scenarios";

fn hash_config(cfg: &CompareConfig, grid: &Grid, ensemble: &ScenarioSet) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(grid.to_json_string().as_bytes());
    for s in &ensemble.scenarios {
        for row in s.p_r.iter().chain(&s.p_l0) {
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

fn write(path: &Path, contents: &str, stage: &'static str, staging: &Path) -> Result<(), HarnessError> {
    fs::write(path, contents)
        .map_err(|e| stage_err(stage, Some(staging))(format!("{}: {e}", path.display())))
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!(".{name}.partial"))
}

/// Run the full comparison and write the report directory `out`.
pub fn run_comparison(cfg: &CompareConfig, out: &Path) -> Result<ComparisonReport, HarnessError> {
    let start = Instant::now();
    let opts = ParseOptions {
        horizon_hours: cfg.horizon_hours(),
        aggregate: cfg.aggregate,
        ..ParseOptions::default()
    };
    let text = fs::read_to_string(&cfg.grid)
        .map_err(|e| stage_err("grid", None)(format!("{}: {e}", cfg.grid.display())))?;
    let grid = parse_grid(&text, &opts).map_err(|e| stage_err("grid", None)(e.to_string()))?;
    cfg.simulation
        .validate()
        .map_err(|e| stage_err("config", None)(e.to_string()))?;
    if cfg.schemes.is_empty() {
        return Err(stage_err("config", None)("no schemes selected".into()));
    }

    let ensemble = cfg
        .scenarios
        .generate(&grid, cfg.scenario_seed())
        .map_err(|e| stage_err("scenarios", None)(e.to_string()))?;
    let (train, validation) = split(&ensemble, cfg.split.n_train, cfg.split_seed())
        .map_err(|e| stage_err("split", None)(e.to_string()))?;

    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging)
            .map_err(|e| stage_err("report", None)(format!("{}: {e}", staging.display())))?;
    }
    fs::create_dir_all(&staging)
        .map_err(|e| stage_err("report", None)(format!("{}: {e}", staging.display())))?;
    write(&staging.join(GRID_FILE), &grid.to_json_string(), "scenarios", &staging)?;
    write_scenario_dir(&ensemble, &staging.join(SCENARIO_DIR))
        .map_err(|e| stage_err("scenarios", Some(&staging))(e.to_string()))?;

    let initial = initial_policy(&grid, &ensemble.scenarios[0]);
    let mut results = Vec::new();
    let mut per_scheme = Vec::new();
    let mut worst_csv = String::from("scheme,max_abs_omega_hz,scenario_id,t\n");
    for &id in &cfg.schemes {
        let scheme_start = Instant::now();
        let spec = SchemeSpec::new(id);
        let (policy, report) = optimize(&initial, &grid, &train, &spec, &cfg.optimizer, &cfg.simulation)
            .map_err(|e| stage_err("optimize", Some(&staging))(format!("{id}: {e}")))?;
        let dir = staging.join(id.slug());
        let traj_dir = dir.join("traj");
        fs::create_dir_all(&traj_dir)
            .map_err(|e| stage_err("simulate", Some(&staging))(format!("{}: {e}", traj_dir.display())))?;
        write(&dir.join("policy.json"), &policy.to_json(&grid), "optimize", &staging)?;
        write(
            &dir.join("opt_report.json"),
            &serde_json::to_string_pretty(&report).expect("report serializes"),
            "optimize",
            &staging,
        )?;
        let result = evaluate_scheme(&grid, &policy, &report, &validation, &cfg.simulation, &traj_dir)
            .map_err(|e| stage_err("simulate", Some(&staging))(format!("{id}: {e}")))?;
        let _ = writeln!(
            worst_csv,
            "{},{:e},{},{}",
            id.slug(),
            result.worst_case.max_abs_omega_hz,
            result.worst_case.scenario_id,
            result.worst_case.t
        );
        results.push(result);
        per_scheme.push((id, scheme_start.elapsed().as_secs_f64()));
    }
    write(&staging.join(WORST_CASE_CSV), &worst_csv, "report", &staging)?;
    let report = ComparisonReport {
        config_hash: hash_config(cfg, &grid, &ensemble),
        scenario_seed: cfg.scenario_seed(),
        split_seed: cfg.split_seed(),
        n_scenarios: ensemble.len(),
        train_ids: train.scenarios.iter().map(|s| s.id).collect(),
        validation_ids: validation.scenarios.iter().map(|s| s.id).collect(),
        simulation: cfg.simulation,
        schemes: results,
        runtime: Runtime {
            total_s: start.elapsed().as_secs_f64(),
            per_scheme_s: per_scheme,
        },
    };
    write(
        &staging.join(SUMMARY),
        &serde_json::to_string_pretty(&report).expect("summary serializes"),
        "report",
        &staging,
    )?;
    if out.exists() {
        fs::remove_dir_all(out)
            .map_err(|e| stage_err("report", Some(&staging))(format!("{}: {e}", out.display())))?;
    }
    fs::rename(&staging, out)
        .map_err(|e| stage_err("report", Some(&staging))(format!("{}: {e}", out.display())))?;
    Ok(report)
}

fn evaluate_scheme(
    grid: &Grid,
    policy: &Policy,
    report: &OptReport,
    validation: &ScenarioSet,
    config: &SimConfig,
    traj_dir: &Path,
) -> Result<SchemeResult, String> {
    let cl = ClosedLoop::new(grid, policy, *config).map_err(|e| e.to_string())?;
    let mut trajectories = Vec::new();
    let mut violations = ViolationCounts::default();
    let mut costs = CostBreakdown::default();
    let mut objective = 0.0;
    for sc in &validation.scenarios {
        let tr = cl.simulate(sc).map_err(|e| format!("scenario {}: {e}", sc.id))?;
        let (total, stages) = scenario_cost(grid, config, &tr).map_err(|e| e.to_string())?;
        objective += sc.prob * total;
        costs += sum_breakdowns(&stages).scaled(sc.prob);
        violations += count_violations(grid, config, &tr);
        let path = traj_dir.join(format!("scenario_{:03}.csv", sc.id));
        fs::write(&path, tr.to_csv(grid)).map_err(|e| format!("{}: {e}", path.display()))?;
        trajectories.push(tr);
    }
    let worst_case = worst_case_frequency(&trajectories).map_err(|e| e.to_string())?;
    Ok(SchemeResult {
        scheme: report.scheme,
        policy_file: format!("{}/policy.json", report.scheme.slug()),
        training_objective: report.final_objective(),
        validation_objective: objective,
        worst_case,
        worst_abs_omega_int: worst_abs_omega_int(&trajectories),
        violations,
        generation_cost: costs.gen_cost,
        validation_costs: costs,
        optimizer: OptimizerSummary {
            iterations: report.iterations,
            termination: report.termination,
            final_grad_norm: report.final_grad_norm,
            initial_objective: report.initial_objective(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub scheme: SchemeId,
    pub scenario_id: usize,
    pub max_abs_diff: f64,
    pub worst_case_recomputed: f64,
    pub worst_case_reported: f64,
    pub objective_recomputed: f64,
    pub objective_reported: f64,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("mismatch: {0}")]
    Mismatch(String),
}

fn read_err(path: &Path, e: impl std::fmt::Display) -> VerifyError {
    VerifyError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Re-simulate one seeded-random (scheme, validation scenario) pair from the
/// persisted grid, scenarios and policy, and compare with the stored files.
pub fn verify_report(dir: &Path, seed: Option<u64>) -> Result<VerifyOutcome, VerifyError> {
    let summary_path = dir.join(SUMMARY);
    let text = fs::read_to_string(&summary_path).map_err(|e| read_err(&summary_path, e))?;
    let report: ComparisonReport = serde_json::from_str(&text).map_err(|e| read_err(&summary_path, e))?;
    let grid_path = dir.join(GRID_FILE);
    let grid_text = fs::read_to_string(&grid_path).map_err(|e| read_err(&grid_path, e))?;
    let grid = parse_grid(&grid_text, &ParseOptions::default()).map_err(|e| read_err(&grid_path, e))?;
    let ensemble = read_scenario_dir(&dir.join(SCENARIO_DIR)).map_err(|e| read_err(&dir.join(SCENARIO_DIR), e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(report.split_seed.wrapping_add(1)));
    if report.schemes.is_empty() || report.validation_ids.is_empty() {
        return Err(VerifyError::Mismatch("report has no schemes or no validation scenarios".into()));
    }
    let result = &report.schemes[rng.random_range(0..report.schemes.len())];
    let scenario_id = report.validation_ids[rng.random_range(0..report.validation_ids.len())];
    let policy_path = dir.join(&result.policy_file);
    let policy_text = fs::read_to_string(&policy_path).map_err(|e| read_err(&policy_path, e))?;
    let policy = Policy::from_json(&policy_text, &grid).map_err(|e| read_err(&policy_path, e))?;
    let config = report.simulation;

    let mut validation = ScenarioSet {
        scenarios: ensemble
            .scenarios
            .iter()
            .filter(|s| report.validation_ids.contains(&s.id))
            .cloned()
            .collect(),
        seed: ensemble.seed,
    };
    validation.renormalize_uniform();
    let scenario = validation
        .scenarios
        .iter()
        .find(|s| s.id == scenario_id)
        .ok_or_else(|| VerifyError::Mismatch(format!("scenario {scenario_id} missing from the scenario directory")))?;
    let traj = simulate(&grid, &policy, scenario, config).map_err(|e| VerifyError::Mismatch(e.to_string()))?;
    let csv_path = dir
        .join(result.scheme.slug())
        .join("traj")
        .join(format!("scenario_{scenario_id:03}.csv"));
    let stored = fs::read_to_string(&csv_path).map_err(|e| read_err(&csv_path, e))?;
    let fresh = traj.to_csv(&grid);
    let mut max_abs_diff = 0.0f64;
    let (mut a_lines, mut b_lines) = (stored.lines(), fresh.lines());
    loop {
        match (a_lines.next(), b_lines.next()) {
            (None, None) => break,
            (Some(a), Some(b)) => {
                let (ka, va) = a.rsplit_once(',').unwrap_or((a, ""));
                let (kb, vb) = b.rsplit_once(',').unwrap_or((b, ""));
                if ka != kb {
                    return Err(VerifyError::Mismatch(format!("row '{a}' vs '{b}'")));
                }
                if let (Ok(x), Ok(y)) = (va.parse::<f64>(), vb.parse::<f64>()) {
                    if !close(x, y, 1e-9) {
                        return Err(VerifyError::Mismatch(format!("{ka}: stored {x:e}, recomputed {y:e}")));
                    }
                    max_abs_diff = max_abs_diff.max((x - y).abs());
                }
            }
            _ => return Err(VerifyError::Mismatch("trajectory row count differs".into())),
        }
    }
    let trajectories: Result<Vec<Trajectory>, _> = validation
        .scenarios
        .iter()
        .map(|s| simulate(&grid, &policy, s, config))
        .collect();
    let trajectories = trajectories.map_err(|e| VerifyError::Mismatch(e.to_string()))?;
    let worst = worst_case_frequency(&trajectories).map_err(|e| VerifyError::Mismatch(e.to_string()))?;
    if !close(worst.max_abs_omega_hz, result.worst_case.max_abs_omega_hz, 1e-9) {
        return Err(VerifyError::Mismatch(format!(
            "{}: worst-case |omega| {:e} vs reported {:e}",
            result.scheme, worst.max_abs_omega_hz, result.worst_case.max_abs_omega_hz
        )));
    }
    let objective = ensemble_objective(&grid, &policy, &validation, &config)
        .map_err(|e| VerifyError::Mismatch(e.to_string()))?;
    if !close(objective, result.validation_objective, 1e-9) {
        return Err(VerifyError::Mismatch(format!(
            "{}: validation objective {objective:e} vs reported {:e}",
            result.scheme, result.validation_objective
        )));
    }
    Ok(VerifyOutcome {
        scheme: result.scheme,
        scenario_id,
        max_abs_diff,
        worst_case_recomputed: worst.max_abs_omega_hz,
        worst_case_reported: result.worst_case.max_abs_omega_hz,
        objective_recomputed: objective,
        objective_reported: result.validation_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SystemState, TrajectoryStep};

    fn traj(id: usize, omegas: &[f64]) -> Trajectory {
        Trajectory {
            scenario_id: id,
            steps: omegas
                .iter()
                .enumerate()
                .map(|(t, w)| TrajectoryStep {
                    t,
                    state: SystemState::initial(0),
                    omega: *w,
                    theta: vec![],
                    flows: vec![],
                    loads: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn worst_case_examples() {
        let w = worst_case_frequency(&[traj(0, &[0.0, 0.0, 0.0])]).unwrap();
        assert_eq!(w.max_abs_omega_hz, 0.0);
        let w = worst_case_frequency(&[traj(3, &[0.0, 0.01, 0.0]), traj(7, &[-0.02, 0.0, 0.005])]).unwrap();
        assert_eq!((w.max_abs_omega_hz, w.scenario_id, w.t), (0.02, 7, 0));
        // the terminal step is outside the control period
        let w = worst_case_frequency(&[traj(1, &[0.001, -0.002, 0.5])]).unwrap();
        assert_eq!((w.max_abs_omega_hz, w.t), (0.002, 1));
        assert!(worst_case_frequency(&[]).is_err());
    }

    #[test]
    fn worst_case_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let set: Vec<Trajectory> = (0..rng.random_range(1..6))
                .map(|id| {
                    let w: Vec<f64> = (0..rng.random_range(2..10)).map(|_| rng.random_range(-0.1..0.1)).collect();
                    traj(id * 3, &w)
                })
                .collect();
            let mut best = (0.0f64, 0, 0);
            for tr in &set {
                for st in &tr.steps[..tr.steps.len() - 1] {
                    if st.omega.abs() > best.0 {
                        best = (st.omega.abs(), tr.scenario_id, st.t);
                    }
                }
            }
            let w = worst_case_frequency(&set).unwrap();
            assert_eq!((w.max_abs_omega_hz, w.scenario_id, w.t), best);
        }
    }

    fn small_config(dir: &Path) -> CompareConfig {
        let case = crate::bundled::DeskCase {
            horizon: 4,
            scenarios: 5,
            n_train: 2,
            ..Default::default()
        };
        case.write(dir).unwrap();
        let mut cfg = CompareConfig::load(&dir.join("compare.json")).unwrap();
        cfg.optimizer.max_iterations = 40;
        cfg
    }

    fn without_runtime(dir: &Path) -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY)).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("runtime");
        v
    }

    #[test]
    fn report_is_deterministic_and_verifiable() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_config(&tmp.path().join("case"));
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        let report = run_comparison(&cfg, &a).unwrap();
        run_comparison(&cfg, &b).unwrap();
        assert_eq!(without_runtime(&a), without_runtime(&b));
        assert_eq!(report.validation_ids.len(), 3);
        assert!(!staging_dir(&a).exists());
        for id in SchemeId::ALL {
            assert!(a.join(id.slug()).join("policy.json").exists());
            assert!(a.join(id.slug()).join("traj").join(format!("scenario_{:03}.csv", report.validation_ids[0])).exists());
        }
        let csv = fs::read_to_string(a.join(WORST_CASE_CSV)).unwrap();
        assert!(csv.starts_with("scheme,max_abs_omega_hz,scenario_id,t\n"));
        assert_eq!(csv.lines().count(), 5);
        for seed in 0..4 {
            let v = verify_report(&a, Some(seed)).unwrap();
            assert!(v.max_abs_diff <= 1e-9);
        }
        // a tampered trajectory is caught
        for id in SchemeId::ALL {
            for sc in &report.validation_ids {
                let path = a.join(id.slug()).join("traj").join(format!("scenario_{sc:03}.csv"));
                let text = fs::read_to_string(&path).unwrap();
                let mut lines: Vec<String> = text.lines().map(String::from).collect();
                let mut cols: Vec<String> = lines[1].split(',').map(String::from).collect();
                let v: f64 = cols[4].parse().unwrap();
                cols[4] = format!("{:e}", v + 1e-3);
                lines[1] = cols.join(",");
                fs::write(&path, lines.join("\n") + "\n").unwrap();
            }
        }
        assert!(matches!(verify_report(&a, Some(0)), Err(VerifyError::Mismatch(_))));
    }

    #[test]
    fn no_validation_scenarios_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_config(&tmp.path().join("case"));
        cfg.split.n_train = cfg.scenarios.count;
        let out = tmp.path().join("out");
        let err = run_comparison(&cfg, &out).unwrap_err();
        assert!(err.to_string().contains("empty validation set"), "{err}");
        assert!(!out.exists());
    }
}
