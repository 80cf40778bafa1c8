//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use gridflex::costs::{ensemble_objective, penalty, FREQ_BAND, PENALTY_WEIGHT};
use gridflex::dynamics::{step, Policy, SimConfig, SystemState};
use gridflex::grid::{Grid, Line, ParseOptions};
use gridflex::harness::{ComparisonReport, SchemeResult, SUMMARY};
use gridflex::opt::{ensemble_gradient, SchemeId};
use gridflex::powerflow::{Injections, PowerFlow};
use gridflex::synth::{random_grid, random_injections, random_policy, random_scenarios, SynthOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn c1_penalty_calibration() -> Outcome {
    let mut worst = 0.0f64;
    for (l, u) in [(-FREQ_BAND, FREQ_BAND), (0.95, 1.05), (-250.0, 250.0), (0.0, 0.0), (-3.0, -1.0)] {
        let up = u + 0.1 * (u.abs() + 1.0);
        let lo = l - 0.1 * (l.abs() + 1.0);
        worst = worst.max(rel(penalty(up, l, u).unwrap().0, PENALTY_WEIGHT));
        worst = worst.max(rel(penalty(lo, l, u).unwrap().0, PENALTY_WEIGHT));
    }
    let detail = format!("max relative error {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Central difference of the analytic slope.
fn second_derivative(a: f64, l: f64, u: f64, h: f64) -> f64 {
    let (_, gp) = penalty(a + h, l, u).unwrap();
    let (_, gm) = penalty(a - h, l, u).unwrap();
    (gp - gm) / (2.0 * h)
}

fn c2_smoothness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_jump = 0.0f64;
    let mut worst_fd = 0.0f64;
    for _ in 0..1000 {
        let l: f64 = rng.random_range(-500.0..500.0);
        let u = l + rng.random_range(0.0..300.0);
        for (bound, sign) in [(u, 1.0), (l, -1.0)] {
            let w = 0.1 * (bound.abs() + 1.0);
            let scales = [PENALTY_WEIGHT, PENALTY_WEIGHT / w, PENALTY_WEIGHT / (w * w)];
            // one-sided limits at the bound agree with the zero inside
            let h = 1e-5 * w;
            let (fo, go) = penalty(bound + sign * h, l, u).unwrap();
            let (fi, gi) = penalty(bound - sign * h, l, u).unwrap();
            let co = second_derivative(bound + sign * 2.0 * h, l, u, h);
            let ci = if u - l > 4.0 * h {
                second_derivative(bound - sign * 2.0 * h, l, u, h)
            } else {
                0.0
            };
            for (jump, s) in [(fo - fi, scales[0]), (go - gi, scales[1]), (co - ci, scales[2])] {
                worst_jump = worst_jump.max(jump.abs() / s);
            }
            // finite differences against the analytic slope and curvature outside
            for k in [0.05, 0.3, 1.0, 2.5] {
                let a = bound + sign * k * w;
                let e = 1e-6 * w;
                let (_, g) = penalty(a, l, u).unwrap();
                let fd = (penalty(a + e, l, u).unwrap().0 - penalty(a - e, l, u).unwrap().0) / (2.0 * e);
                worst_fd = worst_fd.max(rel(fd, g));
                let r = k;
                let curvature = 6.0 * PENALTY_WEIGHT * r / (w * w);
                worst_fd = worst_fd.max(rel(second_derivative(a, l, u, e), curvature));
            }
        }
    }
    let detail = format!("max normalized jump {worst_jump:.2e}, max finite-difference mismatch {worst_fd:.2e}");
    if worst_jump <= 1e-3 && worst_fd <= 1e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_powerflow() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let m = rng.random_range(1..=n.min(10));
        let grid = random_grid(&mut rng, &SynthOptions::new(n, m));
        let p = random_injections(&mut rng, &grid);
        let scale = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pf = PowerFlow::new(&grid, false).map_err(|e| e.to_string())?;
        let flows = pf.line_flows(&pf.solve_angles(&Injections(p.clone())).map_err(|e| e.to_string())?);
        for (d, pi) in flows.divergence(&grid).iter().zip(&p) {
            worst = worst.max((d - pi).abs() / scale);
        }
        // reversing every line's orientation negates its flow
        let mut spec = grid.to_spec();
        for l in &mut spec.lines {
            *l = Line {
                from: l.to,
                to: l.from,
                ..l.clone()
            };
        }
        let rev = Grid::new(spec, &ParseOptions::default()).map_err(|e| e.to_string())?;
        let pr = PowerFlow::new(&rev, false).map_err(|e| e.to_string())?;
        let back = pr.line_flows(&pr.solve_angles(&Injections(p)).map_err(|e| e.to_string())?);
        let fscale = flows.flows.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(scale);
        for (a, b) in flows.flows.iter().zip(&back.flows) {
            worst = worst.max((a + b).abs() / fscale);
        }
    }
    let detail = format!("max relative residual {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c4_closed_loop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let m = rng.random_range(1..=n.min(6));
        let grid = random_grid(&mut rng, &SynthOptions::new(n, m));
        let horizon = rng.random_range(1..=6);
        let policy = random_policy(&mut rng, &grid, horizon, false, false);
        let ens = random_scenarios(&mut rng, &grid, horizon, 1);
        let sc = &ens.scenarios[0];
        let t = rng.random_range(0..=horizon);
        let state = SystemState {
            omega_int: rng.random_range(-0.05..0.05),
            p_go: (0..m).map(|_| rng.random_range(0.0..100.0)).collect(),
            p_i: (0..m).map(|_| rng.random_range(0.0..50.0)).collect(),
        };
        let out = step(&grid, &policy, SimConfig::default(), &state, &sc.p_r[t], &sc.p_l0[t], t)
            .map_err(|e| e.to_string())?;
        let numer: f64 =
            sc.p_l0[t].iter().sum::<f64>() + sc.p_r[t].iter().sum::<f64>() + policy.dispatch[t].iter().sum::<f64>();
        let denom = grid.beta_sum() + policy.alpha_p.iter().sum::<f64>();
        worst = worst.max(rel(out.omega, -numer / denom));
    }
    let detail = format!("max relative error {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn entries(p: &Policy) -> Vec<f64> {
    p.dispatch
        .iter()
        .flatten()
        .chain(&p.alpha_p)
        .chain(&p.alpha_i)
        .chain(p.alpha_f.iter().flatten())
        .copied()
        .collect()
}

fn with_entry(p: &Policy, i: usize, v: f64) -> Policy {
    let mut x = entries(p);
    x[i] = v;
    let mut q = p.clone();
    let mut it = x.into_iter();
    for row in &mut q.dispatch {
        row.iter_mut().for_each(|a| *a = it.next().unwrap());
    }
    q.alpha_p.iter_mut().for_each(|a| *a = it.next().unwrap());
    q.alpha_i.iter_mut().for_each(|a| *a = it.next().unwrap());
    for row in &mut q.alpha_f {
        row.iter_mut().for_each(|a| *a = it.next().unwrap());
    }
    q
}

fn c5_gradient() -> Outcome {
    let mut worst = 0.0f64;
    let config = SimConfig::default();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.random_range(3..=10);
        let m = rng.random_range(1..=n.min(4));
        let grid = random_grid(&mut rng, &SynthOptions::new(n, m));
        let horizon = rng.random_range(1..=6);
        let ens = random_scenarios(&mut rng, &grid, horizon, 2);
        let policy = random_policy(&mut rng, &grid, horizon, true, true);
        let (_, g) = ensemble_gradient(&grid, &policy, &ens, &config).map_err(|e| e.to_string())?;
        let x = entries(&policy);
        let ga = entries(&g);
        let gmax = ga.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..x.len() {
            let h = 1e-4 * x[i].abs().max(1.0);
            let f = |v: f64| ensemble_objective(&grid, &with_entry(&policy, i, v), &ens, &config);
            let fd = (f(x[i] + h).map_err(|e| e.to_string())? - f(x[i] - h).map_err(|e| e.to_string())?) / (2.0 * h);
            let err = (fd - ga[i]).abs() / fd.abs().max(ga[i].abs()).max(1e-6 * gmax);
            worst = worst.max(err);
        }
    }
    let detail = format!("max relative error {worst:.2e}");
    if worst <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Bundled {
    first: ComparisonReport,
    first_json: serde_json::Value,
    second_json: serde_json::Value,
    seconds: f64,
}

fn run_compare(config: &Path, out: &Path) -> Result<serde_json::Value, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_gridflex"))
        .arg("compare")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let text = std::fs::read_to_string(out.join(SUMMARY)).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn bundled_runs() -> Result<Bundled, String> {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/desk14/compare.json");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let first_json = run_compare(&config, &tmp.path().join("a"))?;
    let seconds = start.elapsed().as_secs_f64();
    let second_json = run_compare(&config, &tmp.path().join("b"))?;
    let first = serde_json::from_value(first_json.clone()).map_err(|e| e.to_string())?;
    Ok(Bundled {
        first,
        first_json,
        second_json,
        seconds,
    })
}

fn scheme(r: &ComparisonReport, id: SchemeId) -> Result<&SchemeResult, String> {
    r.scheme(id).ok_or_else(|| format!("{id} missing from report"))
}

fn worst(s: &SchemeResult) -> f64 {
    s.worst_case.max_abs_omega_hz
}

fn c6_nesting(b: &Bundled) -> Outcome {
    let pi = scheme(&b.first, SchemeId::Pi)?.training_objective;
    let co = scheme(&b.first, SchemeId::FlowPiCoord)?.training_objective;
    let detail = format!("training objective flow-pi-coord {co:.9e} vs pi {pi:.9e}");
    if co <= pi * (1.0 + 1e-6) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c7_reproduction(b: &Bundled) -> Outcome {
    let pi = worst(scheme(&b.first, SchemeId::Pi)?);
    let co = worst(scheme(&b.first, SchemeId::FlowPiCoord)?);
    let fp = worst(scheme(&b.first, SchemeId::FlowP)?);
    let detail = format!(
        "worst |omega| pi {pi:.4e}, flow-pi-coord {co:.4e} (pi/{:.2}), flow-p {fp:.4e} (pi/{:.2}, {:+.1}% vs coord)",
        pi / co,
        pi / fp,
        100.0 * (fp - co) / co
    );
    if co <= pi / 5.0 && fp <= pi / 5.0 && (fp - co).abs() <= 0.25 * co {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8_uncoordinated(b: &Bundled) -> Outcome {
    let unc = worst(scheme(&b.first, SchemeId::FlowPiUncoord)?);
    let co = worst(scheme(&b.first, SchemeId::FlowPiCoord)?);
    let detail = format!("worst |omega| flow-pi-uncoord {unc:.4e} vs flow-pi-coord {co:.4e}");
    if unc > co {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_constraints(b: &Bundled) -> Outcome {
    let v = scheme(&b.first, SchemeId::FlowP)?.violations;
    let detail = format!("flow-p validation violations: thermal {}, ramp {}, energy {}", v.flow, v.ramp, v.energy);
    if v.flow + v.ramp + v.energy == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn strip_runtime(v: &serde_json::Value) -> serde_json::Value {
    let mut v = v.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("runtime");
    }
    v
}

fn c10_determinism(b: &Bundled) -> Outcome {
    let a = serde_json::to_string(&strip_runtime(&b.first_json)).unwrap();
    let c = serde_json::to_string(&strip_runtime(&b.second_json)).unwrap();
    if a == c {
        Ok(format!("summary.json identical modulo runtime ({} bytes)", a.len()))
    } else {
        Err("summary.json differs between runs".into())
    }
}

fn report(n: usize, name: &str, limit_s: Option<f64>, elapsed: f64, outcome: Outcome, failures: &mut Vec<usize>) {
    let over = limit_s.is_some_and(|l| elapsed > l);
    let (tag, detail) = match outcome {
        Ok(d) if !over => ("PASS", d),
        Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1} s, limit {} s", limit_s.unwrap())),
        Err(d) => ("FAIL", d),
    };
    if tag == "FAIL" {
        failures.push(n);
    }
    println!("criterion {n:>2} [{tag}] {name}: {detail} ({elapsed:.2} s)");
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn main() {
    let mut failures = Vec::new();
    let local: [(&str, Option<f64>, fn() -> Outcome); 5] = [
        ("penalty calibration", Some(1.0), c1_penalty_calibration),
        ("penalty smoothness", Some(5.0), c2_smoothness),
        ("power-flow invariants", Some(30.0), c3_powerflow),
        ("closed-loop oracle", Some(10.0), c4_closed_loop),
        ("gradient correctness", Some(120.0), c5_gradient),
    ];
    for (i, (name, limit, f)) in local.into_iter().enumerate() {
        let (out, t) = timed(f);
        report(i + 1, name, limit, t, out, &mut failures);
    }

    match bundled_runs() {
        Ok(b) => {
            let checks: [(&str, Option<f64>, fn(&Bundled) -> Outcome); 5] = [
                ("scheme nesting", Some(600.0), c6_nesting),
                ("frequency reduction vs pi", Some(1800.0), c7_reproduction),
                ("uncoordinated vs coordinated", None, c8_uncoordinated),
                ("flow-p constraint maintenance", None, c9_constraints),
                ("determinism", None, c10_determinism),
            ];
            for (i, (name, limit, f)) in checks.into_iter().enumerate() {
                report(i + 6, name, limit, b.seconds, f(&b), &mut failures);
            }
        }
        Err(e) => {
            for n in 6..=10 {
                report(n, "bundled comparison", None, 0.0, Err(format!("compare failed: {e}")), &mut failures);
            }
        }
    }

    if failures.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: {} of 10 criteria failed: {failures:?}", failures.len());
        std::process::exit(1);
    }
}
