//! Penalized stage costs and the probability-weighted ensemble objective.

use crate::dynamics::{ClosedLoop, Policy, SimConfig, SimError, SystemState, Trajectory};
use crate::grid::Grid;
use crate::scenarios::ScenarioSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::AddAssign;
use thiserror::Error;

pub const PENALTY_WEIGHT: f64 = 1e7;
pub const BAND_FRACTION: f64 = 0.1;
/// Band on ω and Ω, Hz.
pub const FREQ_BAND: f64 = 0.01;
pub const ENERGY_BAND: (f64, f64) = (0.95, 1.05);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("penalty bounds out of order: l = {l} > u = {u}")]
    InvalidBounds { l: f64, u: f64 },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("scenario probabilities sum to {0}, expected 1")]
    Probability(f64),
    #[error("scenario {id}: {source}")]
    Scenario {
        id: usize,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Cubic penalty outside `[l, u]` with its derivative.
pub fn penalty(a: f64, l: f64, u: f64) -> Result<(f64, f64), CostError> {
    if l > u {
        return Err(CostError::InvalidBounds { l, u });
    }
    Ok(pen(a, l, u))
}

#[inline]
pub(crate) fn pen(a: f64, l: f64, u: f64) -> (f64, f64) {
    if a > u {
        let w = BAND_FRACTION * (u.abs() + 1.0);
        let r = (a - u) / w;
        (PENALTY_WEIGHT * r * r * r, 3.0 * PENALTY_WEIGHT * r * r / w)
    } else if a < l {
        let w = BAND_FRACTION * (l.abs() + 1.0);
        let r = (l - a) / w;
        (PENALTY_WEIGHT * r * r * r, -3.0 * PENALTY_WEIGHT * r * r / w)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub gen_cost: f64,
    pub gen_limit_pen: f64,
    pub ramp_pen: f64,
    pub flow_pen: f64,
    pub freq_pen: f64,
    pub int_freq_pen: f64,
    pub energy_pen: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.gen_cost
            + self.gen_limit_pen
            + self.ramp_pen
            + self.flow_pen
            + self.freq_pen
            + self.int_freq_pen
            + self.energy_pen;
        self
    }

    pub fn scaled(&self, w: f64) -> CostBreakdown {
        CostBreakdown {
            gen_cost: w * self.gen_cost,
            gen_limit_pen: w * self.gen_limit_pen,
            ramp_pen: w * self.ramp_pen,
            flow_pen: w * self.flow_pen,
            freq_pen: w * self.freq_pen,
            int_freq_pen: w * self.int_freq_pen,
            energy_pen: w * self.energy_pen,
            total: w * self.total,
        }
    }
}

impl AddAssign for CostBreakdown {
    fn add_assign(&mut self, o: CostBreakdown) {
        self.gen_cost += o.gen_cost;
        self.gen_limit_pen += o.gen_limit_pen;
        self.ramp_pen += o.ramp_pen;
        self.flow_pen += o.flow_pen;
        self.freq_pen += o.freq_pen;
        self.int_freq_pen += o.int_freq_pen;
        self.energy_pen += o.energy_pen;
        self.total += o.total;
    }
}

/// Partial derivatives of one stage cost.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGradient {
    pub p_go_t: Vec<f64>,
    pub p_go_t1: Vec<f64>,
    pub omega: f64,
    pub omega_int: f64,
    pub flows: Vec<f64>,
    /// Nonzero only on the final stage.
    pub p_i_t1: Vec<f64>,
}

/// Inputs of stage `t`: `x(t)`, `x(t+1)` and the step-`t` observables.
#[derive(Debug, Clone, Copy)]
pub struct Stage<'a> {
    pub x_t: &'a SystemState,
    pub x_t1: &'a SystemState,
    pub omega: f64,
    pub omega_int: f64,
    pub flows: &'a [f64],
    pub t: usize,
    pub horizon: usize,
}

fn check_stage(grid: &Grid, s: &Stage) -> Result<(), CostError> {
    let m = grid.online_generators().len();
    let items = [
        ("x(t) p_go", m, s.x_t.p_go.len()),
        ("x(t+1) p_go", m, s.x_t1.p_go.len()),
        ("x(t+1) p_I", m, s.x_t1.p_i.len()),
        ("flows", grid.n_lines(), s.flows.len()),
    ];
    for (what, expected, got) in items {
        if expected != got {
            return Err(CostError::Dimension {
                what: what.to_string(),
                expected,
                got,
            });
        }
    }
    Ok(())
}

fn evaluate(grid: &Grid, config: &SimConfig, s: &Stage, mut grad: Option<&mut StageGradient>) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    let online = grid.online_generators();
    let delta = config.delta_min;
    let last = s.t + 1 == s.horizon;
    for (k, g) in online.iter().enumerate() {
        let gen = grid.generator(*g);
        let p = s.x_t.p_go[k];
        c.gen_cost += gen.c1 * p * p + gen.c2 * p + gen.c3;
        let (lim, dlim) = pen(p, gen.p_min, gen.p_max);
        c.gen_limit_pen += lim;
        let rate = (s.x_t1.p_go[k] - p) / delta;
        let (ramp, dramp) = pen(rate, gen.ramp_min, gen.ramp_max);
        c.ramp_pen += ramp;
        let mut de = 0.0;
        if last {
            let e = gen.energy_target;
            let (v, d) = pen(s.x_t1.p_i[k], ENERGY_BAND.0 * e, ENERGY_BAND.1 * e);
            c.energy_pen += v;
            de = d;
        }
        if let Some(gr) = grad.as_deref_mut() {
            gr.p_go_t[k] += 2.0 * gen.c1 * p + gen.c2 + dlim - dramp / delta;
            gr.p_go_t1[k] += dramp / delta;
            gr.p_i_t1[k] += de;
        }
    }
    for (l, line) in grid.lines().iter().enumerate() {
        let (v, d) = pen(s.flows[l], -line.thermal_limit, line.thermal_limit);
        c.flow_pen += v;
        if let Some(gr) = grad.as_deref_mut() {
            gr.flows[l] += d;
        }
    }
    let (fv, fd) = pen(s.omega, -FREQ_BAND, FREQ_BAND);
    let (iv, id) = pen(s.omega_int, -FREQ_BAND, FREQ_BAND);
    c.freq_pen = fv;
    c.int_freq_pen = iv;
    if let Some(gr) = grad {
        gr.omega += fd;
        gr.omega_int += id;
    }
    c.finish()
}

pub fn stage_cost(grid: &Grid, config: &SimConfig, stage: &Stage) -> Result<CostBreakdown, CostError> {
    check_stage(grid, stage)?;
    Ok(evaluate(grid, config, stage, None))
}

pub fn stage_cost_with_gradient(
    grid: &Grid,
    config: &SimConfig,
    stage: &Stage,
) -> Result<(CostBreakdown, StageGradient), CostError> {
    check_stage(grid, stage)?;
    let m = grid.online_generators().len();
    let mut g = StageGradient {
        p_go_t: vec![0.0; m],
        p_go_t1: vec![0.0; m],
        omega: 0.0,
        omega_int: 0.0,
        flows: vec![0.0; grid.n_lines()],
        p_i_t1: vec![0.0; m],
    };
    let c = evaluate(grid, config, stage, Some(&mut g));
    Ok((c, g))
}

/// Stage `t` of a trajectory.
pub fn trajectory_stage(traj: &Trajectory, t: usize) -> Stage<'_> {
    let s = &traj.steps[t];
    Stage {
        x_t: &s.state,
        x_t1: &traj.steps[t + 1].state,
        omega: s.omega,
        omega_int: s.state.omega_int,
        flows: &s.flows,
        t,
        horizon: traj.horizon(),
    }
}

/// Σ_{t<T} stage costs, with the per-stage breakdown.
pub fn scenario_cost(
    grid: &Grid,
    config: &SimConfig,
    traj: &Trajectory,
) -> Result<(f64, Vec<CostBreakdown>), CostError> {
    let mut total = 0.0;
    let mut stages = Vec::with_capacity(traj.horizon());
    for t in 0..traj.horizon() {
        let c = stage_cost(grid, config, &trajectory_stage(traj, t))?;
        total += c.total;
        stages.push(c);
    }
    Ok((total, stages))
}

/// Σ of a per-stage breakdown.
pub fn sum_breakdowns(stages: &[CostBreakdown]) -> CostBreakdown {
    let mut acc = CostBreakdown::default();
    for s in stages {
        acc += *s;
    }
    acc
}

/// Probability-weighted scenario cost; scenarios run in parallel and are
/// reduced in index order.
pub fn ensemble_objective(
    grid: &Grid,
    policy: &Policy,
    ensemble: &ScenarioSet,
    config: &SimConfig,
) -> Result<f64, ObjectiveError> {
    let total = ensemble.total_probability();
    if (total - 1.0).abs() > 1e-12 {
        return Err(ObjectiveError::Probability(total));
    }
    let cl = ClosedLoop::new(grid, policy, *config)?;
    let costs: Vec<Result<f64, ObjectiveError>> = ensemble
        .scenarios
        .par_iter()
        .map(|sc| {
            let traj = cl.simulate(sc).map_err(|source| ObjectiveError::Scenario { id: sc.id, source })?;
            Ok(scenario_cost(grid, config, &traj)?.0)
        })
        .collect();
    let mut f = 0.0;
    for (sc, c) in ensemble.scenarios.iter().zip(costs) {
        f += sc.prob * c?;
    }
    Ok(f)
}

/// Number of stage items outside their bands, per constraint family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub gen_limit: usize,
    pub ramp: usize,
    pub flow: usize,
    pub freq: usize,
    pub int_freq: usize,
    pub energy: usize,
}

impl AddAssign for ViolationCounts {
    fn add_assign(&mut self, o: ViolationCounts) {
        self.gen_limit += o.gen_limit;
        self.ramp += o.ramp;
        self.flow += o.flow;
        self.freq += o.freq;
        self.int_freq += o.int_freq;
        self.energy += o.energy;
    }
}

/// Count band violations over the stages of a trajectory; a violation is any
/// item whose penalty is positive.
pub fn count_violations(grid: &Grid, config: &SimConfig, traj: &Trajectory) -> ViolationCounts {
    let mut v = ViolationCounts::default();
    let online = grid.online_generators();
    let horizon = traj.horizon();
    let out = |a: f64, l: f64, u: f64| usize::from(a < l || a > u);
    for t in 0..horizon {
        let s = trajectory_stage(traj, t);
        for (k, g) in online.iter().enumerate() {
            let gen = grid.generator(*g);
            v.gen_limit += out(s.x_t.p_go[k], gen.p_min, gen.p_max);
            let rate = (s.x_t1.p_go[k] - s.x_t.p_go[k]) / config.delta_min;
            v.ramp += out(rate, gen.ramp_min, gen.ramp_max);
            if t + 1 == horizon {
                let e = gen.energy_target;
                v.energy += out(s.x_t1.p_i[k], ENERGY_BAND.0 * e, ENERGY_BAND.1 * e);
            }
        }
        for (l, line) in grid.lines().iter().enumerate() {
            v.flow += out(s.flows[l], -line.thermal_limit, line.thermal_limit);
        }
        v.freq += out(s.omega, -FREQ_BAND, FREQ_BAND);
        v.int_freq += out(s.omega_int, -FREQ_BAND, FREQ_BAND);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(5.0, 0.0, 10.0).unwrap(), (0.0, 0.0));
        let (v, _) = penalty(11.0, 0.0, 10.0).unwrap();
        assert!((v - 1e7 / 1.331).abs() < 1e-6);
        assert!((v - 7.5131e6).abs() < 100.0);
        let (v, _) = penalty(0.011, -0.01, 0.01).unwrap();
        assert!((v - 1e7 * (0.001f64 / 0.101).powi(3)).abs() < 1e-9);
        assert!((v - 9.706).abs() < 1e-3);
        assert!(penalty(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn calibration_point() {
        let (v, _) = penalty(11.1, 0.0, 10.0).unwrap();
        assert!((v - 1e7).abs() <= 1e-9 * 1e7);
        let (v, _) = penalty(-11.1, -10.0, 0.0).unwrap();
        assert!((v - 1e7).abs() <= 1e-9 * 1e7);
    }

    #[test]
    fn derivative_matches_difference() {
        for &(a, l, u) in &[(12.0, 0.0, 10.0), (-3.0, -1.0, 4.0), (250.0, -200.0, 200.0)] {
            let h = 1e-6 * (1.0 + f64::abs(a));
            let fd = (pen(a + h, l, u).0 - pen(a - h, l, u).0) / (2.0 * h);
            let d = pen(a, l, u).1;
            assert!((fd - d).abs() <= 1e-7 * d.abs(), "{a} {l} {u}: {fd} vs {d}");
        }
    }

    #[test]
    fn breakdown_total_is_sum() {
        let c = CostBreakdown {
            gen_cost: 1.0,
            gen_limit_pen: 2.0,
            ramp_pen: 3.0,
            flow_pen: 4.0,
            freq_pen: 5.0,
            int_freq_pen: 6.0,
            energy_pen: 7.0,
            total: 0.0,
        }
        .finish();
        assert_eq!(c.total, 28.0);
        let json = serde_json::to_value(c).unwrap();
        for key in ["gen_cost", "gen_limit_pen", "ramp_pen", "flow_pen", "freq_pen", "int_freq_pen", "energy_pen", "total"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn smooth_at_both_bounds(l in -500.0f64..500.0, width in 0.0f64..300.0, k in 1e-6f64..1e-3) {
                let u = l + width;
                for (b, dir) in [(u, 1.0), (l, -1.0)] {
                    let w = BAND_FRACTION * (b.abs() + 1.0);
                    let h = k * w;
                    let (f, d) = pen(b + dir * h, l, u);
                    // value, slope and curvature all vanish at the bound like the inside
                    prop_assert!(f <= PENALTY_WEIGHT * k.powi(3) * (1.0 + 1e-9));
                    prop_assert!(d.abs() <= 3.0 * PENALTY_WEIGHT * k * k / w * (1.0 + 1e-9));
                    prop_assert!(dir * d >= 0.0);
                    prop_assert_eq!(pen(b - dir * h.min(width / 2.0), l, u), (0.0, 0.0));
                }
            }

            #[test]
            fn nonnegative_and_monotone_outside(a in -1e3f64..1e3, l in -100.0f64..100.0, width in 0.0f64..50.0) {
                let u = l + width;
                let (f, d) = pen(a, l, u);
                prop_assert!(f >= 0.0);
                if a > u { prop_assert!(d > 0.0) }
                if a < l { prop_assert!(d < 0.0) }
            }
        }
    }
}
