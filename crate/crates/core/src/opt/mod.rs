//! Ensemble optimization of dispatch and feedback gains.

pub mod gradient;
pub mod lbfgs;
pub mod params;

pub use gradient::{ensemble_directional, ensemble_gradient, scenario_directional, scenario_gradient};
pub use lbfgs::{LbfgsSettings, Termination};
pub use params::{pack, unpack, Block, ParamLayout, ParamVector, SchemeId, SchemeSpec};

use crate::costs::ObjectiveError;
use crate::dynamics::{Policy, SimConfig};
use crate::grid::Grid;
use crate::scenarios::{Scenario, ScenarioSet};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("initial policy cannot be evaluated: {0}")]
    Initial(ObjectiveError),
    #[error("non-finite objective or gradient at the initial policy")]
    NonFinite,
    #[error("pass {pass}: line search failed at iteration {iteration} (f = {objective:e}, |g|inf = {grad_norm:e}); iterate: {iterate:?}")]
    LineSearch {
        pass: usize,
        iteration: usize,
        objective: f64,
        grad_norm: f64,
        iterate: Vec<f64>,
    },
    #[error("horizon mismatch: policy has {policy} steps, ensemble {ensemble}")]
    Horizon { policy: usize, ensemble: usize },
    #[error("training ensemble is empty")]
    EmptyEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub free_blocks: Vec<Block>,
    pub parameters: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub objective_trace: Vec<f64>,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
    pub termination: Termination,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptReport {
    pub scheme: SchemeId,
    pub iterations: usize,
    /// All passes, concatenated.
    pub objective_trace: Vec<f64>,
    pub final_grad_norm: f64,
    pub termination: Termination,
    pub wall_time_s: f64,
    pub passes: Vec<PassReport>,
}

impl OptReport {
    pub fn initial_objective(&self) -> f64 {
        self.objective_trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Minimize the ensemble objective over the free blocks of each pass in turn.
pub fn optimize(
    initial: &Policy,
    grid: &Grid,
    ensemble: &ScenarioSet,
    spec: &SchemeSpec,
    settings: &LbfgsSettings,
    config: &SimConfig,
) -> Result<(Policy, OptReport), OptError> {
    if ensemble.is_empty() {
        return Err(OptError::EmptyEnsemble);
    }
    if ensemble.horizon() != initial.horizon() {
        return Err(OptError::Horizon {
            policy: initial.horizon(),
            ensemble: ensemble.horizon(),
        });
    }
    let start = Instant::now();
    let mut base = initial.clone();
    spec.apply_zeroed(&mut base);
    let mut passes = Vec::new();
    for (i, free) in spec.passes.iter().enumerate() {
        let pass_start = Instant::now();
        let layout = spec.layout(grid, base.horizon(), i);
        let x0 = layout.pack(&base).values;
        let objective = |v: &[f64]| -> Result<(f64, Vec<f64>), ObjectiveError> {
            let policy = layout.unpack(v, &base).expect("layout length");
            let (f, g) = ensemble_gradient(grid, &policy, ensemble, config)?;
            Ok((f, layout.normalized_gradient(&g)))
        };
        let result = lbfgs::minimize(objective, x0, settings).map_err(|e| match e {
            lbfgs::LbfgsError::Initial(e) => OptError::Initial(e),
            lbfgs::LbfgsError::NonFinite => OptError::NonFinite,
            lbfgs::LbfgsError::LineSearch {
                iteration,
                objective,
                grad_norm,
                iterate,
                ..
            } => OptError::LineSearch {
                pass: i,
                iteration,
                objective,
                grad_norm,
                iterate,
            },
        })?;
        base = layout.unpack(&result.x, &base).expect("layout length");
        passes.push(PassReport {
            free_blocks: free.clone(),
            parameters: layout.len(),
            iterations: result.iterations,
            evaluations: result.evaluations,
            objective_trace: result.trace,
            initial_grad_norm: result.initial_grad_norm,
            final_grad_norm: result.grad_norm,
            termination: result.termination,
            wall_time_s: pass_start.elapsed().as_secs_f64(),
        });
    }
    let last = passes.last().expect("every scheme has a pass");
    let report = OptReport {
        scheme: spec.id,
        iterations: passes.iter().map(|p| p.iterations).sum(),
        objective_trace: passes.iter().flat_map(|p| p.objective_trace.iter().copied()).collect(),
        final_grad_norm: last.final_grad_norm,
        termination: last.termination,
        wall_time_s: start.elapsed().as_secs_f64(),
        passes,
    };
    Ok((base, report))
}

/// Least-cost outputs meeting `demand` within unit limits, by bisection on
/// the marginal cost. Shortfalls beyond total capacity leave units at limits.
pub fn economic_dispatch(grid: &Grid, demand: f64) -> Vec<f64> {
    let gens: Vec<_> = grid.online_generators().iter().map(|g| grid.generator(*g)).collect();
    let output = |lambda: f64| -> Vec<f64> {
        gens.iter()
            .map(|g| {
                let p = if g.c1 > 0.0 {
                    (lambda - g.c2) / (2.0 * g.c1)
                } else if lambda > g.c2 {
                    g.p_max
                } else {
                    g.p_min
                };
                p.clamp(g.p_min, g.p_max)
            })
            .collect()
    };
    let lo_cap: f64 = gens.iter().map(|g| g.p_min).sum();
    let hi_cap: f64 = gens.iter().map(|g| g.p_max).sum();
    if demand <= lo_cap {
        return gens.iter().map(|g| g.p_min).collect();
    }
    if demand >= hi_cap {
        return gens.iter().map(|g| g.p_max).collect();
    }
    let mut lo = gens
        .iter()
        .map(|g| 2.0 * g.c1 * g.p_min + g.c2)
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut hi = gens
        .iter()
        .map(|g| 2.0 * g.c1 * g.p_max + g.c2)
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if output(mid).iter().sum::<f64>() < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut p = output(hi);
    // spread the bisection residual (or a linear-cost step) over units with room
    for _ in 0..gens.len() + 1 {
        let residual = demand - p.iter().sum::<f64>();
        if residual.abs() <= 1e-12 * demand.abs().max(1.0) {
            break;
        }
        let room: Vec<f64> = gens
            .iter()
            .zip(&p)
            .map(|(g, v)| if residual > 0.0 { g.p_max - v } else { v - g.p_min })
            .collect();
        let total: f64 = room.iter().sum();
        if total <= 0.0 {
            break;
        }
        for (v, r) in p.iter_mut().zip(&room) {
            *v += residual * r / total;
        }
    }
    p
}

/// Balanced dispatch for `base` with a uniform droop totalling
/// `−10 Σ|β^l|` MW/Hz and no integral or flow feedback.
pub fn initial_policy(grid: &Grid, base: &Scenario) -> Policy {
    let horizon = base.horizon();
    let mut policy = Policy::zeros(grid, horizon);
    for t in 0..=horizon {
        let demand = -(base.p_r[t].iter().sum::<f64>() + base.p_l0[t].iter().sum::<f64>());
        policy.dispatch[t] = economic_dispatch(grid, demand);
    }
    let m = grid.online_generators().len();
    if m > 0 {
        let each = -10.0 * grid.beta_abs_sum() / m as f64;
        policy.alpha_p = vec![each; m];
    }
    policy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::ensemble_objective;
    use crate::grid::{Bus, BusId, GenId, GeneratorSpec, GridSpec, Line, ParseOptions};
    use crate::synth::{random_grid, random_scenarios, SynthOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (Grid, ScenarioSet) {
        let spec = GridSpec {
            buses: vec![
                Bus { id: BusId(0), beta_l: -1000.0 },
                Bus { id: BusId(1), beta_l: 0.0 },
            ],
            lines: vec![Line {
                from: BusId(0),
                to: BusId(1),
                dynamic_impedance: 0.01,
                thermal_limit: 1e3,
                nominal_flow: 0.0,
            }],
            generators: vec![GeneratorSpec {
                bus: BusId(1),
                online: true,
                c1: 0.01,
                c2: 20.0,
                c3: 0.0,
                p_min: 0.0,
                p_max: 100.0,
                ramp_min: -100.0,
                ramp_max: 100.0,
                energy_target: Some(50.0 * 5.0 / 60.0),
            }],
            reference_bus: BusId(0),
            base_mva: 100.0,
        };
        let grid = Grid::new(spec, &ParseOptions::default()).unwrap();
        let sc = Scenario {
            id: 0,
            p_r: vec![vec![0.0; 2]; 2],
            p_l0: vec![vec![-50.0, 0.0]; 2],
            commitment: vec![GenId(0)],
            prob: 1.0,
        };
        (grid, ScenarioSet { scenarios: vec![sc], seed: 0 })
    }

    fn settings() -> LbfgsSettings {
        LbfgsSettings {
            max_iterations: 2000,
            tol: 0.0,
            abs_tol: 1e-9,
            ..LbfgsSettings::default()
        }
    }

    #[test]
    fn single_bus_matches_grid_search() {
        // one scenario and one unit: every policy reduces to its dispatch,
        // and only the first step is costed
        let (grid, ens) = toy();
        let cfg = SimConfig::default();
        let init = initial_policy(&grid, &ens.scenarios[0]);
        let (_, report) = optimize(&init, &grid, &ens, &SchemeSpec::new(SchemeId::Pi), &settings(), &cfg).unwrap();
        let mut p = Policy::zeros(&grid, 1);
        let mut best = f64::INFINITY;
        for i in 0..=40_000 {
            let d = 45.0 + 10.0 * i as f64 / 40_000.0;
            p.dispatch = vec![vec![d]; 2];
            best = best.min(ensemble_objective(&grid, &p, &ens, &cfg).unwrap());
        }
        let f = report.final_objective();
        assert!(f <= best * (1.0 + 1e-9), "optimizer {f} vs grid {best}");
        assert!(f >= best * (1.0 - 1e-6), "optimizer {f} below grid {best}");
    }

    fn small_case(seed: u64) -> (Grid, ScenarioSet, Policy) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, &SynthOptions::new(6, 3));
        let ens = random_scenarios(&mut rng, &grid, 3, 3);
        let init = initial_policy(&grid, &ens.scenarios[0]);
        (grid, ens, init)
    }

    #[test]
    fn traces_never_increase() {
        let (grid, ens, init) = small_case(5);
        let s = LbfgsSettings {
            max_iterations: 200,
            ..settings()
        };
        for id in SchemeId::ALL {
            let (_, report) = optimize(&init, &grid, &ens, &SchemeSpec::new(id), &s, &SimConfig::default()).unwrap();
            for pass in &report.passes {
                assert!(pass.objective_trace.windows(2).all(|w| w[1] <= w[0]), "{id}");
            }
            assert!(report.final_objective() <= report.initial_objective());
        }
    }

    #[test]
    fn coordinated_is_no_worse_than_pi() {
        let (grid, ens, init) = small_case(9);
        let s = LbfgsSettings {
            max_iterations: 1500,
            ..settings()
        };
        let cfg = SimConfig::default();
        let (_, pi) = optimize(&init, &grid, &ens, &SchemeSpec::new(SchemeId::Pi), &s, &cfg).unwrap();
        let (_, co) = optimize(&init, &grid, &ens, &SchemeSpec::new(SchemeId::FlowPiCoord), &s, &cfg).unwrap();
        assert!(co.final_objective() <= pi.final_objective() * (1.0 + 1e-6));
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let (grid, ens) = toy();
        let init = initial_policy(&grid, &ens.scenarios[0]);
        let empty = ScenarioSet { scenarios: vec![], seed: 0 };
        let err = optimize(&init, &grid, &empty, &SchemeSpec::new(SchemeId::Pi), &settings(), &SimConfig::default());
        assert!(matches!(err, Err(OptError::EmptyEnsemble)));
    }
}
