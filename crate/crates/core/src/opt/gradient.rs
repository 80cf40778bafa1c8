//! Exact derivatives of the ensemble objective with respect to every policy
//! entry.
//!
//! Each step solves `A z(t) = b(t)` where `b(t)` depends on `Ω(t)` and, with
//! lagged feedback, on `z(t−1)`. The reverse sweep solves `Aᵀ λ(t) = z̄(t)`
//! from `t = T` down to 0 with the same factorization; parameter sensitivities
//! are `λ(t)ᵀ (∂b/∂α − ∂A/∂α z(t))`. A forward sweep computing directional
//! derivatives is kept for cross-checking.

use crate::costs::{stage_cost_with_gradient, trajectory_stage, ObjectiveError};
use crate::dynamics::{ClosedLoop, Policy, SimConfig, Trajectory};
use crate::grid::Grid;
use crate::scenarios::{Scenario, ScenarioSet};
use nalgebra::DVector;
use rayon::prelude::*;

/// Explicit partials of the scenario cost with respect to `z(t)` and `Ω(t)`.
struct Explicit {
    cost: f64,
    z: Vec<DVector<f64>>,
    omega_int: Vec<f64>,
}

fn explicit_partials(cl: &ClosedLoop, traj: &Trajectory) -> Result<Explicit, ObjectiveError> {
    let grid = cl.grid();
    let horizon = traj.horizon();
    let dim = cl.dim();
    let n = cl.n();
    let e = cl.config().energy_factor();
    let mut z = vec![DVector::<f64>::zeros(dim); horizon + 1];
    let mut omega_int = vec![0.0; horizon + 1];
    let mut cost = 0.0;
    for t in 0..horizon {
        let (c, sg) = stage_cost_with_gradient(grid, cl.config(), &trajectory_stage(traj, t))?;
        cost += c.total;
        for k in 0..cl.m() {
            z[t][n + k] += sg.p_go_t[k];
            z[t + 1][n + k] += sg.p_go_t1[k];
            if sg.p_i_t1[k] != 0.0 {
                // p^I(t+1) = Σ_{τ≤t} p^Go(τ) δ/60
                for zt in z.iter_mut().take(t + 1) {
                    zt[n + k] += sg.p_i_t1[k] * e;
                }
            }
        }
        z[t][cl.omega_index()] += sg.omega;
        omega_int[t] += sg.omega_int;
        for (l, line) in grid.lines().iter().enumerate() {
            let d = sg.flows[l] / line.dynamic_impedance;
            if d == 0.0 {
                continue;
            }
            if let Some(i) = cl.theta_index[line.from.0] {
                z[t][i] += d;
            }
            if let Some(j) = cl.theta_index[line.to.0] {
                z[t][j] -= d;
            }
        }
    }
    Ok(Explicit { cost, z, omega_int })
}

/// Observables the feedback law reads at step `t`.
fn observed<'t>(cl: &ClosedLoop, traj: &'t Trajectory, init: &'t [f64], t: usize) -> (f64, &'t [f64]) {
    if cl.config().lagged() {
        if t == 0 {
            (0.0, init)
        } else {
            let s = &traj.steps[t - 1];
            (s.omega, &s.flows)
        }
    } else {
        let s = &traj.steps[t];
        (s.omega, &s.flows)
    }
}

/// Scenario cost and its gradient in policy shape, by reverse accumulation.
pub fn scenario_gradient(
    cl: &ClosedLoop,
    traj: &Trajectory,
) -> Result<(f64, Policy), ObjectiveError> {
    let ex = explicit_partials(cl, traj)?;
    let policy = cl.policy();
    let horizon = traj.horizon();
    let n = cl.n();
    let w = cl.omega_index();
    let lagged = cl.config().lagged();
    let gamma = cl.config().gamma;
    let init = cl.initial_observation().flows;
    let mut grad = policy.map(|_| 0.0);
    let mut omega_bar_next = 0.0;
    let mut lambda_next: Option<DVector<f64>> = None;
    for t in (0..=horizon).rev() {
        let mut r = ex.z[t].clone();
        if t < horizon {
            r[w] += omega_bar_next;
        }
        if let (true, Some(ln)) = (lagged, &lambda_next) {
            for (k, terms) in cl.flow_terms.iter().enumerate() {
                let lg = ln[n + k];
                r[w] += lg * policy.alpha_p[k];
                for term in terms {
                    for &(l, sign) in &term.lines {
                        let line = &cl.grid().lines()[l];
                        let c = lg * term.gain * sign / line.dynamic_impedance;
                        if let Some(i) = cl.theta_index[line.from.0] {
                            r[i] += c;
                        }
                        if let Some(j) = cl.theta_index[line.to.0] {
                            r[j] -= c;
                        }
                    }
                }
            }
        }
        let lambda = cl.solve_transpose(&r);
        let (omega_obs, flows_obs) = observed(cl, traj, &init, t);
        let omega_int = traj.steps[t].state.omega_int;
        let mut omega_bar = ex.omega_int[t] + gamma * omega_bar_next;
        for (k, terms) in cl.flow_terms.iter().enumerate() {
            let lg = lambda[n + k];
            grad.dispatch[t][k] += lg;
            grad.alpha_i[k] += lg * omega_int;
            grad.alpha_p[k] += lg * omega_obs;
            for (j, term) in terms.iter().enumerate() {
                grad.alpha_f[k][j] += lg * ClosedLoop::term_flow(term, flows_obs);
            }
            omega_bar += lg * policy.alpha_i[k];
        }
        omega_bar_next = omega_bar;
        lambda_next = Some(lambda);
    }
    Ok((ex.cost, grad))
}

/// Scenario cost and its derivative along `direction`, by forward accumulation.
pub fn scenario_directional(
    cl: &ClosedLoop,
    traj: &Trajectory,
    direction: &Policy,
) -> Result<(f64, f64), ObjectiveError> {
    let ex = explicit_partials(cl, traj)?;
    let policy = cl.policy();
    let horizon = traj.horizon();
    let n = cl.n();
    let w = cl.omega_index();
    let lagged = cl.config().lagged();
    let gamma = cl.config().gamma;
    let init = cl.initial_observation().flows;
    let mut omega_int_dot = 0.0;
    let mut prev: Option<DVector<f64>> = None;
    let mut j_dot = 0.0;
    for t in 0..=horizon {
        let (omega_obs, flows_obs) = observed(cl, traj, &init, t);
        let omega_int = traj.steps[t].state.omega_int;
        let mut rhs = DVector::<f64>::zeros(cl.dim());
        for (k, terms) in cl.flow_terms.iter().enumerate() {
            let mut v = direction.dispatch[t][k]
                + direction.alpha_i[k] * omega_int
                + policy.alpha_i[k] * omega_int_dot
                + direction.alpha_p[k] * omega_obs;
            for (j, term) in terms.iter().enumerate() {
                v += direction.alpha_f[k][j] * ClosedLoop::term_flow(term, flows_obs);
            }
            if let (true, Some(zp)) = (lagged, &prev) {
                v += policy.alpha_p[k] * zp[w];
                for term in terms {
                    for &(l, sign) in &term.lines {
                        let line = &cl.grid().lines()[l];
                        let th = |b: usize| cl.theta_index[b].map_or(0.0, |i| zp[i]);
                        v += term.gain * sign * (th(line.from.0) - th(line.to.0)) / line.dynamic_impedance;
                    }
                }
            }
            rhs[n + k] = v;
        }
        let z_dot = cl.solve(&rhs);
        j_dot += ex.z[t].dot(&z_dot) + ex.omega_int[t] * omega_int_dot;
        omega_int_dot = z_dot[w] + gamma * omega_int_dot;
        prev = Some(z_dot);
    }
    Ok((ex.cost, j_dot))
}

fn check_probability(ensemble: &ScenarioSet) -> Result<(), ObjectiveError> {
    let total = ensemble.total_probability();
    if (total - 1.0).abs() > 1e-12 {
        return Err(ObjectiveError::Probability(total));
    }
    Ok(())
}

fn simulate_one<'a>(cl: &ClosedLoop, sc: &'a Scenario) -> Result<Trajectory, ObjectiveError> {
    cl.simulate(sc)
        .map_err(|source| ObjectiveError::Scenario { id: sc.id, source })
}

/// Ensemble objective and gradient; scenarios run in parallel and are reduced
/// in index order.
pub fn ensemble_gradient(
    grid: &Grid,
    policy: &Policy,
    ensemble: &ScenarioSet,
    config: &SimConfig,
) -> Result<(f64, Policy), ObjectiveError> {
    check_probability(ensemble)?;
    let cl = ClosedLoop::new(grid, policy, *config)?;
    let parts: Vec<Result<(f64, Policy), ObjectiveError>> = ensemble
        .scenarios
        .par_iter()
        .map(|sc| {
            let traj = simulate_one(&cl, sc)?;
            scenario_gradient(&cl, &traj)
        })
        .collect();
    let mut f = 0.0;
    let mut g = policy.map(|_| 0.0);
    for (sc, part) in ensemble.scenarios.iter().zip(parts) {
        let (c, gs) = part?;
        f += sc.prob * c;
        g.add_scaled(sc.prob, &gs);
    }
    Ok((f, g))
}

/// Ensemble objective and its derivative along `direction` by forward sweeps.
pub fn ensemble_directional(
    grid: &Grid,
    policy: &Policy,
    ensemble: &ScenarioSet,
    config: &SimConfig,
    direction: &Policy,
) -> Result<(f64, f64), ObjectiveError> {
    check_probability(ensemble)?;
    let cl = ClosedLoop::new(grid, policy, *config)?;
    let mut f = 0.0;
    let mut d = 0.0;
    for sc in &ensemble.scenarios {
        let traj = simulate_one(&cl, sc)?;
        let (c, dc) = scenario_directional(&cl, &traj, direction)?;
        f += sc.prob * c;
        d += sc.prob * dc;
    }
    Ok((f, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::ensemble_objective;
    use crate::dynamics::{Policy, SimConfig};
    use crate::synth::{random_grid, random_policy, random_scenarios, SynthOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn set_entry(p: &mut Policy, mut i: usize, v: f64) {
        for row in &mut p.dispatch {
            if i < row.len() {
                row[i] = v;
                return;
            }
            i -= row.len();
        }
        for vec in [&mut p.alpha_p, &mut p.alpha_i] {
            if i < vec.len() {
                vec[i] = v;
                return;
            }
            i -= vec.len();
        }
        for row in &mut p.alpha_f {
            if i < row.len() {
                row[i] = v;
                return;
            }
            i -= row.len();
        }
        panic!("index out of range");
    }

    fn check_instance(seed: u64, config: SimConfig) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=10);
        let m = rng.random_range(1..=n.min(4));
        let grid = random_grid(&mut rng, &SynthOptions::new(n, m));
        let horizon = rng.random_range(1..=6);
        let ens = random_scenarios(&mut rng, &grid, horizon, 2);
        let policy = random_policy(&mut rng, &grid, horizon, true, true);
        let (f, g) = ensemble_gradient(&grid, &policy, &ens, &config).unwrap();
        let f0 = ensemble_objective(&grid, &policy, &ens, &config).unwrap();
        assert!((f - f0).abs() <= 1e-12 * f0.abs());
        let x = entries(&policy);
        let ga = entries(&g);
        let gmax = ga.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            let h = 1e-4 * x[i].abs().max(1.0);
            let mut p = policy.clone();
            set_entry(&mut p, i, x[i] + h);
            let fp = ensemble_objective(&grid, &p, &ens, &config).unwrap();
            set_entry(&mut p, i, x[i] - h);
            let fm = ensemble_objective(&grid, &p, &ens, &config).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - ga[i]).abs() / fd.abs().max(ga[i].abs()).max(1e-6 * gmax);
            worst = worst.max(err);
        }
        // forward sweep along a random direction agrees with the adjoint
        let d = random_policy(&mut rng, &grid, horizon, true, true);
        let (_, dd) = ensemble_directional(&grid, &policy, &ens, &config, &d).unwrap();
        let adj = g.dot(&d);
        assert!((dd - adj).abs() <= 1e-9 * adj.abs().max(dd.abs()), "forward {dd} vs adjoint {adj}");
        worst
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        for seed in 0..20 {
            let err = check_instance(seed, SimConfig::default());
            assert!(err <= 1e-5, "seed {seed}: relative error {err:e}");
        }
    }

    #[test]
    fn lagged_feedback_gradient() {
        let config = SimConfig {
            feedback_lag: 1,
            ..SimConfig::default()
        };
        for seed in 100..110 {
            let err = check_instance(seed, config);
            assert!(err <= 1e-5, "seed {seed}: relative error {err:e}");
        }
    }
}
