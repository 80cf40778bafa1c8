//! Quasi-static closed-loop evolution.
//!
//! At every step the frequency deviation ω, the non-reference bus angles and
//! the generator outputs are solved jointly from one linear system
//! `A z = b(t)`, with `z = [θ_nonref; ω; p^Go]`:
//!
//! * bus rows: `Σ_l (θ_i − θ_j)/s_l − β_i ω − p^Go_i = p^R_i + p^L0_i − off_i`
//! * generator rows: `p^Go_g − α^P_g ω − Σ_j α^F_gj p_gj = p^Go_0g(t) + α^I_g Ω(t)`
//!
//! where `p_gj` is the flow from the generator bus towards neighbor `j`.
//! With lagged feedback the ω and flow terms move to the right-hand side and
//! use the previous step's observables. `A` depends only on the grid and the
//! gains, so it is factored once per policy.

use crate::grid::{BusId, GenId, Grid};
use crate::powerflow::{nominal_offsets, reduced_index, AngleSolution, LineFlows};
use crate::scenarios::Scenario;
use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Largest acceptable condition number of the equilibrated step matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("feedback-induced singularity (condition number {condition:e}); nonzero gains: {gains}")]
    Singular { condition: f64, gains: String },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("scenario commitment does not match the grid's online generators")]
    Commitment,
    #[error("invalid simulation setting: {0}")]
    Config(String),
    #[error("step {t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<SimError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Step length, minutes.
    pub delta_min: f64,
    /// Discount of the frequency integral per step.
    pub gamma: f64,
    /// 0: feedback on contemporaneous ω and flows; 1: on the previous step's.
    pub feedback_lag: u8,
    pub use_nominal_flows: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            delta_min: 5.0,
            gamma: 0.9,
            feedback_lag: 0,
            use_nominal_flows: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.delta_min > 0.0 && self.delta_min.is_finite()) {
            return Err(SimError::Config(format!("delta_min must be positive, got {}", self.delta_min)));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(SimError::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.feedback_lag > 1 {
            return Err(SimError::Config(format!(
                "feedback_lag must be 0 or 1, got {}",
                self.feedback_lag
            )));
        }
        Ok(())
    }

    pub fn lagged(&self) -> bool {
        self.feedback_lag == 1
    }

    /// MWh per MW per step.
    pub fn energy_factor(&self) -> f64 {
        self.delta_min / 60.0
    }
}

/// Decision variables, indexed by position `k` in the grid's online list.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// `[T+1][k]`, MW.
    pub dispatch: Vec<Vec<f64>>,
    /// MW/Hz.
    pub alpha_p: Vec<f64>,
    /// MW/Hz.
    pub alpha_i: Vec<f64>,
    /// `[k][j]` for the j-th neighbor of the generator's bus in id order.
    pub alpha_f: Vec<Vec<f64>>,
}

impl Policy {
    pub fn zeros(grid: &Grid, horizon: usize) -> Policy {
        let m = grid.online_generators().len();
        Policy {
            dispatch: vec![vec![0.0; m]; horizon + 1],
            alpha_p: vec![0.0; m],
            alpha_i: vec![0.0; m],
            alpha_f: grid
                .online_generators()
                .iter()
                .map(|g| vec![0.0; grid.neighbors(grid.generator(*g).bus).len()])
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.dispatch.len().saturating_sub(1)
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), SimError> {
        let online = grid.online_generators();
        let m = online.len();
        let dim = |what: &str, expected: usize, got: usize| {
            if expected != got {
                Err(SimError::Dimension {
                    what: what.to_string(),
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        if self.dispatch.is_empty() {
            return Err(SimError::Dimension {
                what: "dispatch steps".into(),
                expected: 1,
                got: 0,
            });
        }
        for (t, row) in self.dispatch.iter().enumerate() {
            dim(&format!("dispatch row {t}"), m, row.len())?;
        }
        dim("alpha_P", m, self.alpha_p.len())?;
        dim("alpha_I", m, self.alpha_i.len())?;
        dim("alpha_F", m, self.alpha_f.len())?;
        for (k, g) in online.iter().enumerate() {
            let deg = grid.neighbors(grid.generator(*g).bus).len();
            dim(&format!("alpha_F of generator {g}"), deg, self.alpha_f[k].len())?;
        }
        let finite = self
            .dispatch
            .iter()
            .flatten()
            .chain(&self.alpha_p)
            .chain(&self.alpha_i)
            .chain(self.alpha_f.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(SimError::NonFinite("policy".into()));
        }
        Ok(())
    }

    /// Clone with every entry mapped by `f`; used for gradient containers.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Policy {
        Policy {
            dispatch: self.dispatch.iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect(),
            alpha_p: self.alpha_p.iter().map(|v| f(*v)).collect(),
            alpha_i: self.alpha_i.iter().map(|v| f(*v)).collect(),
            alpha_f: self.alpha_f.iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect(),
        }
    }

    /// `self += w * other`, entrywise.
    pub fn add_scaled(&mut self, w: f64, other: &Policy) {
        fn axpy(a: &mut [f64], w: f64, b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += w * y;
            }
        }
        for (a, b) in self.dispatch.iter_mut().zip(&other.dispatch) {
            axpy(a, w, b);
        }
        axpy(&mut self.alpha_p, w, &other.alpha_p);
        axpy(&mut self.alpha_i, w, &other.alpha_i);
        for (a, b) in self.alpha_f.iter_mut().zip(&other.alpha_f) {
            axpy(a, w, b);
        }
    }

    /// Σ of entrywise products.
    pub fn dot(&self, other: &Policy) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        self.dispatch.iter().zip(&other.dispatch).map(|(a, b)| d(a, b)).sum::<f64>()
            + d(&self.alpha_p, &other.alpha_p)
            + d(&self.alpha_i, &other.alpha_i)
            + self.alpha_f.iter().zip(&other.alpha_f).map(|(a, b)| d(a, b)).sum::<f64>()
    }

    pub fn to_file(&self, grid: &Grid) -> PolicyFile {
        let online = grid.online_generators();
        let mut alpha_f = BTreeMap::new();
        for (k, g) in online.iter().enumerate() {
            let nbs = grid.neighbors(grid.generator(*g).bus);
            let gains: BTreeMap<String, f64> = nbs
                .iter()
                .zip(&self.alpha_f[k])
                .map(|(nb, a)| (nb.bus.0.to_string(), *a))
                .collect();
            alpha_f.insert(g.0.to_string(), gains);
        }
        PolicyFile {
            generators: online.to_vec(),
            dispatch: self.dispatch.clone(),
            alpha_p: self.alpha_p.clone(),
            alpha_i: self.alpha_i.clone(),
            alpha_f,
        }
    }

    pub fn to_json(&self, grid: &Grid) -> String {
        serde_json::to_string_pretty(&self.to_file(grid)).expect("policy serializes")
    }

    pub fn from_file(file: &PolicyFile, grid: &Grid) -> Result<Policy, SimError> {
        let online = grid.online_generators();
        if file.generators != online {
            return Err(SimError::Commitment);
        }
        let mut alpha_f = Vec::with_capacity(online.len());
        for g in online {
            let nbs = grid.neighbors(grid.generator(*g).bus);
            let mut row = vec![0.0; nbs.len()];
            if let Some(gains) = file.alpha_f.get(&g.0.to_string()) {
                for (key, gain) in gains {
                    let pos = key
                        .parse::<usize>()
                        .ok()
                        .and_then(|b| nbs.iter().position(|nb| nb.bus == BusId(b)));
                    match pos {
                        Some(j) => row[j] = *gain,
                        None => {
                            return Err(SimError::Config(format!(
                                "alpha_F of generator {g} names bus {key}, which is not adjacent"
                            )))
                        }
                    }
                }
            }
            alpha_f.push(row);
        }
        let policy = Policy {
            dispatch: file.dispatch.clone(),
            alpha_p: file.alpha_p.clone(),
            alpha_i: file.alpha_i.clone(),
            alpha_f,
        };
        policy.validate(grid)?;
        Ok(policy)
    }

    pub fn from_json(text: &str, grid: &Grid) -> Result<Policy, SimError> {
        let file: PolicyFile =
            serde_json::from_str(text).map_err(|e| SimError::Config(format!("policy JSON: {e}")))?;
        Policy::from_file(&file, grid)
    }
}

/// On-disk policy layout; `alpha_F` maps generator id to neighbor bus id to gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub generators: Vec<GenId>,
    pub dispatch: Vec<Vec<f64>>,
    #[serde(rename = "alpha_P")]
    pub alpha_p: Vec<f64>,
    #[serde(rename = "alpha_I")]
    pub alpha_i: Vec<f64>,
    #[serde(rename = "alpha_F")]
    pub alpha_f: BTreeMap<String, BTreeMap<String, f64>>,
}

/// `x(t) = [Ω(t); p^Go(t); p^I(t)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Discounted frequency integral, Hz.
    #[serde(rename = "Omega")]
    pub omega_int: f64,
    /// MW.
    pub p_go: Vec<f64>,
    /// Cumulative energy, MWh.
    pub p_i: Vec<f64>,
}

impl SystemState {
    pub fn initial(m: usize) -> SystemState {
        SystemState {
            omega_int: 0.0,
            p_go: vec![0.0; m],
            p_i: vec![0.0; m],
        }
    }
}

/// Observables the lagged controller reads from the previous step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub omega: f64,
    pub flows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: SystemState,
    pub omega: f64,
    pub theta: AngleSolution,
    pub flows: LineFlows,
    pub p_go: Vec<f64>,
    /// `p^L0 + β ω`, MW.
    pub loads: Vec<f64>,
}

/// Flow term of one generator towards one neighbor.
#[derive(Debug, Clone)]
pub(crate) struct FlowTerm {
    pub gain: f64,
    /// `(line, sign)`; `sign * flow` points away from the generator.
    pub lines: Vec<(usize, f64)>,
}

/// Factored step system for one grid, policy and configuration.
pub struct ClosedLoop<'a> {
    pub(crate) grid: &'a Grid,
    pub(crate) policy: &'a Policy,
    pub(crate) config: SimConfig,
    pub(crate) theta_index: Vec<Option<usize>>,
    pub(crate) gen_bus: Vec<BusId>,
    pub(crate) flow_terms: Vec<Vec<FlowTerm>>,
    offsets: Vec<f64>,
    nominal: Vec<f64>,
    lu: LU<f64, Dyn, Dyn>,
    lu_t: LU<f64, Dyn, Dyn>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(grid: &'a Grid, policy: &'a Policy, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        policy.validate(grid)?;
        let n = grid.n_buses();
        let online = grid.online_generators();
        let m = online.len();
        let theta_index = reduced_index(grid);
        let gen_bus: Vec<BusId> = online.iter().map(|g| grid.generator(*g).bus).collect();
        let flow_terms: Vec<Vec<FlowTerm>> = gen_bus
            .iter()
            .enumerate()
            .map(|(k, b)| {
                grid.neighbors(*b)
                    .iter()
                    .zip(&policy.alpha_f[k])
                    .map(|(nb, a)| FlowTerm {
                        gain: *a,
                        lines: nb.lines.clone(),
                    })
                    .collect()
            })
            .collect();
        let nz = n + m;
        let omega_col = n - 1;
        let mut a = DMatrix::<f64>::zeros(nz, nz);
        for line in grid.lines() {
            let w = 1.0 / line.dynamic_impedance;
            let (f, t) = (line.from.0, line.to.0);
            if let Some(i) = theta_index[f] {
                a[(f, i)] += w;
                a[(t, i)] -= w;
            }
            if let Some(j) = theta_index[t] {
                a[(f, j)] -= w;
                a[(t, j)] += w;
            }
        }
        for (i, bus) in grid.buses().iter().enumerate() {
            a[(i, omega_col)] = -bus.beta_l;
        }
        for (k, b) in gen_bus.iter().enumerate() {
            a[(b.0, n + k)] = -1.0;
            a[(n + k, n + k)] = 1.0;
        }
        if !config.lagged() {
            for (k, terms) in flow_terms.iter().enumerate() {
                let row = n + k;
                a[(row, omega_col)] = -policy.alpha_p[k];
                for term in terms {
                    for &(l, sign) in &term.lines {
                        let line = &grid.lines()[l];
                        let c = term.gain * sign / line.dynamic_impedance;
                        if let Some(i) = theta_index[line.from.0] {
                            a[(row, i)] -= c;
                        }
                        if let Some(j) = theta_index[line.to.0] {
                            a[(row, j)] += c;
                        }
                    }
                }
            }
        }
        let condition = equilibrated_condition(&a);
        if !(condition <= MAX_CONDITION) {
            return Err(SimError::Singular {
                condition,
                gains: describe_gains(grid, policy, config.lagged()),
            });
        }
        let lu_t = a.transpose().lu();
        let lu = a.lu();
        let offsets = if config.use_nominal_flows {
            nominal_offsets(grid)
        } else {
            vec![0.0; n]
        };
        let nominal = grid
            .lines()
            .iter()
            .map(|l| if config.use_nominal_flows { l.nominal_flow } else { 0.0 })
            .collect();
        Ok(ClosedLoop {
            grid,
            policy,
            config,
            theta_index,
            gen_bus,
            flow_terms,
            offsets,
            nominal,
            lu,
            lu_t,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn policy(&self) -> &Policy {
        self.policy
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub(crate) fn n(&self) -> usize {
        self.grid.n_buses()
    }

    pub(crate) fn m(&self) -> usize {
        self.gen_bus.len()
    }

    pub(crate) fn omega_index(&self) -> usize {
        self.n() - 1
    }

    pub(crate) fn dim(&self) -> usize {
        self.n() + self.m()
    }

    pub(crate) fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(rhs).expect("step matrix passed the conditioning check")
    }

    pub(crate) fn solve_transpose(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lu_t.solve(rhs).expect("step matrix passed the conditioning check")
    }

    /// Flow on every line of `term`, summed towards the neighbor.
    pub(crate) fn term_flow(term: &FlowTerm, flows: &[f64]) -> f64 {
        term.lines.iter().map(|&(l, s)| s * flows[l]).sum()
    }

    /// Observables of the step before `t = 0`: ω = 0 and nominal flows.
    pub fn initial_observation(&self) -> Observation {
        Observation {
            omega: 0.0,
            flows: self.nominal.clone(),
        }
    }

    /// Right-hand side `b(t)`.
    pub(crate) fn rhs(
        &self,
        state: &SystemState,
        prev: &Observation,
        p_r: &[f64],
        p_l0: &[f64],
        t: usize,
    ) -> DVector<f64> {
        let n = self.n();
        let mut b = DVector::<f64>::zeros(self.dim());
        for i in 0..n {
            b[i] = p_r[i] + p_l0[i] - self.offsets[i];
        }
        for (k, terms) in self.flow_terms.iter().enumerate() {
            let mut v = self.policy.dispatch[t][k] + self.policy.alpha_i[k] * state.omega_int;
            if self.config.lagged() {
                v += self.policy.alpha_p[k] * prev.omega;
                for term in terms {
                    v += term.gain * Self::term_flow(term, &prev.flows);
                }
            } else {
                for term in terms {
                    for &(l, sign) in &term.lines {
                        v += term.gain * sign * self.nominal[l];
                    }
                }
            }
            b[n + k] = v;
        }
        b
    }

    /// Expand a solution vector into angles, ω and outputs.
    pub(crate) fn unpack(&self, z: &DVector<f64>) -> (Vec<f64>, f64, Vec<f64>) {
        let n = self.n();
        let theta = (0..n)
            .map(|b| self.theta_index[b].map_or(0.0, |i| z[i]))
            .collect();
        let p_go = (0..self.m()).map(|k| z[n + k]).collect();
        (theta, z[self.omega_index()], p_go)
    }

    /// Solve step `t` from state `x(t)`; `prev` is only read with lagged feedback.
    pub fn step(
        &self,
        state: &SystemState,
        prev: &Observation,
        p_r: &[f64],
        p_l0: &[f64],
        t: usize,
    ) -> Result<StepOutcome, SimError> {
        let n = self.n();
        let m = self.m();
        let check = |what: &str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(SimError::Dimension {
                    what: what.to_string(),
                    expected,
                    got,
                })
            }
        };
        check("renewable injection", n, p_r.len())?;
        check("nominal load", n, p_l0.len())?;
        check("state p_go", m, state.p_go.len())?;
        check("state p_I", m, state.p_i.len())?;
        check("feedback observation flows", self.grid.n_lines(), prev.flows.len())?;
        if t >= self.policy.dispatch.len() {
            return Err(SimError::Dimension {
                what: "time index".into(),
                expected: self.policy.dispatch.len(),
                got: t + 1,
            });
        }
        let b = self.rhs(state, prev, p_r, p_l0, t);
        let z = self.solve(&b);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite("step solution".into()));
        }
        let (theta, omega, p_go) = self.unpack(&z);
        let theta = AngleSolution { theta };
        let flows = LineFlows {
            flows: self
                .grid
                .lines()
                .iter()
                .enumerate()
                .map(|(l, line)| {
                    self.nominal[l]
                        + (theta.theta[line.from.0] - theta.theta[line.to.0]) / line.dynamic_impedance
                })
                .collect(),
        };
        let loads = self
            .grid
            .buses()
            .iter()
            .zip(p_l0)
            .map(|(bus, p)| p + bus.beta_l * omega)
            .collect();
        let e = self.config.energy_factor();
        let next = SystemState {
            omega_int: omega + self.config.gamma * state.omega_int,
            p_go: p_go.clone(),
            p_i: state.p_i.iter().zip(&p_go).map(|(pi, p)| pi + p * e).collect(),
        };
        Ok(StepOutcome {
            next,
            omega,
            theta,
            flows,
            p_go,
            loads,
        })
    }
}

/// 2-norm condition number after scaling rows, then columns, to unit max-abs.
fn equilibrated_condition(a: &DMatrix<f64>) -> f64 {
    let mut s = a.clone();
    for mut row in s.row_iter_mut() {
        let m = row.amax();
        if m > 0.0 {
            row /= m;
        }
    }
    for mut col in s.column_iter_mut() {
        let m = col.amax();
        if m > 0.0 {
            col /= m;
        }
    }
    let sv = s.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max.is_finite()) || min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn describe_gains(grid: &Grid, policy: &Policy, lagged: bool) -> String {
    let mut out = String::new();
    for (k, g) in grid.online_generators().iter().enumerate() {
        if lagged {
            break;
        }
        if policy.alpha_p[k] != 0.0 {
            let _ = write!(out, "alpha_P[{g}]={:.6e} ", policy.alpha_p[k]);
        }
        let nbs = grid.neighbors(grid.generator(*g).bus);
        for (nb, a) in nbs.iter().zip(&policy.alpha_f[k]) {
            if *a != 0.0 {
                let _ = write!(out, "alpha_F[{g}->{}]={a:.6e} ", nb.bus);
            }
        }
    }
    if out.is_empty() {
        "none".to_string()
    } else {
        out.trim_end().to_string()
    }
}

/// Single step with the initial lag observation; builds and factors the system.
pub fn step(
    grid: &Grid,
    policy: &Policy,
    config: SimConfig,
    state: &SystemState,
    p_r: &[f64],
    p_l0: &[f64],
    t: usize,
) -> Result<StepOutcome, SimError> {
    let cl = ClosedLoop::new(grid, policy, config)?;
    let prev = cl.initial_observation();
    cl.step(state, &prev, p_r, p_l0, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub t: usize,
    /// `x(t)`; `p_go` holds the outputs solved at step `t`.
    pub state: SystemState,
    pub omega: f64,
    pub theta: Vec<f64>,
    pub flows: Vec<f64>,
    pub loads: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario_id: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn omega_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.omega).collect()
    }

    /// `(max |ω|, t)` with the earliest step winning ties.
    pub fn max_abs_omega(&self) -> (f64, usize) {
        let mut best = (0.0, 0);
        for s in &self.steps {
            if s.omega.abs() > best.0 {
                best = (s.omega.abs(), s.t);
            }
        }
        best
    }

    /// Long-format CSV: `t,entity,id,quantity,value`.
    pub fn to_csv(&self, grid: &Grid) -> String {
        let mut out = String::from("t,entity,id,quantity,value\n");
        let online = grid.online_generators();
        for s in &self.steps {
            let t = s.t;
            let _ = writeln!(out, "{t},system,0,omega_hz,{:e}", s.omega);
            let _ = writeln!(out, "{t},system,0,Omega,{:e}", s.state.omega_int);
            for (b, v) in s.theta.iter().enumerate() {
                let _ = writeln!(out, "{t},bus,{b},theta_rad,{v:e}");
            }
            for (b, v) in s.loads.iter().enumerate() {
                let _ = writeln!(out, "{t},bus,{b},load_mw,{v:e}");
            }
            for (l, v) in s.flows.iter().enumerate() {
                let _ = writeln!(out, "{t},line,{l},flow_mw,{v:e}");
            }
            for (k, g) in online.iter().enumerate() {
                let _ = writeln!(out, "{t},gen,{g},p_go_mw,{:e}", s.state.p_go[k]);
                let _ = writeln!(out, "{t},gen,{g},p_i_mwh,{:e}", s.state.p_i[k]);
            }
        }
        out
    }

    pub fn summary(&self) -> TrajectorySummary {
        let (max_abs_omega, t) = self.max_abs_omega();
        TrajectorySummary {
            scenario_id: self.scenario_id,
            omega: self.omega_series(),
            max_abs_omega,
            max_abs_omega_t: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub scenario_id: usize,
    pub omega: Vec<f64>,
    pub max_abs_omega: f64,
    pub max_abs_omega_t: usize,
}

fn check_scenario(grid: &Grid, policy: &Policy, scenario: &Scenario) -> Result<(), SimError> {
    let len = policy.dispatch.len();
    for (what, series) in [("renewable series", &scenario.p_r), ("load series", &scenario.p_l0)] {
        if series.len() != len {
            return Err(SimError::Dimension {
                what: format!("scenario {} {what} length", scenario.id),
                expected: len,
                got: series.len(),
            });
        }
    }
    if scenario.commitment != grid.online_generators() {
        return Err(SimError::Commitment);
    }
    Ok(())
}

impl ClosedLoop<'_> {
    /// Fold [`ClosedLoop::step`] over `t = 0..=T` from `Ω(0) = 0`, `p^I(0) = 0`.
    pub fn simulate(&self, scenario: &Scenario) -> Result<Trajectory, SimError> {
        check_scenario(self.grid, self.policy, scenario)?;
        let m = self.m();
        let mut state = SystemState::initial(m);
        let mut prev = self.initial_observation();
        let mut steps = Vec::with_capacity(self.policy.dispatch.len());
        for t in 0..self.policy.dispatch.len() {
            let out = self
                .step(&state, &prev, &scenario.p_r[t], &scenario.p_l0[t], t)
                .map_err(|e| SimError::AtStep {
                    t,
                    source: Box::new(e),
                })?;
            steps.push(TrajectoryStep {
                t,
                state: SystemState {
                    omega_int: state.omega_int,
                    p_go: out.p_go.clone(),
                    p_i: state.p_i.clone(),
                },
                omega: out.omega,
                theta: out.theta.theta,
                flows: out.flows.flows.clone(),
                loads: out.loads,
            });
            prev = Observation {
                omega: out.omega,
                flows: out.flows.flows,
            };
            state = out.next;
        }
        Ok(Trajectory {
            scenario_id: scenario.id,
            steps,
        })
    }
}

pub fn simulate(
    grid: &Grid,
    policy: &Policy,
    scenario: &Scenario,
    config: SimConfig,
) -> Result<Trajectory, SimError> {
    let cl = ClosedLoop::new(grid, policy, config).map_err(|e| match e {
        e @ SimError::Singular { .. } => SimError::AtStep {
            t: 0,
            source: Box::new(e),
        },
        e => e,
    })?;
    cl.simulate(scenario)
}
