//! Linearized power flow: bus angles from injections, line flows from angles.
//!
//! Flows follow `p_ij = p0_ij + (θ_i − θ_j)/s_ij`. The reduced weighted
//! Laplacian is factored once per grid and reused for every solve.

use crate::grid::{BusId, Grid};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("injections are unbalanced: sum {sum} MW exceeds tolerance {tol} MW")]
    Unbalanced { sum: f64, tol: f64 },
    #[error("reduced Laplacian is singular; the network is disconnected")]
    Singular,
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Net injection per bus, MW.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections(pub Vec<f64>);

/// Bus angles in rad with the reference bus at exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSolution {
    pub theta: Vec<f64>,
}

/// One flow per line in its stored `from -> to` direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlows {
    pub flows: Vec<f64>,
}

impl LineFlows {
    /// Flow on `line` leaving `bus`; the reverse direction is the exact negation.
    pub fn leaving(&self, grid: &Grid, line: usize, bus: BusId) -> f64 {
        let l = &grid.lines()[line];
        if l.from == bus {
            self.flows[line]
        } else {
            -self.flows[line]
        }
    }

    /// Σ of flows leaving each bus.
    pub fn divergence(&self, grid: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; grid.n_buses()];
        for (l, line) in grid.lines().iter().enumerate() {
            out[line.from.0] += self.flows[l];
            out[line.to.0] -= self.flows[l];
        }
        out
    }
}

/// Maps buses to rows of the reduced (reference-free) system.
pub(crate) fn reduced_index(grid: &Grid) -> Vec<Option<usize>> {
    let r = grid.reference_bus().0;
    (0..grid.n_buses())
        .map(|b| match b.cmp(&r) {
            std::cmp::Ordering::Less => Some(b),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(b - 1),
        })
        .collect()
}

/// Divergence of nominal flows at each bus: Σ_out p0 − Σ_in p0.
pub fn nominal_offsets(grid: &Grid) -> Vec<f64> {
    let mut off = vec![0.0; grid.n_buses()];
    for line in grid.lines() {
        off[line.from.0] += line.nominal_flow;
        off[line.to.0] -= line.nominal_flow;
    }
    off
}

/// Factored power-flow model of one grid.
pub struct PowerFlow<'g> {
    grid: &'g Grid,
    index: Vec<Option<usize>>,
    factor: Option<Cholesky<f64, Dyn>>,
    offsets: Vec<f64>,
    use_nominal_flows: bool,
}

impl<'g> PowerFlow<'g> {
    pub fn new(grid: &'g Grid, use_nominal_flows: bool) -> Result<Self, FlowError> {
        let index = reduced_index(grid);
        let n = grid.n_buses() - 1;
        let factor = if n == 0 {
            None
        } else {
            let mut b = DMatrix::<f64>::zeros(n, n);
            for line in grid.lines() {
                let w = 1.0 / line.dynamic_impedance;
                let (i, j) = (index[line.from.0], index[line.to.0]);
                if let Some(i) = i {
                    b[(i, i)] += w;
                }
                if let Some(j) = j {
                    b[(j, j)] += w;
                }
                if let (Some(i), Some(j)) = (i, j) {
                    b[(i, j)] -= w;
                    b[(j, i)] -= w;
                }
            }
            Some(Cholesky::new(b).ok_or(FlowError::Singular)?)
        };
        let offsets = if use_nominal_flows {
            nominal_offsets(grid)
        } else {
            vec![0.0; grid.n_buses()]
        };
        Ok(PowerFlow {
            grid,
            index,
            factor,
            offsets,
            use_nominal_flows,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    /// Solve `B θ = p − offset` with the reference angle pinned to 0.
    pub fn solve_angles(&self, inj: &Injections) -> Result<AngleSolution, FlowError> {
        let n = self.grid.n_buses();
        if inj.0.len() != n {
            return Err(FlowError::Dimension {
                expected: n,
                got: inj.0.len(),
            });
        }
        let sum: f64 = inj.0.iter().sum();
        let scale: f64 = inj.0.iter().map(|p| p.abs()).sum();
        let tol = BALANCE_TOL * scale.max(f64::MIN_POSITIVE);
        if sum.abs() > tol && sum.abs() > 1e-12 {
            return Err(FlowError::Unbalanced { sum, tol });
        }
        let mut theta = vec![0.0; n];
        if let Some(factor) = &self.factor {
            let mut rhs = DVector::<f64>::zeros(n - 1);
            for b in 0..n {
                if let Some(i) = self.index[b] {
                    rhs[i] = inj.0[b] - self.offsets[b];
                }
            }
            let x = factor.solve(&rhs);
            for b in 0..n {
                if let Some(i) = self.index[b] {
                    theta[b] = x[i];
                }
            }
        }
        Ok(AngleSolution { theta })
    }

    pub fn line_flows(&self, theta: &AngleSolution) -> LineFlows {
        line_flows(self.grid, theta, self.use_nominal_flows)
    }
}

/// `p0 + (θ_from − θ_to)/s` per line; offsets are dropped when `use_nominal_flows` is false.
pub fn line_flows(grid: &Grid, theta: &AngleSolution, use_nominal_flows: bool) -> LineFlows {
    let flows = grid
        .lines()
        .iter()
        .map(|l| {
            let p0 = if use_nominal_flows { l.nominal_flow } else { 0.0 };
            p0 + (theta.theta[l.from.0] - theta.theta[l.to.0]) / l.dynamic_impedance
        })
        .collect();
    LineFlows { flows }
}

/// One-shot convenience wrapper that factors the Laplacian and solves.
pub fn solve_angles(grid: &Grid, inj: &Injections) -> Result<AngleSolution, FlowError> {
    PowerFlow::new(grid, true)?.solve_angles(inj)
}
