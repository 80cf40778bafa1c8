//! Random connected test networks, scenarios and policies.

use crate::dynamics::Policy;
use crate::grid::{Bus, BusId, GenId, GeneratorSpec, Grid, GridSpec, Line, ParseOptions};
use crate::scenarios::{Scenario, ScenarioSet};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub buses: usize,
    pub generators: usize,
    /// Extra lines beyond a random spanning tree, as a fraction of `buses`.
    pub chord_fraction: f64,
    /// Probability that a line carries a nonzero nominal flow.
    pub nominal_flow_prob: f64,
}

impl SynthOptions {
    pub fn new(buses: usize, generators: usize) -> Self {
        SynthOptions {
            buses,
            generators: generators.min(buses),
            chord_fraction: 0.5,
            nominal_flow_prob: 0.3,
        }
    }
}

/// Random grid: spanning tree plus chords, one generator on each of
/// `generators` distinct buses, load response at every bus.
pub fn random_grid_spec<R: Rng>(rng: &mut R, opts: &SynthOptions) -> GridSpec {
    let n = opts.buses.max(1);
    let buses = (0..n)
        .map(|i| Bus {
            id: BusId(i),
            beta_l: -rng.random_range(1.0..20.0),
        })
        .collect();
    let mut lines = Vec::new();
    let line = |rng: &mut R, f: usize, t: usize| Line {
        from: BusId(f),
        to: BusId(t),
        dynamic_impedance: rng.random_range(0.002..0.02),
        thermal_limit: rng.random_range(50.0..300.0),
        nominal_flow: if rng.random_bool(opts.nominal_flow_prob) {
            rng.random_range(-10.0..10.0)
        } else {
            0.0
        },
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        let l = if rng.random_bool(0.5) { line(rng, i, j) } else { line(rng, j, i) };
        lines.push(l);
    }
    if n > 2 {
        let chords = (opts.chord_fraction * n as f64).round() as usize;
        for _ in 0..chords {
            let f = rng.random_range(0..n);
            let mut t = rng.random_range(0..n);
            while t == f {
                t = rng.random_range(0..n);
            }
            lines.push(line(rng, f, t));
        }
    }
    let mut hosts: Vec<usize> = (0..n).collect();
    hosts.shuffle(rng);
    let generators = hosts[..opts.generators.min(n)]
        .iter()
        .map(|&b| {
            let p_min = rng.random_range(0.0..20.0);
            GeneratorSpec {
                bus: BusId(b),
                online: true,
                c1: rng.random_range(0.001..0.05),
                c2: rng.random_range(10.0..40.0),
                c3: rng.random_range(0.0..100.0),
                p_min,
                p_max: p_min + rng.random_range(50.0..200.0),
                ramp_min: -rng.random_range(1.0..10.0),
                ramp_max: rng.random_range(1.0..10.0),
                energy_target: None,
            }
        })
        .collect();
    GridSpec {
        buses,
        lines,
        generators,
        reference_bus: BusId(rng.random_range(0..n)),
        base_mva: 100.0,
    }
}

pub fn random_grid<R: Rng>(rng: &mut R, opts: &SynthOptions) -> Grid {
    Grid::new(random_grid_spec(rng, opts), &ParseOptions::default()).expect("synthetic grid is valid")
}

/// Relabel buses by `perm` (old id -> new id), keeping line and generator order.
pub fn permute_buses(spec: &GridSpec, perm: &[usize]) -> GridSpec {
    let mut buses: Vec<Bus> = spec
        .buses
        .iter()
        .map(|b| Bus {
            id: BusId(perm[b.id.0]),
            beta_l: b.beta_l,
        })
        .collect();
    buses.sort_by_key(|b| b.id);
    GridSpec {
        buses,
        lines: spec
            .lines
            .iter()
            .map(|l| Line {
                from: BusId(perm[l.from.0]),
                to: BusId(perm[l.to.0]),
                ..l.clone()
            })
            .collect(),
        generators: spec
            .generators
            .iter()
            .map(|g| GeneratorSpec {
                bus: BusId(perm[g.bus.0]),
                ..g.clone()
            })
            .collect(),
        reference_bus: BusId(perm[spec.reference_bus.0]),
        base_mva: spec.base_mva,
    }
}

/// Balanced random injections over the buses of `grid`, MW.
pub fn random_injections<R: Rng>(rng: &mut R, grid: &Grid) -> Vec<f64> {
    let n = grid.n_buses();
    let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    for v in &mut p {
        *v -= mean;
    }
    // remove the remaining rounding imbalance at one bus
    let rest: f64 = p[1..].iter().sum();
    p[0] = -rest;
    p
}

/// Random renewable and load series with uniform probabilities.
pub fn random_scenarios<R: Rng>(rng: &mut R, grid: &Grid, horizon: usize, count: usize) -> ScenarioSet {
    let n = grid.n_buses();
    let commitment: Vec<GenId> = grid.online_generators().to_vec();
    let scenarios = (0..count)
        .map(|id| {
            let p_r = (0..=horizon)
                .map(|_| {
                    (0..n)
                        .map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..40.0) } else { 0.0 })
                        .collect()
                })
                .collect();
            let p_l0 = (0..=horizon)
                .map(|_| (0..n).map(|_| -rng.random_range(0.0..60.0)).collect())
                .collect();
            Scenario {
                id,
                p_r,
                p_l0,
                commitment: commitment.clone(),
                prob: 1.0 / count as f64,
            }
        })
        .collect();
    ScenarioSet { scenarios, seed: 0 }
}

/// Random policy. Gains are small enough that the closed loop stays well
/// conditioned: `α^P` in `[−50, 0]·Σ|β|/m`, `α^I` of either sign, `|α^F| ≤ 0.3`.
pub fn random_policy<R: Rng>(rng: &mut R, grid: &Grid, horizon: usize, with_integral: bool, with_flow: bool) -> Policy {
    let mut p = Policy::zeros(grid, horizon);
    let m = grid.online_generators().len().max(1) as f64;
    let gain = grid.beta_abs_sum() / m;
    for (k, g) in grid.online_generators().iter().enumerate() {
        let gen = grid.generator(*g);
        for t in 0..=horizon {
            p.dispatch[t][k] = rng.random_range(gen.p_min..gen.p_max);
        }
        p.alpha_p[k] = -rng.random_range(0.0..50.0) * gain;
        if with_integral {
            p.alpha_i[k] = rng.random_range(-5.0..5.0) * gain;
        }
        if with_flow {
            for a in &mut p.alpha_f[k] {
                *a = rng.random_range(-0.3..0.3);
            }
        }
    }
    p
}
