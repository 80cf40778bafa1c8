//! Network data model.
//!
//! A [`Grid`] is built once from a [`GridSpec`] (the native JSON schema or a
//! MATPOWER case) and never mutated afterwards. Construction validates every
//! structural invariant and reports all violations at once.

mod matpower;

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

pub use matpower::parse_matpower;

/// Index of a bus, `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

/// Index into the generator table of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GenId(pub usize);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for GenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    /// Load frequency response in MW/Hz. Negative where a load is present.
    #[serde(default)]
    pub beta_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    /// Linearized angle-to-flow coefficient in rad/MW.
    #[serde(alias = "s_d")]
    pub dynamic_impedance: f64,
    /// MW.
    #[serde(alias = "p_bar")]
    pub thermal_limit: f64,
    /// MW, stored in the `from -> to` direction.
    #[serde(default, alias = "p0")]
    pub nominal_flow: f64,
}

/// Generator record as it appears in a case file; `energy_target` may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub bus: BusId,
    #[serde(default = "default_online")]
    pub online: bool,
    /// $/MW².
    #[serde(default)]
    pub c1: f64,
    /// $/MW.
    #[serde(default)]
    pub c2: f64,
    /// $.
    #[serde(default)]
    pub c3: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// MW/min, negative.
    pub ramp_min: f64,
    /// MW/min, positive.
    pub ramp_max: f64,
    /// MWh over the control period.
    #[serde(default, alias = "E_bar", skip_serializing_if = "Option::is_none")]
    pub energy_target: Option<f64>,
}

fn default_online() -> bool {
    true
}

fn default_base_mva() -> f64 {
    100.0
}

/// Raw case data in the native schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<GeneratorSpec>,
    pub reference_bus: BusId,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
}

/// Validated generator with every field populated.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    pub online: bool,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_min: f64,
    pub ramp_max: f64,
    pub energy_target: f64,
}

impl Generator {
    fn to_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            bus: self.bus,
            online: self.online,
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            p_min: self.p_min,
            p_max: self.p_max,
            ramp_min: self.ramp_min,
            ramp_max: self.ramp_max,
            energy_target: Some(self.energy_target),
        }
    }
}

/// Lines joining a bus to one neighbor. `sign` is +1 when the line's stored
/// direction leaves the bus, so `sign * flow` is the flow towards the neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub bus: BusId,
    pub lines: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Control period length used for the default energy target.
    pub horizon_hours: f64,
    /// Merge co-located generators instead of rejecting them.
    pub aggregate: bool,
    /// MATPOWER only: load frequency response as a fraction of bus demand per Hz.
    pub load_damping_per_hz: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            horizon_hours: 1.0,
            aggregate: false,
            load_damping_per_hz: 0.02,
        }
    }
}

/// A single violated grid invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoBuses,
    NonPositiveBaseMva(f64),
    BusIdOutOfOrder { position: usize, id: BusId },
    NonFiniteValue { item: String },
    ReferenceOutOfRange(BusId),
    LineEndpoint { line: usize, bus: BusId },
    SelfLoop { line: usize },
    NonPositiveImpedance { line: usize, value: f64 },
    NonPositiveThermalLimit { line: usize, value: f64 },
    GeneratorBus { gen: GenId, bus: BusId },
    GeneratorLimits { gen: GenId, p_min: f64, p_max: f64 },
    RampLimits { gen: GenId, ramp_min: f64, ramp_max: f64 },
    SharedBus { bus: BusId, gens: Vec<GenId> },
    ZeroLoadResponse,
    PositiveLoadResponse(f64),
    Unreachable { component: Vec<BusId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBuses => write!(f, "grid has no buses"),
            Violation::NonPositiveBaseMva(v) => write!(f, "base_mva must be positive, got {v}"),
            Violation::BusIdOutOfOrder { position, id } => {
                write!(f, "bus at position {position} has id {id}; ids must be 0..n in order")
            }
            Violation::NonFiniteValue { item } => write!(f, "non-finite value in {item}"),
            Violation::ReferenceOutOfRange(b) => write!(f, "reference bus {b} does not exist"),
            Violation::LineEndpoint { line, bus } => {
                write!(f, "line {line} references missing bus {bus}")
            }
            Violation::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            Violation::NonPositiveImpedance { line, value } => {
                write!(f, "line {line} has non-positive dynamic impedance {value}")
            }
            Violation::NonPositiveThermalLimit { line, value } => {
                write!(f, "line {line} has non-positive thermal limit {value}")
            }
            Violation::GeneratorBus { gen, bus } => {
                write!(f, "generator {gen} sits on missing bus {bus}")
            }
            Violation::GeneratorLimits { gen, p_min, p_max } => {
                write!(f, "generator {gen} has p_min {p_min} > p_max {p_max}")
            }
            Violation::RampLimits { gen, ramp_min, ramp_max } => write!(
                f,
                "generator {gen} ramp limits must satisfy ramp_min < 0 < ramp_max, got [{ramp_min}, {ramp_max}]"
            ),
            Violation::SharedBus { bus, gens } => {
                let ids: Vec<String> = gens.iter().map(|g| g.to_string()).collect();
                write!(f, "bus {bus} hosts several generators ({}); aggregate them first", ids.join(", "))
            }
            Violation::ZeroLoadResponse => write!(f, "zero aggregate load frequency response"),
            Violation::PositiveLoadResponse(s) => {
                write!(f, "aggregate load frequency response must be negative, got {s} MW/Hz")
            }
            Violation::Unreachable { component } => {
                let ids: Vec<String> = component.iter().map(|b| b.to_string()).collect();
                write!(f, "buses [{}] are unreachable from the reference bus", ids.join(", "))
            }
        }
    }
}

/// Every violation found, in check order.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid grid: {0}")]
    Invalid(Violations),
    #[error("linearization invalid for angle difference {angle} rad (must lie strictly inside ±π/2)")]
    LinearizationInvalid { angle: f64 },
    #[error("dynamic impedance needs positive reactance and voltages, got x={x}, v_from={v_from}, v_to={v_to}")]
    BadLinearizationInput { x: f64, v_from: f64, v_to: f64 },
}

/// Immutable, validated network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: Vec<Generator>,
    reference_bus: BusId,
    base_mva: f64,
    neighbors: Vec<Vec<Neighbor>>,
    gen_at_bus: Vec<Option<GenId>>,
    online: Vec<GenId>,
    beta_sum: f64,
}

impl Grid {
    pub fn new(spec: GridSpec, opts: &ParseOptions) -> Result<Grid, GridError> {
        let spec = if opts.aggregate {
            aggregate_generators(spec)
        } else {
            spec
        };
        let violations = check(&spec);
        if !violations.is_empty() {
            return Err(GridError::Invalid(Violations(violations)));
        }
        let GridSpec {
            buses,
            lines,
            generators,
            reference_bus,
            base_mva,
        } = spec;
        let generators: Vec<Generator> = generators
            .into_iter()
            .map(|g| Generator {
                bus: g.bus,
                online: g.online,
                c1: g.c1,
                c2: g.c2,
                c3: g.c3,
                p_min: g.p_min,
                p_max: g.p_max,
                ramp_min: g.ramp_min,
                ramp_max: g.ramp_max,
                energy_target: g
                    .energy_target
                    .unwrap_or(g.p_max * opts.horizon_hours / 2.0),
            })
            .collect();

        let n = buses.len();
        let mut neighbors: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
        for (l, line) in lines.iter().enumerate() {
            for (bus, other, sign) in [(line.from, line.to, 1.0), (line.to, line.from, -1.0)] {
                let list = &mut neighbors[bus.0];
                match list.iter_mut().find(|nb| nb.bus == other) {
                    Some(nb) => nb.lines.push((l, sign)),
                    None => list.push(Neighbor {
                        bus: other,
                        lines: vec![(l, sign)],
                    }),
                }
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|nb| nb.bus);
        }
        let mut gen_at_bus = vec![None; n];
        let mut online = Vec::new();
        for (g, gen) in generators.iter().enumerate() {
            gen_at_bus[gen.bus.0] = Some(GenId(g));
            if gen.online {
                online.push(GenId(g));
            }
        }
        let beta_sum = buses.iter().map(|b| b.beta_l).sum();
        Ok(Grid {
            buses,
            lines,
            generators,
            reference_bus,
            base_mva,
            neighbors,
            gen_at_bus,
            online,
            beta_sum,
        })
    }

    pub fn from_json_str(text: &str, opts: &ParseOptions) -> Result<Grid, GridError> {
        let spec: GridSpec = serde_json::from_str(text).map_err(|e| GridError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Grid::new(spec, opts)
    }

    pub fn to_spec(&self) -> GridSpec {
        GridSpec {
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            generators: self.generators.iter().map(Generator::to_spec).collect(),
            reference_bus: self.reference_bus,
            base_mva: self.base_mva,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("grid serializes")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn generator(&self, id: GenId) -> &Generator {
        &self.generators[id.0]
    }

    pub fn reference_bus(&self) -> BusId {
        self.reference_bus
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Online generators in id order; this is the unit commitment.
    pub fn online_generators(&self) -> &[GenId] {
        &self.online
    }

    pub fn generator_at(&self, bus: BusId) -> Option<GenId> {
        self.gen_at_bus[bus.0]
    }

    /// Neighbors of a bus sorted by neighbor id.
    pub fn neighbors(&self, bus: BusId) -> &[Neighbor] {
        &self.neighbors[bus.0]
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta_sum
    }

    /// Σ|β^l| over buses, MW/Hz.
    pub fn beta_abs_sum(&self) -> f64 {
        self.buses.iter().map(|b| b.beta_l.abs()).sum()
    }
}

/// Parse a case in either the native JSON schema or MATPOWER `.m` layout.
pub fn parse_grid(text: &str, opts: &ParseOptions) -> Result<Grid, GridError> {
    if text.trim_start().starts_with('{') {
        Grid::from_json_str(text, opts)
    } else {
        let spec = parse_matpower(text, opts)?;
        Grid::new(spec, opts)
    }
}

/// First-order linearization of `V_i V_j sin(Δθ)/x` around `Δθ₀`, in per unit.
pub fn dynamic_impedance(x: f64, v_from: f64, v_to: f64, angle_diff0: f64) -> Result<f64, GridError> {
    if !(x > 0.0 && v_from > 0.0 && v_to > 0.0) {
        return Err(GridError::BadLinearizationInput { x, v_from, v_to });
    }
    if !angle_diff0.is_finite() || angle_diff0.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(GridError::LinearizationInvalid { angle: angle_diff0 });
    }
    let c = angle_diff0.cos();
    if c <= 0.0 {
        return Err(GridError::LinearizationInvalid { angle: angle_diff0 });
    }
    Ok(x / (v_from * v_to * c))
}

/// Check every invariant and return all violations.
pub fn check(spec: &GridSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = spec.buses.len();
    if n == 0 {
        out.push(Violation::NoBuses);
        return out;
    }
    if !(spec.base_mva > 0.0) || !spec.base_mva.is_finite() {
        out.push(Violation::NonPositiveBaseMva(spec.base_mva));
    }
    for (i, b) in spec.buses.iter().enumerate() {
        if b.id.0 != i {
            out.push(Violation::BusIdOutOfOrder { position: i, id: b.id });
        }
        if !b.beta_l.is_finite() {
            out.push(Violation::NonFiniteValue {
                item: format!("bus {i} beta_l"),
            });
        }
    }
    if spec.reference_bus.0 >= n {
        out.push(Violation::ReferenceOutOfRange(spec.reference_bus));
    }
    for (l, line) in spec.lines.iter().enumerate() {
        for bus in [line.from, line.to] {
            if bus.0 >= n {
                out.push(Violation::LineEndpoint { line: l, bus });
            }
        }
        if line.from == line.to {
            out.push(Violation::SelfLoop { line: l });
        }
        if !(line.dynamic_impedance > 0.0) || !line.dynamic_impedance.is_finite() {
            out.push(Violation::NonPositiveImpedance {
                line: l,
                value: line.dynamic_impedance,
            });
        }
        if !(line.thermal_limit > 0.0) || !line.thermal_limit.is_finite() {
            out.push(Violation::NonPositiveThermalLimit {
                line: l,
                value: line.thermal_limit,
            });
        }
        if !line.nominal_flow.is_finite() {
            out.push(Violation::NonFiniteValue {
                item: format!("line {l} nominal_flow"),
            });
        }
    }
    let mut by_bus: Vec<Vec<GenId>> = vec![Vec::new(); n];
    for (g, gen) in spec.generators.iter().enumerate() {
        let id = GenId(g);
        if gen.bus.0 >= n {
            out.push(Violation::GeneratorBus { gen: id, bus: gen.bus });
        } else {
            by_bus[gen.bus.0].push(id);
        }
        let values = [
            ("c1", gen.c1),
            ("c2", gen.c2),
            ("c3", gen.c3),
            ("p_min", gen.p_min),
            ("p_max", gen.p_max),
            ("ramp_min", gen.ramp_min),
            ("ramp_max", gen.ramp_max),
            ("energy_target", gen.energy_target.unwrap_or(0.0)),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                out.push(Violation::NonFiniteValue {
                    item: format!("generator {g} {name}"),
                });
            }
        }
        if gen.p_min > gen.p_max {
            out.push(Violation::GeneratorLimits {
                gen: id,
                p_min: gen.p_min,
                p_max: gen.p_max,
            });
        }
        if !(gen.ramp_min < 0.0 && gen.ramp_max > 0.0) {
            out.push(Violation::RampLimits {
                gen: id,
                ramp_min: gen.ramp_min,
                ramp_max: gen.ramp_max,
            });
        }
    }
    for (b, gens) in by_bus.into_iter().enumerate() {
        if gens.len() > 1 {
            out.push(Violation::SharedBus { bus: BusId(b), gens });
        }
    }
    let beta_sum: f64 = spec.buses.iter().map(|b| b.beta_l).sum();
    if beta_sum == 0.0 {
        out.push(Violation::ZeroLoadResponse);
    } else if beta_sum > 0.0 {
        out.push(Violation::PositiveLoadResponse(beta_sum));
    }
    if spec.reference_bus.0 < n {
        for component in unreachable_components(spec) {
            out.push(Violation::Unreachable { component });
        }
    }
    out
}

/// Connected components that do not contain the reference bus.
fn unreachable_components(spec: &GridSpec) -> Vec<Vec<BusId>> {
    let n = spec.buses.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for line in &spec.lines {
        if line.from.0 < n && line.to.0 < n {
            adj[line.from.0].push(line.to.0);
            adj[line.to.0].push(line.from.0);
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    let order = std::iter::once(spec.reference_bus.0).chain(0..n);
    for start in order {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = count;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = count;
                    queue.push_back(v);
                }
            }
        }
        count += 1;
    }
    (1..count)
        .map(|c| {
            (0..n)
                .filter(|&b| component[b] == c)
                .map(BusId)
                .collect()
        })
        .collect()
}

/// Merge generators sharing a bus.
///
/// Online units at a bus are combined into one: limits, ramps and energy
/// targets add, and the quadratic cost curve is the equal-marginal-cost
/// combination of the individual curves. Offline units at a bus that also has
/// online units are dropped; purely offline groups are merged the same way.
pub fn aggregate_generators(mut spec: GridSpec) -> GridSpec {
    let n = spec.buses.len();
    let mut groups: Vec<(BusId, bool, Vec<GeneratorSpec>)> = Vec::new();
    let has_online: Vec<bool> = (0..n)
        .map(|b| spec.generators.iter().any(|g| g.bus.0 == b && g.online))
        .collect();
    for gen in spec.generators.drain(..) {
        if gen.bus.0 < n && has_online[gen.bus.0] && !gen.online {
            continue;
        }
        match groups.iter_mut().find(|(b, on, _)| *b == gen.bus && *on == gen.online) {
            Some((_, _, members)) => members.push(gen),
            None => groups.push((gen.bus, gen.online, vec![gen])),
        }
    }
    spec.generators = groups
        .into_iter()
        .map(|(_, _, members)| merge_group(members))
        .collect();
    spec
}

fn merge_group(mut members: Vec<GeneratorSpec>) -> GeneratorSpec {
    if members.len() == 1 {
        return members.pop().unwrap();
    }
    let first = members[0].clone();
    let sum = |f: &dyn Fn(&GeneratorSpec) -> f64| members.iter().map(f).sum::<f64>();
    let energy_target = if members.iter().all(|g| g.energy_target.is_some()) {
        Some(sum(&|g| g.energy_target.unwrap()))
    } else {
        None
    };
    let (c1, c2, c3) = if members.iter().all(|g| g.c1 > 0.0) {
        // Each unit runs at p_k = w_k (λ - c2_k) with w_k = 1/(2 c1_k).
        let weights: Vec<f64> = members.iter().map(|g| 0.5 / g.c1).collect();
        let w_total: f64 = weights.iter().sum();
        let lambda0 = members
            .iter()
            .zip(&weights)
            .map(|(g, w)| w * g.c2)
            .sum::<f64>()
            / w_total;
        let c3 = members
            .iter()
            .zip(&weights)
            .map(|(g, w)| {
                let p = w * (lambda0 - g.c2);
                g.c1 * p * p + g.c2 * p + g.c3
            })
            .sum::<f64>();
        (0.5 / w_total, lambda0, c3)
    } else {
        // With a linear unit the merged curve is set by the cheapest marginal cost.
        let c2 = members.iter().map(|g| g.c2).fold(f64::INFINITY, f64::min);
        (0.0, c2, sum(&|g| g.c3))
    };
    GeneratorSpec {
        bus: first.bus,
        online: first.online,
        c1,
        c2,
        c3,
        p_min: sum(&|g| g.p_min),
        p_max: sum(&|g| g.p_max),
        ramp_min: sum(&|g| g.ramp_min),
        ramp_max: sum(&|g| g.ramp_max),
        energy_target,
    }
}
