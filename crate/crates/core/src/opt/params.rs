//! Control schemes and the flat, scaled parameter vector the optimizer sees.

use crate::dynamics::Policy;
use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Dispatch,
    AlphaP,
    AlphaI,
    AlphaF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "flow-pi-uncoord")]
    FlowPiUncoord,
    #[serde(rename = "flow-pi-coord")]
    FlowPiCoord,
    #[serde(rename = "flow-p")]
    FlowP,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::Pi,
        SchemeId::FlowPiUncoord,
        SchemeId::FlowPiCoord,
        SchemeId::FlowP,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            SchemeId::Pi => "pi",
            SchemeId::FlowPiUncoord => "flow-pi-uncoord",
            SchemeId::FlowPiCoord => "flow-pi-coord",
            SchemeId::FlowP => "flow-p",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown scheme '{0}'; expected pi, flow-pi-uncoord, flow-pi-coord or flow-p")]
pub struct UnknownScheme(pub String);

impl FromStr for SchemeId {
    type Err = UnknownScheme;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.slug() == s)
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// Which blocks are pinned at zero and which are optimized in each pass.
/// Blocks that are neither come from the previous pass (or the initial policy).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub id: SchemeId,
    pub zeroed: Vec<Block>,
    pub passes: Vec<Vec<Block>>,
}

impl SchemeSpec {
    pub fn new(id: SchemeId) -> SchemeSpec {
        use Block::*;
        let (zeroed, passes) = match id {
            SchemeId::Pi => (vec![AlphaF], vec![vec![Dispatch, AlphaP, AlphaI]]),
            SchemeId::FlowP => (vec![AlphaI], vec![vec![Dispatch, AlphaP, AlphaF]]),
            SchemeId::FlowPiCoord => (vec![], vec![vec![Dispatch, AlphaP, AlphaI, AlphaF]]),
            SchemeId::FlowPiUncoord => (
                vec![],
                vec![vec![Dispatch, AlphaP, AlphaI], vec![AlphaF]],
            ),
        };
        SchemeSpec { id, zeroed, passes }
    }

    /// Zero the pinned blocks of `policy`.
    pub fn apply_zeroed(&self, policy: &mut Policy) {
        for b in &self.zeroed {
            zero_block(policy, *b);
        }
    }

    pub fn layout(&self, grid: &Grid, horizon: usize, pass: usize) -> ParamLayout {
        ParamLayout::new(grid, horizon, &self.passes[pass], &self.zeroed)
    }
}

fn zero_block(policy: &mut Policy, block: Block) {
    match block {
        Block::Dispatch => policy.dispatch.iter_mut().flatten().for_each(|v| *v = 0.0),
        Block::AlphaP => policy.alpha_p.iter_mut().for_each(|v| *v = 0.0),
        Block::AlphaI => policy.alpha_i.iter_mut().for_each(|v| *v = 0.0),
        Block::AlphaF => policy.alpha_f.iter_mut().flatten().for_each(|v| *v = 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub block: Block,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter vector with its block map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parameter vector has {got} entries, layout expects {expected}")]
pub struct LayoutMismatch {
    pub expected: usize,
    pub got: usize,
}

/// Frequency deviation over which a unit gain of one normalized unit sweeps
/// the generator's whole range.
pub const GAIN_REFERENCE_HZ: f64 = 0.1;

/// Power of two nearest to `x` in log scale; exact to multiply and divide by.
fn pow2_scale(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return 1.0;
    }
    2f64.powi(x.log2().round() as i32)
}

/// Mapping between a policy and normalized optimizer coordinates:
/// `physical = normalized * scale`. Dispatch scales with each unit's size,
/// α^P and α^I with the unit's range per [`GAIN_REFERENCE_HZ`]; α^F is
/// already dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub slots: Vec<Slot>,
    pub zeroed: Vec<Block>,
    horizon: usize,
    gen_scale: Vec<f64>,
    gain_scale: Vec<f64>,
    degrees: Vec<usize>,
}

impl ParamLayout {
    pub fn new(grid: &Grid, horizon: usize, free: &[Block], zeroed: &[Block]) -> ParamLayout {
        let online = grid.online_generators();
        let m = online.len();
        let degrees: Vec<usize> = online
            .iter()
            .map(|g| grid.neighbors(grid.generator(*g).bus).len())
            .collect();
        let mut blocks: Vec<Block> = free.iter().copied().filter(|b| !zeroed.contains(b)).collect();
        blocks.sort();
        blocks.dedup();
        let mut slots = Vec::new();
        let mut offset = 0;
        for block in blocks {
            let len = match block {
                Block::Dispatch => (horizon + 1) * m,
                Block::AlphaP | Block::AlphaI => m,
                Block::AlphaF => degrees.iter().sum(),
            };
            slots.push(Slot { block, offset, len });
            offset += len;
        }
        let gen_scale = online
            .iter()
            .map(|g| {
                let gen = grid.generator(*g);
                pow2_scale(gen.p_max.abs().max(gen.p_min.abs()))
            })
            .collect();
        let gain_scale = online
            .iter()
            .map(|g| {
                let gen = grid.generator(*g);
                pow2_scale((gen.p_max - gen.p_min).max(1.0) / GAIN_REFERENCE_HZ)
            })
            .collect();
        ParamLayout {
            slots,
            zeroed: zeroed.to_vec(),
            horizon,
            gen_scale,
            gain_scale,
            degrees,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visit every free entry as `(flat index, scale, accessor)`.
    fn for_each<F: FnMut(usize, f64, Entry)>(&self, mut f: F) {
        let m = self.gen_scale.len();
        for slot in &self.slots {
            let mut i = slot.offset;
            match slot.block {
                Block::Dispatch => {
                    for t in 0..=self.horizon {
                        for k in 0..m {
                            f(i, self.gen_scale[k], Entry::Dispatch(t, k));
                            i += 1;
                        }
                    }
                }
                Block::AlphaP => {
                    for k in 0..m {
                        f(i, self.gain_scale[k], Entry::AlphaP(k));
                        i += 1;
                    }
                }
                Block::AlphaI => {
                    for k in 0..m {
                        f(i, self.gain_scale[k], Entry::AlphaI(k));
                        i += 1;
                    }
                }
                Block::AlphaF => {
                    for (k, &deg) in self.degrees.iter().enumerate() {
                        for j in 0..deg {
                            f(i, 1.0, Entry::AlphaF(k, j));
                            i += 1;
                        }
                    }
                }
            }
        }
    }

    /// Normalized coordinates of the free blocks of `policy`.
    pub fn pack(&self, policy: &Policy) -> ParamVector {
        let mut values = vec![0.0; self.len()];
        self.for_each(|i, s, e| values[i] = *e.get(policy) / s);
        ParamVector {
            values,
            slots: self.slots.clone(),
        }
    }

    /// Policy with free blocks from `values`, pinned blocks zero and all other
    /// blocks copied from `base`.
    pub fn unpack(&self, values: &[f64], base: &Policy) -> Result<Policy, LayoutMismatch> {
        if values.len() != self.len() {
            return Err(LayoutMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        let mut p = base.clone();
        for b in &self.zeroed {
            zero_block(&mut p, *b);
        }
        self.for_each(|i, s, e| *e.get_mut(&mut p) = values[i] * s);
        Ok(p)
    }

    /// Gradient in normalized coordinates from a gradient in policy shape.
    pub fn normalized_gradient(&self, grad: &Policy) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        self.for_each(|i, s, e| g[i] = *e.get(grad) * s);
        g
    }

    /// Policy-shaped direction from a normalized direction; other entries zero.
    pub fn direction(&self, values: &[f64], template: &Policy) -> Policy {
        let mut d = template.map(|_| 0.0);
        self.for_each(|i, s, e| *e.get_mut(&mut d) = values[i] * s);
        d
    }
}

#[derive(Clone, Copy)]
enum Entry {
    Dispatch(usize, usize),
    AlphaP(usize),
    AlphaI(usize),
    AlphaF(usize, usize),
}

impl Entry {
    fn get(self, p: &Policy) -> &f64 {
        match self {
            Entry::Dispatch(t, k) => &p.dispatch[t][k],
            Entry::AlphaP(k) => &p.alpha_p[k],
            Entry::AlphaI(k) => &p.alpha_i[k],
            Entry::AlphaF(k, j) => &p.alpha_f[k][j],
        }
    }

    fn get_mut(self, p: &mut Policy) -> &mut f64 {
        match self {
            Entry::Dispatch(t, k) => &mut p.dispatch[t][k],
            Entry::AlphaP(k) => &mut p.alpha_p[k],
            Entry::AlphaI(k) => &mut p.alpha_i[k],
            Entry::AlphaF(k, j) => &mut p.alpha_f[k][j],
        }
    }
}

/// Pack the first pass of `spec`.
pub fn pack(policy: &Policy, spec: &SchemeSpec, grid: &Grid) -> ParamVector {
    spec.layout(grid, policy.horizon(), 0).pack(policy)
}

/// Unpack into the first-pass layout of `spec` on top of `base`.
pub fn unpack(v: &ParamVector, spec: &SchemeSpec, grid: &Grid, base: &Policy) -> Result<Policy, LayoutMismatch> {
    spec.layout(grid, base.horizon(), 0).unpack(&v.values, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_power_of_two() {
        assert_eq!(pow2_scale(100.0), 128.0);
        assert_eq!(pow2_scale(90.0), 64.0);
        assert_eq!(pow2_scale(1.0), 1.0);
        assert_eq!(pow2_scale(0.0), 1.0);
    }

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.slug().parse::<SchemeId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.slug()));
        }
        assert!("PI".parse::<SchemeId>().is_err());
    }

    #[test]
    fn staging() {
        assert_eq!(SchemeSpec::new(SchemeId::FlowPiUncoord).passes.len(), 2);
        assert_eq!(SchemeSpec::new(SchemeId::FlowPiCoord).passes.len(), 1);
        assert!(SchemeSpec::new(SchemeId::Pi).zeroed.contains(&Block::AlphaF));
        assert!(SchemeSpec::new(SchemeId::FlowP).zeroed.contains(&Block::AlphaI));
    }
}
