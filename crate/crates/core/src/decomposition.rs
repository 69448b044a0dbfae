//! Splitting a circulation into balanced flows along cycles, and naming the
//! kind of exchange each cycle represents.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::graph::{validate_flow, EdgeId, Flow, FlowError, NodeId, SocialRequestGraph};
use crate::scalar::Scalar;
use crate::solver::{ArcKind, ArcOrigin, Cycle};

/// One traversal of a cycle, in the direction flow moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CycleStep {
    /// Service from `from` (provider) to `to` (requester).
    Request { edge: EdgeId, from: NodeId, to: NodeId },
    /// Credit from `from` to `to`.
    Social { from: NodeId, to: NodeId },
}

impl CycleStep {
    pub fn from(&self) -> NodeId {
        match *self {
            CycleStep::Request { from, .. } | CycleStep::Social { from, .. } => from,
        }
    }

    pub fn to(&self) -> NodeId {
        match *self {
            CycleStep::Request { to, .. } | CycleStep::Social { to, .. } => to,
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self, CycleStep::Request { .. })
    }
}

/// A balanced flow: `value` units on every step of a closed walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleFlow<T> {
    pub steps: Vec<CycleStep>,
    pub value: T,
}

impl<T: Scalar> CycleFlow<T> {
    /// Converts a residual cycle made only of forward request arcs and social arcs.
    /// Returns `None` if the cycle withdraws service along a backward arc.
    pub fn from_residual_cycle(cycle: &Cycle<T>, value: T) -> Option<Self> {
        let steps = cycle
            .arcs
            .iter()
            .map(|a| match (a.kind, a.origin) {
                (ArcKind::RequestForward, ArcOrigin::Request { edge, .. }) => {
                    Some(CycleStep::Request { edge, from: a.from, to: a.to })
                }
                (ArcKind::Social, _) => Some(CycleStep::Social { from: a.from, to: a.to }),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(CycleFlow { steps, value })
    }

    pub fn is_closed(&self) -> bool {
        !self.steps.is_empty()
            && self.steps.windows(2).all(|w| w[0].to() == w[1].from())
            && self.steps.last().unwrap().to() == self.steps[0].from()
    }

    pub fn request_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_request()).count()
    }

    /// `1-R->2-S->4-R->3-S->1`
    pub fn path(&self) -> String {
        let mut out = self.steps.first().map(|s| s.from().to_string()).unwrap_or_default();
        for s in &self.steps {
            let tag = if s.is_request() { 'R' } else { 'S' };
            out.push_str(&format!("-{tag}->{}", s.to()));
        }
        out
    }
}

/// Kind of exchange a cycle represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CycleClass {
    /// Two users serve each other.
    DirectReciprocity,
    /// Three or more users serve each other around a ring.
    IndirectReciprocity,
    /// Service paid for directly with credit.
    DirectSocial,
    /// Service paid for with credit relayed through intermediaries.
    IndirectSocial,
    Mixed,
}

impl fmt::Display for CycleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CycleClass::DirectReciprocity => "direct-reciprocity",
            CycleClass::IndirectReciprocity => "indirect-reciprocity",
            CycleClass::DirectSocial => "direct-social",
            CycleClass::IndirectSocial => "indirect-social",
            CycleClass::Mixed => "mixed",
        })
    }
}

pub fn classify_cycle<T: Scalar>(cycle: &CycleFlow<T>) -> CycleClass {
    let requests = cycle.request_count();
    let social = cycle.steps.len() - requests;
    match (requests, social) {
        (2, 0) => CycleClass::DirectReciprocity,
        (r, 0) if r >= 3 => CycleClass::IndirectReciprocity,
        (1, 1) => CycleClass::DirectSocial,
        (1, s) if s >= 2 => CycleClass::IndirectSocial,
        _ => CycleClass::Mixed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecompositionError {
    #[error("flow is not a circulation: {0}")]
    NotACirculation(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("cycle step {0:?} does not match an edge of the graph")]
    UnknownStep(CycleStep),
}

/// Outgoing edges of a node, request edges (by id) before social pairs.
#[derive(Default, Clone)]
struct Outgoing {
    requests: Vec<usize>,
    social: Vec<usize>,
}

/// Decomposes a circulation into balanced cycle flows whose aggregate is the
/// input flow.
///
/// Tracing starts at the lowest node with positive outgoing flow and follows
/// the first positive outgoing edge (request edges by id, then social pairs
/// in their net direction) until a node repeats. The loop found is removed
/// with its minimum flow, which zeroes at least one edge, so at most as many
/// cycles are produced as there are edges with nonzero flow.
pub fn decompose_circulation<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    flow: &Flow<T>,
) -> Result<Vec<CycleFlow<T>>, DecompositionError> {
    let report = validate_flow(graph, flow)?;
    if !report.is_circulation() {
        return Err(DecompositionError::NotACirculation(format!("{:?}", report.violations)));
    }

    let n = graph.node_count();
    let idx = |v: NodeId| graph.index_of(v).expect("endpoint");
    let mut out = vec![Outgoing::default(); n];
    for (k, e) in graph.requests().iter().enumerate() {
        out[idx(e.provider)].requests.push(k);
    }
    for (k, p) in graph.social().iter().enumerate() {
        out[idx(p.i)].social.push(k);
        out[idx(p.j)].social.push(k);
    }

    let mut rest = flow.clone();
    let next_step = |rest: &Flow<T>, v: usize| -> Option<(CycleStep, usize)> {
        let node = graph.nodes()[v];
        for &k in &out[v].requests {
            if rest.request[k] > T::zero() {
                let e = &graph.requests()[k];
                return Some((CycleStep::Request { edge: e.id, from: node, to: e.requester }, idx(e.requester)));
            }
        }
        for &k in &out[v].social {
            let p = &graph.social()[k];
            let f = rest.social[k];
            if p.i == node && f > T::zero() {
                return Some((CycleStep::Social { from: p.i, to: p.j }, idx(p.j)));
            }
            if p.j == node && f < T::zero() {
                return Some((CycleStep::Social { from: p.j, to: p.i }, idx(p.i)));
            }
        }
        None
    };

    let mut cycles = Vec::new();
    let mut first = 0;
    loop {
        while first < n && next_step(&rest, first).is_none() {
            first += 1;
        }
        if first == n {
            break;
        }

        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut steps = Vec::new();
        let mut v = first;
        let start = loop {
            if let Some(&at) = seen.get(&v) {
                break at;
            }
            seen.insert(v, steps.len());
            let (step, to) = next_step(&rest, v).ok_or_else(|| {
                DecompositionError::NotACirculation(format!("no outgoing flow at node {}", graph.nodes()[v]))
            })?;
            steps.push(step);
            v = to;
        };
        let steps = steps.split_off(start);

        let value = steps
            .iter()
            .map(|s| step_amount(graph, &rest, s))
            .min()
            .expect("nonempty cycle");
        for s in &steps {
            apply_step(graph, &mut rest, s, -value);
        }
        cycles.push(CycleFlow { steps, value });
    }
    Ok(cycles)
}

fn step_amount<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &Flow<T>, step: &CycleStep) -> T {
    match *step {
        CycleStep::Request { edge, .. } => flow.request[graph.request_position(edge).unwrap()],
        CycleStep::Social { from, to } => {
            let k = graph.pair_position(from, to).unwrap();
            if graph.social()[k].i == from {
                flow.social[k]
            } else {
                -flow.social[k]
            }
        }
    }
}

/// Adds `delta` units of flow along one step.
fn apply_step<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &mut Flow<T>, step: &CycleStep, delta: T) {
    match *step {
        CycleStep::Request { edge, .. } => {
            let k = graph.request_position(edge).unwrap();
            flow.request[k] = flow.request[k] + delta;
        }
        CycleStep::Social { from, to } => {
            let k = graph.pair_position(from, to).unwrap();
            flow.social[k] = if graph.social()[k].i == from { flow.social[k] + delta } else { flow.social[k] - delta };
        }
    }
}

fn check_step<T: Scalar>(graph: &SocialRequestGraph<T>, step: &CycleStep) -> Result<(), DecompositionError> {
    let ok = match *step {
        CycleStep::Request { edge, from, to } => {
            graph.request(edge).is_some_and(|e| e.provider == from && e.requester == to)
        }
        CycleStep::Social { from, to } => from != to && graph.pair_position(from, to).is_some(),
    };
    if ok {
        Ok(())
    } else {
        Err(DecompositionError::UnknownStep(*step))
    }
}

/// Aggregate flow of a set of cycle flows; opposite social traversals cancel.
pub fn aggregate<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    cycles: &[CycleFlow<T>],
) -> Result<Flow<T>, DecompositionError> {
    let mut flow = Flow::zero(graph);
    for c in cycles {
        for s in &c.steps {
            check_step(graph, s)?;
            apply_step(graph, &mut flow, s, c.value);
        }
    }
    Ok(flow)
}

/// Checks that every cycle is a closed walk on the graph with positive value,
/// that the set is feasible, and that it aggregates back to `flow` exactly.
pub fn verify_decomposition<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    flow: &Flow<T>,
    cycles: &[CycleFlow<T>],
) -> Result<(), String> {
    for (k, c) in cycles.iter().enumerate() {
        if !c.is_closed() {
            return Err(format!("cycle {k} ({}) is not closed", c.path()));
        }
        if c.value <= T::zero() {
            return Err(format!("cycle {k} has nonpositive value {}", c.value));
        }
    }
    let total = aggregate(graph, cycles).map_err(|e| e.to_string())?;
    if &total != flow {
        return Err(format!("aggregate {total:?} differs from flow {flow:?}"));
    }
    let report = validate_flow(graph, &total).map_err(|e| e.to_string())?;
    if !report.capacity_ok {
        return Err(format!("aggregate violates capacities: {:?}", report.violations));
    }
    Ok(())
}
