//! The two restricted mechanisms STAR is compared against.
//!
//! RP only uses cycles of request edges; it is solved exactly by dropping the
//! social graph. ST only uses cycles with a single request edge closed by a
//! chain of credit; it is computed by a deterministic greedy and labeled a
//! heuristic.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::decomposition::{aggregate, CycleFlow, CycleStep};
use crate::graph::{flow_total_service, flow_utility, Flow, NodeId, SocialRequestGraph};
use crate::solver::{solve, Objective, SolveError, SolveOptions, Solution};
use crate::transforms::scale_to_integral;
use crate::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    Star,
    St,
    Rp,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Star, Mechanism::St, Mechanism::Rp];
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Star => "star",
            Mechanism::St => "st",
            Mechanism::Rp => "rp",
        })
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "star" => Ok(Mechanism::Star),
            "st" => Ok(Mechanism::St),
            "rp" => Ok(Mechanism::Rp),
            other => Err(format!("unknown mechanism {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exactness {
    Exact,
    Heuristic,
}

impl fmt::Display for Exactness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exactness::Exact => "exact",
            Exactness::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("ST result is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkSolution {
    pub mechanism: Mechanism,
    pub exactness: Exactness,
    pub solution: Solution,
    /// Cycles the ST greedy pushed flow along, in original units; empty otherwise.
    pub cycles: Vec<CycleFlow<Rational>>,
}

/// Runs one mechanism under the given options.
pub fn run_mechanism(
    graph: &SocialRequestGraph<Rational>,
    mechanism: Mechanism,
    options: SolveOptions,
) -> Result<BenchmarkSolution, BenchmarkError> {
    match mechanism {
        Mechanism::Star => Ok(BenchmarkSolution {
            mechanism,
            exactness: Exactness::Exact,
            solution: solve(graph, options)?,
            cycles: Vec::new(),
        }),
        Mechanism::Rp => solve_rp(graph, options),
        Mechanism::St => solve_st(graph, options),
    }
}

/// Best circulation using request edges only.
///
/// With the social pairs removed every circulation decomposes into cycles of
/// request edges, so the full solver on the reduced graph is exact.
pub fn solve_rp(graph: &SocialRequestGraph<Rational>, options: SolveOptions) -> Result<BenchmarkSolution, BenchmarkError> {
    let reduced = solve(&graph.without_social(), options)?;
    let solution = Solution {
        flow: Flow { request: reduced.flow.request, social: vec![Rational::from_integer(0); graph.social().len()] },
        ..reduced
    };
    Ok(BenchmarkSolution { mechanism: Mechanism::Rp, exactness: Exactness::Exact, solution, cycles: Vec::new() })
}

/// Greedy credit-network routing.
///
/// Repeatedly takes the unsaturated request edge with the highest utility
/// (lowest edge id on ties) whose requester can pay the provider back along
/// a path of social arcs with remaining credit. The path is the fewest-hop
/// one, exploring neighbors by ascending node id. The cycle is pushed by the
/// smallest of the request's remaining capacity, the path's remaining credit
/// and the provider's remaining cap.
pub fn solve_st(graph: &SocialRequestGraph<Rational>, options: SolveOptions) -> Result<BenchmarkSolution, BenchmarkError> {
    let target = match options.objective {
        Objective::Utility => graph.clone(),
        Objective::Service => crate::solver::unit_utilities(graph),
    };
    let (scaled, scaling) = scale_to_integral(&target, options.mode, options.precision).map_err(SolveError::from)?;
    let run = greedy_st(&scaled);

    let flow = Flow {
        request: run.flow.request.iter().map(|&v| scaling.unscale_amount(v)).collect(),
        social: run.flow.social.iter().map(|&v| scaling.unscale_amount(v)).collect(),
    };
    let cycles: Vec<CycleFlow<Rational>> = run
        .cycles
        .iter()
        .map(|c| CycleFlow { steps: c.steps.clone(), value: scaling.unscale_amount(c.value) })
        .collect();
    check_st(graph, &flow, &cycles)?;

    let iteration_bound = scaled.requests().iter().filter(|e| !e.is_virtual).map(|e| e.capacity.max(0) as u128).sum();
    let solution = Solution {
        utility: flow_utility(graph, &flow),
        total_service: flow_total_service(graph, &flow),
        iterations: run.cycles.len(),
        flow,
        cycles_used: Vec::new(),
        utility_trace: run.utility_trace,
        scaling,
        iteration_bound,
    };
    Ok(BenchmarkSolution { mechanism: Mechanism::St, exactness: Exactness::Heuristic, solution, cycles })
}

fn check_st(
    graph: &SocialRequestGraph<Rational>,
    flow: &Flow<Rational>,
    cycles: &[CycleFlow<Rational>],
) -> Result<(), BenchmarkError> {
    if let Some(c) = cycles.iter().find(|c| c.request_count() != 1 || !c.is_closed()) {
        return Err(BenchmarkError::Inconsistent(format!("cycle {} is not a single-request cycle", c.path())));
    }
    let total = aggregate(graph, cycles).map_err(|e| BenchmarkError::Inconsistent(e.to_string()))?;
    if &total != flow {
        return Err(BenchmarkError::Inconsistent("cycles do not add up to the flow".into()));
    }
    Ok(())
}

/// Result of the ST greedy in scaled integer units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GreedyRun {
    pub flow: Flow<i64>,
    pub cycles: Vec<CycleFlow<i64>>,
    pub utility_trace: Vec<i64>,
}

/// The ST greedy on an integer graph. Provider caps are respected directly.
pub fn greedy_st(graph: &SocialRequestGraph<i64>) -> GreedyRun {
    let mut flow = Flow::zero(graph);
    let mut cycles = Vec::new();
    let mut utility_trace = Vec::new();
    let mut cap_left: BTreeMap<NodeId, i64> = graph.provider_caps().clone();

    let mut order: Vec<usize> = (0..graph.requests().len()).filter(|&k| !graph.requests()[k].is_virtual).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(graph.requests()[k].utility), graph.requests()[k].id));

    let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>> = BTreeMap::new();
    for (k, p) in graph.social().iter().enumerate() {
        adjacency.entry(p.i).or_default().push((p.j, k));
        adjacency.entry(p.j).or_default().push((p.i, k));
    }
    for list in adjacency.values_mut() {
        list.sort();
    }

    loop {
        let mut pushed = None;
        for &k in &order {
            let e = &graph.requests()[k];
            let room = e.capacity - flow.request[k];
            let cap = cap_left.get(&e.provider).copied().unwrap_or(i64::MAX);
            if room <= 0 || cap <= 0 {
                continue;
            }
            if let Some((path, credit)) = credit_path(graph, &adjacency, &flow, e.requester, e.provider) {
                pushed = Some((k, path, room.min(credit).min(cap)));
                break;
            }
        }
        let Some((k, path, value)) = pushed else { break };

        let e = &graph.requests()[k];
        flow.request[k] += value;
        if let Some(c) = cap_left.get_mut(&e.provider) {
            *c -= value;
        }
        let mut steps = vec![CycleStep::Request { edge: e.id, from: e.provider, to: e.requester }];
        for &(from, to, pos) in &path {
            flow.social[pos] += if graph.social()[pos].i == from { value } else { -value };
            steps.push(CycleStep::Social { from, to });
        }
        utility_trace.push(flow_utility(graph, &flow));
        cycles.push(CycleFlow { steps, value });
    }
    GreedyRun { flow, cycles, utility_trace }
}

fn social_room(graph: &SocialRequestGraph<i64>, flow: &Flow<i64>, pos: usize, from: NodeId) -> i64 {
    let p = &graph.social()[pos];
    if p.i == from {
        p.cap_ij - flow.social[pos]
    } else {
        p.cap_ji + flow.social[pos]
    }
}

/// Social arcs as (from, to, pair position).
type CreditPath = Vec<(NodeId, NodeId, usize)>;

/// Fewest-hop path of social arcs with positive remaining credit, and its bottleneck.
fn credit_path(
    graph: &SocialRequestGraph<i64>,
    adjacency: &BTreeMap<NodeId, Vec<(NodeId, usize)>>,
    flow: &Flow<i64>,
    from: NodeId,
    to: NodeId,
) -> Option<(CreditPath, i64)> {
    let mut parent: BTreeMap<NodeId, (NodeId, usize)> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = vec![from];
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &(v, pos) in adjacency.get(&u).map(Vec::as_slice).unwrap_or_default() {
            if !seen.contains(&v) && social_room(graph, flow, pos, u) > 0 {
                seen.push(v);
                parent.insert(v, (u, pos));
                queue.push_back(v);
            }
        }
    }
    if from == to || !parent.contains_key(&to) {
        return None;
    }
    let mut path = Vec::new();
    let mut v = to;
    while v != from {
        let (u, pos) = parent[&v];
        path.push((u, v, pos));
        v = u;
    }
    path.reverse();
    let credit = path.iter().map(|&(u, _, pos)| social_room(graph, flow, pos, u)).min()?;
    Some((path, credit))
}
