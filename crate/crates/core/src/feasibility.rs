//! Whether every request can be served: a max-flow test on the extended
//! social graph, plus a witness circulation when the answer is yes.

use std::collections::VecDeque;

use crate::graph::{Flow, NodeId, SocialRequestGraph};
use crate::scalar::Scalar;
use crate::transforms::{extended_social_graph_with, ExtendedSocialGraph};

/// A directed arc whose reverse residual starts at `reverse_capacity`.
///
/// An ordinary arc has `reverse_capacity = 0`. A social pair is a single arc
/// with forward limit `S_ij` and reverse limit `S_ji`, so its net flow lies in
/// `[-S_ji, S_ij]` without special handling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StArc<T> {
    pub from: usize,
    pub to: usize,
    pub capacity: T,
    pub reverse_capacity: T,
}

/// Capacitated network on dense node indices `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StNetwork<T> {
    pub node_count: usize,
    pub arcs: Vec<StArc<T>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxFlow<T> {
    pub value: T,
    /// Net flow on each arc, negative when it runs against the arc.
    pub arc_flows: Vec<T>,
}

struct Residual<T> {
    head: Vec<usize>,
    cap: Vec<T>,
    adj: Vec<Vec<usize>>,
}

/// Dinic's algorithm. Exact for any `Scalar`; integral capacities give an integral flow.
pub fn max_flow<T: Scalar>(network: &StNetwork<T>, s: usize, t: usize) -> MaxFlow<T> {
    let n = network.node_count;
    let mut res = Residual { head: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); n] };
    for a in &network.arcs {
        res.adj[a.from].push(res.head.len());
        res.head.push(a.to);
        res.cap.push(a.capacity);
        res.adj[a.to].push(res.head.len());
        res.head.push(a.from);
        res.cap.push(a.reverse_capacity);
    }

    let mut value = T::zero();
    if s != t {
        let mut level = vec![usize::MAX; n];
        let mut cursor = vec![0usize; n];
        while bfs_levels(&res, s, t, &mut level) {
            cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let pushed = push_blocking(&mut res, s, t, None, &level, &mut cursor);
                if pushed.is_zero() {
                    break;
                }
                value = value + pushed;
            }
        }
    }

    let arc_flows = network
        .arcs
        .iter()
        .enumerate()
        .map(|(k, a)| a.capacity - res.cap[2 * k])
        .collect();
    MaxFlow { value, arc_flows }
}

fn bfs_levels<T: Scalar>(res: &Residual<T>, s: usize, t: usize, level: &mut [usize]) -> bool {
    level.iter_mut().for_each(|l| *l = usize::MAX);
    level[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for &e in &res.adj[u] {
            let v = res.head[e];
            if res.cap[e] > T::zero() && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level[t] != usize::MAX
}

/// Pushes one augmenting path along the level graph; `limit = None` means unbounded.
fn push_blocking<T: Scalar>(
    res: &mut Residual<T>,
    u: usize,
    t: usize,
    limit: Option<T>,
    level: &[usize],
    cursor: &mut [usize],
) -> T {
    if u == t {
        return limit.expect("source equals sink");
    }
    while cursor[u] < res.adj[u].len() {
        let e = res.adj[u][cursor[u]];
        let v = res.head[e];
        if res.cap[e] > T::zero() && level[v] == level[u] + 1 {
            let room = match limit {
                Some(l) => l.min(res.cap[e]),
                None => res.cap[e],
            };
            let pushed = push_blocking(res, v, t, Some(room), level, cursor);
            if pushed > T::zero() {
                res.cap[e] = res.cap[e] - pushed;
                res.cap[e ^ 1] = res.cap[e ^ 1] + pushed;
                return pushed;
            }
        }
        cursor[u] += 1;
    }
    T::zero()
}

impl<T: Scalar> ExtendedSocialGraph<T> {
    /// Dense network: graph nodes in `nodes` order, then `s`, then `t`.
    ///
    /// Arc order: one arc per social pair, then surplus arcs, then deficit arcs.
    pub fn to_network(&self, nodes: &[NodeId]) -> (StNetwork<T>, usize, usize) {
        let index = |n: NodeId| nodes.binary_search(&n).expect("node of extended graph");
        let (s, t) = (nodes.len(), nodes.len() + 1);
        let mut arcs = Vec::with_capacity(self.pairs.len() + self.surplus_arcs.len() + self.deficit_arcs.len());
        for p in &self.pairs {
            arcs.push(StArc { from: index(p.i), to: index(p.j), capacity: p.cap_ij, reverse_capacity: p.cap_ji });
        }
        for &(n, c) in &self.surplus_arcs {
            arcs.push(StArc { from: s, to: index(n), capacity: c, reverse_capacity: T::zero() });
        }
        for &(n, c) in &self.deficit_arcs {
            arcs.push(StArc { from: index(n), to: t, capacity: c, reverse_capacity: T::zero() });
        }
        (StNetwork { node_count: nodes.len() + 2, arcs }, s, t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibilityResult<T> {
    pub satisfiable: bool,
    /// Total positive imbalance `P`.
    pub total_imbalance: T,
    pub max_flow_value: T,
    /// Circulation serving every request in full; present iff satisfiable.
    pub witness: Option<Flow<T>>,
}

/// Service each request edge must carry if every real request is served in full.
///
/// Real edges carry their capacity. A virtual edge `i -> i'` carries the total
/// of the real requests now sourced at `i'`; if that exceeds its capacity the
/// provider cap rules out full service. An unsplit graph with provider caps
/// is checked the same way, against the caps directly.
fn full_service_targets<T: Scalar>(graph: &SocialRequestGraph<T>) -> (Vec<T>, bool) {
    let mut targets: Vec<T> = graph.requests().iter().map(|e| e.capacity).collect();
    let mut within_caps = true;
    for (k, v) in graph.requests().iter().enumerate().filter(|(_, e)| e.is_virtual) {
        let load: T = graph
            .requests()
            .iter()
            .filter(|e| !e.is_virtual && e.provider == v.requester)
            .map(|e| e.capacity)
            .sum();
        targets[k] = load;
        within_caps &= load <= v.capacity;
    }
    for (&node, &cap) in graph.provider_caps() {
        let load: T = graph
            .requests()
            .iter()
            .filter(|e| !e.is_virtual && e.provider == node)
            .map(|e| e.capacity)
            .sum();
        within_caps &= load <= cap;
    }
    (targets, within_caps)
}

/// Decides whether a circulation exists that saturates every real request edge.
///
/// Requests can all be served exactly when the maximum `s -> t` flow on the
/// extended social graph equals the total imbalance `P`. The witness combines
/// the social part of that max flow with full request flows.
pub fn all_requests_satisfiable<T: Scalar>(graph: &SocialRequestGraph<T>) -> FeasibilityResult<T> {
    let (targets, within_caps) = full_service_targets(graph);
    let ext = extended_social_graph_with(graph, &targets);
    let (network, s, t) = ext.to_network(graph.nodes());
    let mf = max_flow(&network, s, t);
    let satisfiable = within_caps && mf.value == ext.total;

    let witness = satisfiable.then(|| Flow {
        request: targets.clone(),
        social: mf.arc_flows[..graph.social().len()].to_vec(),
    });
    FeasibilityResult { satisfiable, total_imbalance: ext.total, max_flow_value: mf.value, witness }
}
