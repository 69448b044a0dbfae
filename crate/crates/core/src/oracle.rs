//! Exhaustive search over integer flows on tiny instances.
//!
//! Nothing here touches the residual graph or max-flow code: the search
//! enumerates every request and social flow value within its bounds and keeps
//! the assignments that balance at every node. It is the reference the solver
//! and the feasibility test are checked against.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{NodeId, SocialRequestGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmallInstanceLimits {
    pub max_nodes: usize,
    /// Largest capacity allowed on a real request edge or a social direction.
    pub max_capacity: i64,
    /// Search nodes visited before giving up.
    pub max_states: u64,
}

impl Default for SmallInstanceLimits {
    fn default() -> Self {
        SmallInstanceLimits { max_nodes: 5, max_capacity: 3, max_states: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

/// One integer decision variable: a request flow or a signed social flow.
#[derive(Clone, Copy, Debug)]
struct Var {
    lo: i64,
    hi: i64,
    /// Flow leaves `out` and enters `into`.
    out: usize,
    into: usize,
    utility: i64,
    /// Provider whose cap this variable counts toward.
    capped: Option<usize>,
}

struct Search {
    vars: Vec<Var>,
    /// `closes[k]`: nodes whose last incident variable is `k`.
    closes: Vec<Vec<usize>>,
    /// Remaining range of unassigned variables per node, for interval pruning.
    slack_lo: Vec<i64>,
    slack_hi: Vec<i64>,
    net: Vec<i64>,
    caps: Vec<Option<i64>>,
    load: Vec<i64>,
    /// Best utility still reachable from variable `k` onward.
    tail_bound: Vec<i64>,
    states: u64,
    max_states: u64,
}

impl Search {
    fn new(graph: &SocialRequestGraph<i64>, saturate: bool, limits: &SmallInstanceLimits) -> Result<Self, OracleError> {
        if graph.node_count() > limits.max_nodes {
            return Err(OracleError::TooLarge(format!(
                "{} nodes, limit {}",
                graph.node_count(),
                limits.max_nodes
            )));
        }
        let too_big = |c: i64| c > limits.max_capacity;
        if let Some(e) = graph.requests().iter().find(|e| !e.is_virtual && too_big(e.capacity)) {
            return Err(OracleError::TooLarge(format!("request {} has capacity {}", e.id, e.capacity)));
        }
        if let Some(p) = graph.social().iter().find(|p| too_big(p.cap_ij) || too_big(p.cap_ji)) {
            return Err(OracleError::TooLarge(format!("social pair {}-{} exceeds capacity limit", p.i, p.j)));
        }

        let nodes = graph.nodes();
        let idx = |n: NodeId| nodes.binary_search(&n).expect("endpoint");
        let mut vars = Vec::new();
        for e in graph.requests() {
            let lo = if saturate && !e.is_virtual { e.capacity } else { 0 };
            vars.push(Var {
                lo,
                hi: e.capacity,
                out: idx(e.provider),
                into: idx(e.requester),
                utility: e.utility,
                capped: graph.provider_caps().get(&e.provider).map(|_| idx(e.provider)),
            });
        }
        for p in graph.social() {
            vars.push(Var { lo: -p.cap_ji, hi: p.cap_ij, out: idx(p.i), into: idx(p.j), utility: 0, capped: None });
        }
        // Variables touching low nodes first, so those nodes close early.
        vars.sort_by_key(|v| (v.out.max(v.into), v.out.min(v.into)));

        let n = nodes.len();
        let mut last = vec![None; n];
        for (k, v) in vars.iter().enumerate() {
            last[v.out] = Some(k);
            last[v.into] = Some(k);
        }
        let mut closes = vec![Vec::new(); vars.len()];
        for (node, k) in last.iter().enumerate() {
            if let Some(k) = k {
                closes[*k].push(node);
            }
        }

        let (mut slack_lo, mut slack_hi) = (vec![0i64; n], vec![0i64; n]);
        for v in &vars {
            slack_lo[v.out] += v.lo;
            slack_hi[v.out] += v.hi;
            slack_lo[v.into] -= v.hi;
            slack_hi[v.into] -= v.lo;
        }
        let mut tail_bound = vec![0i64; vars.len() + 1];
        for k in (0..vars.len()).rev() {
            tail_bound[k] = tail_bound[k + 1] + (vars[k].utility * vars[k].hi).max(vars[k].utility * vars[k].lo);
        }
        let mut caps = vec![None; n];
        for (&node, &c) in graph.provider_caps() {
            caps[idx(node)] = Some(c);
        }

        Ok(Search {
            vars,
            closes,
            slack_lo,
            slack_hi,
            net: vec![0; n],
            caps,
            load: vec![0; n],
            tail_bound,
            states: 0,
            max_states: limits.max_states,
        })
    }

    /// Largest utility of a balanced completion from variable `k`, if any
    /// beats `best`. With `first_only`, stops at the first balanced assignment.
    fn run(&mut self, k: usize, utility: i64, best: &mut Option<i64>, first_only: bool) -> Result<(), OracleError> {
        self.states += 1;
        if self.states > self.max_states {
            return Err(OracleError::TooLarge(format!("more than {} search states", self.max_states)));
        }
        if k == self.vars.len() {
            if best.is_none_or(|b| utility > b) {
                *best = Some(utility);
            }
            return Ok(());
        }
        if first_only && best.is_some() {
            return Ok(());
        }
        if !first_only && best.is_some_and(|b| utility + self.tail_bound[k] <= b) {
            return Ok(());
        }

        let v = self.vars[k];
        self.slack_lo[v.out] -= v.lo;
        self.slack_hi[v.out] -= v.hi;
        self.slack_lo[v.into] += v.hi;
        self.slack_hi[v.into] += v.lo;
        for x in (v.lo..=v.hi).rev() {
            self.net[v.out] += x;
            self.net[v.into] -= x;
            if let Some(p) = v.capped {
                self.load[p] += x;
            }
            let ok = self.feasible_so_far(&v, k);
            if ok {
                self.run(k + 1, utility + v.utility * x, best, first_only)?;
            }
            self.net[v.out] -= x;
            self.net[v.into] += x;
            if let Some(p) = v.capped {
                self.load[p] -= x;
            }
        }
        self.slack_lo[v.out] += v.lo;
        self.slack_hi[v.out] += v.hi;
        self.slack_lo[v.into] -= v.hi;
        self.slack_hi[v.into] -= v.lo;
        Ok(())
    }

    fn feasible_so_far(&self, v: &Var, k: usize) -> bool {
        if let Some(p) = v.capped {
            if self.load[p] > self.caps[p].expect("capped provider") {
                return false;
            }
        }
        for node in [v.out, v.into] {
            // The remaining variables must be able to bring the node back to zero.
            if self.net[node] + self.slack_lo[node] > 0 || self.net[node] + self.slack_hi[node] < 0 {
                return false;
            }
        }
        self.closes[k].iter().all(|&node| self.net[node] == 0)
    }
}

/// Maximum utility over all integer circulations, with provider caps enforced
/// directly as `sum of outgoing request flow <= C_i`.
pub fn brute_force_optimum(graph: &SocialRequestGraph<i64>, limits: &SmallInstanceLimits) -> Result<i64, OracleError> {
    let mut search = Search::new(graph, false, limits)?;
    let mut best = None;
    search.run(0, 0, &mut best, false)?;
    Ok(best.expect("the zero flow is always a circulation"))
}

/// Whether some integer circulation saturates every real request edge.
pub fn brute_force_feasible(graph: &SocialRequestGraph<i64>, limits: &SmallInstanceLimits) -> Result<bool, OracleError> {
    let mut search = Search::new(graph, true, limits)?;
    let mut found = None;
    search.run(0, 0, &mut found, true)?;
    Ok(found.is_some())
}

/// A cycle made of one request edge and a simple social path back from the
/// requester to the provider.
#[derive(Clone, Debug, PartialEq, Eq)]
struct SocialReturnCycle {
    request: usize,
    /// Social pair positions and the direction used (`true` for `i -> j`).
    path: Vec<(usize, bool)>,
}

fn social_return_cycles(graph: &SocialRequestGraph<i64>) -> Vec<SocialReturnCycle> {
    let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, usize, bool)>> = BTreeMap::new();
    // A zero-capacity direction can still carry flow that cancels opposite credit.
    for (k, p) in graph.social().iter().enumerate() {
        if p.cap_ij + p.cap_ji > 0 {
            adjacency.entry(p.i).or_default().push((p.j, k, true));
            adjacency.entry(p.j).or_default().push((p.i, k, false));
        }
    }

    fn paths(
        adjacency: &BTreeMap<NodeId, Vec<(NodeId, usize, bool)>>,
        at: NodeId,
        target: NodeId,
        visited: &mut Vec<NodeId>,
        path: &mut Vec<(usize, bool)>,
        out: &mut Vec<Vec<(usize, bool)>>,
    ) {
        if at == target {
            out.push(path.clone());
            return;
        }
        for &(next, k, dir) in adjacency.get(&at).map(Vec::as_slice).unwrap_or_default() {
            if !visited.contains(&next) {
                visited.push(next);
                path.push((k, dir));
                paths(adjacency, next, target, visited, path, out);
                path.pop();
                visited.pop();
            }
        }
    }

    let mut cycles = Vec::new();
    for (request, e) in graph.requests().iter().enumerate() {
        if e.is_virtual {
            continue;
        }
        let mut found = Vec::new();
        paths(&adjacency, e.requester, e.provider, &mut vec![e.requester], &mut Vec::new(), &mut found);
        cycles.extend(found.into_iter().map(|path| SocialReturnCycle { request, path }));
    }
    cycles
}

/// Best utility reachable by combining cycles that each contain exactly one
/// request edge, with integer multiplicities. Opposite credit transfers net
/// out when checking social capacities. Graphs with virtual edges or provider
/// caps are rejected.
pub fn brute_force_st_optimum(
    graph: &SocialRequestGraph<i64>,
    limits: &SmallInstanceLimits,
) -> Result<i64, OracleError> {
    if graph.has_virtual_edges() || !graph.provider_caps().is_empty() {
        return Err(OracleError::TooLarge("provider caps are not supported here".into()));
    }
    if graph.node_count() > limits.max_nodes {
        return Err(OracleError::TooLarge(format!("{} nodes, limit {}", graph.node_count(), limits.max_nodes)));
    }
    let cycles = social_return_cycles(graph);

    struct St<'a> {
        graph: &'a SocialRequestGraph<i64>,
        cycles: Vec<SocialReturnCycle>,
        request: Vec<i64>,
        social: Vec<i64>,
        /// Utility ceiling of requests whose cycles all come after position `c`.
        later_groups: Vec<i64>,
        states: u64,
        max_states: u64,
    }

    impl St<'_> {
        // Opposite credit nets out, so social limits are only checked on complete assignments.
        fn social_fits(&self) -> bool {
            self.graph.social().iter().zip(&self.social).all(|(p, &f)| f <= p.cap_ij && -f <= p.cap_ji)
        }

        fn apply(&mut self, c: usize, amount: i64) {
            let cycle = &self.cycles[c];
            self.request[cycle.request] += amount;
            for &(k, forward) in &cycle.path {
                self.social[k] += if forward { amount } else { -amount };
            }
        }

        fn run(&mut self, c: usize, utility: i64, best: &mut i64) -> Result<(), OracleError> {
            self.states += 1;
            if self.states > self.max_states {
                return Err(OracleError::TooLarge(format!("more than {} search states", self.max_states)));
            }
            if c == self.cycles.len() {
                if self.social_fits() {
                    *best = (*best).max(utility);
                }
                return Ok(());
            }
            let edge = self.cycles[c].request;
            let gain = self.graph.requests()[edge].utility;
            let room = self.graph.requests()[edge].capacity - self.request[edge];
            if utility + gain * room + self.later_groups[c] <= *best {
                return Ok(());
            }
            for used in 0..=room {
                if used > 0 {
                    self.apply(c, 1);
                }
                self.run(c + 1, utility + gain * used, best)?;
            }
            self.apply(c, -room);
            Ok(())
        }
    }

    let mut later_groups = vec![0i64; cycles.len()];
    let mut acc = 0;
    for c in (0..cycles.len()).rev() {
        later_groups[c] = acc;
        if c == 0 || cycles[c - 1].request != cycles[c].request {
            let e = &graph.requests()[cycles[c].request];
            acc += e.utility * e.capacity;
        }
    }
    let mut st = St {
        graph,
        cycles,
        later_groups,
        request: vec![0; graph.requests().len()],
        social: vec![0; graph.social().len()],
        states: 0,
        max_states: limits.max_states,
    };
    let mut best = 0;
    st.run(0, 0, &mut best)?;
    Ok(best)
}
