//! Residual graph of a flow and the positive-cycle search over it.

use std::fmt::Write as _;

use crate::graph::{validate_flow, EdgeId, Flow, NodeId, SocialRequestGraph};
use crate::scalar::Scalar;

use super::SolveError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArcKind {
    /// Room to serve more of a request; weight `+U`.
    RequestForward,
    /// Room to withdraw service already given; weight `-U`.
    RequestBackward,
    /// Remaining credit limit in one direction of a social pair; weight 0.
    Social,
}

/// What a residual arc acts on. Positions index `graph.requests()` / `graph.social()`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArcOrigin {
    Request { edge: EdgeId, position: usize },
    Social { i: NodeId, j: NodeId, position: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualArc<T> {
    pub kind: ArcKind,
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: T,
    pub weight: T,
    pub origin: ArcOrigin,
    tail: usize,
    head: usize,
}

impl<T: Scalar> ResidualArc<T> {
    /// The arc that undoes this one, with the given capacity.
    pub fn reversed(&self, capacity: T) -> Self {
        let kind = match self.kind {
            ArcKind::RequestForward => ArcKind::RequestBackward,
            ArcKind::RequestBackward => ArcKind::RequestForward,
            ArcKind::Social => ArcKind::Social,
        };
        ResidualArc {
            kind,
            from: self.to,
            to: self.from,
            capacity,
            weight: -self.weight,
            origin: self.origin,
            tail: self.head,
            head: self.tail,
        }
    }
}

/// Weighted residual multigraph; arcs are ordered by origin (request edges by
/// id, then social pairs), forward before backward.
#[derive(Clone, Debug)]
pub struct ResidualGraph<T> {
    pub nodes: Vec<NodeId>,
    pub arcs: Vec<ResidualArc<T>>,
}

/// Builds the residual graph of a valid flow. Zero-capacity arcs are omitted.
pub fn build_residual<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    flow: &Flow<T>,
) -> Result<ResidualGraph<T>, SolveError> {
    let report = validate_flow(graph, flow).map_err(|e| SolveError::InvalidFlow(e.to_string()))?;
    if !report.is_circulation() {
        return Err(SolveError::InvalidFlow(format!("{:?}", report.violations)));
    }
    Ok(residual_unchecked(graph, flow))
}

pub(crate) fn residual_unchecked<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &Flow<T>) -> ResidualGraph<T> {
    let idx = |n: NodeId| graph.index_of(n).expect("edge endpoint");
    let mut arcs = Vec::with_capacity(2 * (graph.requests().len() + graph.social().len()));
    let mut push = |kind, from: NodeId, to: NodeId, capacity: T, weight: T, origin| {
        if capacity > T::zero() {
            arcs.push(ResidualArc { kind, from, to, capacity, weight, origin, tail: idx(from), head: idx(to) });
        }
    };
    for (position, (e, &f)) in graph.requests().iter().zip(&flow.request).enumerate() {
        let origin = ArcOrigin::Request { edge: e.id, position };
        push(ArcKind::RequestForward, e.provider, e.requester, e.capacity - f, e.utility, origin);
        push(ArcKind::RequestBackward, e.requester, e.provider, f, -e.utility, origin);
    }
    for (position, (p, &f)) in graph.social().iter().zip(&flow.social).enumerate() {
        let origin = ArcOrigin::Social { i: p.i, j: p.j, position };
        push(ArcKind::Social, p.i, p.j, p.cap_ij - f, T::zero(), origin);
        push(ArcKind::Social, p.j, p.i, p.cap_ji + f, T::zero(), origin);
    }
    ResidualGraph { nodes: graph.nodes().to_vec(), arcs }
}

/// A simple directed cycle of residual arcs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle<T> {
    pub arcs: Vec<ResidualArc<T>>,
    pub weight: T,
    pub residual_capacity: T,
}

impl<T: Scalar> Cycle<T> {
    /// Wraps a closed walk, rotated to start at its smallest node id.
    pub fn from_arcs(mut arcs: Vec<ResidualArc<T>>) -> Self {
        assert!(!arcs.is_empty(), "empty cycle");
        if let Some(start) = (0..arcs.len()).min_by_key(|&k| arcs[k].from) {
            arcs.rotate_left(start);
        }
        let weight = arcs.iter().map(|a| a.weight).sum();
        let residual_capacity = cycle_residual_capacity(&arcs);
        Cycle { arcs, weight, residual_capacity }
    }

    /// Closed node sequence, first node repeated at the end.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.arcs.iter().map(|a| a.from).collect();
        out.push(self.arcs[0].from);
        out
    }

    /// `1-2-4-3-1`
    pub fn node_path(&self) -> String {
        let mut s = String::new();
        for (k, n) in self.nodes().iter().enumerate() {
            if k > 0 {
                s.push('-');
            }
            write!(s, "{n}").unwrap();
        }
        s
    }

    pub fn request_arc_count(&self) -> usize {
        self.arcs.iter().filter(|a| a.kind != ArcKind::Social).count()
    }
}

/// Minimum arc capacity along a cycle.
pub fn cycle_residual_capacity<T: Scalar>(arcs: &[ResidualArc<T>]) -> T {
    arcs.iter().map(|a| a.capacity).min().expect("nonempty cycle")
}

/// Finds a positive-weight cycle with a max-relaxation Bellman-Ford pass.
///
/// All labels start at 0, which acts as an implicit super-source. Arcs are
/// relaxed in residual order for `|V| - 1` rounds; only strict improvements
/// update a label, so ties keep the earliest arc. If a further round still
/// improves some node, predecessor arcs are followed `|V|` steps back from it
/// (which lands on the cycle) and the loop through that point is returned.
/// Predecessors are arcs, not nodes, because the residual graph has parallel arcs.
pub fn find_positive_cycle<T: Scalar>(residual: &ResidualGraph<T>) -> Option<Cycle<T>> {
    let n = residual.nodes.len();
    if n == 0 || residual.arcs.is_empty() {
        return None;
    }
    let arcs = &residual.arcs;
    let mut label = vec![T::zero(); n];
    let mut pred: Vec<Option<usize>> = vec![None; n];

    for _ in 1..n {
        let mut changed = false;
        for (k, a) in arcs.iter().enumerate() {
            let candidate = label[a.tail] + a.weight;
            if candidate > label[a.head] {
                label[a.head] = candidate;
                pred[a.head] = Some(k);
                changed = true;
            }
        }
        if !changed {
            return None;
        }
    }

    let (k, a) = arcs.iter().enumerate().find(|(_, a)| label[a.tail] + a.weight > label[a.head])?;
    pred[a.head] = Some(k);
    let mut v = a.head;
    for _ in 0..n {
        v = arcs[pred[v].expect("improving chain has predecessors")].tail;
    }

    let start = v;
    let mut walk = Vec::new();
    loop {
        let k = pred[v].expect("cycle node has a predecessor");
        walk.push(arcs[k]);
        v = arcs[k].tail;
        if v == start {
            break;
        }
    }
    walk.reverse();
    let cycle = Cycle::from_arcs(walk);
    debug_assert!(cycle.weight > T::zero(), "predecessor cycle is not positive: {cycle:?}");
    Some(cycle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    pub(crate) fn g1() -> SocialRequestGraph<i64> {
        GraphBuilder::with_nodes(4)
            .request(1, 2, 1, 1)
            .request(4, 3, 1, 1)
            .social(3, 1, 1, 0)
            .social(2, 4, 1, 0)
            .build()
            .unwrap()
    }

    fn summary(r: &ResidualGraph<i64>) -> Vec<(ArcKind, u32, u32, i64, i64)> {
        r.arcs.iter().map(|a| (a.kind, a.from.0, a.to.0, a.capacity, a.weight)).collect()
    }

    #[test]
    fn g1_residual_at_zero_flow() {
        let g = g1();
        let r = build_residual(&g, &Flow::zero(&g)).unwrap();
        assert_eq!(
            summary(&r),
            vec![
                (ArcKind::RequestForward, 1, 2, 1, 1),
                (ArcKind::RequestForward, 4, 3, 1, 1),
                (ArcKind::Social, 3, 1, 1, 0),
                (ArcKind::Social, 2, 4, 1, 0),
            ]
        );
    }

    #[test]
    fn g1_residual_at_optimum() {
        let g = g1();
        let f = Flow { request: vec![1, 1], social: vec![-1, 1] };
        let r = build_residual(&g, &f).unwrap();
        assert_eq!(
            summary(&r),
            vec![
                (ArcKind::RequestBackward, 2, 1, 1, -1),
                (ArcKind::RequestBackward, 3, 4, 1, -1),
                (ArcKind::Social, 1, 3, 1, 0),
                (ArcKind::Social, 4, 2, 1, 0),
            ]
        );
        assert!(find_positive_cycle(&r).is_none());
    }

    #[test]
    fn saturated_edge_has_only_backward_arc() {
        let g = GraphBuilder::with_nodes(2).request(1, 2, 2i64, 1).request(2, 1, 2, 1).build().unwrap();
        let r = build_residual(&g, &Flow { request: vec![2, 2], social: vec![] }).unwrap();
        assert!(r.arcs.iter().all(|a| a.kind == ArcKind::RequestBackward));
    }

    #[test]
    fn residual_rejects_invalid_flow() {
        let g = g1();
        let f = Flow { request: vec![1, 0], social: vec![0, 0] };
        assert!(matches!(build_residual(&g, &f), Err(SolveError::InvalidFlow(_))));
    }

    #[test]
    fn g1_positive_cycle() {
        let g = g1();
        let r = build_residual(&g, &Flow::zero(&g)).unwrap();
        let c = find_positive_cycle(&r).unwrap();
        assert_eq!(c.node_path(), "1-2-4-3-1");
        assert_eq!(c.weight, 2);
        assert_eq!(c.residual_capacity, 1);
        let kinds: Vec<_> = c.arcs.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ArcKind::RequestForward, ArcKind::Social, ArcKind::RequestForward, ArcKind::Social]);
    }

    #[test]
    fn single_request_has_no_cycle() {
        let g = GraphBuilder::with_nodes(2).request(1, 2, 1i64, 1).build().unwrap();
        assert!(find_positive_cycle(&build_residual(&g, &Flow::zero(&g)).unwrap()).is_none());
    }

    #[test]
    fn residual_capacity_is_minimum() {
        let g = GraphBuilder::with_nodes(3)
            .request(1, 2, 3i64, 1)
            .social(2, 3, 1, 0)
            .social(3, 1, 2, 0)
            .build()
            .unwrap();
        let c = find_positive_cycle(&build_residual(&g, &Flow::zero(&g)).unwrap()).unwrap();
        assert_eq!(c.arcs.iter().map(|a| a.capacity).collect::<Vec<_>>(), vec![3, 1, 2]);
        assert_eq!(c.residual_capacity, 1);

        let two = GraphBuilder::with_nodes(2).request(1, 2, 2i64, 1).social(2, 1, 2, 0).build().unwrap();
        let c = find_positive_cycle(&build_residual(&two, &Flow::zero(&two)).unwrap()).unwrap();
        assert_eq!(c.residual_capacity, 2);
    }
}
