//! The combined social-request multigraph, flows on it, and circulation checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

/// A user (or a virtual node added by a graph rewrite).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifies a request edge; parallel edges between the same users differ only by id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mutual social trust between two users, stored once per unordered pair.
///
/// `cap_ij` bounds the net credit that may move from `i` to `j` (backed by
/// `j`'s trust in `i`), `cap_ji` the reverse. A zero capacity means no trust in
/// that direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SocialPair<T> {
    pub i: NodeId,
    pub j: NodeId,
    pub cap_ij: T,
    pub cap_ji: T,
}

impl<T: Copy> SocialPair<T> {
    /// Builds the pair in canonical `i < j` order regardless of argument order.
    pub fn new(a: NodeId, b: NodeId, cap_ab: T, cap_ba: T) -> Self {
        if a <= b {
            SocialPair { i: a, j: b, cap_ij: cap_ab, cap_ji: cap_ba }
        } else {
            SocialPair { i: b, j: a, cap_ij: cap_ba, cap_ji: cap_ab }
        }
    }

    /// Credit limit in the direction `from -> to`, if the pair joins those nodes.
    pub fn capacity(&self, from: NodeId, to: NodeId) -> Option<T> {
        if from == self.i && to == self.j {
            Some(self.cap_ij)
        } else if from == self.j && to == self.i {
            Some(self.cap_ji)
        } else {
            None
        }
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.i, self.j)
    }
}

/// A demand by `requester` for up to `capacity` units of service from `provider`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestEdge<T> {
    pub id: EdgeId,
    pub provider: NodeId,
    pub requester: NodeId,
    pub capacity: T,
    pub utility: T,
    /// Set on the zero-utility edges introduced when splitting a provider's capacity.
    pub is_virtual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node {0} is listed more than once")]
    DuplicateNode(NodeId),
    #[error("edge references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("social pair {{{0}, {1}}} is listed more than once")]
    DuplicateSocialPair(NodeId, NodeId),
    #[error("social pair joins node {0} to itself")]
    SelfSocialPair(NodeId),
    #[error("request edge {0} has id shared with another edge")]
    DuplicateEdgeId(EdgeId),
    #[error("request edge {edge} from node {node} to itself")]
    SelfRequest { edge: EdgeId, node: NodeId },
    #[error("request edge {0} has a nonpositive capacity")]
    NonpositiveCapacity(EdgeId),
    #[error("negative capacity on {0}")]
    NegativeCapacity(String),
    #[error("request edge {0} has a negative utility")]
    NegativeUtility(EdgeId),
}

/// Immutable social-request graph.
///
/// Requests are kept sorted by edge id and social pairs by `(i, j)`; flows are
/// dense vectors aligned with these two orders.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialRequestGraph<T> {
    nodes: Vec<NodeId>,
    social: Vec<SocialPair<T>>,
    requests: Vec<RequestEdge<T>>,
    provider_caps: BTreeMap<NodeId, T>,
    node_index: BTreeMap<NodeId, usize>,
    pair_index: BTreeMap<(NodeId, NodeId), usize>,
    edge_index: BTreeMap<EdgeId, usize>,
}

/// Validates raw records and assembles a graph.
pub fn build_graph<T: Scalar>(
    nodes: impl IntoIterator<Item = NodeId>,
    social_pairs: impl IntoIterator<Item = SocialPair<T>>,
    request_edges: impl IntoIterator<Item = RequestEdge<T>>,
    provider_caps: impl IntoIterator<Item = (NodeId, T)>,
) -> Result<SocialRequestGraph<T>, GraphError> {
    let mut node_set = BTreeSet::new();
    for n in nodes {
        if !node_set.insert(n) {
            return Err(GraphError::DuplicateNode(n));
        }
    }
    let known = |n: NodeId| {
        if node_set.contains(&n) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(n))
        }
    };

    let mut pairs: BTreeMap<(NodeId, NodeId), SocialPair<T>> = BTreeMap::new();
    for raw in social_pairs {
        let pair = SocialPair::new(raw.i, raw.j, raw.cap_ij, raw.cap_ji);
        known(pair.i)?;
        known(pair.j)?;
        if pair.i == pair.j {
            return Err(GraphError::SelfSocialPair(pair.i));
        }
        if pair.cap_ij.is_negative() || pair.cap_ji.is_negative() {
            return Err(GraphError::NegativeCapacity(format!("social pair {{{}, {}}}", pair.i, pair.j)));
        }
        if pairs.insert(pair.key(), pair).is_some() {
            return Err(GraphError::DuplicateSocialPair(pair.i, pair.j));
        }
    }

    let mut edges: BTreeMap<EdgeId, RequestEdge<T>> = BTreeMap::new();
    for edge in request_edges {
        known(edge.provider)?;
        known(edge.requester)?;
        if edge.is_virtual {
            if edge.capacity.is_negative() {
                return Err(GraphError::NegativeCapacity(format!("virtual edge {}", edge.id)));
            }
        } else {
            if edge.provider == edge.requester {
                return Err(GraphError::SelfRequest { edge: edge.id, node: edge.provider });
            }
            if edge.capacity <= T::zero() {
                return Err(GraphError::NonpositiveCapacity(edge.id));
            }
        }
        if edge.utility.is_negative() {
            return Err(GraphError::NegativeUtility(edge.id));
        }
        if edges.insert(edge.id, edge).is_some() {
            return Err(GraphError::DuplicateEdgeId(edge.id));
        }
    }

    let mut caps = BTreeMap::new();
    for (node, cap) in provider_caps {
        known(node)?;
        if cap.is_negative() {
            return Err(GraphError::NegativeCapacity(format!("provider cap of node {node}")));
        }
        caps.insert(node, cap);
    }

    Ok(SocialRequestGraph::from_parts(
        node_set.into_iter().collect(),
        pairs.into_values().collect(),
        edges.into_values().collect(),
        caps,
    ))
}

impl<T: Scalar> SocialRequestGraph<T> {
    /// Assembles a graph from already-consistent parts. Used by the rewrites,
    /// which may legitimately produce zero-capacity edges.
    pub(crate) fn from_parts(
        mut nodes: Vec<NodeId>,
        mut social: Vec<SocialPair<T>>,
        mut requests: Vec<RequestEdge<T>>,
        provider_caps: BTreeMap<NodeId, T>,
    ) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        social.sort_by_key(|p| p.key());
        requests.sort_by_key(|e| e.id);
        let node_index = nodes.iter().enumerate().map(|(k, &n)| (n, k)).collect();
        let pair_index = social.iter().enumerate().map(|(k, p)| (p.key(), k)).collect();
        let edge_index = requests.iter().enumerate().map(|(k, e)| (e.id, k)).collect();
        SocialRequestGraph { nodes, social, requests, provider_caps, node_index, pair_index, edge_index }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn social(&self) -> &[SocialPair<T>] {
        &self.social
    }

    pub fn requests(&self) -> &[RequestEdge<T>] {
        &self.requests
    }

    pub fn provider_caps(&self) -> &BTreeMap<NodeId, T> {
        &self.provider_caps
    }

    /// Dense position of a node in `nodes()`.
    pub fn index_of(&self, node: NodeId) -> Option<usize> {
        self.node_index.get(&node).copied()
    }

    pub fn request_position(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn request(&self, id: EdgeId) -> Option<&RequestEdge<T>> {
        self.request_position(id).map(|k| &self.requests[k])
    }

    /// Position of the social pair joining `a` and `b`, in either order.
    pub fn pair_position(&self, a: NodeId, b: NodeId) -> Option<usize> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pair_index.get(&key).copied()
    }

    pub fn max_node_id(&self) -> Option<NodeId> {
        self.nodes.last().copied()
    }

    pub fn max_edge_id(&self) -> Option<EdgeId> {
        self.requests.last().map(|e| e.id)
    }

    pub fn has_virtual_edges(&self) -> bool {
        self.requests.iter().any(|e| e.is_virtual)
    }

    /// Total requested service over non-virtual edges.
    pub fn requested_service(&self) -> T {
        self.requests.iter().filter(|e| !e.is_virtual).map(|e| e.capacity).sum()
    }

    /// Copy of the graph with every social pair removed.
    pub fn without_social(&self) -> Self {
        Self::from_parts(self.nodes.clone(), Vec::new(), self.requests.clone(), self.provider_caps.clone())
    }

    /// Copy of the graph with utilities replaced edge by edge.
    pub fn with_utilities(&self, mut utility: impl FnMut(&RequestEdge<T>) -> T) -> Self {
        let requests = self
            .requests
            .iter()
            .map(|e| RequestEdge { utility: utility(e), ..*e })
            .collect();
        Self::from_parts(self.nodes.clone(), self.social.clone(), requests, self.provider_caps.clone())
    }

    /// Copy of the graph without provider capacities.
    pub fn without_provider_caps(&self) -> Self {
        Self::from_parts(self.nodes.clone(), self.social.clone(), self.requests.clone(), BTreeMap::new())
    }

    /// Converts every amount into another scalar type. `capacity` is applied to
    /// request, social and provider capacities, `utility` to utilities.
    pub fn try_map<U: Scalar, E>(
        &self,
        mut capacity: impl FnMut(T) -> Result<U, E>,
        mut utility: impl FnMut(T) -> Result<U, E>,
    ) -> Result<SocialRequestGraph<U>, E> {
        let mut social = Vec::with_capacity(self.social.len());
        for p in &self.social {
            social.push(SocialPair { i: p.i, j: p.j, cap_ij: capacity(p.cap_ij)?, cap_ji: capacity(p.cap_ji)? });
        }
        let mut requests = Vec::with_capacity(self.requests.len());
        for e in &self.requests {
            requests.push(RequestEdge {
                id: e.id,
                provider: e.provider,
                requester: e.requester,
                capacity: capacity(e.capacity)?,
                utility: utility(e.utility)?,
                is_virtual: e.is_virtual,
            });
        }
        let mut caps = BTreeMap::new();
        for (&n, &c) in &self.provider_caps {
            caps.insert(n, capacity(c)?);
        }
        Ok(SocialRequestGraph::from_parts(self.nodes.clone(), social, requests, caps))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("flow references unknown {0}")]
    KeyMismatch(String),
}

/// Per-request-edge service amounts and per-pair signed credit transfers.
///
/// `request[k]` is the flow on `graph.requests()[k]`; `social[k]` is the net
/// credit moved from `pair.i` to `pair.j` of `graph.social()[k]` (negative when
/// credit moves from `j` to `i`). Keeping one signed value per pair makes the
/// flow antisymmetric by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flow<T> {
    pub request: Vec<T>,
    pub social: Vec<T>,
}

impl<T: Scalar> Flow<T> {
    pub fn zero(graph: &SocialRequestGraph<T>) -> Self {
        Flow { request: vec![T::zero(); graph.requests.len()], social: vec![T::zero(); graph.social.len()] }
    }

    /// Builds a flow from keyed records; absent keys are zero.
    ///
    /// Social records may name a pair in either direction; `(j, i, v)` is
    /// stored as `-v` on pair `{i, j}`. Repeated keys accumulate.
    pub fn from_records(
        graph: &SocialRequestGraph<T>,
        request: impl IntoIterator<Item = (EdgeId, T)>,
        social: impl IntoIterator<Item = (NodeId, NodeId, T)>,
    ) -> Result<Self, FlowError> {
        let mut flow = Flow::zero(graph);
        for (id, v) in request {
            let k = graph
                .request_position(id)
                .ok_or_else(|| FlowError::KeyMismatch(format!("request edge {id}")))?;
            flow.request[k] = flow.request[k] + v;
        }
        for (a, b, v) in social {
            let k = graph
                .pair_position(a, b)
                .ok_or_else(|| FlowError::KeyMismatch(format!("social pair {{{a}, {b}}}")))?;
            let signed = if a <= b { v } else { -v };
            flow.social[k] = flow.social[k] + signed;
        }
        Ok(flow)
    }

    pub fn is_zero(&self) -> bool {
        self.request.iter().chain(self.social.iter()).all(|v| v.is_zero())
    }

    /// Component-wise sum; both flows must belong to the same graph.
    pub fn add(&self, other: &Self) -> Self {
        Flow {
            request: self.request.iter().zip(&other.request).map(|(&a, &b)| a + b).collect(),
            social: self.social.iter().zip(&other.social).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(T) -> U) -> Flow<U> {
        Flow {
            request: self.request.iter().map(|&v| f(v)).collect(),
            social: self.social.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_shape(&self, graph: &SocialRequestGraph<T>) -> Result<(), FlowError> {
        if self.request.len() != graph.requests.len() {
            return Err(FlowError::KeyMismatch(format!(
                "request edges ({} values for {} edges)",
                self.request.len(),
                graph.requests.len()
            )));
        }
        if self.social.len() != graph.social.len() {
            return Err(FlowError::KeyMismatch(format!(
                "social pairs ({} values for {} pairs)",
                self.social.len(),
                graph.social.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    RequestCapacity,
    SocialCapacity,
    Conservation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Edge(EdgeId),
    Pair(NodeId, NodeId),
    Node(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation<T> {
    pub kind: ConstraintKind,
    pub location: Location,
    /// How far the constraint is exceeded; for conservation, outflow minus inflow.
    pub magnitude: T,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport<T> {
    pub capacity_ok: bool,
    pub conservation_ok: bool,
    pub violations: Vec<Violation<T>>,
}

impl<T> ValidationReport<T> {
    pub fn is_circulation(&self) -> bool {
        self.capacity_ok && self.conservation_ok
    }
}

/// Outflow minus inflow at every node, aligned with `graph.nodes()`.
///
/// Outflow counts request flow leaving a provider and signed social flow
/// leaving a node; inflow counts request flow arriving at a requester.
pub fn node_imbalance<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &Flow<T>) -> Result<Vec<T>, FlowError> {
    flow.check_shape(graph)?;
    let mut net = vec![T::zero(); graph.nodes.len()];
    for (edge, &f) in graph.requests.iter().zip(&flow.request) {
        net[graph.node_index[&edge.provider]] = net[graph.node_index[&edge.provider]] + f;
        net[graph.node_index[&edge.requester]] = net[graph.node_index[&edge.requester]] - f;
    }
    for (pair, &f) in graph.social.iter().zip(&flow.social) {
        net[graph.node_index[&pair.i]] = net[graph.node_index[&pair.i]] + f;
        net[graph.node_index[&pair.j]] = net[graph.node_index[&pair.j]] - f;
    }
    Ok(net)
}

/// Checks capacity bounds on every edge and conservation at every node.
pub fn validate_flow<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    flow: &Flow<T>,
) -> Result<ValidationReport<T>, FlowError> {
    let imbalance = node_imbalance(graph, flow)?;
    let mut violations = Vec::new();

    for (edge, &f) in graph.requests.iter().zip(&flow.request) {
        let over = if f.is_negative() {
            -f
        } else if f > edge.capacity {
            f - edge.capacity
        } else {
            continue;
        };
        violations.push(Violation {
            kind: ConstraintKind::RequestCapacity,
            location: Location::Edge(edge.id),
            magnitude: over,
        });
    }
    for (pair, &f) in graph.social.iter().zip(&flow.social) {
        let over = if f > pair.cap_ij {
            f - pair.cap_ij
        } else if -f > pair.cap_ji {
            -f - pair.cap_ji
        } else {
            continue;
        };
        violations.push(Violation {
            kind: ConstraintKind::SocialCapacity,
            location: Location::Pair(pair.i, pair.j),
            magnitude: over,
        });
    }
    let capacity_ok = violations.is_empty();

    for (&node, &net) in graph.nodes.iter().zip(&imbalance) {
        if !net.is_zero() {
            violations.push(Violation {
                kind: ConstraintKind::Conservation,
                location: Location::Node(node),
                magnitude: net,
            });
        }
    }
    let conservation_ok = violations.iter().all(|v| v.kind != ConstraintKind::Conservation);

    Ok(ValidationReport { capacity_ok, conservation_ok, violations })
}

/// Total utility `sum U * f` over request edges; social flow earns nothing.
pub fn flow_utility<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &Flow<T>) -> T {
    graph.requests.iter().zip(&flow.request).map(|(e, &f)| e.utility * f).sum()
}

/// Total service over non-virtual request edges.
pub fn flow_total_service<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &Flow<T>) -> T {
    graph
        .requests
        .iter()
        .zip(&flow.request)
        .filter(|(e, _)| !e.is_virtual)
        .map(|(_, &f)| f)
        .sum()
}

/// Service received by each node as a requester, aligned with `graph.nodes()`.
pub fn received_service<T: Scalar>(graph: &SocialRequestGraph<T>, flow: &Flow<T>) -> Vec<T> {
    let mut out = vec![T::zero(); graph.nodes.len()];
    for (e, &f) in graph.requests.iter().zip(&flow.request) {
        if !e.is_virtual {
            let k = graph.node_index[&e.requester];
            out[k] = out[k] + f;
        }
    }
    out
}

/// Incremental construction with sequential edge ids, mostly for tests and generators.
#[derive(Clone, Debug)]
pub struct GraphBuilder<T> {
    nodes: Vec<NodeId>,
    social: Vec<SocialPair<T>>,
    requests: Vec<RequestEdge<T>>,
    caps: Vec<(NodeId, T)>,
}

impl<T: Scalar> Default for GraphBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        GraphBuilder { nodes: Vec::new(), social: Vec::new(), requests: Vec::new(), caps: Vec::new() }
    }

    /// Adds nodes `1..=n`.
    pub fn with_nodes(n: u32) -> Self {
        let mut b = Self::new();
        b.nodes.extend((1..=n).map(NodeId));
        b
    }

    pub fn node(mut self, id: u32) -> Self {
        self.nodes.push(NodeId(id));
        self
    }

    /// Social pair with credit limit `cap_ab` from `a` to `b` and `cap_ba` back.
    pub fn social(mut self, a: u32, b: u32, cap_ab: T, cap_ba: T) -> Self {
        self.social.push(SocialPair::new(NodeId(a), NodeId(b), cap_ab, cap_ba));
        self
    }

    /// Request by `requester` for service from `provider`; ids follow insertion order from 0.
    pub fn request(mut self, provider: u32, requester: u32, capacity: T, utility: T) -> Self {
        let id = EdgeId(self.requests.len() as u32);
        self.requests.push(RequestEdge {
            id,
            provider: NodeId(provider),
            requester: NodeId(requester),
            capacity,
            utility,
            is_virtual: false,
        });
        self
    }

    pub fn provider_cap(mut self, node: u32, cap: T) -> Self {
        self.caps.push((NodeId(node), cap));
        self
    }

    pub fn build(self) -> Result<SocialRequestGraph<T>, GraphError> {
        build_graph(self.nodes, self.social, self.requests, self.caps)
    }
}
