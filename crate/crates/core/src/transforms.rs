//! Graph rewrites: provider-capacity node split, the extended social graph
//! used by the feasibility test, and rational-to-integer scaling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::graph::{EdgeId, NodeId, RequestEdge, SocialPair, SocialRequestGraph};
use crate::instance::MAX_PRECISION;
use crate::scalar::Scalar;
use crate::Rational;

/// Records one provider split: `original -> virtual_node` carries the provider's capacity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeSplitMapping {
    pub original: NodeId,
    pub virtual_node: NodeId,
    pub virtual_edge_id: EdgeId,
}

/// Moves each capped provider's outgoing requests onto a fresh virtual node
/// fed by a zero-utility edge whose capacity is the provider's cap.
///
/// Virtual node ids follow the largest existing node id and virtual edge ids
/// the largest existing edge id, in ascending order of the capped node. The
/// returned graph has no provider caps. Capacity-0 virtual edges are kept so
/// the mapping stays one-to-one.
pub fn split_provider_capacity<T: Scalar>(
    graph: &SocialRequestGraph<T>,
) -> (SocialRequestGraph<T>, Vec<NodeSplitMapping>) {
    if graph.provider_caps().is_empty() {
        return (graph.clone(), Vec::new());
    }
    let first_node = graph.max_node_id().map_or(0, |n| n.0 + 1);
    let first_edge = graph.max_edge_id().map_or(0, |e| e.0 + 1);

    let mut nodes = graph.nodes().to_vec();
    let mut requests = graph.requests().to_vec();
    let mut mapping = Vec::with_capacity(graph.provider_caps().len());

    for (k, (&original, &cap)) in (0u32..).zip(graph.provider_caps()) {
        let virtual_node = NodeId(first_node + k);
        let virtual_edge_id = EdgeId(first_edge + k);
        nodes.push(virtual_node);
        for e in requests.iter_mut() {
            if e.provider == original && !e.is_virtual {
                e.provider = virtual_node;
            }
        }
        requests.push(RequestEdge {
            id: virtual_edge_id,
            provider: original,
            requester: virtual_node,
            capacity: cap,
            utility: T::zero(),
            is_virtual: true,
        });
        mapping.push(NodeSplitMapping { original, virtual_node, virtual_edge_id });
    }

    let split = SocialRequestGraph::from_parts(nodes, graph.social().to_vec(), requests, BTreeMap::new());
    (split, mapping)
}

/// The social graph plus a source `s` feeding surplus nodes and a sink `t`
/// draining deficit nodes.
///
/// A node's imbalance is the service it requests minus the service it is
/// asked to provide. A positive imbalance becomes an arc `s -> i`, a negative
/// one an arc `i -> t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedSocialGraph<T> {
    pub pairs: Vec<SocialPair<T>>,
    pub source: NodeId,
    pub sink: NodeId,
    pub surplus_arcs: Vec<(NodeId, T)>,
    pub deficit_arcs: Vec<(NodeId, T)>,
    pub imbalance: BTreeMap<NodeId, T>,
    /// Sum of the positive imbalances.
    pub total: T,
}

impl<T: Scalar> ExtendedSocialGraph<T> {
    /// Sum of the deficit arc capacities.
    pub fn total_deficit(&self) -> T {
        self.deficit_arcs.iter().map(|&(_, c)| c).sum()
    }
}

/// Builds the extended social graph from request capacities.
pub fn build_extended_social_graph<T: Scalar>(graph: &SocialRequestGraph<T>) -> ExtendedSocialGraph<T> {
    let amounts: Vec<T> = graph.requests().iter().map(|e| e.capacity).collect();
    extended_social_graph_with(graph, &amounts)
}

/// Same as [`build_extended_social_graph`] but with the per-edge service
/// amounts given explicitly (aligned with `graph.requests()`).
pub fn extended_social_graph_with<T: Scalar>(graph: &SocialRequestGraph<T>, amounts: &[T]) -> ExtendedSocialGraph<T> {
    let mut imbalance: BTreeMap<NodeId, T> = graph.nodes().iter().map(|&n| (n, T::zero())).collect();
    for (e, &a) in graph.requests().iter().zip(amounts) {
        *imbalance.get_mut(&e.requester).unwrap() = imbalance[&e.requester] + a;
        *imbalance.get_mut(&e.provider).unwrap() = imbalance[&e.provider] - a;
    }
    let top = graph.max_node_id().map_or(0, |n| n.0 + 1);
    let (source, sink) = (NodeId(top), NodeId(top + 1));
    let surplus_arcs: Vec<_> = imbalance.iter().filter(|(_, p)| p.is_positive()).map(|(&n, &p)| (n, p)).collect();
    let deficit_arcs: Vec<_> = imbalance.iter().filter(|(_, p)| p.is_negative()).map(|(&n, &p)| (n, -p)).collect();
    let total = surplus_arcs.iter().map(|&(_, p)| p).sum();
    ExtendedSocialGraph {
        pairs: graph.social().to_vec(),
        source,
        sink,
        surplus_arcs,
        deficit_arcs,
        imbalance,
        total,
    }
}

/// Whether service can be split into fractional units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ServiceMode {
    #[default]
    Divisible,
    Indivisible,
}

impl fmt::Display for ServiceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceMode::Divisible => "divisible",
            ServiceMode::Indivisible => "indivisible",
        })
    }
}

impl FromStr for ServiceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "divisible" => Ok(ServiceMode::Divisible),
            "indivisible" => Ok(ServiceMode::Indivisible),
            other => Err(format!("unknown service mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalingError {
    #[error("{value} has more than {precision} fractional digits")]
    PrecisionExceeded { value: Rational, precision: u32 },
    #[error("scaled value of {0} overflows a 64-bit integer")]
    Overflow(Rational),
}

/// How an instance was mapped onto integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScalingInfo {
    /// Common multiplier; at least 1.
    pub k: i64,
    pub mode: ServiceMode,
    /// Largest non-virtual request capacity before scaling.
    pub r_bar: Rational,
    /// Largest non-virtual request utility before scaling.
    pub u_bar: Rational,
}

impl ScalingInfo {
    /// Factor applied to capacities (and therefore to flows).
    pub fn capacity_factor(&self) -> i64 {
        match self.mode {
            ServiceMode::Divisible => self.k,
            ServiceMode::Indivisible => 1,
        }
    }

    pub fn utility_factor(&self) -> i64 {
        self.k
    }

    /// Scaled flow amount back to original units.
    pub fn unscale_amount(&self, scaled: i64) -> Rational {
        Rational::new(scaled, self.capacity_factor())
    }

    /// Scaled utility back to original units.
    pub fn unscale_utility(&self, scaled: i64) -> Rational {
        let denom = self.capacity_factor() as i128 * self.utility_factor() as i128;
        let r = Ratio::<i128>::new(scaled as i128, denom);
        Rational::new(
            i64::try_from(*r.numer()).expect("unscaled utility numerator fits i64"),
            i64::try_from(*r.denom()).expect("unscaled utility denominator fits i64"),
        )
    }

    /// Worst-case number of cycle-canceling iterations on an instance with
    /// `request_edges` non-virtual request edges:
    /// `|E| * R * U * K^2` for divisible service and `|E| * floor(R) * U * K`
    /// for indivisible service. Each iteration raises the scaled utility by
    /// at least one and the scaled utility is capped by this product.
    pub fn iteration_bound(&self, request_edges: usize) -> u128 {
        let k = Ratio::from_integer(self.k as i128);
        let r = to_wide(self.r_bar);
        let u = to_wide(self.u_bar);
        let bound = match self.mode {
            ServiceMode::Divisible => r * u * k * k,
            ServiceMode::Indivisible => r.floor() * u * k,
        } * Ratio::from_integer(request_edges as i128);
        bound.floor().to_integer().max(0) as u128
    }
}

fn to_wide(r: Rational) -> Ratio<i128> {
    Ratio::new(*r.numer() as i128, *r.denom() as i128)
}

fn pow10(p: u32) -> i128 {
    10i128.pow(p)
}

/// Numerator of `value` over the common denominator `10^p`.
fn decimal_numerator(value: Rational, precision: u32) -> Result<i128, ScalingError> {
    let scaled = to_wide(value) * Ratio::from_integer(pow10(precision));
    if scaled.is_integer() {
        Ok(scaled.to_integer())
    } else {
        Err(ScalingError::PrecisionExceeded { value, precision })
    }
}

/// Smallest multiplier that turns every value into an integer: `10^p`
/// divided by its gcd with all numerators over `10^p`.
pub fn common_multiplier(values: impl IntoIterator<Item = Rational>, precision: u32) -> Result<i64, ScalingError> {
    let precision = precision.min(MAX_PRECISION);
    let base = pow10(precision);
    let mut g = 0i128;
    for v in values {
        g = g.gcd(&decimal_numerator(v, precision)?);
    }
    if g == 0 {
        return Ok(1);
    }
    Ok((base / base.gcd(&g)) as i64)
}

fn scale_value(value: Rational, k: i64) -> Result<i64, ScalingError> {
    let scaled = to_wide(value) * Ratio::from_integer(k as i128);
    debug_assert!(scaled.is_integer());
    scaled.to_integer().to_i64().ok_or(ScalingError::Overflow(value))
}

/// Maps a rational instance onto integers.
///
/// Divisible: capacities (request, social, provider) and utilities are all
/// multiplied by `K`, so flows scale by `K` and utilities by `K^2`.
/// Indivisible: capacities are floored and only utilities are multiplied by
/// `K`, so flows are unchanged and utilities scale by `K`.
pub fn scale_to_integral(
    graph: &SocialRequestGraph<Rational>,
    mode: ServiceMode,
    precision: u32,
) -> Result<(SocialRequestGraph<i64>, ScalingInfo), ScalingError> {
    let real = graph.requests().iter().filter(|e| !e.is_virtual);
    let r_bar = real.clone().map(|e| e.capacity).max().unwrap_or_else(Rational::zero);
    let u_bar = real.map(|e| e.utility).max().unwrap_or_else(Rational::zero);

    let utilities = graph.requests().iter().map(|e| e.utility);
    let capacities = graph
        .requests()
        .iter()
        .map(|e| e.capacity)
        .chain(graph.social().iter().flat_map(|p| [p.cap_ij, p.cap_ji]))
        .chain(graph.provider_caps().values().copied());

    let scaled = match mode {
        ServiceMode::Divisible => {
            let k = common_multiplier(capacities.chain(utilities), precision)?;
            let g = graph.try_map(|c| scale_value(c, k), |u| scale_value(u, k))?;
            (g, ScalingInfo { k, mode, r_bar, u_bar })
        }
        ServiceMode::Indivisible => {
            for c in capacities {
                decimal_numerator(c, precision.min(MAX_PRECISION))?;
            }
            let k = common_multiplier(utilities, precision)?;
            let g = graph.try_map(|c| c.floor().to_integer().to_i64().ok_or(ScalingError::Overflow(c)), |u| {
                scale_value(u, k)
            })?;
            (g, ScalingInfo { k, mode, r_bar, u_bar })
        }
    };
    Ok(scaled)
}

/// Lifts an integer graph into rationals unchanged.
pub fn to_rational(graph: &SocialRequestGraph<i64>) -> SocialRequestGraph<Rational> {
    graph
        .try_map::<Rational, std::convert::Infallible>(|c| Ok(Rational::from_integer(c)), |u| Ok(Rational::from_integer(u)))
        .unwrap()
}
