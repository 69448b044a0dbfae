//! Random instances: the Erdős–Rényi setting, the spectrum-sensing setting,
//! and ingestion of a directed social edge list.
//!
//! All randomness comes from ChaCha streams seeded through [`derive_seed`],
//! so an instance is a pure function of its parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::graph::{build_graph, EdgeId, GraphError, NodeId, RequestEdge, SocialPair, SocialRequestGraph};
use crate::instance::DEFAULT_PRECISION;
use crate::Rational;

#[derive(Debug, Error)]
pub enum SimGenError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need {needed} users but the social graph has {available} nodes")]
    InsufficientNodes { needed: usize, available: usize },
    #[error("line {line}: expected two node ids, found {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Mixes a master seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Random stream used to draw credit limits for an ingested edge list.
pub fn dataset_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, 3)
}

/// Smallest amount a normal draw is truncated to.
pub const AMOUNT_FLOOR: f64 = 0.01;

/// Rounds a positive draw to `precision` decimals, never below one unit in the last place.
fn decimalize(value: f64, precision: u32) -> Rational {
    let scale = 10i64.pow(precision);
    let units = (value * scale as f64).round().max(1.0) as i64;
    Rational::new(units, scale)
}

/// Per-user parameters for the requests a user makes and the credit extended to them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UserOverride {
    pub p_s: Option<f64>,
    pub p_r: Option<f64>,
    pub mu_s: Option<f64>,
    pub mu_r: Option<f64>,
    pub mu_u: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErParams {
    pub n: u32,
    pub p_s: f64,
    pub p_r: f64,
    pub mu_s: f64,
    pub sigma2_s: f64,
    pub mu_r: f64,
    pub sigma2_r: f64,
    pub mu_u: f64,
    pub sigma2_u: f64,
    pub seed: u64,
    /// Decimal places kept on generated amounts.
    pub precision: u32,
    /// Keyed by the user the edge points into.
    pub overrides: BTreeMap<NodeId, UserOverride>,
}

impl Default for ErParams {
    fn default() -> Self {
        ErParams {
            n: 10,
            p_s: 0.2,
            p_r: 0.2,
            mu_s: 5.0,
            sigma2_s: 1.0,
            mu_r: 5.0,
            sigma2_r: 1.0,
            mu_u: 10.0,
            sigma2_u: 2.0,
            seed: 0,
            precision: DEFAULT_PRECISION,
            overrides: BTreeMap::new(),
        }
    }
}

impl ErParams {
    pub fn validate(&self) -> Result<(), SimGenError> {
        let bad = |what: &str| Err(SimGenError::InvalidParameter(what.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_s) || !prob(self.p_r) {
            return bad("probabilities must lie in [0, 1]");
        }
        if [self.sigma2_s, self.sigma2_r, self.sigma2_u].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("variances must be finite and nonnegative");
        }
        if self.precision > 9 {
            return bad("precision above 9 decimals is not supported by the generator");
        }
        for o in self.overrides.values() {
            if o.p_s.is_some_and(|p| !prob(p)) || o.p_r.is_some_and(|p| !prob(p)) {
                return bad("override probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

fn normal(mean: f64, variance: f64) -> Normal<f64> {
    Normal::new(mean, variance.sqrt()).expect("validated variance")
}

/// Erdős–Rényi instance on nodes `1..=n`.
///
/// Every ordered pair `(a, b)` consumes the same five draws whether or not
/// its edges end up present: a uniform for the social arc `a -> b`, its
/// credit, a uniform for the request `a -> b` (b asks a), its amount and its
/// utility. An arc exists when its uniform falls below its probability, so
/// raising a probability only ever adds edges to the instance drawn from the
/// same seed. Parameters of the user `b` (after overrides) govern both arcs.
pub fn gen_er_instance(params: &ErParams) -> Result<SocialRequestGraph<Rational>, SimGenError> {
    params.validate()?;
    let mut rng = stream(params.seed, 0);
    let (s_dist, r_dist, u_dist) = (
        normal(0.0, params.sigma2_s),
        normal(0.0, params.sigma2_r),
        normal(0.0, params.sigma2_u),
    );
    let amount = |x: f64| decimalize(x.max(AMOUNT_FLOOR), params.precision);

    let mut credit: BTreeMap<(NodeId, NodeId), Rational> = BTreeMap::new();
    let mut requests = Vec::new();
    for a in 1..=params.n {
        for b in 1..=params.n {
            if a == b {
                continue;
            }
            let o = params.overrides.get(&NodeId(b)).copied().unwrap_or_default();
            let social_u: f64 = rng.random();
            let s = o.mu_s.unwrap_or(params.mu_s) + s_dist.sample(&mut rng);
            let request_u: f64 = rng.random();
            let r = o.mu_r.unwrap_or(params.mu_r) + r_dist.sample(&mut rng);
            let u = o.mu_u.unwrap_or(params.mu_u) + u_dist.sample(&mut rng);

            if social_u < o.p_s.unwrap_or(params.p_s) {
                credit.insert((NodeId(a), NodeId(b)), amount(s));
            }
            if request_u < o.p_r.unwrap_or(params.p_r) {
                requests.push(RequestEdge {
                    id: EdgeId(requests.len() as u32),
                    provider: NodeId(a),
                    requester: NodeId(b),
                    capacity: amount(r),
                    utility: amount(u),
                    is_virtual: false,
                });
            }
        }
    }
    let nodes: Vec<NodeId> = (1..=params.n).map(NodeId).collect();
    Ok(build_graph(nodes, pairs_from_arcs(&credit), requests, [])?)
}

/// Merges directed credit arcs into canonical pairs; a missing direction has capacity 0.
fn pairs_from_arcs(credit: &BTreeMap<(NodeId, NodeId), Rational>) -> Vec<SocialPair<Rational>> {
    let zero = Rational::from_integer(0);
    let mut pairs: BTreeMap<(NodeId, NodeId), SocialPair<Rational>> = BTreeMap::new();
    for (&(a, b), &c) in credit {
        let key = (a.min(b), a.max(b));
        let p = pairs.entry(key).or_insert_with(|| SocialPair::new(key.0, key.1, zero, zero));
        if a == p.i {
            p.cap_ij = c;
        } else {
            p.cap_ji = c;
        }
    }
    pairs.into_values().collect()
}

/// Nodes plus credit pairs, with no requests yet.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SocialGraph {
    pub nodes: Vec<NodeId>,
    pub pairs: Vec<SocialPair<Rational>>,
}

/// Reads `u v` lines, keeping the first `limit` distinct node ids seen.
///
/// Each kept line `u v` gives `u` a credit limit towards `v` drawn uniformly
/// from `{1, ..., n_s}`; a repeated line keeps its first draw. Blank lines and
/// lines starting with `#` are skipped, as are columns after the second.
pub fn load_social_edge_list<R: BufRead, G: Rng>(
    reader: R,
    limit: usize,
    n_s: u32,
    rng: &mut G,
) -> Result<SocialGraph, SimGenError> {
    if n_s == 0 {
        return Err(SimGenError::InvalidParameter("N_S must be at least 1".into()));
    }
    let mut kept: BTreeSet<NodeId> = BTreeSet::new();
    let mut credit: BTreeMap<(NodeId, NodeId), Rational> = BTreeMap::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let malformed = || SimGenError::MalformedLine { line: k + 1, content: line.clone() };
        let mut parts = body.split_whitespace();
        let mut id = || -> Result<NodeId, SimGenError> {
            parts.next().and_then(|t| t.parse::<u32>().ok()).map(NodeId).ok_or_else(malformed)
        };
        let (u, v) = (id()?, id()?);
        for n in [u, v] {
            if kept.len() < limit {
                kept.insert(n);
            }
        }
        if u != v && kept.contains(&u) && kept.contains(&v) && !credit.contains_key(&(u, v)) {
            let c = rng.random_range(1..=n_s);
            credit.insert((u, v), Rational::from_integer(c as i64));
        }
    }
    Ok(SocialGraph { nodes: kept.into_iter().collect(), pairs: pairs_from_arcs(&credit) })
}

/// ER social graph on nodes `1..=n` with integer credits uniform in `{1, ..., n_s}`.
/// Each ordered pair always consumes one uniform and one credit draw.
pub fn gen_er_social(n: u32, p_s: f64, n_s: u32, seed: u64) -> Result<SocialGraph, SimGenError> {
    if !(0.0..=1.0).contains(&p_s) || n_s == 0 {
        return Err(SimGenError::InvalidParameter("need 0 <= P_S <= 1 and N_S >= 1".into()));
    }
    let mut rng = stream(seed, 2);
    let mut credit = BTreeMap::new();
    for a in 1..=n {
        for b in (1..=n).filter(|&b| b != a) {
            let u: f64 = rng.random();
            let c = rng.random_range(1..=n_s);
            if u < p_s {
                credit.insert((NodeId(a), NodeId(b)), Rational::from_integer(c as i64));
            }
        }
    }
    Ok(SocialGraph { nodes: (1..=n).map(NodeId).collect(), pairs: pairs_from_arcs(&credit) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumParams {
    pub n: usize,
    /// Transmitters; transmitter `c` broadcasts on channel `c`.
    pub transmitters: usize,
    /// Side of the square area.
    pub area: f64,
    pub channels: usize,
    pub max_providers: usize,
    pub n_s: u32,
    pub n_r: u32,
    pub seed: u64,
    pub precision: u32,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            n: 10,
            transmitters: 5,
            area: 1000.0,
            channels: 5,
            max_providers: 3,
            n_s: 5,
            n_r: 5,
            seed: 0,
            precision: DEFAULT_PRECISION,
        }
    }
}

/// Distances below this are treated as this, keeping utilities at most 1.
pub const MIN_DISTANCE: f64 = 1.0;

/// Spectrum-sensing instance over the first `params.n` nodes of `social`.
///
/// Transmitters and users are placed uniformly in the square. Each user picks
/// a channel and asks up to `max_providers` users strictly closer to that
/// channel's transmitter, chosen at random, for an amount uniform in
/// `{1, ..., n_r}`. A unit of service is worth the inverse of the provider's
/// distance to the transmitter, rounded to `precision` decimals.
pub fn gen_spectrum_instance(
    params: &SpectrumParams,
    social: &SocialGraph,
) -> Result<SocialRequestGraph<Rational>, SimGenError> {
    if params.transmitters == 0 || params.channels == 0 || params.area <= 0.0 || params.n_r == 0 {
        return Err(SimGenError::InvalidParameter("spectrum dimensions must be positive".into()));
    }
    if params.precision > 9 {
        return Err(SimGenError::InvalidParameter("precision above 9 decimals is not supported".into()));
    }
    if social.nodes.len() < params.n {
        return Err(SimGenError::InsufficientNodes { needed: params.n, available: social.nodes.len() });
    }
    let users: Vec<NodeId> = social.nodes[..params.n].to_vec();
    let mut rng = stream(params.seed, 1);
    let point = |rng: &mut ChaCha8Rng| (rng.random::<f64>() * params.area, rng.random::<f64>() * params.area);
    let towers: Vec<(f64, f64)> = (0..params.transmitters).map(|_| point(&mut rng)).collect();
    let places: Vec<(f64, f64)> = (0..params.n).map(|_| point(&mut rng)).collect();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();

    let mut requests = Vec::new();
    for (me, &requester) in users.iter().enumerate() {
        let channel = rng.random_range(0..params.channels);
        let tower = towers[channel % params.transmitters];
        let mine = dist(places[me], tower);
        let candidates: Vec<usize> = (0..params.n).filter(|&k| k != me && dist(places[k], tower) < mine).collect();
        let take = candidates.len().min(params.max_providers);
        let mut chosen: Vec<usize> = index::sample(&mut rng, candidates.len(), take).into_iter().map(|k| candidates[k]).collect();
        chosen.sort_unstable();
        for k in chosen {
            let amount = rng.random_range(1..=params.n_r);
            let d = dist(places[k], tower).max(MIN_DISTANCE);
            requests.push(RequestEdge {
                id: EdgeId(requests.len() as u32),
                provider: users[k],
                requester,
                capacity: Rational::from_integer(amount as i64),
                utility: decimalize(1.0 / d, params.precision),
                is_virtual: false,
            });
        }
    }

    let member: BTreeSet<NodeId> = users.iter().copied().collect();
    let pairs = social.pairs.iter().filter(|p| member.contains(&p.i) && member.contains(&p.j)).copied();
    Ok(build_graph(users, pairs, requests, [])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn q(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn zero_probabilities_give_no_edges() {
        let g = gen_er_instance(&ErParams { p_s: 0.0, p_r: 0.0, ..Default::default() }).unwrap();
        assert_eq!(g.node_count(), 10);
        assert!(g.social().is_empty() && g.requests().is_empty());
    }

    #[test]
    fn zero_variance_is_deterministic() {
        let params = ErParams {
            n: 2,
            p_s: 1.0,
            p_r: 1.0,
            sigma2_s: 0.0,
            sigma2_r: 0.0,
            sigma2_u: 0.0,
            ..Default::default()
        };
        let g = gen_er_instance(&params).unwrap();
        assert_eq!(g.requests().len(), 2);
        assert!(g.requests().iter().all(|e| e.capacity == q(5) && e.utility == q(10)));
        assert_eq!(g.social().len(), 1);
        assert_eq!((g.social()[0].cap_ij, g.social()[0].cap_ji), (q(5), q(5)));
    }

    #[test]
    fn same_seed_same_instance() {
        let p = ErParams { seed: 42, ..Default::default() };
        assert_eq!(gen_er_instance(&p).unwrap(), gen_er_instance(&p).unwrap());
        let other = ErParams { seed: 43, ..Default::default() };
        assert_ne!(gen_er_instance(&p).unwrap(), gen_er_instance(&other).unwrap());
    }

    #[test]
    fn higher_probability_only_adds_edges() {
        let sparse = gen_er_instance(&ErParams { seed: 7, p_s: 0.1, ..Default::default() }).unwrap();
        let dense = gen_er_instance(&ErParams { seed: 7, p_s: 0.4, ..Default::default() }).unwrap();
        assert_eq!(sparse.requests(), dense.requests());
        for p in sparse.social() {
            let d = dense.social()[dense.pair_position(p.i, p.j).unwrap()];
            assert!(p.cap_ij == q(0) || p.cap_ij == d.cap_ij);
            assert!(p.cap_ji == q(0) || p.cap_ji == d.cap_ji);
        }
    }

    #[test]
    fn overrides_target_incoming_edges() {
        let mut overrides = BTreeMap::new();
        overrides.insert(NodeId(3), UserOverride { p_r: Some(1.0), p_s: Some(0.0), ..Default::default() });
        let g = gen_er_instance(&ErParams { p_r: 0.0, p_s: 1.0, overrides, ..Default::default() }).unwrap();
        assert_eq!(g.requests().len(), 9);
        assert!(g.requests().iter().all(|e| e.requester == NodeId(3)));
        let three = NodeId(3);
        for p in g.social().iter().filter(|p| p.i == three || p.j == three) {
            let other = if p.i == three { p.j } else { p.i };
            assert_eq!(p.capacity(other, three), Some(q(0)));
            assert!(p.capacity(three, other).unwrap() > q(0));
        }
    }

    #[test]
    fn edge_list_both_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = load_social_edge_list(Cursor::new("1 2\n2 1\n"), 10, 1, &mut rng).unwrap();
        assert_eq!(s.nodes, vec![NodeId(1), NodeId(2)]);
        assert_eq!(s.pairs, vec![SocialPair::new(NodeId(1), NodeId(2), q(1), q(1))]);
    }

    #[test]
    fn edge_list_limit_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(load_social_edge_list(Cursor::new(""), 5, 3, &mut rng).unwrap(), SocialGraph::default());
        let s = load_social_edge_list(Cursor::new("1 2\n2 3\n3 1\n1 2\n"), 2, 1, &mut rng).unwrap();
        assert_eq!(s.nodes, vec![NodeId(1), NodeId(2)]);
        assert_eq!(s.pairs, vec![SocialPair::new(NodeId(1), NodeId(2), q(1), q(0))]);
        let err = load_social_edge_list(Cursor::new("# header\n1 x\n"), 5, 1, &mut rng).unwrap_err();
        assert!(matches!(err, SimGenError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn spectrum_basics() {
        let social = gen_er_social(20, 0.2, 5, 1).unwrap();
        let params = SpectrumParams { n: 20, seed: 9, ..Default::default() };
        let a = gen_spectrum_instance(&params, &social).unwrap();
        assert_eq!(a, gen_spectrum_instance(&params, &social).unwrap());
        assert!(a.requests().iter().all(|e| e.utility > q(0) && e.capacity.is_integer()));

        let one = gen_spectrum_instance(&SpectrumParams { n: 1, ..Default::default() }, &social).unwrap();
        assert!(one.requests().is_empty());

        let err = gen_spectrum_instance(&SpectrumParams { n: 21, ..Default::default() }, &social).unwrap_err();
        assert!(matches!(err, SimGenError::InsufficientNodes { needed: 21, available: 20 }));
    }

    #[test]
    fn seeds_are_spread() {
        let seeds: BTreeSet<u64> = (0..1000).map(|k| derive_seed(5, k)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(0, 0), derive_seed(1, 0));
    }
}
