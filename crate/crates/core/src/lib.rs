//! Social-trust-assisted reciprocity as a max-utility circulation problem.
//!
//! Users request sensing service from each other (request edges) and extend
//! credit to users they trust (social edges). Any directed cycle through the
//! combined graph is a self-compensating exchange, and the best set of
//! exchanges is a max-utility circulation. This crate builds the graph,
//! tests whether every request can be served, solves for the optimum by
//! cycle canceling, decomposes circulations back into cycles, and runs the
//! benchmark mechanisms and simulation sweeps used to compare them.
//!
//! The numeric core is generic over [`Scalar`]: any exact, ordered, signed
//! number type. Instances are parsed into [`Rational`] amounts and solved on
//! scaled `i64` integers.

pub mod benchmarks;
pub mod decomposition;
pub mod experiment;
pub mod feasibility;
pub mod graph;
pub mod instance;
pub mod oracle;
pub mod scalar;
pub mod simgen;
pub mod solver;
pub mod transforms;

pub use graph::{EdgeId, Flow, NodeId, RequestEdge, SocialPair, SocialRequestGraph};
pub use scalar::Scalar;

/// Exact rational amount, as parsed from decimal input.
pub type Rational = num_rational::Ratio<i64>;

/// Instance with exact rational amounts.
pub type Graph = SocialRequestGraph<Rational>;
/// Instance after scaling to integers.
pub type IntGraph = SocialRequestGraph<i64>;

pub type RationalFlow = Flow<Rational>;
pub type IntFlow = Flow<i64>;
