//! Max-utility circulation by cycle canceling.
//!
//! Starting from the empty flow, repeatedly find a positive-weight cycle in
//! the residual graph and push its residual capacity around it. A flow is
//! optimal exactly when its residual graph has no positive cycle. On integral
//! data each push raises the utility by at least one, which bounds the number
//! of iterations.

mod residual;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use residual::{
    build_residual, cycle_residual_capacity, find_positive_cycle, ArcKind, ArcOrigin, Cycle, ResidualArc,
    ResidualGraph,
};

use crate::graph::{flow_total_service, flow_utility, Flow, SocialRequestGraph};
use crate::instance::DEFAULT_PRECISION;
use crate::scalar::Scalar;
use crate::transforms::{scale_to_integral, split_provider_capacity, ScalingError, ScalingInfo, ServiceMode};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error("flow is not a circulation: {0}")]
    InvalidFlow(String),
    #[error("augmenting by {value} exceeds the capacity of {arc}")]
    CapacityExceeded { value: String, arc: String },
    #[error("iteration {iteration} did not increase the utility ({before} -> {after})")]
    NonImproving { iteration: usize, before: String, after: String },
    #[error("cycle canceling exceeded its iteration bound of {bound}")]
    IterationBoundExceeded { bound: u128 },
}

/// What the solver maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Objective {
    #[default]
    Utility,
    /// Total service: every real request edge gets utility 1.
    Service,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Utility => "utility",
            Objective::Service => "service",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "utility" => Ok(Objective::Utility),
            "service" => Ok(Objective::Service),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub mode: ServiceMode,
    pub objective: Objective,
    /// Maximum fractional digits accepted in the instance.
    pub precision: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { mode: ServiceMode::Divisible, objective: Objective::Utility, precision: DEFAULT_PRECISION }
    }
}

impl SolveOptions {
    pub fn new(mode: ServiceMode, objective: Objective) -> Self {
        SolveOptions { mode, objective, ..Default::default() }
    }
}

/// One canceled cycle, in the solver's scaled integer units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanceledCycle<T> {
    pub cycle: Cycle<T>,
    pub value: T,
}

/// Trace of a cycle-canceling run on a graph without provider caps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CancelRun<T> {
    pub flow: Flow<T>,
    pub cycles: Vec<CanceledCycle<T>>,
    /// Utility after each iteration.
    pub utility_trace: Vec<T>,
}

impl<T: Scalar> CancelRun<T> {
    pub fn iterations(&self) -> usize {
        self.cycles.len()
    }

    pub fn utility(&self) -> T {
        self.utility_trace.last().copied().unwrap_or_else(T::zero)
    }
}

/// Pushes `value` units around `cycle`, returning the new flow.
pub fn augment_along_cycle<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    flow: &Flow<T>,
    cycle: &Cycle<T>,
    value: T,
) -> Result<Flow<T>, SolveError> {
    let exceeded = |arc: &ResidualArc<T>| SolveError::CapacityExceeded {
        value: value.to_string(),
        arc: format!("{:?} {} -> {}", arc.kind, arc.from, arc.to),
    };
    if value <= T::zero() {
        return Err(exceeded(&cycle.arcs[0]));
    }
    let mut next = flow.clone();
    for arc in &cycle.arcs {
        match arc.origin {
            ArcOrigin::Request { position, .. } => {
                let cap = graph.requests()[position].capacity;
                let f = &mut next.request[position];
                *f = match arc.kind {
                    ArcKind::RequestForward => *f + value,
                    _ => *f - value,
                };
                if *f > cap || *f < T::zero() {
                    return Err(exceeded(arc));
                }
            }
            ArcOrigin::Social { i, position, .. } => {
                let pair = graph.social()[position];
                let f = &mut next.social[position];
                *f = if arc.from == i { *f + value } else { *f - value };
                if *f > pair.cap_ij || -*f > pair.cap_ji {
                    return Err(exceeded(arc));
                }
            }
        }
    }
    Ok(next)
}

/// Cycle canceling from the empty flow on a graph without provider caps.
///
/// Fails if an iteration does not strictly raise the utility or if the run
/// goes past `max_iterations`.
pub fn cancel_cycles<T: Scalar>(
    graph: &SocialRequestGraph<T>,
    max_iterations: Option<u128>,
) -> Result<CancelRun<T>, SolveError> {
    debug_assert!(graph.provider_caps().is_empty(), "split provider caps before canceling");
    let mut flow = Flow::zero(graph);
    let mut utility = T::zero();
    let mut cycles = Vec::new();
    let mut utility_trace = Vec::new();

    while let Some(cycle) = find_positive_cycle(&residual::residual_unchecked(graph, &flow)) {
        if let Some(bound) = max_iterations {
            if cycles.len() as u128 >= bound {
                return Err(SolveError::IterationBoundExceeded { bound });
            }
        }
        let value = cycle.residual_capacity;
        flow = augment_along_cycle(graph, &flow, &cycle, value)?;
        let next = flow_utility(graph, &flow);
        if next <= utility {
            return Err(SolveError::NonImproving {
                iteration: cycles.len() + 1,
                before: utility.to_string(),
                after: next.to_string(),
            });
        }
        log::trace!("canceled {} weight {} by {}", cycle.node_path(), cycle.weight, value);
        utility = next;
        utility_trace.push(next);
        cycles.push(CanceledCycle { cycle, value });
    }
    Ok(CancelRun { flow, cycles, utility_trace })
}

/// Optimal circulation of an exact instance, in the instance's units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub flow: Flow<Rational>,
    pub utility: Rational,
    pub total_service: Rational,
    pub iterations: usize,
    /// Canceled cycles on the scaled (and provider-split) graph.
    pub cycles_used: Vec<CanceledCycle<i64>>,
    /// Scaled utility after each iteration; strictly increasing.
    pub utility_trace: Vec<i64>,
    pub scaling: ScalingInfo,
    /// Iteration limit implied by the scaling; never exceeded.
    pub iteration_bound: u128,
}

impl Solution {
    /// Cycle weight in original utility units.
    pub fn unscaled_weight(&self, cycle: &CanceledCycle<i64>) -> Rational {
        Rational::new(cycle.cycle.weight, self.scaling.utility_factor())
    }

    pub fn unscaled_value(&self, cycle: &CanceledCycle<i64>) -> Rational {
        self.scaling.unscale_amount(cycle.value)
    }
}

/// Same graph with every real request worth one unit of utility per unit of service.
pub fn unit_utilities(graph: &SocialRequestGraph<Rational>) -> SocialRequestGraph<Rational> {
    graph.with_utilities(|e| if e.is_virtual { Rational::from_integer(0) } else { Rational::from_integer(1) })
}

/// Maximizes total utility over all circulations.
///
/// Provider caps are handled by splitting the capped nodes; the returned flow
/// is on the original graph. Service mode selects how the instance is scaled
/// to integers; in indivisible mode every flow value is an integer.
pub fn solve_max_utility(graph: &SocialRequestGraph<Rational>, options: SolveOptions) -> Result<Solution, SolveError> {
    let (split, _) = split_provider_capacity(graph);
    let (scaled, scaling) = scale_to_integral(&split, options.mode, options.precision)?;
    let real_edges = graph.requests().iter().filter(|e| !e.is_virtual).count();
    let iteration_bound = scaling.iteration_bound(real_edges);

    let run = cancel_cycles(&scaled, Some(iteration_bound))?;

    // Virtual edges and nodes sort after the originals, so the original
    // graph's edges and pairs are a prefix of the split graph's.
    let flow = Flow {
        request: run.flow.request[..graph.requests().len()].iter().map(|&v| scaling.unscale_amount(v)).collect(),
        social: run.flow.social.iter().map(|&v| scaling.unscale_amount(v)).collect(),
    };
    let utility = flow_utility(graph, &flow);
    debug_assert_eq!(utility, scaling.unscale_utility(run.utility()));
    Ok(Solution {
        total_service: flow_total_service(graph, &flow),
        utility,
        iterations: run.iterations(),
        flow,
        cycles_used: run.cycles,
        utility_trace: run.utility_trace,
        scaling,
        iteration_bound,
    })
}

/// Maximizes total service by solving with unit utilities.
pub fn solve_max_service(graph: &SocialRequestGraph<Rational>, options: SolveOptions) -> Result<Solution, SolveError> {
    let unit = unit_utilities(graph);
    let mut solution = solve_max_utility(&unit, options)?;
    solution.utility = flow_utility(graph, &solution.flow);
    Ok(solution)
}

/// Dispatches on `options.objective`.
pub fn solve(graph: &SocialRequestGraph<Rational>, options: SolveOptions) -> Result<Solution, SolveError> {
    match options.objective {
        Objective::Utility => solve_max_utility(graph, options),
        Objective::Service => solve_max_service(graph, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate_flow, GraphBuilder};
    use crate::transforms::to_rational;

    fn g1_with(s24: i64) -> SocialRequestGraph<i64> {
        GraphBuilder::with_nodes(4)
            .request(1, 2, 1, 1)
            .request(4, 3, 1, 1)
            .social(3, 1, 1, 0)
            .social(2, 4, s24, 0)
            .build()
            .unwrap()
    }

    fn g2() -> SocialRequestGraph<i64> {
        GraphBuilder::with_nodes(2).request(1, 2, 1, 1).request(2, 1, 1, 2).build().unwrap()
    }

    #[test]
    fn augmenting_g1_cycle_reaches_optimum() {
        let g = g1_with(1);
        let zero = Flow::zero(&g);
        let c = find_positive_cycle(&build_residual(&g, &zero).unwrap()).unwrap();
        let f = augment_along_cycle(&g, &zero, &c, 1).unwrap();
        assert_eq!(f, Flow { request: vec![1, 1], social: vec![-1, 1] });
        assert_eq!(flow_utility(&g, &f), 2);
        assert!(validate_flow(&g, &f).unwrap().is_circulation());
    }

    #[test]
    fn reverse_cycle_cancels() {
        let g = g1_with(1);
        let zero = Flow::zero(&g);
        let c = find_positive_cycle(&build_residual(&g, &zero).unwrap()).unwrap();
        let f = augment_along_cycle(&g, &zero, &c, 1).unwrap();
        let back = Cycle::from_arcs(c.arcs.iter().rev().map(|a| a.reversed(1)).collect());
        assert_eq!(back.weight, -2);
        assert_eq!(augment_along_cycle(&g, &f, &back, 1).unwrap(), zero);
    }

    #[test]
    fn over_augmenting_fails() {
        let g = g1_with(1);
        let zero = Flow::zero(&g);
        let c = find_positive_cycle(&build_residual(&g, &zero).unwrap()).unwrap();
        assert!(matches!(augment_along_cycle(&g, &zero, &c, 2), Err(SolveError::CapacityExceeded { .. })));
    }

    #[test]
    fn g2_two_request_cycle() {
        let g = g2();
        let zero = Flow::zero(&g);
        let c = find_positive_cycle(&build_residual(&g, &zero).unwrap()).unwrap();
        assert!(c.arcs.iter().all(|a| a.kind == ArcKind::RequestForward));
        let f = augment_along_cycle(&g, &zero, &c, 1).unwrap();
        assert_eq!(flow_utility(&g, &f), 3);
    }

    #[test]
    fn g1_solves_in_one_iteration() {
        let s = solve_max_utility(&to_rational(&g1_with(1)), SolveOptions::default()).unwrap();
        assert_eq!(s.utility, Rational::from_integer(2));
        assert_eq!(s.total_service, Rational::from_integer(2));
        assert_eq!(s.iterations, 1);
        assert_eq!(s.cycles_used[0].cycle.node_path(), "1-2-4-3-1");
    }

    #[test]
    fn g1_without_return_credit_is_stuck_at_zero() {
        let s = solve_max_utility(&to_rational(&g1_with(0)), SolveOptions::default()).unwrap();
        assert_eq!(s.utility, Rational::from_integer(0));
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn no_requests_no_iterations() {
        let g = GraphBuilder::with_nodes(3).social(1, 2, 1i64, 1).build().unwrap();
        let s = solve_max_utility(&to_rational(&g), SolveOptions::default()).unwrap();
        assert_eq!((s.utility, s.iterations), (Rational::from_integer(0), 0));
        let s = solve_max_service(&to_rational(&g), SolveOptions::default()).unwrap();
        assert_eq!(s.total_service, Rational::from_integer(0));
    }

    #[test]
    fn max_service_ignores_utilities() {
        for g in [g1_with(1), g2()] {
            let s = solve_max_service(&to_rational(&g), SolveOptions::default()).unwrap();
            assert_eq!(s.total_service, Rational::from_integer(2));
        }
    }

    #[test]
    fn fractional_instance_unscales() {
        let r = Rational::new;
        let g = GraphBuilder::with_nodes(2)
            .request(1, 2, r(1, 2), r(5, 4))
            .request(2, 1, r(3, 2), r(1, 1))
            .social(1, 2, r(1, 4), r(0, 1))
            .build()
            .unwrap();
        let s = solve_max_utility(&g, SolveOptions { precision: 2, ..Default::default() }).unwrap();
        // 2 -> 1 serves 1/4 more than it receives, paid for with credit from 1.
        assert_eq!(s.flow.request, vec![r(1, 2), r(3, 4)]);
        assert_eq!(s.utility, r(5, 8) + r(3, 4));
        assert!(validate_flow(&g, &s.flow).unwrap().is_circulation());

        let s = solve_max_utility(&g, SolveOptions { mode: ServiceMode::Indivisible, precision: 2, ..Default::default() })
            .unwrap();
        assert!(s.flow.request.iter().all(|v| v.is_integer()));
        assert_eq!(s.utility, r(0, 1));
    }

    #[test]
    fn provider_cap_limits_service() {
        let base = GraphBuilder::with_nodes(3)
            .request(1, 2, 2i64, 3)
            .request(1, 3, 2, 1)
            .request(2, 1, 2, 1)
            .request(3, 1, 2, 1);
        let free = solve_max_utility(&to_rational(&base.clone().build().unwrap()), SolveOptions::default()).unwrap();
        assert_eq!(free.utility, Rational::from_integer(12));
        let capped_graph = to_rational(&base.provider_cap(1, 2).build().unwrap());
        let capped = solve_max_utility(&capped_graph, SolveOptions::default()).unwrap();
        assert_eq!(capped.utility, Rational::from_integer(8));
        assert_eq!(capped.flow.request[0] + capped.flow.request[1], Rational::from_integer(2));
        assert!(validate_flow(&capped_graph, &capped.flow).unwrap().is_circulation());
    }

    #[test]
    fn trace_is_strictly_increasing_and_bounded() {
        let g = to_rational(
            &GraphBuilder::with_nodes(4)
                .request(1, 2, 3i64, 2)
                .request(2, 3, 2, 1)
                .request(3, 1, 3, 3)
                .request(3, 4, 1, 2)
                .social(4, 1, 2, 1)
                .social(2, 4, 1, 1)
                .build()
                .unwrap(),
        );
        let s = solve_max_utility(&g, SolveOptions::default()).unwrap();
        assert!(s.utility_trace.windows(2).all(|w| w[1] > w[0]));
        assert!((s.iterations as u128) <= s.iteration_bound);
    }
}
