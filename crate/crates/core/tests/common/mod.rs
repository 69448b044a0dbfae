#![allow(dead_code)]

use proptest::prelude::*;
use star_core::graph::GraphBuilder;
use star_core::transforms::to_rational;
use star_core::{Graph, IntGraph, Rational};

/// Edges drawn for one ordered pair `(a, b)`.
#[derive(Clone, Debug)]
pub struct PairDraw {
    pub credit: Option<i64>,
    pub requests: Vec<(i64, i64)>,
}

fn pair_draw() -> impl Strategy<Value = PairDraw> {
    (
        prop::option::weighted(0.5, 1..=3i64),
        prop::option::weighted(0.5, (1..=3i64, 0..=3i64)),
        prop::option::weighted(0.1, (1..=3i64, 0..=3i64)),
    )
        .prop_map(|(credit, r1, r2)| PairDraw { credit, requests: r1.into_iter().chain(r2).collect() })
}

/// Integer instance on nodes `1..=n`, capacities and utilities at most 3.
pub fn small_graph(max_nodes: u32) -> impl Strategy<Value = IntGraph> {
    (2..=max_nodes).prop_flat_map(|n| {
        let pairs = (n * (n - 1)) as usize;
        prop::collection::vec(pair_draw(), pairs).prop_map(move |draws| assemble(n, &draws, &[]))
    })
}

/// Same as [`small_graph`] plus provider caps in `0..=3` on some nodes.
pub fn small_graph_with_caps(max_nodes: u32) -> impl Strategy<Value = IntGraph> {
    (2..=max_nodes).prop_flat_map(|n| {
        let pairs = (n * (n - 1)) as usize;
        (
            prop::collection::vec(pair_draw(), pairs),
            prop::collection::vec(prop::option::weighted(0.4, 0..=3i64), n as usize),
        )
            .prop_map(move |(draws, caps)| assemble(n, &draws, &caps))
    })
}

pub fn assemble(n: u32, draws: &[PairDraw], caps: &[Option<i64>]) -> IntGraph {
    let mut b = GraphBuilder::with_nodes(n);
    let mut credit = std::collections::BTreeMap::new();
    let mut k = 0;
    for a in 1..=n {
        for c in 1..=n {
            if a == c {
                continue;
            }
            let d = &draws[k];
            k += 1;
            if let Some(s) = d.credit {
                credit.insert((a, c), s);
            }
            for &(cap, util) in &d.requests {
                b = b.request(a, c, cap, util);
            }
        }
    }
    for a in 1..=n {
        for c in a + 1..=n {
            let (ac, ca) = (credit.get(&(a, c)).copied(), credit.get(&(c, a)).copied());
            if ac.is_some() || ca.is_some() {
                b = b.social(a, c, ac.unwrap_or(0), ca.unwrap_or(0));
            }
        }
    }
    for (node, cap) in caps.iter().enumerate() {
        if let Some(c) = cap {
            b = b.provider_cap(node as u32 + 1, *c);
        }
    }
    b.build().expect("generated graph is valid")
}

pub fn q(n: i64) -> Rational {
    Rational::from_integer(n)
}

pub fn rational(g: &IntGraph) -> Graph {
    to_rational(g)
}

pub fn g1_with(s24: i64) -> IntGraph {
    GraphBuilder::with_nodes(4)
        .request(1, 2, 1, 1)
        .request(4, 3, 1, 1)
        .social(3, 1, 1, 0)
        .social(2, 4, s24, 0)
        .build()
        .unwrap()
}
