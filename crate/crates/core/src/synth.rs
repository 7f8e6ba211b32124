//! Synthetic data with known structural equations.
//!
//! S ~ Bernoulli(0.5), X ~ Bernoulli(0.5) independent of S, T ∈ {0..4}
//! drawn from a distribution that depends on X (so X confounds T → Y), and
//!
//! ```text
//! P(Y = 1 | s, t, x) = 0.1 + 0.15 t + s_effect · s + 0.05 x.
//! ```
//!
//! With `s_effect = 0.15` the s⁺ curve is the s⁻ curve shifted by exactly
//! one treatment level; with `s_effect = 0` both groups share one curve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Covariate, Dataset, Record, Schema, Side};
use crate::scm::{parse_graph, CausalGraph, Cpt, ScmModel};

/// One treatment level's worth of outcome probability.
pub const LEVEL_STEP: f64 = 0.15;

/// γ values both groups can reach under the planted gap, each well away
/// from the curve values.
pub const PLANTED_GAMMA: [f64; 3] = [0.35, 0.5, 0.65];

pub const GRAPH: &str = "\
tier 1: sex, x
tier 2: t
tier 3: y
sex -> y
x -> t
x -> y
t -> y
";

/// P(T = t | X = 0); reversed for X = 1.
const T_GIVEN_X0: [f64; 5] = [0.3, 0.25, 0.2, 0.15, 0.1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub s_effect: f64,
    pub seed: u64,
}

pub fn schema() -> Schema {
    Schema {
        protected_attr: "sex".into(),
        protected_pos: "M".into(),
        protected_neg: "F".into(),
        treatment_attr: "t".into(),
        treatment_levels: (0..5).collect(),
        outcome_attr: "y".into(),
        outcome_pos: "1".into(),
        outcome_neg: "0".into(),
        covariates: vec![Covariate {
            name: "x".into(),
            cardinality: 2,
        }],
        match_attrs: vec!["x".into()],
    }
}

pub fn graph() -> CausalGraph {
    parse_graph(GRAPH, Some(&schema())).expect("built-in graph is valid")
}

pub fn outcome_probability(s: Side, t: u32, x: u32, s_effect: f64) -> f64 {
    0.1 + LEVEL_STEP * f64::from(t) + s_effect * s.code() as f64 + 0.05 * f64::from(x)
}

pub fn generate(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let records = (0..cfg.n as u64)
        .map(|id| {
            let s = if rng.random_bool(0.5) { Side::Plus } else { Side::Minus };
            let x = u32::from(rng.random_bool(0.5));
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut t = 4;
            for level in 0..5 {
                let p = if x == 0 { T_GIVEN_X0[level] } else { T_GIVEN_X0[4 - level] };
                acc += p;
                if u < acc {
                    t = level as u32;
                    break;
                }
            }
            let p = outcome_probability(s, t, x, cfg.s_effect);
            let y = u8::from(rng.random::<f64>() < p);
            Record {
                id,
                s,
                t,
                x: vec![x],
                y,
            }
        })
        .collect();
    Dataset::new(schema(), records).expect("generated records match the schema")
}

/// The s⁺ group needs exactly one treatment level less than s⁻.
pub fn planted_gap(n: usize, seed: u64) -> Dataset {
    generate(&SynthConfig {
        n,
        s_effect: LEVEL_STEP,
        seed,
    })
}

/// Outcomes do not depend on the protected attribute.
pub fn symmetric(n: usize, seed: u64) -> Dataset {
    generate(&SynthConfig {
        n,
        s_effect: 0.0,
        seed,
    })
}

/// A random DAG over `n` nodes (edges only from lower to higher index, each
/// present with probability `edge_p`) with random tables.
pub fn random_scm<R: Rng>(rng: &mut R, n: usize, max_card: usize, edge_p: f64) -> ScmModel {
    let nodes: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(edge_p) {
                edges.push((nodes[i].clone(), nodes[j].clone()));
            }
        }
    }
    let graph = CausalGraph::new(nodes, &edges).expect("forward edges are acyclic");
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=max_card.max(2))).collect();
    let cpts = (0..n)
        .map(|v| {
            let parents = graph.parents(v).to_vec();
            let parent_cards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
            let rows: usize = parent_cards.iter().product();
            let mut probs = Vec::with_capacity(rows * cards[v]);
            for _ in 0..rows {
                let raw: Vec<f64> = (0..cards[v]).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                probs.extend(raw.iter().map(|r| r / total));
            }
            Cpt {
                card: cards[v],
                parents,
                parent_cards,
                probs,
            }
        })
        .collect();
    ScmModel::from_cpts(graph, cards, cpts).expect("tables built to match the graph")
}
