//! Conditional probability tables and interventional queries.
//!
//! Queries are answered by exhaustive summation over the joint
//! configurations of the unassigned nodes, so results are exact for the
//! fitted tables.

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};

use super::CausalGraph;

/// Default Laplace pseudo-count.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Refuse to enumerate more joint configurations than this.
const MAX_CONFIGURATIONS: u64 = 50_000_000;

/// P(v | pa(V)) for one node. Row `c` holds the distribution for the
/// parent configuration with mixed-radix index `c` (first parent most
/// significant).
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub card: usize,
    pub parents: Vec<usize>,
    pub parent_cards: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Cpt {
    pub fn n_rows(&self) -> usize {
        self.parent_cards.iter().product()
    }

    fn row_index(&self, assignment: &[usize]) -> usize {
        self.parents
            .iter()
            .zip(&self.parent_cards)
            .fold(0, |acc, (&p, &c)| acc * c + assignment[p])
    }

    /// P(value | parents as set in `assignment`).
    pub fn prob(&self, value: usize, assignment: &[usize]) -> f64 {
        self.probs[self.row_index(assignment) * self.card + value]
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.probs[index * self.card..(index + 1) * self.card]
    }
}

/// Which graph nodes carry the dataset roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    pub protected: usize,
    pub treatment: usize,
    pub outcome: usize,
    pub covariates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScmModel {
    pub graph: CausalGraph,
    pub cards: Vec<usize>,
    pub cpts: Vec<Cpt>,
    pub alpha: f64,
    pub roles: Option<Roles>,
}

fn node_values(roles: &Roles, n_nodes: usize, d: &Dataset, r: &Record) -> Vec<usize> {
    let mut v = vec![0; n_nodes];
    v[roles.protected] = r.s.code();
    v[roles.treatment] = d.schema().level_index(r.t).expect("validated dataset");
    v[roles.outcome] = usize::from(r.y);
    for (&node, &x) in roles.covariates.iter().zip(&r.x) {
        v[node] = x as usize;
    }
    v
}

/// Laplace-smoothed empirical CPTs. Parent configurations never observed
/// get a uniform row.
pub fn fit_cpts(d: &Dataset, g: &CausalGraph, alpha: f64) -> Result<ScmModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing constant {alpha}")));
    }
    let schema = d.schema();
    g.check_schema(schema)?;
    let node = |name: &str| g.node(name).expect("graph checked against schema");
    let roles = Roles {
        protected: node(&schema.protected_attr),
        treatment: node(&schema.treatment_attr),
        outcome: node(&schema.outcome_attr),
        covariates: schema.covariates.iter().map(|c| node(&c.name)).collect(),
    };
    let mut cards = vec![0; g.len()];
    cards[roles.protected] = 2;
    cards[roles.treatment] = schema.n_levels();
    cards[roles.outcome] = 2;
    for (&n, c) in roles.covariates.iter().zip(&schema.covariates) {
        cards[n] = c.cardinality as usize;
    }

    let mut cpts: Vec<Cpt> = (0..g.len())
        .map(|v| {
            let parents = g.parents(v).to_vec();
            let parent_cards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
            let rows: usize = parent_cards.iter().product();
            Cpt {
                card: cards[v],
                parents,
                parent_cards,
                probs: vec![0.0; rows * cards[v]],
            }
        })
        .collect();
    for r in d.records() {
        let values = node_values(&roles, g.len(), d, r);
        for (v, cpt) in cpts.iter_mut().enumerate() {
            let i = cpt.row_index(&values) * cpt.card + values[v];
            cpt.probs[i] += 1.0;
        }
    }
    for cpt in &mut cpts {
        let card = cpt.card;
        for row in cpt.probs.chunks_mut(card) {
            let total: f64 = row.iter().sum::<f64>() + alpha * card as f64;
            if total > 0.0 {
                row.iter_mut().for_each(|c| *c = (*c + alpha) / total);
            } else {
                row.iter_mut().for_each(|c| *c = 1.0 / card as f64);
            }
        }
    }
    Ok(ScmModel {
        graph: g.clone(),
        cards,
        cpts,
        alpha,
        roles: Some(roles),
    })
}

impl ScmModel {
    /// A model from explicit tables; rows must each sum to one.
    pub fn from_cpts(graph: CausalGraph, cards: Vec<usize>, cpts: Vec<Cpt>) -> Result<Self> {
        if cards.len() != graph.len() || cpts.len() != graph.len() {
            return Err(Error::InvalidArgument("one table and cardinality per node".into()));
        }
        for (v, cpt) in cpts.iter().enumerate() {
            let expected: Vec<usize> = graph.parents(v).iter().map(|&p| cards[p]).collect();
            if cpt.parents != graph.parents(v) || cpt.parent_cards != expected || cpt.card != cards[v] {
                return Err(Error::InvalidArgument(format!("table for node {v} does not match the graph")));
            }
            if cpt.probs.len() != cpt.n_rows() * cpt.card {
                return Err(Error::InvalidArgument(format!("table for node {v} has the wrong size")));
            }
            for i in 0..cpt.n_rows() {
                let s: f64 = cpt.row(i).iter().sum();
                if (s - 1.0).abs() > 1e-9 || cpt.row(i).iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(format!("row {i} of node {v} is not a distribution")));
                }
            }
        }
        Ok(ScmModel {
            graph,
            cards,
            cpts,
            alpha: 0.0,
            roles: None,
        })
    }

    fn roles(&self) -> Result<&Roles> {
        self.roles
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no dataset roles".into()))
    }

    /// Σ over all configurations agreeing with `fixed` of the product of
    /// every factor except `skip`.
    fn sum_product(&self, fixed: &[Option<usize>], skip: Option<usize>) -> Result<f64> {
        let n = self.graph.len();
        let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
        let total: u64 = free.iter().map(|&v| self.cards[v] as u64).product();
        if total > MAX_CONFIGURATIONS {
            return Err(Error::InvalidArgument(format!(
                "{total} joint configurations exceed the enumeration limit"
            )));
        }
        let mut assignment: Vec<usize> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
        let mut sum = 0.0;
        loop {
            let mut p = 1.0;
            for (v, cpt) in self.cpts.iter().enumerate() {
                if Some(v) == skip {
                    continue;
                }
                p *= cpt.prob(assignment[v], &assignment);
                if p == 0.0 {
                    break;
                }
            }
            sum += p;
            // odometer step over the free nodes
            let mut k = 0;
            loop {
                if k == free.len() {
                    return Ok(sum);
                }
                let v = free[k];
                assignment[v] += 1;
                if assignment[v] < self.cards[v] {
                    break;
                }
                assignment[v] = 0;
                k += 1;
            }
        }
    }

    fn check_evidence(&self, evidence: &[(usize, usize)]) -> Result<Vec<Option<usize>>> {
        let mut fixed = vec![None; self.graph.len()];
        for &(v, val) in evidence {
            if v >= self.graph.len() || val >= self.cards[v] {
                return Err(Error::InvalidArgument(format!("assignment {v}={val} out of range")));
            }
            if fixed[v].is_some_and(|old| old != val) {
                return Err(Error::InvalidArgument(format!("conflicting values for node {v}")));
            }
            fixed[v] = Some(val);
        }
        Ok(fixed)
    }

    /// Observational probability of a partial assignment.
    pub fn marginal(&self, evidence: &[(usize, usize)]) -> Result<f64> {
        let fixed = self.check_evidence(evidence)?;
        self.sum_product(&fixed, None)
    }

    /// P(target_t = value | evidence) under do(treatment = t), by truncated
    /// factorization. Evidence nodes must not descend from the treatment.
    pub fn intervene(
        &self,
        treatment: usize,
        t: usize,
        target: usize,
        value: usize,
        evidence: &[(usize, usize)],
    ) -> Result<f64> {
        if t >= self.cards[treatment] || value >= self.cards[target] {
            return Err(Error::InvalidArgument("intervention value out of range".into()));
        }
        let desc = self.graph.descendants(treatment);
        for &(v, _) in evidence {
            if v == treatment || desc[v] {
                return Err(Error::Identifiability(self.graph.nodes()[v].clone()));
            }
        }
        let fixed = self.check_evidence(evidence)?;
        let p_evidence = self.sum_product(&fixed, None)?;
        if p_evidence <= 0.0 {
            return Err(Error::ZeroProbability);
        }
        if target == treatment {
            return Ok(f64::from(u8::from(value == t)));
        }
        if let Some(v) = fixed[target] {
            return Ok(f64::from(u8::from(v == value)));
        }
        let mut numer = fixed;
        numer[treatment] = Some(t);
        numer[target] = Some(value);
        let joint = self.sum_product(&numer, Some(treatment))?;
        Ok(joint / p_evidence)
    }

    /// P(Y_t = y⁺ | z*) with `t` a treatment-level index.
    pub fn post_intervention(&self, t: usize, evidence: &[(usize, usize)]) -> Result<f64> {
        let roles = self.roles()?;
        self.intervene(roles.treatment, t, roles.outcome, 1, evidence)
    }

    /// P(Y_t = y⁺ | T = t₀, z*): the effect on those observed at level
    /// t₀. Adjusts over the treatment's parents not already in `z*`:
    /// Σ_w P(Y_t | w, z*) P(w | t₀, z*).
    pub fn post_intervention_on_treated(
        &self,
        t: usize,
        t0: usize,
        evidence: &[(usize, usize)],
    ) -> Result<f64> {
        let roles = self.roles()?;
        let treatment = roles.treatment;
        if t0 >= self.cards[treatment] {
            return Err(Error::InvalidArgument(format!("treatment index {t0} out of range")));
        }
        let fixed = self.check_evidence(evidence)?;
        let adjust: Vec<usize> = self
            .graph
            .parents(treatment)
            .iter()
            .copied()
            .filter(|&p| fixed[p].is_none())
            .collect();
        let mut conditioning = evidence.to_vec();
        conditioning.push((treatment, t0));
        let p_cond = self.marginal(&conditioning)?;
        if p_cond <= 0.0 {
            return Err(Error::ZeroProbability);
        }
        let mut w = vec![0; adjust.len()];
        let mut total = 0.0;
        loop {
            let mut ev = evidence.to_vec();
            ev.extend(adjust.iter().zip(&w).map(|(&v, &val)| (v, val)));
            let mut with_t0 = ev.clone();
            with_t0.push((treatment, t0));
            let weight = self.marginal(&with_t0)? / p_cond;
            if weight > 0.0 {
                total += weight * self.post_intervention(t, &ev)?;
            }
            let mut k = 0;
            loop {
                if k == adjust.len() {
                    return Ok(total);
                }
                w[k] += 1;
                if w[k] < self.cards[adjust[k]] {
                    break;
                }
                w[k] = 0;
                k += 1;
            }
        }
    }
}
