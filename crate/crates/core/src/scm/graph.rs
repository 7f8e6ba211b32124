//! Causal DAGs and the edge-list file format.
//!
//! ```text
//! # comment
//! tier 1: sex, age
//! tier 2: education
//! sex -> education
//! age -> education
//! ```
//!
//! Tier lines are optional. When present they are checked (each node in at
//! most one tier, no edge pointing into an earlier tier) but play no other
//! role.

use std::collections::HashMap;
use std::path::Path;

use crate::dataset::Schema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    nodes: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
    tiers: Vec<(u32, Vec<String>)>,
}

impl CausalGraph {
    pub fn new(nodes: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let index: HashMap<&str, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::Graph("duplicate node name".into()));
        }
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (from, to) in edges {
            let a = *index.get(from.as_str()).ok_or_else(|| Error::UnknownNode(from.clone()))?;
            let b = *index.get(to.as_str()).ok_or_else(|| Error::UnknownNode(to.clone()))?;
            if a == b {
                return Err(Error::Cycle(vec![from.clone(), from.clone()]));
            }
            if !parents[b].contains(&a) {
                parents[b].push(a);
                children[a].push(b);
            }
        }
        for p in &mut parents {
            p.sort_unstable();
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let order = topological_order(&nodes, &parents, &children)?;
        Ok(CausalGraph {
            nodes,
            parents,
            children,
            order,
            tiers: Vec::new(),
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn tiers(&self) -> &[(u32, Vec<String>)] {
        &self.tiers
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (b, ps) in self.parents.iter().enumerate() {
            for &a in ps {
                out.push((self.nodes[a].clone(), self.nodes[b].clone()));
            }
        }
        out
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = self.children[v].clone();
        while let Some(u) = stack.pop() {
            if !seen[u] {
                seen[u] = true;
                stack.extend(&self.children[u]);
            }
        }
        seen
    }

    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.descendants(a)[b]
    }

    fn check_tiers(&self) -> Result<()> {
        let mut tier_of = HashMap::new();
        for (tier, names) in &self.tiers {
            for n in names {
                let v = self.node(n).ok_or_else(|| Error::UnknownNode(n.clone()))?;
                if tier_of.insert(v, *tier).is_some() {
                    return Err(Error::Graph(format!("node `{n}` is listed in two tiers")));
                }
            }
        }
        for (b, ps) in self.parents.iter().enumerate() {
            for &a in ps {
                if let (Some(ta), Some(tb)) = (tier_of.get(&a), tier_of.get(&b)) {
                    if ta > tb {
                        return Err(Error::Graph(format!(
                            "edge {} -> {} points from tier {ta} into tier {tb}",
                            self.nodes[a], self.nodes[b]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every schema attribute is a node, nothing else is, and the outcome
    /// has no children.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let names = schema.attribute_names();
        for n in &names {
            if self.node(n).is_none() {
                return Err(Error::Graph(format!("schema attribute `{n}` is not in the graph")));
            }
        }
        if let Some(extra) = self.nodes.iter().find(|n| !names.contains(n)) {
            return Err(Error::UnknownNode(extra.clone()));
        }
        let y = self.node(&schema.outcome_attr).expect("checked above");
        if !self.children[y].is_empty() {
            return Err(Error::Graph(format!(
                "outcome `{}` has children",
                schema.outcome_attr
            )));
        }
        Ok(())
    }
}

fn topological_order(
    nodes: &[String],
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).rev().collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &c in children[v].iter().rev() {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // walk parent links among the leftover nodes until one repeats
    let stuck: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    let start = (0..n).find(|&v| stuck[v]).expect("some node is on a cycle");
    let mut path = vec![start];
    let mut pos = vec![usize::MAX; n];
    pos[start] = 0;
    let mut v = start;
    loop {
        let p = *parents[v].iter().find(|&&p| stuck[p]).expect("stuck node has a stuck parent");
        if pos[p] != usize::MAX {
            let mut cycle: Vec<String> = path[pos[p]..].iter().rev().map(|&i| nodes[i].clone()).collect();
            cycle.push(cycle[0].clone());
            return Err(Error::Cycle(cycle));
        }
        pos[p] = path.len();
        path.push(p);
        v = p;
    }
}

/// Parses the edge-list format. With a schema, the node set is the schema's
/// attributes; without one it is every name that appears.
pub fn parse_graph(text: &str, schema: Option<&Schema>) -> Result<CausalGraph> {
    let mut edges = Vec::new();
    let mut tiers = Vec::new();
    let mut seen = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tier") {
            let (num, names) = rest
                .split_once(':')
                .ok_or_else(|| Error::Graph(format!("line {}: malformed tier", lineno + 1)))?;
            let num: u32 = num
                .trim()
                .parse()
                .map_err(|_| Error::Graph(format!("line {}: bad tier number", lineno + 1)))?;
            let names: Vec<String> = names
                .split(',')
                .map(|n| n.trim().to_string())
                .filter(|n| !n.is_empty())
                .collect();
            seen.extend(names.iter().cloned());
            tiers.push((num, names));
            continue;
        }
        let (a, b) = line
            .split_once("->")
            .ok_or_else(|| Error::Graph(format!("line {}: expected `parent -> child`", lineno + 1)))?;
        let (a, b) = (a.trim().to_string(), b.trim().to_string());
        if a.is_empty() || b.is_empty() {
            return Err(Error::Graph(format!("line {}: empty node name", lineno + 1)));
        }
        seen.push(a.clone());
        seen.push(b.clone());
        edges.push((a, b));
    }
    let nodes = match schema {
        Some(s) => s.attribute_names(),
        None => {
            let mut nodes: Vec<String> = Vec::new();
            for n in seen {
                if !nodes.contains(&n) {
                    nodes.push(n);
                }
            }
            nodes
        }
    };
    let mut g = CausalGraph::new(nodes, &edges)?;
    g.tiers = tiers;
    g.check_tiers()?;
    if let Some(s) = schema {
        g.check_schema(s)?;
    }
    Ok(g)
}

pub fn load_graph(path: impl AsRef<Path>, schema: &Schema) -> Result<CausalGraph> {
    let text = std::fs::read_to_string(path)?;
    parse_graph(&text, Some(schema))
}
