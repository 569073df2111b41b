//! Causal DAGs, expert refinement scripts, and the node partition that
//! decides where each variable sits in the compiled network.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discovery::WeightedAdjacency;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalDag {
    names: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl CausalDag {
    pub fn new(names: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let dag = Self {
            edges: edges.into_iter().collect(),
            names,
        };
        dag.validate()?;
        Ok(dag)
    }

    pub fn empty(names: Vec<String>) -> Self {
        Self {
            names,
            edges: BTreeSet::new(),
        }
    }

    /// Vertices named `0..n`.
    pub fn with_indices(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect(), edges)
    }

    /// Keep edge i->j iff |W[i][j]| >= tau. When both directions pass, the
    /// larger magnitude wins (ties keep i->j for i < j).
    pub fn from_adjacency(w: &WeightedAdjacency, tau: f64, names: Vec<String>) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Config(format!("threshold must be positive, got {tau}")));
        }
        let m = w.matrix();
        let d = w.dim();
        if names.len() != d {
            return Err(Error::Shape(format!("{} names for a {d}-vertex matrix", names.len())));
        }
        let mut edges = BTreeSet::new();
        for i in 0..d {
            for j in 0..d {
                if i == j || m[(i, j)].abs() < tau {
                    continue;
                }
                let fwd = m[(i, j)].abs();
                let back = m[(j, i)].abs();
                if back >= tau && (back > fwd || (back == fwd && j < i)) {
                    continue;
                }
                edges.insert((i, j));
            }
        }
        let dag = Self { names, edges };
        if let Some(cycle) = dag.find_cycle() {
            return Err(Error::Graph(format!(
                "thresholded graph at tau={tau} contains the cycle {}; raise tau or refine",
                dag.format_path(&cycle)
            )));
        }
        Ok(dag)
    }

    fn validate(&self) -> Result<()> {
        let n = self.names.len();
        for &(u, v) in &self.edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge [{u}, {v}] out of range for {n} vertices")));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop on vertex {u}")));
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(Error::Graph(format!("graph has a cycle {}", self.format_path(&cycle))));
        }
        Ok(())
    }

    fn format_path(&self, path: &[usize]) -> String {
        path.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" -> ")
    }

    pub fn n_vertices(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.edges.range((v, 0)..(v + 1, 0)).map(|e| e.1).collect()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.1 == v).count()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.range((v, 0)..(v + 1, 0)).count()
    }

    /// True when a directed path of length >= 1 leads from `from` to `to`.
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.n_vertices()];
        let mut stack = self.children(from);
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(self.children(v));
            }
        }
        false
    }

    /// Kahn's algorithm; smallest available index first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n_vertices();
        let mut indeg = vec![0usize; n];
        for &(_, v) in &self.edges {
            indeg[v] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for v in self.children(u) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Some directed cycle (first vertex repeated at the end), if one exists.
    fn find_cycle(&self) -> Option<Vec<usize>> {
        if self.topological_order().is_some() {
            return None;
        }
        let n = self.n_vertices();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut stack_path = Vec::new();
        fn dfs(g: &CausalDag, u: usize, state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
            state[u] = 1;
            path.push(u);
            for v in g.children(u) {
                if state[v] == 1 {
                    let start = path.iter().position(|&x| x == v).unwrap();
                    let mut cycle = path[start..].to_vec();
                    cycle.push(v);
                    return Some(cycle);
                }
                if state[v] == 0 {
                    if let Some(c) = dfs(g, v, state, path) {
                        return Some(c);
                    }
                }
            }
            path.pop();
            state[u] = 2;
            None
        }
        (0..n).find_map(|s| {
            if state[s] == 0 {
                dfs(self, s, &mut state, &mut stack_path)
            } else {
                None
            }
        })
    }

    fn with_edges(&self, edges: BTreeSet<(usize, usize)>) -> Self {
        Self {
            names: self.names.clone(),
            edges,
        }
    }

    /// Plain-text form: a `vertices` line, a `names` line and one `edge i j` per edge.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("vertices {}\n", self.n_vertices()));
        s.push_str(&format!("names {}\n", self.names.join(" ")));
        for (u, v) in self.edges() {
            s.push_str(&format!("edge {u} {v}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut names = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let bad = || Error::Graph(format!("line {}: cannot parse '{line}'", lineno + 1));
            match parts.next() {
                Some("vertices") => n = Some(parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?),
                Some("names") => names = Some(parts.map(str::to_string).collect::<Vec<_>>()),
                Some("edge") => {
                    let u = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
                    let v = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
                    edges.push((u, v));
                }
                _ => return Err(bad()),
            }
        }
        let n: usize = n.ok_or_else(|| Error::Graph("missing 'vertices' line".into()))?;
        let names = names.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if names.len() != n {
            return Err(Error::Graph(format!("{} names for {n} vertices", names.len())));
        }
        Self::new(names, edges)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Count of single-edge additions, deletions and reversals separating two
/// graphs over the same vertex set.
pub fn structural_hamming_distance(a: &CausalDag, b: &CausalDag) -> usize {
    let n = a.n_vertices().max(b.n_vertices());
    let mut shd = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let sa = (a.has_edge(i, j), a.has_edge(j, i));
            let sb = (b.has_edge(i, j), b.has_edge(j, i));
            if sa != sb {
                shd += 1;
            }
        }
    }
    shd
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edit {
    Remove(usize, usize),
    Add(usize, usize),
    Reverse(usize, usize),
}

impl Edit {
    fn inverse(self) -> Self {
        match self {
            Edit::Remove(i, j) => Edit::Add(i, j),
            Edit::Add(i, j) => Edit::Remove(i, j),
            Edit::Reverse(i, j) => Edit::Reverse(j, i),
        }
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edit::Remove(i, j) => write!(f, "remove {i} {j}"),
            Edit::Add(i, j) => write!(f, "add {i} {j}"),
            Edit::Reverse(i, j) => write!(f, "reverse {i} {j}"),
        }
    }
}

impl FromStr for Edit {
    type Err = Error;

    /// Accepts `remove 5 8` as well as the bracketed `remove [5, 8]`.
    fn from_str(s: &str) -> Result<Self> {
        let cleaned: String = s
            .chars()
            .map(|c| if matches!(c, '[' | ']' | ',') { ' ' } else { c })
            .collect();
        let parts: Vec<&str> = cleaned.split_whitespace().collect();
        let bad = || Error::Config(format!("cannot parse refinement edit '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let i = parts[1].parse().map_err(|_| bad())?;
        let j = parts[2].parse().map_err(|_| bad())?;
        match parts[0].to_ascii_lowercase().as_str() {
            "remove" => Ok(Edit::Remove(i, j)),
            "add" => Ok(Edit::Add(i, j)),
            "reverse" => Ok(Edit::Reverse(i, j)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementScript {
    pub edits: Vec<Edit>,
}

impl RefinementScript {
    pub fn new(edits: Vec<Edit>) -> Self {
        Self { edits }
    }

    /// One edit per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let edits = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { edits })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.edits.iter().map(|e| format!("{e}\n")).collect()
    }

    /// Script undoing this one, edit by edit in reverse order.
    pub fn inverse(&self) -> Self {
        Self {
            edits: self.edits.iter().rev().map(|e| e.inverse()).collect(),
        }
    }

    pub fn concat(&self, other: &RefinementScript) -> Self {
        Self {
            edits: self.edits.iter().chain(&other.edits).copied().collect(),
        }
    }
}

/// Apply edits in order. Each intermediate graph must stay acyclic; the
/// first failing edit is reported by its 1-based position.
pub fn apply_refinement(dag: &CausalDag, script: &RefinementScript) -> Result<CausalDag> {
    let n = dag.n_vertices();
    let mut edges = dag.edges.clone();
    for (k, &edit) in script.edits.iter().enumerate() {
        let fail = |reason: String| Error::Refinement {
            index: k + 1,
            edit: edit.to_string(),
            reason,
        };
        let (i, j) = match edit {
            Edit::Remove(i, j) | Edit::Add(i, j) | Edit::Reverse(i, j) => (i, j),
        };
        if i >= n || j >= n {
            return Err(fail(format!("vertex out of range for {n} vertices")));
        }
        if i == j {
            return Err(fail("self-loops are not allowed".into()));
        }
        match edit {
            Edit::Remove(..) => {
                if !edges.remove(&(i, j)) {
                    return Err(fail("edge does not exist".into()));
                }
            }
            Edit::Add(..) => {
                if !edges.insert((i, j)) {
                    return Err(fail("edge already exists".into()));
                }
            }
            Edit::Reverse(..) => {
                if !edges.remove(&(i, j)) {
                    return Err(fail("edge does not exist".into()));
                }
                if !edges.insert((j, i)) {
                    return Err(fail("reversed edge already exists".into()));
                }
            }
        }
        let candidate = dag.with_edges(edges.clone());
        if let Some(cycle) = candidate.find_cycle() {
            return Err(fail(format!("creates the cycle {}", candidate.format_path(&cycle))));
        }
    }
    Ok(dag.with_edges(edges))
}

/// Degree-based grouping of the vertices, before layering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCategories {
    pub isolated: Vec<usize>,
    pub roots: Vec<usize>,
    pub intermediate: Vec<usize>,
    pub leaves: Vec<usize>,
}

pub fn categorize_nodes(dag: &CausalDag) -> NodeCategories {
    let mut cats = NodeCategories {
        isolated: Vec::new(),
        roots: Vec::new(),
        intermediate: Vec::new(),
        leaves: Vec::new(),
    };
    for v in 0..dag.n_vertices() {
        match (dag.in_degree(v) > 0, dag.out_degree(v) > 0) {
            (false, false) => cats.isolated.push(v),
            (false, true) => cats.roots.push(v),
            (true, true) => cats.intermediate.push(v),
            (true, false) => cats.leaves.push(v),
        }
    }
    cats
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePartition {
    pub isolated: Vec<usize>,
    pub roots: Vec<usize>,
    pub intermediate_layers: Vec<Vec<usize>>,
    pub leaves: Vec<usize>,
}

impl NodePartition {
    pub fn n_layers(&self) -> usize {
        self.intermediate_layers.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.intermediate_layers.iter().map(Vec::len).collect()
    }

    pub fn intermediates(&self) -> impl Iterator<Item = usize> + '_ {
        self.intermediate_layers.iter().flatten().copied()
    }

    pub fn n_vertices(&self) -> usize {
        self.isolated.len() + self.roots.len() + self.intermediates().count() + self.leaves.len()
    }

    /// Layer of `v`: 0 for roots, 1..=R for intermediates, R+1 for leaves.
    pub fn layer_of(&self, v: usize) -> Option<usize> {
        if self.roots.contains(&v) {
            return Some(0);
        }
        if let Some(j) = self.intermediate_layers.iter().position(|l| l.contains(&v)) {
            return Some(j + 1);
        }
        self.leaves.contains(&v).then_some(self.n_layers() + 1)
    }

    /// Move the isolated vertices into the root set.
    pub fn promote_isolated(mut self) -> Self {
        self.roots.append(&mut self.isolated);
        self.roots.sort_unstable();
        self
    }
}

/// Peel the current roots off the graph round by round; the intermediates
/// exposed as new roots in round j form layer j.
pub fn layer_intermediates(dag: &CausalDag, cats: &NodeCategories) -> Result<NodePartition> {
    let n = dag.n_vertices();
    let mut removed = vec![false; n];
    for &v in &cats.isolated {
        removed[v] = true;
    }
    let is_intermediate: Vec<bool> = (0..n).map(|v| cats.intermediate.contains(&v)).collect();
    let mut indeg: Vec<usize> = (0..n).map(|v| dag.in_degree(v)).collect();
    let mut current: Vec<usize> = cats.roots.clone();
    let mut layers: Vec<Vec<usize>> = Vec::new();
    let mut placed = 0;

    while placed < cats.intermediate.len() {
        if current.is_empty() {
            return Err(Error::Graph(format!(
                "layering stalled with {} of {} intermediates placed",
                placed,
                cats.intermediate.len()
            )));
        }
        let mut next = Vec::new();
        for &u in &current {
            removed[u] = true;
        }
        for &u in &current {
            for v in dag.children(u) {
                indeg[v] -= 1;
                if indeg[v] == 0 && !removed[v] {
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        let layer: Vec<usize> = next.iter().copied().filter(|&v| is_intermediate[v]).collect();
        if layer.is_empty() {
            return Err(Error::Graph("layering produced an empty intermediate layer".into()));
        }
        placed += layer.len();
        layers.push(layer);
        current = next;
    }

    Ok(NodePartition {
        isolated: cats.isolated.clone(),
        roots: cats.roots.clone(),
        intermediate_layers: layers,
        leaves: cats.leaves.clone(),
    })
}

/// Categorize and layer in one call.
pub fn partition(dag: &CausalDag) -> Result<NodePartition> {
    layer_intermediates(dag, &categorize_nodes(dag))
}

/// Breadth-first reachability from `from`.
pub fn descendants(dag: &CausalDag, from: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut queue: VecDeque<usize> = dag.children(from).into();
    while let Some(v) = queue.pop_front() {
        if out.insert(v) {
            queue.extend(dag.children(v));
        }
    }
    out
}
