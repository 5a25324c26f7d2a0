use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::rational::{fmt_q, parse_q, q, Q};

use super::MetricError;

pub type VertexId = usize;

/// Finite graph with positive rational edge lengths.
///
/// Vertices are dense indices; an optional name is kept for serialization.
#[derive(Clone, Debug, Default)]
pub struct WeightedGraph {
    adj: Vec<Vec<(VertexId, Q)>>,
    names: HashMap<VertexId, String>,
    by_name: HashMap<String, VertexId>,
    edges: usize,
    non_unit: usize,
}

impl WeightedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vertices(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n], ..Self::default() }
    }

    pub fn add_vertex(&mut self) -> VertexId {
        self.adj.push(Vec::new());
        self.adj.len() - 1
    }

    pub fn add_named_vertex(&mut self, name: &str) -> Result<VertexId, MetricError> {
        if self.by_name.contains_key(name) {
            return Err(MetricError::Parse(format!("duplicate vertex `{name}`")));
        }
        let v = self.add_vertex();
        self.names.insert(v, name.to_string());
        self.by_name.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, v: VertexId) -> String {
        self.names.get(&v).cloned().unwrap_or_else(|| v.to_string())
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId, len: Q) -> Result<(), MetricError> {
        self.check(u)?;
        self.check(v)?;
        if len <= q(0) {
            return Err(MetricError::NonPositiveLength(fmt_q(&len)));
        }
        if u == v {
            return Err(MetricError::SelfLoop(u));
        }
        if len != q(1) {
            self.non_unit += 1;
        }
        self.adj[u].push((v, len));
        self.adj[v].push((u, len));
        self.edges += 1;
        Ok(())
    }

    pub fn add_unit_edge(&mut self, u: VertexId, v: VertexId) -> Result<(), MetricError> {
        self.add_edge(u, v, q(1))
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.adj.get(u).is_some_and(|a| a.iter().any(|&(w, _)| w == v))
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, Q)] {
        &self.adj[v]
    }

    pub fn is_unit(&self) -> bool {
        self.non_unit == 0
    }

    /// Each undirected edge once, as `(u, v, len)` with `u < v`, in insertion-stable order.
    pub fn edges(&self) -> Vec<(VertexId, VertexId, Q)> {
        let mut out = Vec::with_capacity(self.edges);
        for (u, nb) in self.adj.iter().enumerate() {
            for &(v, len) in nb {
                if u < v {
                    out.push((u, v, len));
                }
            }
        }
        out
    }

    fn check(&self, v: VertexId) -> Result<(), MetricError> {
        if v < self.adj.len() {
            Ok(())
        } else {
            Err(MetricError::UnknownVertex(v.to_string()))
        }
    }

    /// Single-source distances; `None` marks another component.
    pub fn distances_from(&self, src: VertexId) -> Vec<Option<Q>> {
        self.distances_from_set(&[src])
    }

    pub fn distances_from_set(&self, srcs: &[VertexId]) -> Vec<Option<Q>> {
        if self.is_unit() {
            self.bfs(srcs).into_iter().map(|d| d.map(|d| q(d as i64))).collect()
        } else {
            self.dijkstra(srcs)
        }
    }

    fn bfs(&self, srcs: &[VertexId]) -> Vec<Option<u64>> {
        let mut dist = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        for &s in srcs {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &(v, _) in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn dijkstra(&self, srcs: &[VertexId]) -> Vec<Option<Q>> {
        let mut dist: Vec<Option<Q>> = vec![None; self.adj.len()];
        let mut heap = BinaryHeap::new();
        for &s in srcs {
            dist[s] = Some(q(0));
            heap.push(Reverse((q(0), s)));
        }
        while let Some(Reverse((d, u))) = heap.pop() {
            if dist[u].is_some_and(|best| d > best) {
                continue;
            }
            for &(v, len) in &self.adj[u] {
                let nd = d + len;
                if dist[v].map_or(true, |old| nd < old) {
                    dist[v] = Some(nd);
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        dist
    }

    pub fn shortest_distance(&self, u: VertexId, v: VertexId) -> Result<Q, MetricError> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Ok(q(0));
        }
        self.distances_from(u)[v].ok_or(MetricError::DisconnectedPair(self.name(u), self.name(v)))
    }

    /// A shortest path from `u` to `v`; among equal-length choices, each step
    /// takes the least vertex id.
    pub fn shortest_path(&self, u: VertexId, v: VertexId) -> Result<Vec<VertexId>, MetricError> {
        self.check(u)?;
        self.check(v)?;
        let dv = self.distances_from(v);
        let total = dv[u].ok_or(MetricError::DisconnectedPair(self.name(u), self.name(v)))?;
        let mut path = vec![u];
        let mut cur = u;
        let mut left = total;
        while cur != v {
            let next = self.adj[cur]
                .iter()
                .filter(|&&(w, len)| dv[w] == Some(left - len))
                .map(|&(w, len)| (w, len))
                .min_by_key(|&(w, _)| w)
                .expect("distance labels are consistent");
            left -= next.1;
            cur = next.0;
            path.push(cur);
        }
        Ok(path)
    }

    /// Vertex sets at minimal distance from `source` inside `target`.
    pub fn nearest_set(&self, target: &[VertexId], source: &[VertexId]) -> Result<Vec<VertexId>, MetricError> {
        let dist = self.distances_from_set(source);
        let best = target
            .iter()
            .filter_map(|&t| dist[t])
            .min()
            .ok_or_else(|| MetricError::DisconnectedPair("target".into(), "source".into()))?;
        let mut out: Vec<VertexId> = target.iter().copied().filter(|&t| dist[t] == Some(best)).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Diameter of a vertex set, measured in this graph.
    pub fn set_diameter(&self, set: &[VertexId]) -> Result<Q, MetricError> {
        let mut best = q(0);
        for (i, &a) in set.iter().enumerate() {
            if i + 1 == set.len() {
                break;
            }
            let d = self.distances_from(a);
            for &b in &set[i + 1..] {
                let dab = d[b].ok_or(MetricError::DisconnectedPair(self.name(a), self.name(b)))?;
                if dab > best {
                    best = dab;
                }
            }
        }
        Ok(best)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in 0..self.vertex_count() {
            out.push_str(&format!("v {}\n", self.name(v)));
        }
        for (u, v, len) in self.edges() {
            out.push_str(&format!("e {} {} {}\n", self.name(u), self.name(v), fmt_q(&len)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MetricError> {
        let mut g = Self::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["v", id] => {
                    g.add_named_vertex(id)?;
                }
                ["e", a, b] | ["e", a, b, _] => {
                    let len = match parts.get(3) {
                        Some(s) => parse_q(s).map_err(MetricError::Parse)?,
                        None => q(1),
                    };
                    let u = g.vertex_by_name(a).ok_or_else(|| MetricError::UnknownVertex(a.to_string()))?;
                    let v = g.vertex_by_name(b).ok_or_else(|| MetricError::UnknownVertex(b.to_string()))?;
                    g.add_edge(u, v, len)?;
                }
                _ => return Err(MetricError::Parse(format!("line {}: `{line}`", no + 1))),
            }
        }
        Ok(g)
    }

    pub fn to_dot(&self, name: &str) -> String {
        self.to_dot_with(name, |_, _| None)
    }

    /// DOT export; `extra` may add attributes to an edge.
    pub fn to_dot_with(&self, name: &str, extra: impl Fn(VertexId, VertexId) -> Option<String>) -> String {
        let mut out = format!("graph \"{name}\" {{\n");
        for v in 0..self.vertex_count() {
            out.push_str(&format!("  \"{}\";\n", self.name(v)));
        }
        for (u, v, len) in self.edges() {
            let mut attrs = format!("len=\"{}\"", fmt_q(&len));
            if let Some(more) = extra(u, v) {
                attrs.push_str(", ");
                attrs.push_str(&more);
            }
            out.push_str(&format!("  \"{}\" -- \"{}\" [{attrs}];\n", self.name(u), self.name(v)));
        }
        out.push_str("}\n");
        out
    }

    /// Parses the subset of DOT produced by [`to_dot_with`].
    pub fn from_dot(text: &str) -> Result<Self, MetricError> {
        let mut g = Self::new();
        let unquote = |s: &str| s.trim().trim_matches('"').to_string();
        for line in text.lines() {
            let line = line.trim().trim_end_matches(';');
            if line.is_empty() || line.starts_with("graph") || line == "}" {
                continue;
            }
            if let Some((lhs, rest)) = line.split_once("--") {
                let (rhs, attrs) = match rest.split_once('[') {
                    Some((r, a)) => (r, a.trim_end_matches(']')),
                    None => (rest, ""),
                };
                let mut len = q(1);
                for attr in attrs.split(',') {
                    if let Some((k, v)) = attr.split_once('=') {
                        if k.trim() == "len" {
                            len = parse_q(&unquote(v)).map_err(MetricError::Parse)?;
                        }
                    }
                }
                let (a, b) = (unquote(lhs), unquote(rhs));
                let u = match g.vertex_by_name(&a) {
                    Some(u) => u,
                    None => g.add_named_vertex(&a)?,
                };
                let v = match g.vertex_by_name(&b) {
                    Some(v) => v,
                    None => g.add_named_vertex(&b)?,
                };
                g.add_edge(u, v, len)?;
            } else {
                let a = unquote(line);
                if g.vertex_by_name(&a).is_none() {
                    g.add_named_vertex(&a)?;
                }
            }
        }
        Ok(g)
    }
}
