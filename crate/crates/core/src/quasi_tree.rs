//! Quasi-trees of spaces built from projection families, the distance
//! formula validator, and a bottleneck diagnostic.

use std::collections::VecDeque;
use std::sync::Arc;

use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;

use crate::metric_core::{MetricError, VertexId, WeightedGraph};
use crate::projections::{check_strong_axioms, cutoff, FamilyPoint, ProjectionError, ProjectionFamily};
use crate::rational::{fmt_q, q, qr, serde_q, Q};

#[derive(Clone, Debug)]
pub struct QuasiTreeOfSpaces {
    pub carrier: WeightedGraph,
    pub offsets: Vec<usize>,
    pub bridge_edges: Vec<(VertexId, VertexId)>,
    pub bridged_pairs: Vec<(usize, usize)>,
    pub k: Q,
    pub family: Arc<ProjectionFamily>,
    pub warnings: Vec<String>,
}

impl QuasiTreeOfSpaces {
    pub fn carrier_vertex(&self, member: usize, v: VertexId) -> VertexId {
        self.offsets[member] + v
    }

    pub fn point(&self, p: FamilyPoint) -> Option<VertexId> {
        match p {
            FamilyPoint::Vertex(m, v) => Some(self.carrier_vertex(m, v)),
            FamilyPoint::Member(_) => None,
        }
    }

    pub fn locate(&self, c: VertexId) -> FamilyPoint {
        let m = self.offsets.partition_point(|&o| o <= c) - 1;
        FamilyPoint::Vertex(m, c - self.offsets[m])
    }

    pub fn is_bridge(&self, u: VertexId, v: VertexId) -> bool {
        let key = (u.min(v), u.max(v));
        self.bridge_edges.binary_search(&key).is_ok()
    }

    pub fn to_dot(&self, name: &str) -> String {
        self.carrier.to_dot_with(name, |u, v| self.is_bridge(u, v).then(|| "bridge=1".to_string()))
    }

    pub fn distance(&self, a: FamilyPoint, b: FamilyPoint) -> Result<Q, MetricError> {
        let (Some(u), Some(v)) = (self.point(a), self.point(b)) else {
            return Err(MetricError::UnknownVertex("member is not a carrier point".into()));
        };
        self.carrier.shortest_distance(u, v)
    }
}

/// Disjoint union of the members, plus unit bridges `π_X(Z) × π_Z(X)` for
/// every pair `X, Z` with `d_Y(X, Z) ≤ K` for all other `Y`.
pub fn build_quasi_tree(f: Arc<ProjectionFamily>, k: Q) -> Result<QuasiTreeOfSpaces, ProjectionError> {
    let n = f.len();
    if n == 0 {
        return Err(ProjectionError::EmptyFamily);
    }
    let mut warnings = Vec::new();
    let strong = check_strong_axioms(&f, k / q(4))?;
    if q(4) * strong.xi_witnessed > k {
        warnings.push(format!(
            "strong axioms need xi = {} but K/4 = {}",
            fmt_q(&strong.xi_witnessed),
            fmt_q(&(k / q(4)))
        ));
    }
    let mut carrier = WeightedGraph::new();
    let mut offsets = Vec::with_capacity(n);
    for m in f.members() {
        let base = carrier.vertex_count();
        offsets.push(base);
        for _ in 0..m.graph.vertex_count() {
            carrier.add_vertex();
        }
        for (u, v, len) in m.graph.edges() {
            carrier.add_edge(base + u, base + v, len)?;
        }
    }
    let bridged_pairs: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|x| {
            let f = &f;
            (x + 1..n).filter(move |&z| (0..n).all(|y| y == x || y == z || f.projection_distance(y, x, z).unwrap() <= k)).map(move |z| (x, z))
        })
        .collect();
    let mut bridge_edges = Vec::new();
    for &(x, z) in &bridged_pairs {
        for &a in f.project(x, z) {
            for &b in f.project(z, x) {
                let (u, v) = (offsets[x] + a, offsets[z] + b);
                carrier.add_unit_edge(u, v)?;
                bridge_edges.push((u.min(v), u.max(v)));
            }
        }
    }
    bridge_edges.sort_unstable();
    Ok(QuasiTreeOfSpaces { carrier, offsets, bridge_edges, bridged_pairs, k, family: f, warnings })
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaRow {
    pub pair: String,
    #[serde(with = "serde_q")]
    pub sum: Q,
    #[serde(with = "serde_q")]
    pub lhs: Q,
    #[serde(with = "serde_q")]
    pub mid: Q,
    #[serde(with = "serde_q")]
    pub rhs: Q,
    #[serde(with = "serde_q")]
    pub margin: Q,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaReport {
    #[serde(with = "serde_q")]
    pub k: Q,
    #[serde(with = "serde_q")]
    pub lower_factor: Q,
    #[serde(with = "serde_q")]
    pub upper_factor: Q,
    pub pairs: usize,
    pub passed: usize,
    pub lower_failures: usize,
    pub upper_failures: usize,
    pub pass: bool,
    pub rows: Vec<FormulaRow>,
}

impl FormulaReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,lhs,mid,rhs,margin\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.pair, fmt_q(&r.lhs), fmt_q(&r.mid), fmt_q(&r.rhs), fmt_q(&r.margin)));
        }
        out
    }
}

/// `Σ_Y [d_Y(x, y)]_K` over every member `Y`.
pub fn cutoff_sum(f: &ProjectionFamily, x: FamilyPoint, y: FamilyPoint, k: Q) -> Result<Q, ProjectionError> {
    let mut sum = q(0);
    for m in 0..f.len() {
        sum += cutoff(f.extended_distance(m, x, y)?, k);
    }
    Ok(sum)
}

/// Checks `a·Σ ≤ d_C ≤ b·Σ + 3K` per pair with `(a, b) = (1/4, 2)`, or
/// `(1/8, 4)` when `slack` is set.
pub fn validate_distance_formula(qt: &QuasiTreeOfSpaces, samples: &[(FamilyPoint, FamilyPoint)], slack: bool) -> Result<FormulaReport, ProjectionError> {
    let (a, b) = if slack { (qr(1, 8), q(4)) } else { (qr(1, 4), q(2)) };
    let k = qt.k;
    let rows = samples
        .par_iter()
        .map(|&(x, y)| {
            let sum = cutoff_sum(&qt.family, x, y, k)?;
            let mid = qt.distance(x, y)?;
            let lhs = a * sum;
            let rhs = b * sum + q(3) * k;
            let margin = (mid - lhs).min(rhs - mid);
            Ok(FormulaRow { pair: format!("{}|{}", fmt_point(x), fmt_point(y)), sum, lhs, mid, rhs, margin, pass: margin >= q(0) })
        })
        .collect::<Result<Vec<_>, ProjectionError>>()?;
    let lower_failures = rows.iter().filter(|r| r.mid < r.lhs).count();
    let upper_failures = rows.iter().filter(|r| r.mid > r.rhs).count();
    let passed = rows.iter().filter(|r| r.pass).count();
    Ok(FormulaReport { k, lower_factor: a, upper_factor: b, pairs: rows.len(), passed, lower_failures, upper_failures, pass: passed == rows.len(), rows })
}

pub fn fmt_point(p: FamilyPoint) -> String {
    match p {
        FamilyPoint::Member(m) => format!("M{m}"),
        FamilyPoint::Vertex(m, v) => format!("{m}:{v}"),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BottleneckRow {
    pub x: VertexId,
    pub y: VertexId,
    #[serde(with = "serde_q")]
    pub distance: Q,
    pub midpoint: VertexId,
    #[serde(with = "serde_q")]
    pub witnessed: Q,
}

#[derive(Clone, Debug, Serialize)]
pub struct BottleneckReport {
    #[serde(with = "serde_q")]
    pub delta: Q,
    #[serde(with = "serde_q")]
    pub worst: Q,
    pub pass: bool,
    pub rows: Vec<BottleneckRow>,
}

/// For each pair, the least `ρ` such that every `x`–`y` path meets the closed
/// `ρ`-ball about a midpoint of a geodesic (best midpoint taken).
pub fn bottleneck_check(g: &WeightedGraph, samples: &[(VertexId, VertexId)], delta: Q) -> Result<BottleneckReport, MetricError> {
    let rows = samples
        .par_iter()
        .map(|&(x, y)| bottleneck_pair(g, x, y))
        .collect::<Result<Vec<_>, MetricError>>()?;
    let worst = rows.iter().map(|r| r.witnessed).max().unwrap_or(q(0));
    Ok(BottleneckReport { delta, worst, pass: worst <= delta, rows })
}

fn bottleneck_pair(g: &WeightedGraph, x: VertexId, y: VertexId) -> Result<BottleneckRow, MetricError> {
    let dx = g.distances_from(x);
    let dy = g.distances_from(y);
    let d = dx[y].ok_or_else(|| MetricError::DisconnectedPair(g.name(x), g.name(y)))?;
    let half = d / q(2);
    let on_geodesic: Vec<VertexId> = (0..g.vertex_count()).filter(|&v| matches!((dx[v], dy[v]), (Some(a), Some(b)) if a + b == d)).collect();
    let best_off = on_geodesic.iter().map(|&v| (dx[v].unwrap() - half).abs()).min().unwrap();
    let mids: Vec<VertexId> = on_geodesic.into_iter().filter(|&v| (dx[v].unwrap() - half).abs() == best_off).take(16).collect();
    let mut best: Option<(Q, VertexId)> = None;
    for m in mids {
        let dm = g.distances_from(m);
        let mut radii: Vec<Q> = dm.iter().flatten().copied().collect();
        radii.sort();
        radii.dedup();
        let cap = dm[x].unwrap().min(dm[y].unwrap());
        let radii: Vec<Q> = radii.into_iter().filter(|r| *r <= cap).collect();
        let idx = radii.partition_point(|&r| connected_avoiding(g, x, y, &dm, r));
        let rho = radii[idx.min(radii.len() - 1)];
        if best.map_or(true, |(b, _)| rho < b) {
            best = Some((rho, m));
        }
    }
    let (witnessed, midpoint) = best.unwrap();
    Ok(BottleneckRow { x, y, distance: d, midpoint, witnessed })
}

fn connected_avoiding(g: &WeightedGraph, x: VertexId, y: VertexId, dm: &[Option<Q>], r: Q) -> bool {
    let blocked = |v: VertexId| dm[v].is_some_and(|d| d <= r);
    if blocked(x) || blocked(y) {
        return false;
    }
    let mut seen = vec![false; g.vertex_count()];
    seen[x] = true;
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        if u == y {
            return true;
        }
        for &(v, _) in g.neighbors(u) {
            if !seen[v] && !blocked(v) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    false
}
