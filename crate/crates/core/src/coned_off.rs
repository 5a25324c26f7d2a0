//! Coned-off spaces in the apex model and their K-thick distances: coned
//! free-group trees (pieces of the window and coned-off Cayley graphs),
//! quasi-line families, and the relative and coned-off distance formulas.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::sync::Arc;

use num_integer::Integer;
use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cka_space::{CkaError, CkaWindow, PiecePoint};
use crate::metric_core::{closest_params, Axis, FreeTree, MetricError, VertexId, WeightedGraph, Word};
use crate::projections::{cutoff, Member, ProjectionError, ProjectionFamily};
use crate::rational::{q, qr, serde_q, to_f64, Q};

#[derive(Debug, Error)]
pub enum ConedError {
    #[error("{0} does not act loxodromically on the coned space")]
    NotLoxodromic(String),
    #[error("vertex {0} is not a base vertex")]
    NotBase(VertexId),
    #[error("coned line {0} is not a path of the base graph")]
    BadLine(usize),
    #[error("outside the window: {0}")]
    WindowExceeded(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Cka(#[from] CkaError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

const UNREACHED: u64 = u64::MAX;

/// Base graph with one apex per coned line, joined to each line vertex by an
/// edge of length `r`. Apex `i` has id `base_count + i`.
#[derive(Clone, Debug)]
pub struct ConedSpace {
    base: WeightedGraph,
    lines: Vec<Vec<VertexId>>,
    /// Arc position of each line vertex, for lines declared geodesic.
    positions: Option<Vec<HashMap<VertexId, Q>>>,
    r: Q,
    scale: i64,
    adj: Vec<Vec<(u32, u32)>>,
}

fn scaled(len: Q, scale: i64) -> u32 {
    let s = len * q(scale);
    debug_assert!(s.is_integer());
    s.to_integer() as u32
}

impl ConedSpace {
    fn assemble(base: &WeightedGraph, lines: &[Vec<VertexId>], r: Q, positions: Option<Vec<HashMap<VertexId, Q>>>) -> Result<Self, ConedError> {
        if r <= q(0) {
            return Err(MetricError::NonPositiveLength(format!("{r}")).into());
        }
        let n = base.vertex_count();
        let mut scale = *r.denom();
        for (_, _, len) in base.edges() {
            scale = scale.lcm(len.denom());
        }
        let mut adj: Vec<Vec<(u32, u32)>> = (0..n)
            .map(|u| base.neighbors(u).iter().map(|&(v, len)| (v as u32, scaled(len, scale))).collect())
            .collect();
        let rw = scaled(r, scale);
        for (i, line) in lines.iter().enumerate() {
            let apex = (n + i) as u32;
            let mut nb = Vec::with_capacity(line.len());
            for &u in line {
                if u >= n {
                    return Err(ConedError::NotBase(u));
                }
                adj[u].push((apex, rw));
                nb.push((u as u32, rw));
            }
            adj.push(nb);
        }
        Ok(Self { base: base.clone(), lines: lines.to_vec(), positions, r, scale, adj })
    }

    pub fn base(&self) -> &WeightedGraph {
        &self.base
    }

    pub fn base_count(&self) -> usize {
        self.base.vertex_count()
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn lines(&self) -> &[Vec<VertexId>] {
        &self.lines
    }

    pub fn r(&self) -> Q {
        self.r
    }

    pub fn apex(&self, line: usize) -> VertexId {
        self.base_count() + line
    }

    pub fn is_apex(&self, v: VertexId) -> bool {
        v >= self.base_count()
    }

    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, Q)> + '_ {
        self.adj[v].iter().map(move |&(u, w)| (u as VertexId, qr(w as i64, self.scale)))
    }

    /// The coned space as an explicit weighted graph, apexes named `c<i>`.
    pub fn to_weighted(&self) -> WeightedGraph {
        let mut g = self.delete_apexes();
        for (i, line) in self.lines.iter().enumerate() {
            let c = g.add_named_vertex(&format!("c{i}")).expect("fresh apex name");
            for &u in line {
                g.add_edge(u, c, self.r).expect("valid apex edge");
            }
        }
        g
    }

    /// The base graph recovered from the coned adjacency.
    pub fn delete_apexes(&self) -> WeightedGraph {
        let n = self.base_count();
        let mut g = WeightedGraph::with_vertices(n);
        for u in 0..n {
            for &(v, w) in &self.adj[u] {
                if (v as usize) < n && u < v as usize {
                    g.add_edge(u, v as usize, qr(w as i64, self.scale)).expect("base edge");
                }
            }
        }
        g
    }

    /// Scaled single-source distances.
    fn scaled_distances(&self, src: VertexId) -> Vec<u64> {
        let mut dist = vec![UNREACHED; self.adj.len()];
        let mut heap = BinaryHeap::new();
        dist[src] = 0;
        heap.push(Reverse((0u64, src as u32)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for &(v, w) in &self.adj[u as usize] {
                let nd = d + w as u64;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        dist
    }

    pub fn distances_from(&self, src: VertexId) -> Vec<Option<Q>> {
        self.scaled_distances(src).into_iter().map(|d| (d != UNREACHED).then(|| qr(d as i64, self.scale))).collect()
    }

    pub fn distance(&self, x: VertexId, y: VertexId) -> Result<Q, ConedError> {
        let d = self.scaled_distances(x)[y];
        if d == UNREACHED {
            return Err(MetricError::DisconnectedPair(x.to_string(), y.to_string()).into());
        }
        Ok(qr(d as i64, self.scale))
    }

    fn check_base(&self, v: VertexId) -> Result<(), ConedError> {
        if v < self.base_count() {
            Ok(())
        } else {
            Err(ConedError::NotBase(v))
        }
    }

    /// Base distance between two vertices of coned line `line`.
    fn base_distance(&self, line: usize, u: VertexId, v: VertexId, cache: &mut HashMap<VertexId, Vec<Option<Q>>>) -> Q {
        if let Some(pos) = &self.positions {
            return (pos[line][&u] - pos[line][&v]).abs();
        }
        let row = cache.entry(u).or_insert_with(|| self.base.distances_from(u));
        row[v].expect("line vertices lie in one component")
    }

    /// `d^K(x, y)`: the largest `|β|_K` over all geodesics `β` from `x` to `y`.
    pub fn thick_distance(&self, x: VertexId, y: VertexId, k: Q) -> Result<Q, ConedError> {
        Ok(self.thick_distances(x, y, &[k])?[0])
    }

    /// `d^K(x, y)` for several `K`, sharing the geodesic structure. Dynamic
    /// programming over the geodesic DAG with Pareto fronts of
    /// `(open run length, closed total)` per base vertex; an apex step is a
    /// peripheral edge that closes the run when its base length exceeds `K`.
    pub fn thick_distances(&self, x: VertexId, y: VertexId, ks: &[Q]) -> Result<Vec<Q>, ConedError> {
        self.check_base(x)?;
        self.check_base(y)?;
        let dx = self.scaled_distances(x);
        let dy = self.scaled_distances(y);
        let total = dx[y];
        if total == UNREACHED {
            return Err(MetricError::DisconnectedPair(x.to_string(), y.to_string()).into());
        }
        let on = |v: usize| dx[v] != UNREACHED && dy[v] != UNREACHED && dx[v] + dy[v] == total;
        let n = self.base_count();
        let mut order: Vec<usize> = (0..n).filter(|&v| on(v)).collect();
        order.sort_by_key(|&v| (dx[v], v));
        // Successor moves along the geodesic DAG: (target, length, peripheral line).
        let mut moves: HashMap<usize, Vec<(usize, Q, Option<usize>)>> = HashMap::new();
        let mut cache = HashMap::new();
        let mut periph_len: HashMap<(usize, usize, usize), Q> = HashMap::new();
        for &u in &order {
            let mut out = Vec::new();
            for &(v, w) in &self.adj[u] {
                let v = v as usize;
                if !on(v) || dx[u] + w as u64 != dx[v] {
                    continue;
                }
                if v < n {
                    out.push((v, qr(w as i64, self.scale), None));
                } else {
                    let c = v - n;
                    for &(u2, w2) in &self.adj[v] {
                        let u2 = u2 as usize;
                        if u2 == u || !on(u2) || dx[v] + w2 as u64 != dx[u2] {
                            continue;
                        }
                        let bd = self.base_distance(c, u, u2, &mut cache);
                        periph_len.insert((c, u, u2), bd);
                        out.push((u2, q(2) * self.r, Some(c)));
                    }
                }
            }
            moves.insert(u, out);
        }
        let mut results = Vec::with_capacity(ks.len());
        for &k in ks {
            let mut fronts: HashMap<usize, Vec<(Q, Q)>> = HashMap::new();
            fronts.insert(x, vec![(q(0), q(0))]);
            let mut best = q(0);
            for &u in &order {
                let Some(front) = fronts.remove(&u) else { continue };
                if u == y {
                    best = front.iter().map(|&(run, acc)| acc + cutoff(run, k)).max().unwrap_or(q(0));
                    continue;
                }
                for &(v, len, line) in &moves[&u] {
                    let target = fronts.entry(v).or_default();
                    for &(run, acc) in &front {
                        let next = match line {
                            Some(c) if periph_len[&(c, u, v)] > k => (q(0), acc + cutoff(run, k)),
                            _ => (run + len, acc),
                        };
                        pareto_insert(target, next);
                    }
                }
            }
            results.push(best);
        }
        Ok(results)
    }

    /// Splits a coned path into maximal K-bounded segments and the long
    /// peripheral edges between them.
    pub fn decompose(&self, path: &[VertexId], k: Q) -> Result<ThickDecomposition, ConedError> {
        let n = self.base_count();
        let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
            return Ok(ThickDecomposition::default());
        };
        self.check_base(first)?;
        self.check_base(last)?;
        let edge_len = |a: usize, b: usize| -> Result<Q, ConedError> {
            self.adj[a]
                .iter()
                .filter(|&&(t, _)| t as usize == b)
                .map(|&(_, w)| qr(w as i64, self.scale))
                .min()
                .ok_or_else(|| MetricError::NotAPath(a.to_string(), b.to_string()).into())
        };
        let mut cache = HashMap::new();
        let mut out = ThickDecomposition::default();
        let mut seg = vec![first];
        let mut seg_len = q(0);
        let mut i = 0;
        while i + 1 < path.len() {
            let next = path[i + 1];
            if next >= n {
                let (u, u2) = (path[i], *path.get(i + 2).ok_or(ConedError::NotBase(next))?);
                let len = edge_len(u, next)? + edge_len(next, u2)?;
                if self.base_distance(next - n, u, u2, &mut cache) > k {
                    out.close(std::mem::replace(&mut seg, vec![u2]), seg_len, k);
                    seg_len = q(0);
                    out.peripheral.push((u, u2));
                } else {
                    seg.extend([next, u2]);
                    seg_len += len;
                }
                i += 2;
            } else {
                seg_len += edge_len(path[i], next)?;
                seg.push(next);
                i += 1;
            }
        }
        out.close(seg, seg_len, k);
        Ok(out)
    }
}

fn pareto_insert(front: &mut Vec<(Q, Q)>, s: (Q, Q)) {
    if front.iter().any(|&(r, a)| r >= s.0 && a >= s.1) {
        return;
    }
    front.retain(|&(r, a)| !(s.0 >= r && s.1 >= a));
    front.push(s);
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ThickDecomposition {
    /// Non-trivial K-bounded segments, as coned vertex lists.
    pub segments: Vec<Vec<VertexId>>,
    #[serde(with = "crate::rational::serde_q_vec")]
    pub segment_lengths: Vec<Q>,
    /// Base endpoints of the peripheral edges longer than `K`.
    pub peripheral: Vec<(VertexId, VertexId)>,
    /// `|β|_K`.
    #[serde(with = "serde_q")]
    pub value: Q,
}

impl ThickDecomposition {
    fn close(&mut self, seg: Vec<VertexId>, len: Q, k: Q) {
        if seg.len() > 1 {
            self.value += cutoff(len, k);
            self.segments.push(seg);
            self.segment_lengths.push(len);
        }
    }
}

/// Apex-model coned space over `base`. Peripheral base lengths are measured
/// by search in the base graph.
pub fn cone_off(base: &WeightedGraph, lines: &[Vec<VertexId>], r: Q) -> Result<ConedSpace, ConedError> {
    ConedSpace::assemble(base, lines, r, None)
}

/// As [`cone_off`] for lines that are geodesic paths of the base graph,
/// listed in order; peripheral base lengths are read off arc positions.
pub fn cone_off_geodesic(base: &WeightedGraph, lines: &[Vec<VertexId>], r: Q) -> Result<ConedSpace, ConedError> {
    let mut positions = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let mut pos = HashMap::with_capacity(line.len());
        let mut at = q(0);
        for (j, &u) in line.iter().enumerate() {
            if u >= base.vertex_count() {
                return Err(ConedError::NotBase(u));
            }
            if j > 0 {
                let prev = line[j - 1];
                at += base
                    .neighbors(prev)
                    .iter()
                    .filter(|&&(t, _)| t == u)
                    .map(|&(_, len)| len)
                    .min()
                    .ok_or(ConedError::BadLine(i))?;
            }
            pos.insert(u, at);
        }
        positions.push(pos);
    }
    ConedSpace::assemble(base, lines, r, Some(positions))
}

/// Ball of a free-group tree coned along every translate of the given
/// cyclically reduced words that meets the ball in at least an edge.
#[derive(Clone, Debug)]
pub struct ConedTree {
    pub tree: FreeTree,
    pub words: Vec<Word>,
    index: HashMap<Word, VertexId>,
    /// Coned lines, canonical, in apex order.
    pub axes: Vec<Axis>,
    axis_index: HashMap<Axis, usize>,
    pub space: ConedSpace,
}

pub fn cone_tree(rank: u8, radius: usize, boundary: &[Word], r: Q) -> Result<ConedTree, ConedError> {
    let tree = FreeTree::new(rank, radius)?;
    let words = tree.ball(radius);
    let index: HashMap<Word, VertexId> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let mut base = WeightedGraph::with_vertices(words.len());
    for (i, w) in words.iter().enumerate().skip(1) {
        base.add_unit_edge(index[&w.prefix(w.len() - 1)], i)?;
    }
    let mut set = BTreeSet::new();
    for bw in boundary {
        for x in &words {
            for i in 0..bw.len() {
                set.insert(Axis::new(bw.clone(), x.mul(&bw.prefix(i).inverse()))?.canonical());
            }
        }
    }
    let mut axes = Vec::new();
    let mut lines = Vec::new();
    for axis in set {
        let Some((lo, hi)) = axis.params_in_ball(radius) else { continue };
        if hi > lo {
            lines.push((lo..=hi).map(|j| index[&axis.vertex(j)]).collect::<Vec<_>>());
            axes.push(axis);
        }
    }
    let axis_index = axes.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    let space = cone_off_geodesic(&base, &lines, r)?;
    Ok(ConedTree { tree, words, index, axes, axis_index, space })
}

impl ConedTree {
    pub fn vertex(&self, w: &Word) -> Option<VertexId> {
        self.index.get(w).copied()
    }

    pub fn vertex_or_err(&self, w: &Word) -> Result<VertexId, ConedError> {
        self.vertex(w).ok_or_else(|| ConedError::WindowExceeded(format!("{w} beyond radius {}", self.tree.radius)))
    }

    /// Cone point of a coned line.
    pub fn apex_of(&self, axis: &Axis) -> Option<VertexId> {
        self.axis_index.get(&axis.canonical()).map(|&i| self.space.apex(i))
    }

    pub fn thick_distance(&self, x: &Word, y: &Word, k: Q) -> Result<Q, ConedError> {
        self.space.thick_distance(self.vertex_or_err(x)?, self.vertex_or_err(y)?, k)
    }
}

/// A translate of a word's axis, restricted to a coned tree's ball.
#[derive(Clone, Debug)]
pub struct QuasiLine {
    pub word: Word,
    pub axis: Axis,
    pub vertices: Vec<VertexId>,
}

#[derive(Clone, Debug)]
pub struct QuasiLineFamily {
    pub lines: Vec<QuasiLine>,
    /// Members are the lines as paths; projections are shortest projections in the coned space.
    pub family: Option<Arc<ProjectionFamily>>,
    /// Largest projection diameter between distinct members.
    pub theta: Q,
}

/// Checks that `d(1, wᵏ)` keeps growing in the coned space up to the ball boundary.
fn check_loxodromic(ct: &ConedTree, w: &Word) -> Result<(), ConedError> {
    let kmax = ct.tree.radius / w.len().max(1);
    let lox = || ConedError::NotLoxodromic(w.to_string());
    if kmax < 2 {
        return Err(lox());
    }
    let row = ct.space.distances_from(0);
    let d = |k: usize| row[ct.index[&w.pow(k as i64)]].expect("ball is connected");
    if d(kmax) > d(kmax / 2) && d(kmax) >= q(kmax as i64) / q(2) {
        Ok(())
    } else {
        Err(lox())
    }
}

/// Translates of the axes of `words` meeting the ball of radius `radius` in
/// at least an edge.
pub fn quasi_line_family(ct: &ConedTree, words: &[Word], radius: usize) -> Result<QuasiLineFamily, ConedError> {
    let mut lines = Vec::new();
    for w in words {
        let w = w.clone();
        if !w.is_cyclically_reduced() || w.is_empty() {
            return Err(ConedError::NotLoxodromic(w.to_string()));
        }
        check_loxodromic(ct, &w)?;
        let mut set = BTreeSet::new();
        for x in ct.tree.ball(radius.min(ct.tree.radius)) {
            for i in 0..w.len() {
                set.insert(Axis::new(w.clone(), x.mul(&w.prefix(i).inverse()))?.canonical());
            }
        }
        for axis in set {
            let Some((lo, hi)) = axis.params_in_ball(ct.tree.radius) else { continue };
            if hi > lo {
                let vertices = (lo..=hi).map(|j| ct.index[&axis.vertex(j)]).collect();
                lines.push(QuasiLine { word: w.clone(), axis, vertices });
            }
        }
    }
    if lines.is_empty() {
        return Ok(QuasiLineFamily { lines, family: None, theta: q(0) });
    }
    let n = lines.len();
    let rows: Vec<Vec<u64>> = lines
        .par_iter()
        .map(|l| {
            let mut dist = vec![UNREACHED; ct.space.vertex_count()];
            multi_source(&ct.space, &l.vertices, &mut dist);
            dist
        })
        .collect();
    let mut table = std::collections::BTreeMap::new();
    for (t, target) in lines.iter().enumerate() {
        for s in (0..n).filter(|&s| s != t) {
            let best = target.vertices.iter().map(|&v| rows[s][v]).min().unwrap();
            let set: Vec<VertexId> = (0..target.vertices.len()).filter(|&i| rows[s][target.vertices[i]] == best).collect();
            table.insert((t, s), set);
        }
    }
    let members = lines
        .iter()
        .map(|l| {
            let mut g = WeightedGraph::with_vertices(l.vertices.len());
            for i in 1..l.vertices.len() {
                g.add_unit_edge(i - 1, i).expect("path edge");
            }
            Member { name: format!("{}@{}", l.word, l.axis.conj), graph: Arc::new(g) }
        })
        .collect();
    let family = ProjectionFamily::new(members, table)?;
    let mut theta = q(0);
    for t in 0..n {
        for s in (0..n).filter(|&s| s != t) {
            theta = theta.max(family.projection_diameter(t, s)?);
        }
    }
    Ok(QuasiLineFamily { lines, family: Some(Arc::new(family)), theta })
}

fn multi_source(space: &ConedSpace, srcs: &[VertexId], dist: &mut [u64]) {
    let mut heap = BinaryHeap::new();
    for &s in srcs {
        dist[s] = 0;
        heap.push(Reverse((0u64, s as u32)));
    }
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u as usize] {
            continue;
        }
        for &(v, w) in &space.adj[u as usize] {
            let nd = d + w as u64;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                heap.push(Reverse((nd, v)));
            }
        }
    }
}

/// Per-query cache of single-source distances in one coned space.
struct RowCache<'a> {
    space: &'a ConedSpace,
    rows: HashMap<VertexId, Vec<u64>>,
}

impl<'a> RowCache<'a> {
    fn new(space: &'a ConedSpace) -> Self {
        Self { space, rows: HashMap::new() }
    }

    fn row(&mut self, v: VertexId) -> &Vec<u64> {
        let space = self.space;
        self.rows.entry(v).or_insert_with(|| space.scaled_distances(v))
    }

    /// `ḋ_γ(p, q)`: coned diameter of the union of the shortest projections of `p` and `q` onto `line`.
    fn dot_distance(&mut self, line: &[VertexId], p: VertexId, q_: VertexId) -> Q {
        let mut union = Vec::new();
        for s in [p, q_] {
            let row = self.row(s);
            let best = line.iter().map(|&v| row[v]).min().unwrap();
            union.extend(line.iter().copied().filter(|&v| row[v] == best));
        }
        union.sort_unstable();
        union.dedup();
        let mut diam = 0;
        for &a in &union {
            let row = self.row(a);
            for &b in &union {
                diam = diam.max(row[b]);
            }
        }
        qr(diam as i64, self.space.scale)
    }
}

/// Coned pieces of a window, one per underlying vertex, with their quasi-line families.
#[derive(Clone, Debug)]
pub struct ConedPieces {
    pub pieces: Vec<ConedTree>,
    pub quasi: Vec<QuasiLineFamily>,
}

/// Cone radius of the window pieces.
pub fn piece_cone_radius() -> Q {
    q(crate::fiber_lines::CONE_RADIUS)
}

pub fn build_coned_pieces(win: &CkaWindow) -> Result<ConedPieces, ConedError> {
    let radius = win.params.r_tree;
    let built = win
        .config
        .vertices
        .par_iter()
        .map(|v| {
            let words: Vec<Word> = v.boundary.iter().map(|(_, w)| w.clone()).collect();
            let ct = cone_tree(v.rank, radius, &words, piece_cone_radius())?;
            let fam = quasi_line_family(&ct, &v.quasi_lines, radius.saturating_sub(1))?;
            Ok((ct, fam))
        })
        .collect::<Result<Vec<_>, ConedError>>()?;
    let (pieces, quasi) = built.into_iter().unzip();
    Ok(ConedPieces { pieces, quasi })
}

impl ConedPieces {
    pub fn piece(&self, win: &CkaWindow, v: usize) -> &ConedTree {
        &self.pieces[win.vertices[v].underlying]
    }
}

/// What a point of a coned space `Ẋᵢ` is, seen from one window piece.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AnchorKind {
    Point(Word),
    /// Cone point of the boundary line of a window edge.
    Line(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Anchor {
    pub vertex: usize,
    pub kind: AnchorKind,
}

/// Base point of `x` in its piece.
pub fn pi3(x: &PiecePoint) -> Anchor {
    Anchor { vertex: x.vertex, kind: AnchorKind::Point(x.base.clone()) }
}

/// Cone point of the plane of the least incident edge `[v₀, w₀]`, in the piece of `w₀`.
pub fn pi4(win: &CkaWindow, x: &PiecePoint) -> Anchor {
    let e0 = win.base_edge(x.vertex);
    Anchor { vertex: win.across(e0, x.vertex), kind: AnchorKind::Line(e0) }
}

/// Entry and exit objects of each class vertex along `[a, b]`.
fn stations(win: &CkaWindow, a: &Anchor, b: &Anchor) -> Result<Vec<(usize, AnchorKind, AnchorKind)>, ConedError> {
    let class = win.vertices[a.vertex].class;
    if win.vertices[b.vertex].class != class {
        return Err(CkaError::ConfigInvalid("anchors lie in pieces of different classes".into()).into());
    }
    let path = win.bs_geodesic(a.vertex, b.vertex);
    let m = path.len() - 1;
    let edge = |u: usize, v: usize| win.edge_between(u, v).expect("geodesic step");
    let mut out = Vec::new();
    for (i, &v) in path.iter().enumerate() {
        if win.vertices[v].class != class {
            continue;
        }
        let entry = if i == 0 { a.kind.clone() } else { AnchorKind::Line(edge(path[i - 1], v)) };
        let exit = if i == m { b.kind.clone() } else { AnchorKind::Line(edge(v, path[i + 1])) };
        out.push((v, entry, exit));
    }
    Ok(out)
}

/// Closest-point pair in the chart of `v` between two anchors; `None` for identical lines.
fn closest_pair(win: &CkaWindow, v: usize, a: &AnchorKind, b: &AnchorKind) -> Result<Option<(Word, Word)>, ConedError> {
    Ok(match (a, b) {
        (AnchorKind::Point(x), AnchorKind::Point(y)) => Some((x.clone(), y.clone())),
        (AnchorKind::Point(x), AnchorKind::Line(e)) => Some((x.clone(), win.line(*e, v).project_vertex(x).1)),
        (AnchorKind::Line(e), AnchorKind::Point(y)) => Some((win.line(*e, v).project_vertex(y).1, y.clone())),
        (AnchorKind::Line(e1), AnchorKind::Line(e2)) => {
            let (l1, l2) = (win.line(*e1, v), win.line(*e2, v));
            if l1.canonical() == l2.canonical() {
                None
            } else {
                let (j1, j2) = closest_params(l1, l2)?;
                Some((l1.vertex(j1), l2.vertex(j2)))
            }
        }
    })
}

/// Sum over the class vertices of `[a, b]` of the thick distances between
/// closest-point pairs of consecutive entry and exit objects.
pub fn global_thick_distance(win: &CkaWindow, pieces: &ConedPieces, a: &Anchor, b: &Anchor, k: Q) -> Result<Q, ConedError> {
    let mut sum = q(0);
    for (v, entry, exit) in stations(win, a, b)? {
        if let Some((x, y)) = closest_pair(win, v, &entry, &exit)? {
            sum += pieces.piece(win, v).thick_distance(&x, &y, k)?;
        }
    }
    Ok(sum)
}

fn anchor_vertex(win: &CkaWindow, ct: &ConedTree, v: usize, kind: &AnchorKind) -> Result<VertexId, ConedError> {
    match kind {
        AnchorKind::Point(x) => ct.vertex_or_err(x),
        AnchorKind::Line(e) => ct
            .apex_of(win.line(*e, v))
            .ok_or_else(|| ConedError::WindowExceeded(format!("boundary line of edge {e} is not coned"))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaFitRow {
    pub pair: usize,
    #[serde(with = "serde_q")]
    pub lhs: Q,
    #[serde(with = "serde_q")]
    pub rhs: Q,
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaFit {
    #[serde(with = "serde_q")]
    pub k: Q,
    pub pairs: usize,
    pub skipped: usize,
    /// Least `λ ≥ 1` with `lhs ≤ λ·rhs + λ` and `rhs ≤ λ·lhs + λ` on every row.
    pub fitted: f64,
    pub violations: usize,
    pub rows: Vec<FormulaFitRow>,
}

fn fit_rows(k: Q, pairs: usize, rows: Vec<FormulaFitRow>) -> FormulaFit {
    let lambda = rows
        .iter()
        .map(|r| {
            let (a, b) = (to_f64(&r.lhs), to_f64(&r.rhs));
            (a / (b + 1.0)).max(b / (a + 1.0))
        })
        .fold(1.0, f64::max);
    let violations = rows
        .iter()
        .filter(|r| {
            let (a, b) = (to_f64(&r.lhs), to_f64(&r.rhs));
            a > lambda * (b + 1.0) + 1e-9 || b > lambda * (a + 1.0) + 1e-9
        })
        .count();
    FormulaFit { k, pairs, skipped: pairs - rows.len(), fitted: lambda, violations, rows }
}

/// Global thick distance against `Σ_γ [ḋ_γ]_K` over the quasi-lines of the
/// pieces met, plus the Bass-Serre distance.
pub fn validate_coneoff_formula(win: &CkaWindow, pieces: &ConedPieces, samples: &[(Anchor, Anchor)], k: Q) -> FormulaFit {
    let rows: Vec<FormulaFitRow> = samples
        .par_iter()
        .enumerate()
        .filter_map(|(pair, (a, b))| {
            let run = || -> Result<FormulaFitRow, ConedError> {
                let lhs = global_thick_distance(win, pieces, a, b, k)?;
                let mut rhs = q(win.bs_distance(a.vertex, b.vertex) as i64);
                for (v, entry, exit) in stations(win, a, b)? {
                    let u = win.vertices[v].underlying;
                    let ct = &pieces.pieces[u];
                    let (p, p2) = (anchor_vertex(win, ct, v, &entry)?, anchor_vertex(win, ct, v, &exit)?);
                    let mut cache = RowCache::new(&ct.space);
                    for l in &pieces.quasi[u].lines {
                        rhs += cutoff(cache.dot_distance(&l.vertices, p, p2), k);
                    }
                }
                Ok(FormulaFitRow { pair, lhs, rhs })
            };
            run().ok()
        })
        .collect();
    fit_rows(k, samples.len(), rows)
}

/// `Σ_P [d_P(x, y)]_K` over the peripheral cosets: only cosets sharing an
/// edge with the tree geodesic `[x, y]` have distinct projections.
pub fn peripheral_sum(ct: &ConedTree, peripheral: &[Word], x: &Word, y: &Word, k: Q) -> Result<Q, ConedError> {
    let path = ct.tree.geodesic(x, y);
    let mut seen = BTreeSet::new();
    for pair in path.windows(2) {
        for w in peripheral {
            for i in 0..w.len() {
                let axis = Axis::new(w.clone(), pair[0].mul(&w.prefix(i).inverse()))?.canonical();
                if axis.param_of(&pair[1]).is_some() {
                    seen.insert(axis);
                }
            }
        }
    }
    let mut sum = q(0);
    for axis in seen {
        let d = (axis.project_vertex(x).0 - axis.project_vertex(y).0).abs();
        sum += cutoff(q(d), k);
    }
    Ok(sum)
}

#[derive(Clone, Debug, Serialize)]
pub struct RelativeSweep {
    pub fits: Vec<FormulaFit>,
    /// Least `K` of the grid from which every larger `K` fits within 15% of it.
    #[serde(with = "crate::rational::serde_q_opt")]
    pub threshold: Option<Q>,
}

/// Word distance against `d^K` of the coned-off Cayley graph plus the
/// peripheral cutoff sum, over a grid of `K`.
pub fn validate_relative_formula(ct: &ConedTree, peripheral: &[Word], samples: &[(Word, Word)], ks: &[Q]) -> Result<RelativeSweep, ConedError> {
    let per_pair: Vec<(usize, i64, Vec<Q>, Vec<Q>)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let d = ct.tree.distance(x, y) as i64;
            let thick = ct.space.thick_distances(ct.vertex_or_err(x)?, ct.vertex_or_err(y)?, ks)?;
            let per = ks.iter().map(|&k| peripheral_sum(ct, peripheral, x, y, k)).collect::<Result<Vec<_>, _>>()?;
            Ok((i, d, thick, per))
        })
        .collect::<Result<Vec<_>, ConedError>>()?;
    let fits: Vec<FormulaFit> = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let rows = per_pair
                .iter()
                .map(|(i, d, thick, per)| FormulaFitRow { pair: *i, lhs: q(*d), rhs: thick[j] + per[j] })
                .collect();
            fit_rows(k, samples.len(), rows)
        })
        .collect();
    let threshold = (0..fits.len())
        .find(|&i| fits[i..].iter().all(|f| (f.fitted - fits[i].fitted).abs() <= 0.15 * fits[i].fitted))
        .map(|i| fits[i].k);
    Ok(RelativeSweep { fits, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    fn path(n: usize) -> WeightedGraph {
        let mut g = WeightedGraph::with_vertices(n);
        for i in 1..n {
            g.add_unit_edge(i - 1, i).unwrap();
        }
        g
    }

    #[test]
    fn no_lines_leaves_base() {
        let g = path(6);
        let cs = cone_off(&g, &[], q(1)).unwrap();
        assert_eq!(cs.vertex_count(), 6);
        assert_eq!(cs.distance(0, 5).unwrap(), q(5));
        assert_eq!(cs.thick_distance(0, 5, q(3)).unwrap(), q(5));
        assert_eq!(cs.thick_distance(0, 5, q(6)).unwrap(), q(0));
    }

    #[test]
    fn far_points_on_one_line_go_through_the_apex() {
        let g = path(12);
        let line: Vec<usize> = (0..12).collect();
        let cs = cone_off_geodesic(&g, &[line], q(1)).unwrap();
        assert_eq!(cs.distance(0, 11).unwrap(), q(2));
        assert_eq!(cs.thick_distance(0, 11, q(3)).unwrap(), q(0));
        // Two geodesics of length 2: the base path and the apex path.
        assert_eq!(cs.thick_distance(0, 2, q(1)).unwrap(), q(2));
        assert_eq!(cs.thick_distance(0, 2, q(3)).unwrap(), q(0));
    }

    #[test]
    fn apex_deletion_round_trips() {
        let mut g = path(5);
        g.add_edge(0, 4, qr(3, 2)).unwrap();
        let cs = cone_off(&g, &[vec![0, 2, 4]], qr(1, 2)).unwrap();
        let back = cs.delete_apexes();
        let mut a = g.edges();
        let mut b = back.edges();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_of_a_mixed_path() {
        let g = path(10);
        let cs = cone_off_geodesic(&g, &[(4..10).collect()], q(1)).unwrap();
        let apex = cs.apex(0);
        let d = cs.decompose(&[0, 1, 2, 3, 4, apex, 9], q(2)).unwrap();
        assert_eq!(d.peripheral, vec![(4, 9)]);
        assert_eq!(d.segment_lengths, vec![q(4)]);
        assert_eq!(d.value, q(4));
    }

    #[test]
    fn coned_cayley_tree_shortcut() {
        let ct = cone_tree(2, 6, &[w("a")], qr(1, 2)).unwrap();
        let x = ct.vertex(&w("b")).unwrap();
        let y = ct.vertex(&w("aaaab")).unwrap();
        assert_eq!(ct.space.distance(x, y).unwrap(), q(3));
        assert!(ct.apex_of(&Axis::through_identity(w("a")).unwrap()).is_some());
    }

    #[test]
    fn loxodromic_guard() {
        let ct = cone_tree(2, 5, &[w("a")], q(1)).unwrap();
        assert!(matches!(quasi_line_family(&ct, &[w("a")], 3), Err(ConedError::NotLoxodromic(_))));
        let fam = quasi_line_family(&ct, &[w("b"), w("ab")], 3).unwrap();
        assert!(!fam.lines.is_empty());
        assert!(quasi_line_family(&ct, &[], 3).unwrap().family.is_none());
    }

    #[test]
    fn peripheral_sum_counts_long_runs() {
        let ct = cone_tree(2, 8, &[w("a"), w("b")], qr(1, 2)).unwrap();
        let p = [w("a"), w("b")];
        assert_eq!(peripheral_sum(&ct, &p, &Word::identity(), &w("aaaaabb"), q(4)).unwrap(), q(5));
        assert_eq!(peripheral_sum(&ct, &p, &Word::identity(), &w("abab"), q(2)).unwrap(), q(0));
        assert_eq!(ct.thick_distance(&Word::identity(), &w("abab"), q(2)).unwrap(), q(4));
    }
}
