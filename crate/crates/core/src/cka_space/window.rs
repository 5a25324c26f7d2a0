use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::OnceLock;

use rand::Rng;
use serde::Serialize;

use crate::metric_core::{Axis, CsrGraph, FreeTree, Word};

use super::config::{Affine, ValidConfig};
use super::CkaError;

/// Truncation parameters of a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WindowParams {
    /// Bass-Serre depth from the center.
    pub r_bs: usize,
    /// Radius of every piece's base tree.
    pub r_tree: usize,
    /// Fiber bound: fibers range over `[-w, w]`.
    pub w: i64,
    /// Boundary lines meeting this ball of a piece get a neighboring piece.
    pub r_coset: usize,
}

impl WindowParams {
    /// Window of scale `n`: fiber bound `4n`, tree radius `n + 2`.
    pub fn scaled(n: usize) -> Self {
        Self { r_bs: 3, r_tree: n + 2, w: 4 * n as i64, r_coset: 1 }
    }
}

impl Default for WindowParams {
    fn default() -> Self {
        Self::scaled(2)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BsVertex {
    pub id: usize,
    pub label: String,
    pub underlying: usize,
    pub class: u8,
    pub depth: usize,
    pub parent_edge: Option<usize>,
    /// Incident window edges, parent edge first.
    pub edges: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BsEdge {
    pub id: usize,
    pub underlying: usize,
    pub parent: usize,
    pub child: usize,
    /// Boundary line in the parent's chart.
    pub parent_line: Axis,
    /// Boundary line in the child's chart, always through the identity.
    pub child_line: Axis,
    /// Frame map `(h, f)` parent side to child side.
    pub to_child: Affine,
}

/// A point `(base, fiber)` of the piece at a Bass-Serre vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PiecePoint {
    pub vertex: usize,
    pub base: Word,
    pub fiber: i64,
}

impl PiecePoint {
    pub fn new(vertex: usize, base: Word, fiber: i64) -> Self {
        Self { vertex, base, fiber }
    }
}

pub struct CkaWindow {
    pub config: ValidConfig,
    pub params: WindowParams,
    pub center: usize,
    pub vertices: Vec<BsVertex>,
    pub edges: Vec<BsEdge>,
    trees: Vec<FreeTree>,
    oracle: OnceLock<WindowOracle>,
}

fn coset_lines(word: &Word, rank: u8, r: usize) -> Result<Vec<Axis>, CkaError> {
    let tree = FreeTree::new(rank, r)?;
    let mut set = BTreeSet::new();
    for x in tree.ball(r) {
        for i in 0..word.len() {
            let g = x.mul(&word.prefix(i).inverse());
            set.insert(Axis::new(word.clone(), g)?.canonical());
        }
    }
    Ok(set.into_iter().collect())
}

/// Expand the Bass-Serre tree from `center` (a vertex name, or the first
/// class-1 vertex) out to depth `r_bs`.
pub fn build_window(config: &ValidConfig, center: Option<&str>, params: WindowParams) -> Result<CkaWindow, CkaError> {
    if params.r_coset > params.r_tree || params.w < 1 {
        return Err(CkaError::ConfigInvalid(format!("window parameters {params:?}")));
    }
    let root = match center {
        Some(name) => config
            .vertex_index(name)
            .ok_or_else(|| CkaError::ConfigInvalid(format!("unknown center vertex {name}")))?,
        None => config.vertices.iter().position(|v| v.class == 1).unwrap_or(0),
    };
    let trees = config
        .vertices
        .iter()
        .map(|v| FreeTree::new(v.rank, params.r_tree))
        .collect::<Result<Vec<_>, _>>()?;
    let mut lines_cache: HashMap<(usize, usize), Vec<Axis>> = HashMap::new();
    let mut vertices = vec![BsVertex {
        id: 0,
        label: config.vertices[root].name.clone(),
        underlying: root,
        class: config.vertices[root].class,
        depth: 0,
        parent_edge: None,
        edges: Vec::new(),
    }];
    let mut edges: Vec<BsEdge> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        if vertices[v].depth >= params.r_bs {
            continue;
        }
        let u = vertices[v].underlying;
        let parent_underlying = vertices[v].parent_edge.map(|e| edges[e].underlying);
        for (e, word) in config.vertices[u].boundary.clone() {
            let key = (u, e);
            if !lines_cache.contains_key(&key) {
                lines_cache.insert(key, coset_lines(&word, config.vertices[u].rank, params.r_coset)?);
            }
            let info = &config.edges[e];
            let other = info.other(u);
            let child_word = config.boundary_word(other, e).clone();
            for line in &lines_cache[&key] {
                if parent_underlying == Some(e) && line.conj.is_empty() {
                    continue;
                }
                let c = vertices.len();
                let id = edges.len();
                vertices.push(BsVertex {
                    id: c,
                    label: format!("{}/{}@{}", vertices[v].label, info.name, line.conj),
                    underlying: other,
                    class: config.vertices[other].class,
                    depth: vertices[v].depth + 1,
                    parent_edge: Some(id),
                    edges: vec![id],
                });
                vertices[v].edges.push(id);
                edges.push(BsEdge {
                    id,
                    underlying: e,
                    parent: v,
                    child: c,
                    parent_line: line.clone(),
                    child_line: Axis::through_identity(child_word.clone())?,
                    to_child: info.map_from(u),
                });
                queue.push_back(c);
            }
        }
    }
    Ok(CkaWindow { config: config.clone(), params, center: 0, vertices, edges, trees, oracle: OnceLock::new() })
}

impl CkaWindow {
    pub fn tree(&self, v: usize) -> &FreeTree {
        &self.trees[self.vertices[v].underlying]
    }

    pub fn rank(&self, v: usize) -> u8 {
        self.config.vertices[self.vertices[v].underlying].rank
    }

    /// Boundary line of window edge `e` in the chart of its end `v`.
    pub fn line(&self, e: usize, v: usize) -> &Axis {
        let edge = &self.edges[e];
        if v == edge.parent {
            &edge.parent_line
        } else {
            debug_assert_eq!(v, edge.child);
            &edge.child_line
        }
    }

    /// Frame map of edge `e` from the side of `from` to the other side.
    pub fn frame_map(&self, e: usize, from: usize) -> Affine {
        let edge = &self.edges[e];
        if from == edge.parent {
            edge.to_child
        } else {
            edge.to_child.inverse()
        }
    }

    pub fn across(&self, e: usize, v: usize) -> usize {
        let edge = &self.edges[e];
        if v == edge.parent {
            edge.child
        } else {
            edge.parent
        }
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.vertices[a].edges.iter().copied().find(|&e| self.across(e, a) == b)
    }

    pub fn vertex_by_label(&self, label: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.label == label)
    }

    /// The same point in another window of the same configuration.
    pub fn transfer(&self, other: &CkaWindow, p: &PiecePoint) -> Option<PiecePoint> {
        let vertex = other.vertex_by_label(&self.vertices[p.vertex].label)?;
        let q = PiecePoint { vertex, ..p.clone() };
        other.check_point(&q).is_ok().then_some(q)
    }

    /// Child of `v` across the window edge over underlying edge `e` whose line in `v` is `line`.
    pub fn child_along(&self, v: usize, e: usize, line: &Axis) -> Option<usize> {
        self.vertices[v]
            .edges
            .iter()
            .map(|&id| &self.edges[id])
            .find(|edge| edge.parent == v && edge.underlying == e && edge.parent_line == *line)
            .map(|edge| edge.child)
    }

    /// Vertices from the center down to `v`.
    pub fn root_path(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(e) = self.vertices[cur].parent_edge {
            cur = self.edges[e].parent;
            out.push(cur);
        }
        out.reverse();
        out
    }

    pub fn bs_geodesic(&self, a: usize, b: usize) -> Vec<usize> {
        let pa = self.root_path(a);
        let pb = self.root_path(b);
        let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        let mut out: Vec<usize> = pa[common - 1..].iter().rev().copied().collect();
        out.extend_from_slice(&pb[common..]);
        out
    }

    pub fn bs_distance(&self, a: usize, b: usize) -> usize {
        self.bs_geodesic(a, b).len() - 1
    }

    pub fn class_vertices(&self, class: u8) -> Vec<usize> {
        self.vertices.iter().filter(|v| v.class == class).map(|v| v.id).collect()
    }

    pub fn contains(&self, p: &PiecePoint) -> bool {
        p.vertex < self.vertices.len() && p.fiber.abs() <= self.params.w && self.tree(p.vertex).contains(&p.base)
    }

    pub fn check_point(&self, p: &PiecePoint) -> Result<(), CkaError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(CkaError::WindowExceeded(self.describe(p)))
        }
    }

    pub fn describe(&self, p: &PiecePoint) -> String {
        let label = self.vertices.get(p.vertex).map(|v| v.label.as_str()).unwrap_or("?");
        format!("({label}, {}, {})", p.base, p.fiber)
    }

    pub fn on_shell(&self, p: &PiecePoint) -> bool {
        p.base.len() == self.params.r_tree || p.fiber.abs() == self.params.w
    }

    /// All window copies of `p` under the plane identifications, sorted.
    pub fn copies(&self, p: &PiecePoint) -> Vec<PiecePoint> {
        let mut seen = BTreeSet::from([p.clone()]);
        let mut stack = vec![p.clone()];
        while let Some(q) = stack.pop() {
            for &e in &self.vertices[q.vertex].edges {
                let line = self.line(e, q.vertex);
                let Some(h) = line.param_of(&q.base) else { continue };
                let other = self.across(e, q.vertex);
                let (h2, f2) = self.frame_map(e, q.vertex).apply((h, q.fiber));
                let image = PiecePoint::new(other, self.line(e, other).vertex(h2), f2);
                if self.contains(&image) && seen.insert(image.clone()) {
                    stack.push(image);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Representative Bass-Serre vertex of a set of pieces sharing a point:
    /// least eccentricity inside the set, then least depth, then least id.
    /// For a single plane this picks the side nearer the center, i.e. the
    /// head `e_+` of the edge oriented toward the center.
    pub fn central_vertex(&self, set: &[usize]) -> usize {
        *set.iter()
            .min_by_key(|&&v| {
                let ecc = set.iter().map(|&u| self.bs_distance(u, v)).max().unwrap_or(0);
                (ecc, self.vertices[v].depth, v)
            })
            .expect("nonempty vertex set")
    }

    /// Index map of a point given in a piece chart: its piece.
    pub fn index_map(&self, p: &PiecePoint) -> usize {
        p.vertex
    }

    /// Index map of the geometric point under `p`, independent of the chart:
    /// plane points resolve through `central_vertex`.
    pub fn plane_index_map(&self, p: &PiecePoint) -> usize {
        let copies = self.copies(p);
        if copies.len() == 1 {
            return p.vertex;
        }
        let set: Vec<usize> = copies.iter().map(|c| c.vertex).collect();
        self.central_vertex(&set)
    }

    /// Express `p` in the chart of the window vertex `v`, if a copy lives there.
    pub fn in_chart(&self, p: &PiecePoint, v: usize) -> Option<PiecePoint> {
        self.copies(p).into_iter().find(|c| c.vertex == v)
    }

    pub fn oracle(&self) -> &WindowOracle {
        self.oracle.get_or_init(|| WindowOracle::build(self))
    }

    /// Graph distance in the discretized window.
    pub fn brute_force_distance(&self, x: &PiecePoint, y: &PiecePoint) -> Result<u32, CkaError> {
        let o = self.oracle();
        let a = o.vertex_of(self, x)?;
        let b = o.vertex_of(self, y)?;
        o.graph.distance(a, b).ok_or_else(|| CkaError::WindowExceeded(format!("{} and {} are not connected", self.describe(x), self.describe(y))))
    }

    /// Distance plus the shell flag: some shortest path touches the window boundary.
    pub fn brute_force_flagged(&self, x: &PiecePoint, y: &PiecePoint) -> Result<OracleDistance, CkaError> {
        let o = self.oracle();
        let a = o.vertex_of(self, x)?;
        let b = o.vertex_of(self, y)?;
        let da = o.graph.bfs(a);
        let d = da[b as usize];
        if d == u32::MAX {
            return Err(CkaError::WindowExceeded(format!("{} and {} are not connected", self.describe(x), self.describe(y))));
        }
        let db = o.graph.bfs(b);
        let boundary_suspect = (0..o.graph.vertex_count())
            .any(|v| o.shell[v] && da[v] != u32::MAX && db[v] != u32::MAX && da[v] + db[v] == d);
        Ok(OracleDistance { distance: d, boundary_suspect })
    }

    /// Random points in pieces of depth below `r_bs`, base within `r_tree/2`
    /// and fiber within `w/2`.
    pub fn sample_points<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<PiecePoint> {
        let pieces: Vec<usize> =
            self.vertices.iter().filter(|v| v.depth + 1 <= self.params.r_bs.max(1)).map(|v| v.id).collect();
        let half_w = (self.params.w / 2).max(1);
        let mut balls: HashMap<usize, Vec<Word>> = HashMap::new();
        (0..count)
            .map(|_| {
                let v = pieces[rng.gen_range(0..pieces.len())];
                let ball = balls.entry(self.vertices[v].underlying).or_insert_with(|| self.tree(v).ball(self.params.r_tree / 2));
                let base = ball[rng.gen_range(0..ball.len())].clone();
                PiecePoint::new(v, base, rng.gen_range(-half_w..=half_w))
            })
            .collect()
    }

    /// Incident window edge of least id: the parent edge, or the first child edge at the center.
    pub fn base_edge(&self, v: usize) -> usize {
        *self.vertices[v].edges.iter().min().expect("window vertices have an incident edge")
    }

    /// Orbit-style samples: points of class-1 pieces lying on the boundary
    /// plane of `base_edge`, base within half the tree radius.
    pub fn sample_orbit_points<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<PiecePoint> {
        let pieces: Vec<usize> = self
            .vertices
            .iter()
            .filter(|v| v.class == 1 && v.depth < self.params.r_bs.max(1) && !v.edges.is_empty())
            .map(|v| v.id)
            .collect();
        let half_w = (self.params.w / 2).max(1);
        (0..count)
            .map(|_| {
                let v = pieces[rng.gen_range(0..pieces.len())];
                let line = self.line(self.base_edge(v), v);
                let (lo, hi) = line.params_in_ball(self.params.r_tree / 2).unwrap_or((0, 0));
                PiecePoint::new(v, line.vertex(rng.gen_range(lo..=hi)), rng.gen_range(-half_w..=half_w))
            })
            .collect()
    }

    /// Number of window children of `v` along each underlying edge.
    pub fn child_counts(&self, v: usize) -> Vec<(String, usize)> {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for &e in &self.vertices[v].edges {
            if self.edges[e].parent != v {
                continue;
            }
            let name = &self.config.edges[self.edges[e].underlying].name;
            match counts.iter_mut().find(|(n, _)| n == name) {
                Some(c) => c.1 += 1,
                None => counts.push((name.clone(), 1)),
            }
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OracleDistance {
    pub distance: u32,
    pub boundary_suspect: bool,
}

struct BallIndex {
    index: HashMap<Word, u32>,
    adjacent: Vec<(u32, u32)>,
    len: u32,
}

impl BallIndex {
    fn new(tree: &FreeTree, r: usize) -> Self {
        let words = tree.ball(r);
        let index: HashMap<Word, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut adjacent = Vec::new();
        for (i, w) in words.iter().enumerate() {
            for n in tree.neighbors(w) {
                if let Some(&j) = index.get(&n) {
                    if (i as u32) < j {
                        adjacent.push((i as u32, j));
                    }
                }
            }
        }
        Self { index, adjacent, len: words.len() as u32 }
    }
}

/// The window as one unit-length graph: pieces are ball × fiber grids,
/// glued along planes by the frame maps.
pub struct WindowOracle {
    pub graph: CsrGraph,
    raw_to_dense: Vec<u32>,
    offsets: Vec<u32>,
    stride: u32,
    balls: HashMap<u8, BallIndex>,
    shell: Vec<bool>,
    rho: Vec<u32>,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[parent[x as usize] as usize];
        parent[x as usize] = p;
        x = p;
    }
    x
}

impl WindowOracle {
    fn build(win: &CkaWindow) -> Self {
        let w = win.params.w;
        let stride = (2 * w + 1) as u32;
        let mut balls: HashMap<u8, BallIndex> = HashMap::new();
        for v in 0..win.vertices.len() {
            let rank = win.rank(v);
            balls.entry(rank).or_insert_with(|| BallIndex::new(win.tree(v), win.params.r_tree));
        }
        let mut offsets = Vec::with_capacity(win.vertices.len() + 1);
        let mut total = 0u32;
        for v in 0..win.vertices.len() {
            offsets.push(total);
            total += balls[&win.rank(v)].len * stride;
        }
        offsets.push(total);
        let raw = |v: usize, bi: u32, f: i64| offsets[v] + bi * stride + (f + w) as u32;

        let mut parent: Vec<u32> = (0..total).collect();
        for edge in &win.edges {
            let pb = &balls[&win.rank(edge.parent)];
            let cb = &balls[&win.rank(edge.child)];
            let Some((lo, hi)) = edge.parent_line.params_in_ball(win.params.r_tree) else { continue };
            for h in lo..=hi {
                let Some(&bi) = pb.index.get(&edge.parent_line.vertex(h)) else { continue };
                for f in -w..=w {
                    let (h2, f2) = edge.to_child.apply((h, f));
                    if f2.abs() > w {
                        continue;
                    }
                    let Some(&ci) = cb.index.get(&edge.child_line.vertex(h2)) else { continue };
                    let a = find(&mut parent, raw(edge.parent, bi, f));
                    let b = find(&mut parent, raw(edge.child, ci, f2));
                    if a != b {
                        parent[a.max(b) as usize] = a.min(b);
                    }
                }
            }
        }
        let mut raw_to_dense = vec![u32::MAX; total as usize];
        let mut dense_count = 0u32;
        for x in 0..total {
            let r = find(&mut parent, x);
            if raw_to_dense[r as usize] == u32::MAX {
                raw_to_dense[r as usize] = dense_count;
                dense_count += 1;
            }
            raw_to_dense[x as usize] = raw_to_dense[r as usize];
        }

        let mut edges = Vec::new();
        let r_tree = win.params.r_tree;
        let mut shell = vec![false; dense_count as usize];
        let mut pieces: Vec<Vec<u32>> = vec![Vec::new(); dense_count as usize];
        for v in 0..win.vertices.len() {
            let ball = &balls[&win.rank(v)];
            for &(i, j) in &ball.adjacent {
                for f in -w..=w {
                    edges.push((raw_to_dense[raw(v, i, f) as usize], raw_to_dense[raw(v, j, f) as usize]));
                }
            }
            for (word, &i) in &ball.index {
                for f in -w..=w {
                    let d = raw_to_dense[raw(v, i, f) as usize];
                    if f < w {
                        edges.push((d, raw_to_dense[raw(v, i, f + 1) as usize]));
                    }
                    if word.len() == r_tree || f.abs() == w {
                        shell[d as usize] = true;
                    }
                    let list = &mut pieces[d as usize];
                    if !list.contains(&(v as u32)) {
                        list.push(v as u32);
                    }
                }
            }
        }
        let rho = pieces
            .into_iter()
            .map(|list| {
                if list.len() == 1 {
                    list[0]
                } else {
                    let set: Vec<usize> = list.iter().map(|&p| p as usize).collect();
                    win.central_vertex(&set) as u32
                }
            })
            .collect();
        let graph = CsrGraph::from_edges(dense_count as usize, &edges);
        Self { graph, raw_to_dense, offsets, stride, balls, shell, rho }
    }

    pub fn vertex_of(&self, win: &CkaWindow, p: &PiecePoint) -> Result<u32, CkaError> {
        win.check_point(p)?;
        let ball = &self.balls[&win.rank(p.vertex)];
        let bi = ball.index[&p.base];
        let raw = self.offsets[p.vertex] + bi * self.stride + (p.fiber + win.params.w) as u32;
        Ok(self.raw_to_dense[raw as usize])
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn is_shell(&self, v: u32) -> bool {
        self.shell[v as usize]
    }

    /// Index map on oracle vertices.
    pub fn rho(&self, v: u32) -> usize {
        self.rho[v as usize] as usize
    }
}

/// Window deck transformation generated at the center: left multiplication
/// by `shift` on the center's base tree and translation by `fiber` along
/// its fiber, propagated outward through the gluing maps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeckTransform {
    pub shift: Word,
    pub fiber: i64,
}

impl DeckTransform {
    /// Image of `p`, or `None` when the image leaves the window or the
    /// transformation does not extend through some plane.
    pub fn apply(&self, win: &CkaWindow, p: &PiecePoint) -> Option<PiecePoint> {
        let chain = win.root_path(p.vertex);
        let mut sigma = self.shift.clone();
        let mut kappa = self.fiber;
        let mut image = win.center;
        for pair in chain.windows(2) {
            let e = win.vertices[pair[1]].parent_edge.expect("child has a parent edge");
            let edge = &win.edges[e];
            let line = &edge.parent_line;
            let moved = line.translate(&sigma).canonical();
            let t = moved.conj.inverse().mul(&sigma).mul(&line.conj);
            let period = line.period();
            let s = t.len() as i64 / period;
            let s = if line.word.pow(s) == t {
                s
            } else if line.word.pow(-s) == t {
                -s
            } else {
                return None;
            };
            image = win.child_along(image, edge.underlying, &moved)?;
            let (dh, df) = edge.to_child.apply_linear((s * period, kappa));
            let child_period = edge.child_line.period();
            if dh % child_period != 0 {
                return None;
            }
            sigma = edge.child_line.word.pow(dh / child_period);
            kappa = df;
        }
        let out = PiecePoint::new(image, sigma.mul(&p.base), p.fiber + kappa);
        win.contains(&out).then_some(out)
    }
}
