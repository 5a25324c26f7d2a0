//! Brute-force oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

use std::collections::HashMap;

use qtlab_core::metric_core::{CsrGraph, WeightedGraph, Word};
use qtlab_core::projections::AxesFamily;
use qtlab_core::rational::{q, qr, Q};
use rand::seq::SliceRandom;
use rand::Rng;

/// A small coned instance: weighted base graph, coned paths, cone radius.
#[derive(Clone, Debug)]
pub struct ConedInstance {
    pub n: usize,
    pub edges: Vec<(usize, usize, Q)>,
    pub lines: Vec<Vec<usize>>,
    pub r: Q,
}

impl ConedInstance {
    pub fn base_graph(&self) -> WeightedGraph {
        let mut g = WeightedGraph::with_vertices(self.n);
        for &(u, v, w) in &self.edges {
            g.add_edge(u, v, w).unwrap();
        }
        g
    }

    pub fn total_vertices(&self) -> usize {
        self.n + self.lines.len()
    }
}

/// Connected base of at most `max_base` vertices, edge lengths in
/// {1/2, 1, 3/2, 2}, up to `max_lines` coned simple paths.
pub fn random_instance<R: Rng>(rng: &mut R, max_base: usize, max_lines: usize, max_total: usize) -> ConedInstance {
    let lengths = [qr(1, 2), q(1), qr(3, 2), q(2)];
    let n = rng.gen_range(2..=max_base);
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        adj[u][v] = true;
        adj[v][u] = true;
        edges.push((u, v, *lengths.choose(rng).unwrap()));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v && !adj[u][v] {
            adj[u][v] = true;
            adj[v][u] = true;
            edges.push((u, v, *lengths.choose(rng).unwrap()));
        }
    }
    let line_count = rng.gen_range(0..=max_lines.min(max_total - n));
    let mut lines = Vec::new();
    for _ in 0..line_count {
        let mut path = vec![rng.gen_range(0..n)];
        let target = rng.gen_range(2..=n.min(5));
        while path.len() < target {
            let last = *path.last().unwrap();
            let next: Vec<usize> = (0..n).filter(|&w| adj[last][w] && !path.contains(&w)).collect();
            match next.choose(rng) {
                Some(&w) => path.push(w),
                None => break,
            }
        }
        if path.len() >= 2 {
            lines.push(path);
        }
    }
    let r = if rng.gen_bool(0.5) { qr(1, 2) } else { q(1) };
    ConedInstance { n, edges, lines, r }
}

fn floyd_warshall(m: usize, w: &[Vec<Option<Q>>]) -> Vec<Vec<Option<Q>>> {
    let mut d = w.to_vec();
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(q(0));
    }
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].map_or(true, |c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Largest `|β|_K` over every geodesic `β` of the coned graph from `x` to
/// `y`, by depth-first enumeration of simple paths.
pub fn thick_distance_oracle(inst: &ConedInstance, x: usize, y: usize, k: Q) -> Q {
    let n = inst.n;
    let m = inst.total_vertices();
    let mut w = vec![vec![None::<Q>; m]; m];
    let set = |w: &mut Vec<Vec<Option<Q>>>, a: usize, b: usize, len: Q| {
        if w[a][b].map_or(true, |c| len < c) {
            w[a][b] = Some(len);
            w[b][a] = Some(len);
        }
    };
    let mut base_w = vec![vec![None::<Q>; n]; n];
    for &(u, v, len) in &inst.edges {
        set(&mut w, u, v, len);
        set(&mut base_w, u, v, len);
    }
    for (i, line) in inst.lines.iter().enumerate() {
        for &v in line {
            set(&mut w, n + i, v, inst.r);
        }
    }
    let d = floyd_warshall(m, &w);
    let base_d = floyd_warshall(n, &base_w);
    let total = d[x][y].expect("connected");

    let value = |path: &[usize]| -> Q {
        let mut acc = q(0);
        let mut run = q(0);
        let mut i = 0;
        while i + 1 < path.len() {
            let (a, b) = (path[i], path[i + 1]);
            if b >= n {
                let c = path[i + 2];
                if base_d[a][c].unwrap() > k {
                    acc += if run >= k { run } else { q(0) };
                    run = q(0);
                } else {
                    run += w[a][b].unwrap() + w[b][c].unwrap();
                }
                i += 2;
            } else {
                run += w[a][b].unwrap();
                i += 1;
            }
        }
        acc + if run >= k { run } else { q(0) }
    };

    let mut best = None::<Q>;
    let mut path = vec![x];
    let mut on_path = vec![false; m];
    on_path[x] = true;
    fn dfs(
        u: usize,
        len: Q,
        ctx: (&[Vec<Option<Q>>], &[Vec<Option<Q>>], usize, Q),
        path: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        let (w, d, y, total) = ctx;
        if u == y {
            if len == total {
                visit(path);
            }
            return;
        }
        for v in 0..w.len() {
            let Some(e) = w[u][v] else { continue };
            if on_path[v] || d[v][y].map_or(true, |rest| len + e + rest > total) {
                continue;
            }
            on_path[v] = true;
            path.push(v);
            dfs(v, len + e, ctx, path, on_path, visit);
            path.pop();
            on_path[v] = false;
        }
    }
    dfs(x, q(0), (&w, &d, y, total), &mut path, &mut on_path, &mut |p: &[usize]| {
        let v = value(p);
        best = Some(best.map_or(v, |b: Q| b.max(v)));
    });
    best.expect("a geodesic exists")
}

/// Projection sets and `d_Y` values of an axes family recomputed by breadth-first
/// search on the Cayley ball: `π_Y(X)` is the set of vertices of `Y` nearest
/// to `X`.
pub struct AxesOracle {
    /// `proj[y][x]`, as positions along member `y`.
    pub proj: Vec<Vec<Vec<usize>>>,
}

impl AxesOracle {
    pub fn new(af: &AxesFamily) -> Self {
        let ball = af.tree.ball(af.tree.radius);
        let index: HashMap<&Word, u32> = ball.iter().enumerate().map(|(i, w)| (w, i as u32)).collect();
        let mut edges = Vec::new();
        for (i, w) in ball.iter().enumerate() {
            for nb in af.tree.neighbors(w) {
                if let Some(&j) = index.get(&nb) {
                    if (i as u32) < j {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
        let g = CsrGraph::from_edges(ball.len(), &edges);
        let n = af.axes.len();
        let members: Vec<Vec<u32>> = (0..n)
            .map(|m| {
                let (lo, hi) = af.segments[m];
                (0..=(hi - lo) as usize).map(|v| index[&af.vertex_word(m, v)]).collect()
            })
            .collect();
        let mut proj = vec![vec![Vec::new(); n]; n];
        for x in 0..n {
            // Multi-source search from every vertex of X.
            let mut dist = vec![u32::MAX; g.vertex_count()];
            let mut queue = std::collections::VecDeque::new();
            for &v in &members[x] {
                dist[v as usize] = 0;
                queue.push_back(v);
            }
            while let Some(u) = queue.pop_front() {
                for &v in g.neighbors(u) {
                    if dist[v as usize] == u32::MAX {
                        dist[v as usize] = dist[u as usize] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for y in (0..n).filter(|&y| y != x) {
                let ds: Vec<u32> = members[y].iter().map(|&v| dist[v as usize]).collect();
                let best = *ds.iter().min().unwrap();
                proj[y][x] = (0..ds.len()).filter(|&i| ds[i] == best).collect();
            }
        }
        Self { proj }
    }

    /// Diameter of `π_Y(X) ∪ π_Y(Z)` along the segment `Y`.
    pub fn d(&self, y: usize, x: usize, z: usize) -> i64 {
        let (a, b) = (&self.proj[y][x], &self.proj[y][z]);
        let lo = a.iter().chain(b).min().unwrap();
        let hi = a.iter().chain(b).max().unwrap();
        (hi - lo) as i64
    }

    /// Least constant satisfying the first two projection axioms.
    pub fn xi(&self) -> i64 {
        let n = self.proj.len();
        let mut crit = 0;
        for y in 0..n {
            for x in (0..n).filter(|&x| x != y) {
                crit = crit.max(self.d(y, x, x));
                for z in (0..n).filter(|&z| z != x && z != y) {
                    crit = crit.max(self.d(y, x, z).min(self.d(x, y, z)));
                }
            }
        }
        crit
    }
}
