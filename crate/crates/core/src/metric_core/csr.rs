use std::collections::VecDeque;

pub const UNREACHED: u32 = u32::MAX;

/// Compact unit-length graph for oracle searches over large windows.
#[derive(Clone, Debug)]
pub struct CsrGraph {
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl CsrGraph {
    /// Builds from an undirected edge list; duplicate edges are removed.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut deg = vec![0u32; n + 1];
        for &(u, v) in edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n] as usize];
        for &(u, v) in edges {
            targets[fill[u as usize] as usize] = v;
            fill[u as usize] += 1;
            targets[fill[v as usize] as usize] = u;
            fill[v as usize] += 1;
        }
        let mut out_offsets = vec![0u32; n + 1];
        let mut out_targets = Vec::with_capacity(targets.len());
        for i in 0..n {
            let nb = &mut targets[offsets[i] as usize..offsets[i + 1] as usize];
            nb.sort_unstable();
            let mut last = None;
            for &t in nb.iter() {
                if Some(t) != last && t as usize != i {
                    out_targets.push(t);
                    last = Some(t);
                }
            }
            out_offsets[i + 1] = out_targets.len() as u32;
        }
        Self { offsets: out_offsets, targets: out_targets }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.targets[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    pub fn bfs(&self, src: u32) -> Vec<u32> {
        let mut dist = vec![UNREACHED; self.vertex_count()];
        dist[src as usize] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &v in self.neighbors(u) {
                if dist[v as usize] == UNREACHED {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// BFS stopping once `dst` is settled.
    pub fn distance(&self, src: u32, dst: u32) -> Option<u32> {
        if src == dst {
            return Some(0);
        }
        let mut dist = vec![UNREACHED; self.vertex_count()];
        dist[src as usize] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &v in self.neighbors(u) {
                if dist[v as usize] == UNREACHED {
                    dist[v as usize] = du + 1;
                    if v == dst {
                        return Some(du + 1);
                    }
                    queue.push_back(v);
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_distances() {
        let edges: Vec<(u32, u32)> = (0..8).map(|i| (i, (i + 1) % 8)).chain([(0, 1)]).collect();
        let g = CsrGraph::from_edges(8, &edges);
        assert_eq!(g.edge_count(), 8);
        assert_eq!(g.bfs(0)[4], 4);
        assert_eq!(g.distance(0, 6), Some(2));
    }
}
