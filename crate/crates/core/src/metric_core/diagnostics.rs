use std::collections::HashMap;

use crate::rational::{half, q, to_f64, Q};

use super::{MetricError, VertexId, WeightedGraph};

/// Largest four-point defect over the sampled quadruples.
///
/// For a quadruple the three pair sums are sorted and the defect is half
/// the gap between the two largest.
pub fn four_point_delta(g: &WeightedGraph, sample: &[[VertexId; 4]]) -> Result<Q, MetricError> {
    let mut rows: HashMap<VertexId, Vec<Option<Q>>> = HashMap::new();
    for quad in sample {
        for &v in quad {
            rows.entry(v).or_insert_with(|| g.distances_from(v));
        }
    }
    let d = |a: VertexId, b: VertexId| -> Result<Q, MetricError> {
        rows[&a][b].ok_or_else(|| MetricError::DisconnectedPair(g.name(a), g.name(b)))
    };
    let mut best = q(0);
    for &[x, y, z, w] in sample {
        let mut sums = [d(x, y)? + d(z, w)?, d(x, z)? + d(y, w)?, d(x, w)? + d(y, z)?];
        sums.sort();
        let defect = half(sums[2] - sums[1]);
        if defect > best {
            best = defect;
        }
    }
    Ok(best)
}

/// Least `λ ≥ 1` such that the path is a `(λ, λ)`-quasi-geodesic:
/// `arc/λ − λ ≤ d ≤ λ·arc + λ` for every pair of path vertices.
pub fn fit_quasi_geodesic_constants(path: &[VertexId], g: &WeightedGraph) -> Result<(f64, f64), MetricError> {
    let mut arc = vec![q(0)];
    for pair in path.windows(2) {
        let len = g
            .neighbors(pair[0])
            .iter()
            .filter(|&&(w, _)| w == pair[1])
            .map(|&(_, len)| len)
            .min()
            .ok_or_else(|| MetricError::NotAPath(g.name(pair[0]), g.name(pair[1])))?;
        arc.push(*arc.last().unwrap() + len);
    }
    let mut lambda = 1.0f64;
    for i in 0..path.len() {
        let row = g.distances_from(path[i]);
        for j in i + 1..path.len() {
            let d = to_f64(&row[path[j]].ok_or_else(|| MetricError::DisconnectedPair(g.name(path[i]), g.name(path[j])))?);
            let a = to_f64(&(arc[j] - arc[i]));
            lambda = lambda.max(qg_lambda(a, d));
        }
    }
    Ok((lambda, lambda))
}

/// Smallest λ with `a/λ − λ ≤ d` and `d ≤ λ·a + λ`.
pub fn qg_lambda(arc: f64, d: f64) -> f64 {
    let lower = (-d + (d * d + 4.0 * arc).sqrt()) / 2.0;
    let upper = if arc + 1.0 > 0.0 { d / (arc + 1.0) } else { 0.0 };
    lower.max(upper).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> WeightedGraph {
        let mut g = WeightedGraph::with_vertices(n);
        for i in 0..n - 1 {
            g.add_unit_edge(i, i + 1).unwrap();
        }
        g
    }

    #[test]
    fn geodesic_gives_one() {
        let g = line(10);
        let path: Vec<usize> = (0..10).collect();
        assert_eq!(fit_quasi_geodesic_constants(&path, &g).unwrap().0, 1.0);
    }

    #[test]
    fn single_vertex_delta_zero() {
        let g = WeightedGraph::with_vertices(1);
        assert_eq!(four_point_delta(&g, &[[0, 0, 0, 0]]).unwrap(), q(0));
        assert_eq!(four_point_delta(&g, &[]).unwrap(), q(0));
    }
}
