use std::collections::{BTreeMap, VecDeque};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::metric_core::Word;
use crate::rational::Q;

use super::CkaError;

/// Integer affine map `(h, f) ↦ M·(h, f) + t` with `|det M| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Affine {
    pub m: [[i64; 2]; 2],
    pub t: [i64; 2],
}

impl Affine {
    pub fn identity() -> Self {
        Self { m: [[1, 0], [0, 1]], t: [0, 0] }
    }

    pub fn det(&self) -> i64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, (h, f): (i64, i64)) -> (i64, i64) {
        (self.m[0][0] * h + self.m[0][1] * f + self.t[0], self.m[1][0] * h + self.m[1][1] * f + self.t[1])
    }

    pub fn apply_q(&self, (h, f): (Q, Q)) -> (Q, Q) {
        let c = |x: i64| Ratio::from_integer(x);
        (
            c(self.m[0][0]) * h + c(self.m[0][1]) * f + c(self.t[0]),
            c(self.m[1][0]) * h + c(self.m[1][1]) * f + c(self.t[1]),
        )
    }

    /// Linear part only.
    pub fn apply_linear(&self, (h, f): (i64, i64)) -> (i64, i64) {
        (self.m[0][0] * h + self.m[0][1] * f, self.m[1][0] * h + self.m[1][1] * f)
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        debug_assert!(d == 1 || d == -1);
        let m = [[d * self.m[1][1], -d * self.m[0][1]], [-d * self.m[1][0], d * self.m[0][0]]];
        let lin = Affine { m, t: [0, 0] };
        let (a, b) = lin.apply(( -self.t[0], -self.t[1]));
        Affine { m, t: [a, b] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub rank: u8,
    /// One boundary word per incident edge id.
    pub boundary: BTreeMap<String, String>,
    /// Bipartition class (1 or 2); inferred when absent.
    #[serde(default)]
    pub class: Option<u8>,
    /// Loxodromic words for quasi-line families in the coned piece.
    #[serde(default)]
    pub quasi_lines: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub ends: [String; 2],
    pub matrix: [[i64; 2]; 2],
    #[serde(default)]
    pub translation: [i64; 2],
}

/// Declarative graph of groups: `[vertex.<id>]` and `[edge.<id>]` tables.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphOfGroupsConfig {
    #[serde(default)]
    pub vertex: BTreeMap<String, VertexSpec>,
    #[serde(default)]
    pub edge: BTreeMap<String, EdgeSpec>,
}

#[derive(Clone, Debug)]
pub struct VertexInfo {
    pub name: String,
    pub rank: u8,
    pub class: u8,
    /// `(edge index, boundary word)` for each incident edge, sorted by edge id.
    pub boundary: Vec<(usize, Word)>,
    pub quasi_lines: Vec<Word>,
}

#[derive(Clone, Debug)]
pub struct EdgeInfo {
    pub name: String,
    pub ends: [usize; 2],
    /// Frame map from the `ends[0]` side to the `ends[1]` side.
    pub forward: Affine,
}

impl EdgeInfo {
    /// Frame map from the side at vertex `from` to the other side.
    pub fn map_from(&self, from: usize) -> Affine {
        if from == self.ends[0] {
            self.forward
        } else {
            self.forward.inverse()
        }
    }

    pub fn other(&self, v: usize) -> usize {
        if v == self.ends[0] {
            self.ends[1]
        } else {
            self.ends[0]
        }
    }
}

/// A configuration that passed every invariant check.
#[derive(Clone, Debug)]
pub struct ValidConfig {
    pub vertices: Vec<VertexInfo>,
    pub edges: Vec<EdgeInfo>,
}

impl ValidConfig {
    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.name == name)
    }

    pub fn boundary_word(&self, v: usize, e: usize) -> &Word {
        &self.vertices[v].boundary.iter().find(|(ei, _)| *ei == e).expect("validated incidence").1
    }
}

fn invalid(msg: impl Into<String>) -> CkaError {
    CkaError::ConfigInvalid(msg.into())
}

impl GraphOfGroupsConfig {
    pub fn from_toml(text: &str) -> Result<Self, CkaError> {
        toml::from_str(text).map_err(|e| invalid(format!("parse: {e}")))
    }

    pub fn validate(&self) -> Result<ValidConfig, CkaError> {
        if self.edge.is_empty() {
            return Err(invalid("at least one edge: the underlying graph has no edges"));
        }
        let names: Vec<&String> = self.vertex.keys().collect();
        let idx = |n: &str| names.iter().position(|m| m.as_str() == n);
        let mut edges = Vec::new();
        for (ename, e) in &self.edge {
            let a = idx(&e.ends[0]).ok_or_else(|| invalid(format!("edge {ename}: unknown end {}", e.ends[0])))?;
            let b = idx(&e.ends[1]).ok_or_else(|| invalid(format!("edge {ename}: unknown end {}", e.ends[1])))?;
            if a == b {
                return Err(invalid(format!("bipartite: edge {ename} is a loop")));
            }
            let forward = Affine { m: e.matrix, t: e.translation };
            if forward.det().abs() != 1 {
                return Err(invalid(format!("|det| = 1: edge {ename} has determinant {}", forward.det())));
            }
            if e.matrix[0][1] == 0 {
                return Err(invalid(format!("fiber-nonparallel: edge {ename} has M[1][2] = 0")));
            }
            edges.push(EdgeInfo { name: ename.clone(), ends: [a, b], forward });
        }
        let n = names.len();
        let mut adj = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            adj[e.ends[0]].push(i);
            adj[e.ends[1]].push(i);
        }
        // two-colouring from the first vertex, honouring any declared class
        let mut colour = vec![0u8; n];
        let start = (0..n).find(|&v| self.vertex[names[v]].class.is_some()).unwrap_or(0);
        colour[start] = self.vertex[names[start]].class.unwrap_or(1);
        if !(1..=2).contains(&colour[start]) {
            return Err(invalid(format!("class of {} must be 1 or 2", names[start])));
        }
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &ei in &adj[v] {
                let w = edges[ei].other(v);
                let want = 3 - colour[v];
                if colour[w] == 0 {
                    colour[w] = want;
                    queue.push_back(w);
                } else if colour[w] != want {
                    return Err(invalid(format!("bipartite: odd cycle through {} and {}", names[v], names[w])));
                }
            }
        }
        if let Some(v) = (0..n).find(|&v| colour[v] == 0) {
            return Err(invalid(format!("connected: vertex {} is unreachable", names[v])));
        }
        let mut vertices = Vec::new();
        for (v, name) in names.iter().enumerate() {
            let spec = &self.vertex[*name];
            if let Some(c) = spec.class {
                if c != colour[v] {
                    return Err(invalid(format!("bipartite: declared class of {name} conflicts with the graph")));
                }
            }
            if !(2..=26).contains(&spec.rank) {
                return Err(invalid(format!("rank: vertex {name} has rank {} outside 2..=26", spec.rank)));
            }
            let mut boundary = Vec::new();
            for &ei in &adj[v] {
                let ename = &edges[ei].name;
                let raw = spec.boundary.get(ename).ok_or_else(|| invalid(format!("boundary word: vertex {name} lacks a word for edge {ename}")))?;
                let w = Word::parse(raw).map_err(|e| invalid(format!("boundary word {raw}: {e}")))?;
                if w.is_empty() || !w.is_cyclically_reduced() {
                    return Err(invalid(format!("cyclically reduced: boundary word {raw} at {name}")));
                }
                if w.max_generator() > spec.rank {
                    return Err(invalid(format!("rank: boundary word {raw} at {name} exceeds rank {}", spec.rank)));
                }
                if w.is_proper_power() {
                    return Err(invalid(format!("not a proper power: boundary word {raw} at {name}")));
                }
                boundary.push((ei, w));
            }
            for key in spec.boundary.keys() {
                if !adj[v].iter().any(|&ei| &edges[ei].name == key) {
                    return Err(invalid(format!("boundary word: {name} lists non-incident edge {key}")));
                }
            }
            for i in 0..boundary.len() {
                for j in i + 1..boundary.len() {
                    let (a, b) = (&boundary[i].1, &boundary[j].1);
                    if a.is_conjugate_to(b) || a.is_conjugate_to(&b.inverse()) {
                        return Err(invalid(format!("non-conjugate: boundary words {a} and {b} at {name}")));
                    }
                }
            }
            let quasi_lines = spec
                .quasi_lines
                .iter()
                .map(|s| Word::parse(s).map_err(|e| invalid(format!("quasi-line word {s}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            vertices.push(VertexInfo { name: (*name).clone(), rank: spec.rank, class: colour[v], boundary, quasi_lines });
        }
        Ok(ValidConfig { vertices, edges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLIP: &str = r#"
[vertex.v]
rank = 2
boundary = { e = "a" }
[vertex.w]
rank = 2
boundary = { e = "a" }
[edge.e]
ends = ["v", "w"]
matrix = [[0, 1], [1, 0]]
"#;

    #[test]
    fn affine_round_trip() {
        let a = Affine { m: [[1, 1], [1, 0]], t: [3, -2] };
        let inv = a.inverse();
        for h in -5..5 {
            for f in -5..5 {
                assert_eq!(inv.apply(a.apply((h, f))), (h, f));
            }
        }
    }

    #[test]
    fn flip_config_validates() {
        let cfg = GraphOfGroupsConfig::from_toml(FLIP).unwrap().validate().unwrap();
        assert_eq!(cfg.vertices.len(), 2);
        assert_eq!(cfg.vertices[0].class, 1);
        assert_eq!(cfg.vertices[1].class, 2);
        assert_eq!(cfg.edges[0].forward.apply((3, 7)), (7, 3));
    }

    #[test]
    fn triangle_is_rejected() {
        let text = r#"
[vertex.x]
rank = 2
boundary = { p = "a", r = "b" }
[vertex.y]
rank = 2
boundary = { p = "a", q = "b" }
[vertex.z]
rank = 2
boundary = { q = "a", r = "b" }
[edge.p]
ends = ["x", "y"]
matrix = [[0, 1], [1, 0]]
[edge.q]
ends = ["y", "z"]
matrix = [[0, 1], [1, 0]]
[edge.r]
ends = ["z", "x"]
matrix = [[0, 1], [1, 0]]
"#;
        let err = GraphOfGroupsConfig::from_toml(text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("bipartite"), "{err}");
    }

    #[test]
    fn missing_matrix_is_a_parse_error() {
        let text = FLIP.replace("matrix = [[0, 1], [1, 0]]", "");
        assert!(matches!(GraphOfGroupsConfig::from_toml(&text), Err(CkaError::ConfigInvalid(_))));
    }

    #[test]
    fn parallel_fibers_rejected() {
        let text = FLIP.replace("[[0, 1], [1, 0]]", "[[1, 0], [0, 1]]");
        let err = GraphOfGroupsConfig::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("fiber-nonparallel"));
    }

    #[test]
    fn conjugate_words_rejected() {
        let text = r#"
[vertex.v]
rank = 2
boundary = { e = "ab", f = "ba" }
[vertex.w]
rank = 2
boundary = { e = "a", f = "b" }
[edge.e]
ends = ["v", "w"]
matrix = [[0, 1], [1, 0]]
[edge.f]
ends = ["v", "w"]
matrix = [[0, 1], [1, 0]]
"#;
        let err = GraphOfGroupsConfig::from_toml(text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("non-conjugate"));
    }
}
