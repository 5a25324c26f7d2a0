//! Graph metrics, free-group Cayley trees and their axes, hyperbolicity and
//! quasi-geodesic diagnostics.

mod csr;
mod diagnostics;
mod free_tree;
mod graph;

pub use csr::{CsrGraph, UNREACHED};
pub use diagnostics::{fit_quasi_geodesic_constants, four_point_delta, qg_lambda};
pub use free_tree::{closest_params, project_axis_onto_axis, tree_projection, Axis, FreeTree, TreeSource, Word};
pub use graph::{VertexId, WeightedGraph};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("no path between {0} and {1}")]
    DisconnectedPair(String, String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("edge length {0} is not positive")]
    NonPositiveLength(String),
    #[error("self loop at vertex {0}")]
    SelfLoop(usize),
    #[error("radius exceeded: {0}")]
    RadiusExceeded(String),
    #[error("invalid axis: {0}")]
    BadAxis(String),
    #[error("{0} and {1} are not adjacent")]
    NotAPath(String, String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Explicit line in a graph, or an axis of a free-group word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Line {
    Explicit(Vec<VertexId>),
    Axis(Axis),
}

impl Line {
    /// Checks that an explicit line is a geodesic of `g`.
    pub fn validate_in(&self, g: &WeightedGraph) -> Result<(), MetricError> {
        if let Line::Explicit(vs) = self {
            if let (Some(&a), Some(&b)) = (vs.first(), vs.last()) {
                let mut arc = crate::rational::q(0);
                for pair in vs.windows(2) {
                    let len = g
                        .neighbors(pair[0])
                        .iter()
                        .filter(|&&(w, _)| w == pair[1])
                        .map(|&(_, l)| l)
                        .min()
                        .ok_or_else(|| MetricError::NotAPath(g.name(pair[0]), g.name(pair[1])))?;
                    arc += len;
                }
                if g.shortest_distance(a, b)? != arc {
                    return Err(MetricError::BadAxis("explicit line is not a geodesic".into()));
                }
            }
        }
        Ok(())
    }
}
