//! Metric constructions around quasi-trees of spaces: projection families,
//! quasi-trees of spaces, a discretized model of graph-manifold-like spaces,
//! thickened fiber lines, coned-off spaces with thick distances, the
//! product embedding, and a word-ball distortion measurer.

pub mod cka_space;
pub mod cli_io;
pub mod coned_off;
pub mod distortion;
pub mod embedding_report;
pub mod fiber_lines;
pub mod metric_core;
pub mod projections;
pub mod quasi_tree;
pub mod rational;

pub use cka_space::{CkaWindow, GraphOfGroupsConfig, PiecePoint, SpecialPath};
pub use metric_core::{Axis, FreeTree, Line, MetricError, VertexId, WeightedGraph, Word};
pub use projections::{AxiomReport, FamilyPoint, ProjectionFamily, Verdict};
pub use quasi_tree::QuasiTreeOfSpaces;
pub use rational::Q;
