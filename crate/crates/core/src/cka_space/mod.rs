//! Discretized admissible graph-of-groups spaces: a finite Bass-Serre window
//! whose pieces are free-group trees times an integer fiber, glued along
//! boundary planes by integer affine maps.

mod config;
mod special_path;
mod window;

use thiserror::Error;

use crate::metric_core::MetricError;
use crate::projections::ProjectionError;

pub use config::{Affine, EdgeInfo, EdgeSpec, GraphOfGroupsConfig, ValidConfig, VertexInfo, VertexSpec};
pub use special_path::{
    fit_special_paths, path_components, special_path, strip_between, Corner, Segment, SpecialPath, SpecialPathFit, SpecialPathRow, Strip,
    StripEnd,
};
pub use window::{
    build_window, BsEdge, BsVertex, CkaWindow, DeckTransform, OracleDistance, PiecePoint, WindowOracle, WindowParams,
};

#[derive(Debug, Error)]
pub enum CkaError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("outside the window: {0}")]
    WindowExceeded(String),
    #[error("gluing map of edge {0} maps fibers to fibers")]
    FiberParallel(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}
