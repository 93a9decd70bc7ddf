//! Learned chunk-category models: shapes, relations, styles and L nodes.

mod lnode;
mod shape;
mod style;

use thiserror::Error;

use crate::clustering::ClusterError;
use crate::corpus::SpriteId;

pub use lnode::{learn_lnode, CondEntry, CooccurEntry, LNode, PairFeature, REQUIRED_COOCCUR};
pub use shape::{
    build_relation_set, count_vector, extract_shapes, relation_vectors, BBox, Cardinals, CountVector, Mask, RelKey,
    RelationSet, RelationVectors, Shape,
};
pub use style::{
    chamfer, learn_styles, style_distance, GeometryCount, ShapeProfile, Style, StyleId, StyleInstance,
    STYLE_DISTORTION_DIM, STYLE_K_MAX,
};

pub(crate) use shape::extract_grid_shapes;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("a shape has no relation to itself")]
    SameShape,
    #[error("shape is not part of the given chunk")]
    ShapeMissing,
    #[error("cannot compare shapes of sprite types {a} and {b}")]
    TypeMismatch { a: SpriteId, b: SpriteId },
    #[error("unknown style {0}")]
    UnknownStyle(StyleId),
    #[error("category has no chunks")]
    EmptyCategory,
    #[error("category mixes chunk sizes {expected:?} and {found:?}")]
    MixedChunkSizes { expected: (usize, usize), found: (usize, usize) },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}
