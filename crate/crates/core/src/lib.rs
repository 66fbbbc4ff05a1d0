//! Mesh simplification with error quadrics, vertex trees built from the
//! contraction sequence, and view-dependent level of detail over them.
//!
//! Pipeline: [`mesh::load_obj`] → [`simplify::simplify`] (contraction log) →
//! [`tree::VertexTree::build`] → [`tree::VertexTree::extract_at_error`] or
//! [`view::ActiveFront::adapt`] per frame, with [`metrics`] to measure the
//! result against the original surface.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod mesh;
pub mod metrics;
pub mod quadric;
pub mod shapes;
pub mod simplify;
pub mod tree;
pub mod view;

/// Points and vectors in model space.
pub type Vec3 = nalgebra::Vector3<f64>;

pub use mesh::{load_obj, save_obj, Adjacency, Mesh, MeshError};
pub use quadric::{Plane, Quadric};
pub use simplify::{simplify, simplify_fully, ContractionRecord, Placement, SimplifyConfig, SimplifyError};
pub use tree::{TreeError, VertexNode, VertexTree};
pub use view::{ActiveFront, AdaptParams, Camera};
