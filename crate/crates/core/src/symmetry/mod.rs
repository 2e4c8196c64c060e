//! Declared symmetry transforms, the relation graph derived from their action
//! maps, and composition of global action-transform estimators.

pub mod estimator;
pub mod graph;
pub mod transform;

pub use estimator::{compose_global_estimator, involution_check, EstimatorParams};
pub use graph::{extract_relation_graph, RelationGraph, SlotRecipe, Step};
pub use transform::{
    apply_declared_action_transform, apply_state_transform, load_transforms, parse_transforms, TransformKind,
    TransformSpec,
};
