//! Feedforward networks as directed acyclic graphs, evaluated under
//! un-rectifying semantics: every CPWL activation is replaced, at a given
//! input, by the diagonal linear map it equals there. This makes the net
//! region-wise affine and exposes its input-space partition and level-wise
//! Lipschitz bounds.

pub mod builders;
pub mod dag;
pub mod experiments;
pub mod forward;
pub mod io;
pub mod lower;
pub mod ops;
pub mod partition;
pub mod rng;
pub mod stability;

pub use dag::{Arc, Combine, DagBuilder, DagError, DagNet, LevelMap, NodeId, ValidationReport, Violation};
pub use forward::{eval, forward, level_output, region_affine, signature, EvalError, RegionSignature, Trace};
pub use ops::{Activation, ArcOp, CpwlSpec, OpError, Pattern, Transform};
pub use partition::{fusion_partition_bound, partition_census, refinement_check, PartitionCensus};
pub use stability::{NormKind, StabilityReport};
