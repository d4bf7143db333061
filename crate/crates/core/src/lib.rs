//! Training bias-free ReLU networks in the space of basis-path values.
//!
//! The weights of a ReLU MLP are redundant under positive rescaling of hidden
//! nodes. Path values are not, and a skeleton construction picks `m - H` of
//! them as coordinates. [`optim::gsgd_step`] runs gradient descent in those
//! coordinates and maps the update back to weights.

pub mod arch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod glinear;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod paths;
pub mod rank;
pub mod scaling;
pub mod skeleton;
pub mod train;

pub use arch::{Architecture, Edge, Node};
pub use error::{Error, Result};
pub use nn::{LossSpec, Sample, Target, WeightVector};
pub use paths::Path;
pub use skeleton::{build_skeleton, SkeletonPlan};
