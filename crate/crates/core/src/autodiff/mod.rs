//! Reverse-mode automatic differentiation, the optimizer and its schedule.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod real;

pub use gradcheck::{grad_check, rel_error, GradCheck};
pub use graph::{sigmoid, Graph, GraphError, NodeId, Op, ParamRef, Workspace};
pub use optim::{cosine_lr, Adam};
pub use params::ParamStore;
pub use real::{Dd, Real};
