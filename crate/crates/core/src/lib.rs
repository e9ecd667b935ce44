//! Rule fuzzification: a small rule language, its strict interpreter, and a
//! compiler that turns relaxed rules into trainable differentiable models.

pub mod dsl;
pub mod eval;
pub mod scenario;
pub mod autodiff;
pub mod fuzzify;
pub mod data;
pub mod par;
pub mod train;
