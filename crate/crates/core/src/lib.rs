//! Graph embedding by clipped empirical risk minimization in Euclidean and
//! hyperbolic balls, together with generalization bounds and Rademacher
//! complexity estimators.

// Negated comparisons are used to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod distribution;
pub mod experiment;
pub mod extended;
pub mod graph;
pub mod learner;
pub mod loss;
pub mod optim;
pub mod rademacher;
pub mod reproduce;
pub mod rng;
pub mod spaces;
