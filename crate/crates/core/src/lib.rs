//! Human-in-the-loop feature engineering.
//!
//! A language model proposes candidate feature operations; a Bayesian neural
//! network surrogate estimates each candidate's utility and uncertainty; an
//! upper-confidence-bound policy selects what to evaluate; and, when the two
//! leading candidates are close and uncertain enough, a pairwise preference
//! from a human (or a simulated oracle) is folded into the surrogate posterior
//! through a probit likelihood before the final choice is made.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod dsl;
pub mod encoder;
pub mod engine;
pub mod generate;
pub mod learner;
pub mod oracle;
pub mod proposer;
pub mod selection;
pub mod surrogate;
pub mod util;
