// Parameter checks are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod autograd;
pub mod cli;
pub mod eval;
pub mod experiment;
pub mod gan;
pub mod signal;
pub mod synth;
