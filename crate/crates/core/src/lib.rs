//! L1-regularized approximate linear programming for MDP value functions.
//!
//! Build a program from samples and a feature basis with [`lp`], solve it at
//! one budget with [`simplex`] or along every budget with [`homotopy`], and
//! pick a budget with [`bounds`]. The guide in `book/` walks through each
//! step.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod bounds;
pub mod error;
pub mod features;
pub mod homotopy;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod policy;
pub mod samples;
pub mod simplex;
pub mod value;

pub use error::{RalpError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/first-solve.md")]
    mod first_solve {}
    #[doc = include_str!("../../../book/src/homotopy.md")]
    mod homotopy {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
