//! Minimal reverse-mode autodiff over dense arrays, plus the Adam rule.
//!
//! Single-threaded per training run: a [`Tape`] is never shared across
//! threads, and independent runs operate on disjoint [`ParamStore`]s.

mod check;
mod params;
mod tape;

pub use check::{finite_diff_check, FiniteDiffReport};
pub use params::{AdamParams, Bindings, GradientMap, Param, ParamStore};
pub use tape::{NodeId, Tape};
