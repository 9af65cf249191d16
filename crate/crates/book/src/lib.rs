//! Runs the guide's code listings as doctests.
//!
//! mdbook cannot link listings against workspace crates, so each chapter is
//! pulled in here and checked by `cargo test --doc`.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/tensors.md")]
pub mod tensors {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/architecture.md")]
pub mod architecture {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
