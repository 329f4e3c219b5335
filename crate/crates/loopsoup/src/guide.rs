//! The user guide, verbatim from `book/` — rendered here so the chapters
//! show up in rustdoc, and, more importantly, so `cargo test --doc`
//! compiles and runs every code block in the book.  If a chapter drifts
//! from the library, the build breaks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/domains.md")]
pub mod domains {}

#[doc = include_str!("../../../book/src/loop-soup.md")]
pub mod loop_soup {}

#[doc = include_str!("../../../book/src/field.md")]
pub mod field {}

#[doc = include_str!("../../../book/src/clusters.md")]
pub mod clusters {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
