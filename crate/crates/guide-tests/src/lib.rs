//! Compiles and runs every Rust code block of the guide as a doctest, one
//! module per chapter so a failure points at its chapter. `cargo test` on
//! the workspace therefore keeps the book and the library in sync.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/queries.md")]
pub mod queries {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/conflicts.md")]
pub mod conflicts {}

#[doc = include_str!("../../../book/src/drivers.md")]
pub mod drivers {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
