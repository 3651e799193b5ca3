//! The guide under `book/src`, one module per chapter so `cargo test --doc`
//! runs every snippet. A failing doctest names the chapter module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/supply.md")]
pub mod supply {}
#[doc = include_str!("../../../book/src/demand.md")]
pub mod demand {}
#[doc = include_str!("../../../book/src/clusters.md")]
pub mod clusters {}
#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
