//! The guide in `book/`, compiled so that its samples run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/ingest.md")]
pub mod ingest {}

#[doc = include_str!("../../../book/src/adapters.md")]
pub mod adapters {}

#[doc = include_str!("../../../book/src/routing.md")]
pub mod routing {}

#[doc = include_str!("../../../book/src/constraints.md")]
pub mod constraints {}

#[doc = include_str!("../../../book/src/authority.md")]
pub mod authority {}

#[doc = include_str!("../../../book/src/audit.md")]
pub mod audit {}

#[doc = include_str!("../../../book/src/api.md")]
pub mod api {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
