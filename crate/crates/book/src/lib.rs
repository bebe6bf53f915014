//! The guide under `book/src`, compiled so that `cargo test --doc` runs
//! every snippet. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/dyadic.md")]
pub mod dyadic {}
#[doc = include_str!("../../../book/src/haar.md")]
pub mod haar {}
#[doc = include_str!("../../../book/src/jones.md")]
pub mod jones {}
#[doc = include_str!("../../../book/src/blocks.md")]
pub mod blocks {}
#[doc = include_str!("../../../book/src/quasi_diag.md")]
pub mod quasi_diag {}
#[doc = include_str!("../../../book/src/factorization.md")]
pub mod factorization {}
#[doc = include_str!("../../../book/src/primarity.md")]
pub mod primarity {}
#[doc = include_str!("../../../book/src/certificates.md")]
pub mod certificates {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
