//! Compiles every Rust listing of the guide in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/csr.md")]
pub mod csr {}
#[doc = include_str!("../../../book/src/masking.md")]
pub mod masking {}
#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}
#[doc = include_str!("../../../book/src/solves.md")]
pub mod solves {}
#[doc = include_str!("../../../book/src/tape.md")]
pub mod tape {}
#[doc = include_str!("../../../book/src/gradcheck.md")]
pub mod gradcheck {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
