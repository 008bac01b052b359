//! Cycle-level simulator of a sparse reconfigurable dataflow accelerator.
//!
//! See the book in `book/` for a tour.

pub mod dram;
pub mod formats;
pub mod harness;
pub mod kernels;
pub mod scanner;
pub mod shuffle;
pub mod spmu;
pub mod stats;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/scanner.md")]
    mod scanner {}
    #[doc = include_str!("../../../book/src/spmu.md")]
    mod spmu {}
    #[doc = include_str!("../../../book/src/shuffle.md")]
    mod shuffle {}
    #[doc = include_str!("../../../book/src/dram.md")]
    mod dram {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
