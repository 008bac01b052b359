//! Sparse memory unit.
//!
//! A banked scratchpad whose issue queue buffers several request vectors
//! so that one bank conflict does not stall a whole vector. An allocator
//! picks a conflict-free set of (lane, bank) pairs each cycle from the
//! oldest slots first; granted requests then flow through a three-stage
//! bank pipeline (crossbar, read + execute, write + reply).

mod alloc;
mod bloom;
mod config;
mod hash;
mod order;
mod request;
mod rmw;
mod trace;
mod unit;

use thiserror::Error;

pub use alloc::{allocate, Grant, GrantSet};
pub use bloom::CountingBloom;
pub use config::{BankHashing, Crossbar, OrderingMode, SpmuConfig};
pub use hash::hash_bank;
pub use order::{elide_reads, enqueue_ordered, split_point, Admission, ElidedVector};
pub use request::{MemoryRequest, Op, ReplySelect, RequestVector, RmwKind};
pub use rmw::{execute, rmw_execute};
pub use trace::{measure_utilization, RandomTrace, TraceParams};
pub use unit::{BatchResult, CompletedVector, Spmu, StepOutcome};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpmuError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("address {address} outside capacity of {capacity} words")]
    Address { address: u32, capacity: usize },
    #[error("vector has {got} lanes, unit has {expected}")]
    Width { expected: usize, got: usize },
}
