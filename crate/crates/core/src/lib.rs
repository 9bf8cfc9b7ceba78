//! Fixed-step simulation of a low-voltage feeder with grid-forming PV
//! inverters, a droop-controlled community battery and a resynchronization
//! unit at the point of common coupling.

// `!(x > 0.0)` comparisons double as NaN checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod harness;
pub mod network;
pub mod pv;
pub mod simcore;
pub mod storage;
pub mod synchronizer;

pub use error::{Result, SimError};
