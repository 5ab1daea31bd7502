//! Batch front-end for `wiretap-core`: problem files, subcommands and their
//! reports.

pub mod commands;
pub mod problem;

pub use commands::{Exit, Flags, SchemeChoice};
pub use problem::Problem;
