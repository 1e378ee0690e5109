//! Command implementations and file formats behind the `taskalloc` binary.

pub mod commands;
pub mod output;
pub mod scenario;
