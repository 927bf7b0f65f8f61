//! Files, formats, and the command-line harness around `querysat-core`.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod dimacs;
pub mod stamp;
