//! File formats, configuration and the synthetic-log oracle backing the
//! `slarkit` command-line tool.

pub mod config;
pub mod model_io;
pub mod property;
pub mod report_io;
pub mod synth;
