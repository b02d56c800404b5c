//! File formats, parallel execution and the command-line front end around
//! [`stlcbf_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod plotdata;
pub mod report;

pub use stlcbf_core as core;
