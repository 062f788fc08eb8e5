//! Configuration, file formats, subcommands and the acceptance suite behind the
//! `hfio` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod suite;
