//! Command implementations behind the `glancevad` binary and the annotation
//! HTTP service.

pub mod commands;
pub mod server;
