//! Command-line tools and the HTTP review service around `octx-core`.

pub mod audit;
pub mod cli;
pub mod config;
pub mod panels;
pub mod server;
pub mod store;
