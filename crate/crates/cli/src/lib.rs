pub mod artifact;
pub mod canon;
pub mod commands;
pub mod config;
pub mod error;
pub mod golden;
pub mod suite;
