//! Front end for load passivity certificates: config ingestion and the
//! `certify`, `limits`, `simulate` and `sweep` commands.

pub mod commands;
pub mod config;

pub use config::{load_config, parse_config, Analysis, ConfigDocument, ConfigError, ConfigFile, ConfigSuite};

/// The reference scenario suite shipped with the crate (`data/table1.json`).
pub const TABLE1_JSON: &str = include_str!("../data/table1.json");

pub const EXIT_PASSIVE: i32 = 0;
pub const EXIT_NOT_PASSIVE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
