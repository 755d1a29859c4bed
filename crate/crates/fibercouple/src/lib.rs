//! Command-line front end for `fibercouple-core`: run configuration files,
//! CSV and SVG output, and the source-efficiency budget report.

pub mod cli;
pub mod config;
pub mod io;
pub mod report;

pub use cli::run;
pub use config::RunConfig;
