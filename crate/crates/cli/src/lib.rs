//! Configuration loading, sweeps and fitting behind the `leo-coverage`
//! command.

pub mod config;
pub mod fit;
pub mod sweep;
