//! IO, file formats, and command-line orchestration for the forecasting
//! engine in `volcast-core`: configuration files, the panel/metadata/
//! calendar input formats, model persistence on disk, the ensemble and
//! report output formats, and the six pipeline commands.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod model_io;
pub mod pipeline;
