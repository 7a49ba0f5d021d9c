//! Experiment orchestration: sweeps, max-distance search, reproduction
//! presets, tabular output and the command-line interface.

pub mod cli;
pub mod output;
pub mod presets;
mod sweep;

pub use cli::{parse_config, run_cli, run_cli_with, FileConfig};
pub use output::{Cell, Format, Table};
pub use presets::{reproduce, table2, Artifact, FIGURE_IDS};
pub use sweep::*;
