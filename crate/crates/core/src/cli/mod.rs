//! Command-line front end: `key = value` configs and the four subcommands.
//!
//! Exit codes: 0 success, 1 solver non-convergence (artifacts still written),
//! 2 input or configuration error.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_detect, cmd_eval, cmd_graph_info, cmd_synth, exit_code, DetectOutcome, EXIT_INPUT_ERROR,
    EXIT_NOT_CONVERGED, EXIT_OK,
};
pub use config::{
    parse_config, parse_config_str, parse_synth_spec, GraphParams, InputSource, KernelKind, Preset, RunConfig,
};
