//! Library side of the `rfdlc` command-line tool: configuration files and
//! the subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_decide, cmd_eval, cmd_gradcheck, cmd_make_data, cmd_sweep, cmd_train, make_datasets, sweep, train_on,
    GradcheckOptions, MakeData, SweepAxis, SweepRow, TrainRun,
};
pub use config::{Config, UtilitySpec};
pub use error::{CliError, Failure};
