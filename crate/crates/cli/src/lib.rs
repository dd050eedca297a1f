//! Experiment runner: simulate data, extract priors, train, evaluate, render
//! ribbons and summarize reports.

pub mod commands;
pub mod config;
pub mod report;
pub mod ribbon;

use swag_core::SwagError;

/// Process exit code for a failed command: 2 for configuration problems,
/// 4 for training divergence, 3 for anything wrong with the data.
pub fn exit_code(error: &SwagError) -> u8 {
    match error {
        SwagError::Config(_) => 2,
        SwagError::Divergence { .. } => 4,
        SwagError::Format { .. } | SwagError::Domain(_) | SwagError::Shape { .. } | SwagError::Io { .. } => 3,
    }
}
