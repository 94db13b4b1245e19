//! Scenario files, subcommand dispatch and run manifests.

mod run;
mod scenario;

pub use run::{dispatch, Command, RunManifest, RunOptions, MANIFEST_FILE};
pub use scenario::{
    parse_scenario, serialize_scenario, BackendName, ClassifySpec, CoeffSpec, ExitSpec, KernelSpec, ModelName,
    ModelSpec, QpSpec, Scenario, SimSpec, SingularitySpec,
};

use crate::error::Error;

/// Process exit code for an error: 2 for bad input, 3 for violated
/// preconditions, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Scenario(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 2,
        Error::Precondition(_) | Error::OnSingularSet { .. } => 3,
        _ => 1,
    }
}

/// One-line JSON error report `{"kind": ..., "message": ...}`.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "kind": e.kind(), "message": e.to_string() }).to_string()
}
