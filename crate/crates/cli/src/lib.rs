//! Library side of the `cms` binary: argument definitions, subcommands,
//! report serialization and the measurements behind `cms report`.

pub mod args;
pub mod checks;
pub mod commands;
pub mod output;
pub mod report;

/// Package version with the `git describe` of the build, when available.
pub const VERSION: &str = env!("CMS_VERSION");

use cms_core::ConfigError;

/// Process exit status for an error: configuration problems are 2, anything else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        2
    } else {
        1
    }
}

/// The error chain joined by `: `, skipping causes whose text an outer
/// message already contains.
pub fn error_message(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

/// Machine-readable error document for the report stream.
pub fn error_document(command: &str, kind: &str, message: &str) -> serde_json::Value {
    serde_json::json!({
        "version": VERSION,
        "command": command,
        "error": { "kind": kind, "message": message },
    })
}
