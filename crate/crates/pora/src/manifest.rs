use serde::Serialize;
use serde_json::Value;

/// Everything needed to replay a command. Carries no timestamps, output
/// location or worker count, so repeated runs write identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
        }
    }
}
