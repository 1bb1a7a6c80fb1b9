use serde::Serialize;

pub const TOOL: &str = "oktest";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Run metadata embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config: C,
}

impl<C: Serialize> RunMeta<C> {
    pub fn new(command: &'static str, seed: u64, config: C) -> Self {
        Self { tool: TOOL, version: VERSION, command, seed, config }
    }

    /// Single-line JSON form for comment headers in text formats.
    pub fn one_line(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes")
    }
}

/// Flag, then manifest, then OKTEST_SEED, then the built-in default.
pub fn resolve_seed(flag: Option<u64>, manifest: Option<u64>) -> crate::CliResult<u64> {
    if let Some(s) = flag.or(manifest) {
        return Ok(s);
    }
    match std::env::var("OKTEST_SEED") {
        Ok(v) => v.trim().parse().or_else(|_| crate::usage(format!("OKTEST_SEED is not an unsigned integer: '{v}'"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}
