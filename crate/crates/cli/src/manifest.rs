//! Run manifests: a JSON record of exactly what a command ran — the full
//! configuration echo, SHA-256 hashes of every input file, the effective
//! seed, artifact paths, and an outcome summary — so a run can be audited
//! and reproduced bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub type CliError = Box<dyn std::error::Error>;
pub type CliResult<T> = Result<T, CliError>;

/// One emitted per run; re-running with the same manifest configuration
/// reproduces bit-identical outputs.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective seed after the `EIGREFINE_SEED` override.
    pub seed: u64,
    /// Flat echo of every configuration knob that affected the run.
    pub config: BTreeMap<String, serde_json::Value>,
    /// SHA-256 of each input file, keyed by role.
    pub input_hashes: BTreeMap<String, String>,
    /// Paths of every file the run wrote, keyed by role.
    pub artifacts: BTreeMap<String, String>,
    /// Human-oriented summary of how the run ended.
    pub outcome_summary: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            config: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            outcome_summary: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn hash_input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.input_hashes.insert(role.to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn artifact(&mut self, role: &str, path: &Path) {
        self.artifacts.insert(role.to_string(), path.display().to_string());
    }

    pub fn summary(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.outcome_summary.insert(key.to_string(), value.into());
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| format!("cannot read {} for hashing: {e}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

/// Print a human-oriented line, tolerating a closed stdout (e.g. piping
/// into `head`): exit codes and files are the machine contract, not stdout.
pub fn emit(line: impl AsRef<str>) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{}", line.as_ref());
}

/// The seed every command actually uses: `EIGREFINE_SEED` when set (it must
/// parse as u64), otherwise the `--seed` flag.
pub fn effective_seed(flag: u64) -> CliResult<u64> {
    match std::env::var("EIGREFINE_SEED") {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("EIGREFINE_SEED must be an unsigned integer, got {s:?}").into()),
        Err(_) => Ok(flag),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_serializes_all_sections() {
        let mut m = RunManifest::new("refine", 7);
        m.config("k", 5);
        m.summary("status", "Converged");
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"command\":\"refine\""));
        assert!(text.contains("\"k\":5"));
        assert!(text.contains("Converged"));
    }
}
