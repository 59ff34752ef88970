//! Provenance-stamped output: JSON or CSV, written atomically (temp file in
//! the target directory, then rename) or to stdout.

use rclab_core::Error;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

pub struct RunContext {
    pub command: String,
    pub resolved: BTreeMap<String, String>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub no_timestamp: bool,
    pub threads: usize,
}

impl RunContext {
    pub fn provenance(&self) -> serde_json::Value {
        let mut block = serde_json::json!({
            "command": self.command,
            "params": self.resolved,
            "generator": "splitmix64-v1",
            "threads": self.threads,
        });
        if !self.no_timestamp {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            block["timestamp_unix"] = serde_json::json!(now);
        }
        block
    }

    /// Writes `{provenance, result}` as pretty JSON.
    pub fn emit_json(&self, result: serde_json::Value) -> Result<(), Error> {
        let doc = serde_json::json!({
            "provenance": self.provenance(),
            "result": result,
        });
        let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
        self.write_atomic(text.as_bytes())
    }

    /// Writes a CSV body prefixed by `#`-commented provenance lines.
    pub fn emit_csv(&self, body: &str) -> Result<(), Error> {
        let mut text = String::new();
        text.push_str(&format!("# command: {}\n", self.command));
        for (k, v) in &self.resolved {
            text.push_str(&format!("# {k}={v}\n"));
        }
        text.push_str("# generator: splitmix64-v1\n");
        if !self.no_timestamp {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            text.push_str(&format!("# timestamp_unix: {now}\n"));
        }
        text.push_str(body);
        self.write_atomic(text.as_bytes())
    }

    fn write_atomic(&self, bytes: &[u8]) -> Result<(), Error> {
        match &self.out {
            None => {
                std::io::stdout().write_all(bytes)?;
                Ok(())
            }
            Some(path) => write_atomic(path, bytes),
        }
    }

    /// Two-column data file with the provenance as `#` comments, which
    /// plotting tools skip.
    pub fn emit_gnuplot(&self, path: &std::path::PathBuf, body: &str) -> Result<(), Error> {
        let mut text = format!("# command: {}\n", self.command);
        for (k, v) in &self.resolved {
            text.push_str(&format!("# {k}={v}\n"));
        }
        text.push_str(body);
        write_atomic(path, text.as_bytes())
    }
}

/// Temp file in the destination directory, then an atomic rename.
pub fn write_atomic(path: &PathBuf, bytes: &[u8]) -> Result<(), Error> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}
