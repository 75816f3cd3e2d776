//! Output files: staged in memory, then written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use embedbound::extended::ExtReal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the resolved config's JSON encoding.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("configs serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Plain decimal when the value fits an `f64`, scientific text otherwise.
pub fn ext_cell(x: ExtReal) -> String {
    if x.overflows_f64() || x.is_infinite() {
        x.to_sci(10)
    } else {
        x.to_f64().to_string()
    }
}

/// Files produced by one command, written together once all are ready.
pub struct Outputs {
    dir: PathBuf,
    hash: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new<T: Serialize>(dir: &Path, command: &str, resolved: &T) -> Self {
        let mut out = Outputs {
            dir: dir.to_path_buf(),
            hash: config_hash(resolved),
            files: Vec::new(),
        };
        out.json(&format!("{command}.config.json"), resolved);
        out
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("outputs serialize");
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
    }

    /// CSV with a leading `#` line naming the tool version and config hash.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let mut buf = format!("# embedbound {VERSION} config_sha256={}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).expect("in-memory write");
            for row in rows {
                w.write_record(&row).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        self.files.push((name.to_string(), buf));
    }

    /// Writes every file through a temporary sibling and a rename; returns
    /// the final paths.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = self.dir.join(&name);
            let tmp = self.dir.join(format!(".{name}.tmp{}", std::process::id()));
            let mut f = fs::File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
            f.write_all(&bytes).map_err(|e| io_error(&tmp, e))?;
            f.sync_all().map_err(|e| io_error(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
