use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Collects the files written by one command and finishes with a manifest.
pub struct RunDir {
    root: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write { path: root.to_path_buf(), source })?;
        Ok(RunDir { root: root.to_path_buf(), written: Vec::new(), started: Instant::now() })
    }

    /// Writes `name` atomically: a sibling temp file is filled, synced and renamed.
    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        write_atomic(&self.root.join(name), contents.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, command: &str, config: Value, seed: u64) -> CliResult<()> {
        let argv: Vec<String> = std::env::args().collect();
        let manifest = json!({
            "command": command,
            "argv": argv,
            "version": env!("SPILLOVER_VERSION"),
            "seed": seed,
            "config": config,
            "outputs": self.written,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        write_atomic(&self.root.join("manifest.json"), text.as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let err = |source| CliError::Write { path: path.to_path_buf(), source };
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(err)
}
