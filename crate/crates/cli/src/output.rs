//! Output directory bookkeeping and the run manifest.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Output, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    /// Writes a file through a toolkit writer.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(BufWriter<File>) -> weakkam::Result<()>,
    {
        let w = self.open(name)?;
        f(w)?;
        Ok(())
    }

    /// Writes rows of serializable records under a header.
    pub fn write_rows<R: Serialize>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<(), CliError> {
        let mut wtr = csv::Writer::from_writer(self.open(name)?);
        let io = |e: csv::Error| CliError::Runtime(format!("{name}: {e}"));
        wtr.write_record(header).map_err(io)?;
        for r in rows {
            wtr.serialize(r).map_err(io)?;
        }
        wtr.flush().map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let w = self.open(name)?;
        serde_json::to_writer_pretty(w, value).map_err(|e| CliError::Runtime(format!("{name}: {e}")))
    }

    /// Writes `manifest.json` echoing the resolved configuration.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, threads: Option<usize>, status: &str, summary: Value) -> Result<(), CliError> {
        let files = std::mem::take(&mut self.files);
        let manifest = json!({
            "command": command,
            "status": status,
            "versions": {
                "weakkam": weakkam::VERSION,
                "weakkam-cli": env!("CARGO_PKG_VERSION"),
            },
            "parallel": cfg!(feature = "parallel"),
            "threads": threads,
            "seed": cfg.run.seed,
            "config": cfg,
            "outputs": files,
            "summary": summary,
        });
        self.write_json("manifest.json", &manifest)
    }
}
