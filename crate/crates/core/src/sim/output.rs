//! Run-directory writer.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::sim::scenario::RunOutput;

pub const TRACES_FILE: &str = "traces.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONSTANTS_FILE: &str = "constants.json";
pub const CONFIG_ECHO_FILE: &str = "config-echo.json";

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

/// Creates `dir` if needed and writes the four run artifacts into it.
pub fn write_run_dir(dir: &Path, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    run.trace
        .write_csv(BufWriter::new(File::create(dir.join(TRACES_FILE))?))?;
    write_json(&dir.join(METRICS_FILE), &run.metrics)?;
    write_json(&dir.join(CONSTANTS_FILE), &run.constants)?;
    write_json(&dir.join(CONFIG_ECHO_FILE), &run.config)?;
    Ok(())
}
