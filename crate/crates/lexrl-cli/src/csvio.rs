//! Version-tagged CSV emission. Every file starts with a `# schema: <tag>`
//! comment line followed by the header row, so downstream tooling can
//! detect format drift; readers skip `#` lines. Floats are written with
//! Rust's shortest-roundtrip formatting, which is deterministic, so a
//! fixed (config, seed) pair always produces byte-identical files.

use crate::{CliError, CliResult};
use std::io::Write;
use std::path::Path;

pub const LPA_TRACE_SCHEMA: &str = "lpa-trace v1";
pub const LPA_SUMMARY_SCHEMA: &str = "lpa-summary v1";
pub const RL_TRACE_SCHEMA: &str = "rl-trace v1";
pub const EVAL_SCHEMA: &str = "eval v1";
pub const SCAN_SCHEMA: &str = "filter-scan v1";
pub const AUGMENT_SCHEMA: &str = "augment-demo v1";

/// A CSV file under construction.
pub struct SchemaCsv {
    wtr: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
}

impl SchemaCsv {
    /// Creates the file, writes the schema comment and the header row.
    pub fn create<S: AsRef<str>>(path: &Path, schema: &str, header: &[S]) -> CliResult<SchemaCsv> {
        let mut file = std::fs::File::create(path)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        writeln!(file, "# schema: {schema}")
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
        let mut wtr = csv::Writer::from_writer(file);
        wtr.write_record(header.iter().map(|s| s.as_ref()))
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))?;
        Ok(SchemaCsv {
            wtr,
            path: path.to_path_buf(),
        })
    }

    pub fn write_row(&mut self, fields: &[String]) -> CliResult<()> {
        self.wtr
            .write_record(fields)
            .map_err(|e| CliError::Runtime(format!("write {}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.wtr
            .flush()
            .map_err(|e| CliError::Runtime(format!("flush {}: {e}", self.path.display())))
    }
}

/// Shortest-roundtrip float rendering shared by all artifact writers.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Header of a per-episode training trace for `k` objectives.
pub fn rl_trace_header(k: usize) -> Vec<String> {
    let mut h = vec!["episode".to_string()];
    h.extend((1..=k).map(|i| format!("sat_{i}")));
    h.push("joint".into());
    h.push("dir_norm".into());
    h.push("skipped".into());
    h
}

/// Header of an evaluation report for `k` objectives.
pub fn eval_header(k: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string(), "success_rate".to_string()];
    h.extend((1..=k).map(|i| format!("mean_return_{i}")));
    h
}

/// One evaluation row.
pub fn eval_row(seed: u64, success_rate: f64, mean_returns: &[f64]) -> Vec<String> {
    let mut row = vec![seed.to_string(), fmt_f64(success_rate)];
    row.extend(mean_returns.iter().map(|&m| fmt_f64(m)));
    row
}

/// Reads a schema-tagged CSV back: returns the header and data rows,
/// checking the embedded schema tag.
pub fn read_rows(path: &Path, expect_schema: &str) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or_default();
    let tag = first.strip_prefix("# schema: ").unwrap_or_default();
    if tag != expect_schema {
        return Err(CliError::Runtime(format!(
            "{}: expected schema {expect_schema:?}, found {tag:?}",
            path.display()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
