use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use acdkit::duration::{DurationKind, DurationSeries, SeasonalState, TickDay};
use acdkit::ingest::{read_durations, read_ticks, IngestReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Share of malformed rows above which input is refused.
pub const MAX_REJECT_FRACTION: f64 = 0.01;

pub const STORE_TICKS: &str = "ticks.csv";

/// A store directory resolves to its tick file.
pub fn tick_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(STORE_TICKS)
    } else {
        path.to_path_buf()
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))
}

/// Reads ticks without applying the data-quality threshold.
pub fn read_tick_file(path: &Path) -> CliResult<(Vec<TickDay>, IngestReport)> {
    let path = tick_path(path);
    let (days, report) =
        read_ticks(open(&path)?).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    if report.rows_read == 0 {
        return Err(CliError::input(format!("{} contains no tick rows", path.display())));
    }
    Ok((days, report))
}

pub fn check_quality(report: &IngestReport) -> CliResult<()> {
    let frac = report.reject_fraction();
    if frac > MAX_REJECT_FRACTION {
        return Err(CliError::quality(format!(
            "{} of {} rows rejected ({:.2}%), above the {:.0}% limit",
            report.rejects.len(),
            report.rows_read,
            100.0 * frac,
            100.0 * MAX_REJECT_FRACTION
        )));
    }
    if report.rows_accepted == 0 {
        return Err(CliError::quality("no rows survived validation"));
    }
    Ok(())
}

pub fn load_ticks(path: &Path) -> CliResult<Vec<TickDay>> {
    let (days, report) = read_tick_file(path)?;
    check_quality(&report)?;
    if !report.rejects.is_empty() {
        eprintln!("warning: {} tick rows rejected", report.rejects.len());
    }
    Ok(days)
}

pub fn load_durations(path: &Path) -> CliResult<DurationSeries> {
    let s = read_durations(open(path)?, DurationKind::Trade, SeasonalState::Raw)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    if s.is_empty() {
        return Err(CliError::input(format!("{} contains no durations", path.display())));
    }
    Ok(s)
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

pub fn create_file(path: &Path) -> CliResult<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    File::create(path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    use std::io::Write;
    create_file(path)?
        .write_all(text.as_bytes())
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::input)?;
    write_text(path, &(text + "\n"))
}

/// Runs a writer-based export into `path`.
pub fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut std::io::BufWriter<File>) -> acdkit::Result<()>,
{
    let mut w = std::io::BufWriter::new(create_file(path)?);
    f(&mut w).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

/// `GACD(2,1)` becomes `gacd_2_1`.
pub fn file_stem(model: &str) -> String {
    let mut s: String = model
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    s.replace("__", "_")
}
