//! Line-delimited record output: CSV with a header row, or one JSON object
//! per line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::Format;

pub fn write_records<R: Serialize>(out: impl Write, format: Format, records: &[R]) -> anyhow::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::JsonLines => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn print_records<R: Serialize>(format: Format, records: &[R]) -> anyhow::Result<()> {
    write_records(io::stdout().lock(), format, records)
}

/// Writes `<dir>/<stem>.<csv|jsonl>` and returns its path.
pub fn save_records<R: Serialize>(
    dir: &Path,
    stem: &str,
    format: Format,
    records: &[R],
) -> anyhow::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    write_records(BufWriter::new(File::create(&path)?), format, records)?;
    Ok(path)
}
