use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::{Format, OutputOpts};

/// Writes either the JSON document or the CSV rows to the chosen sink.
pub fn emit<D: Serialize, R: Serialize>(opts: &OutputOpts, document: &D, rows: &[R]) -> Result<()> {
    let sink: Box<dyn Write> = match &opts.output {
        Some(path) => Box::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match opts.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, document)?;
            sink.write_all(b"\n")?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut sink);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    sink.flush()?;
    Ok(())
}
