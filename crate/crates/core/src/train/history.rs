use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{EpochMetrics, TrainingHistory};

pub const HISTORY_HEADER: [&str; 6] = ["epoch", "train_acc", "val_acc", "train_loss", "val_loss", "wall_ms"];

fn write_rows<W: Write>(w: &mut csv::Writer<W>, epochs: &[EpochMetrics]) -> Result<()> {
    for m in epochs {
        // `{}` on f64 is the shortest string that parses back exactly.
        w.write_record([
            m.epoch.to_string(),
            m.train_accuracy.to_string(),
            m.val_accuracy.to_string(),
            m.train_loss.to_string(),
            m.val_loss.to_string(),
            m.wall_ms.to_string(),
        ])?;
    }
    Ok(())
}

/// Writes the header and one row per epoch.
pub fn write_history(writer: impl Write, epochs: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HISTORY_HEADER)?;
    write_rows(&mut w, epochs)?;
    w.flush()?;
    Ok(())
}

pub fn export_history(history: &TrainingHistory, path: impl AsRef<Path>) -> Result<()> {
    if history.is_empty() {
        return Err(Error::EmptyDataset("training history"));
    }
    let file = std::fs::File::create(path)?;
    write_history(std::io::BufWriter::new(file), &history.epochs)
}

/// Appends epochs to an existing history file, or creates it with a header.
/// The existing file must carry the expected header and end right before
/// `epochs[0].epoch`.
pub fn append_history(path: impl AsRef<Path>, epochs: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let existing = match std::fs::File::open(path) {
        Ok(f) => {
            let rows = read_history(f)?;
            Some(rows)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    match existing {
        Some(rows) if !rows.is_empty() || std::fs::metadata(path)?.len() > 0 => {
            let next = rows.last().map_or(1, |m| m.epoch + 1);
            if let Some(first) = epochs.first() {
                if first.epoch != next {
                    return Err(Error::InvalidConfig(format!(
                        "{} ends before epoch {next} but the new rows start at {}",
                        path.display(),
                        first.epoch
                    )));
                }
            }
            let file = OpenOptions::new().append(true).open(path)?;
            let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
            write_rows(&mut w, epochs)?;
            w.flush()?;
            Ok(())
        }
        _ => write_history(std::io::BufWriter::new(std::fs::File::create(path)?), epochs),
    }
}

/// Parses a history CSV written by [`write_history`]. An empty input gives an
/// empty list.
pub fn read_history(reader: impl Read) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = r.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    if header.iter().ne(HISTORY_HEADER.iter().copied()) {
        return Err(Error::InvalidConfig(format!(
            "history header must be {}, found {}",
            HISTORY_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let field = |j: usize| -> Result<&str> {
            rec.get(j).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: HISTORY_HEADER[j].to_string(),
                value: String::new(),
            })
        };
        let bad = |j: usize, v: &str| Error::Parse {
            row: i + 1,
            column: HISTORY_HEADER[j].to_string(),
            value: v.to_string(),
        };
        let float = |j: usize| -> Result<f64> {
            let v = field(j)?;
            v.parse().map_err(|_| bad(j, v))
        };
        let int = |j: usize| -> Result<u64> {
            let v = field(j)?;
            v.parse().map_err(|_| bad(j, v))
        };
        out.push(EpochMetrics {
            epoch: int(0)? as usize,
            train_accuracy: float(1)?,
            val_accuracy: float(2)?,
            train_loss: float(3)?,
            val_loss: float(4)?,
            wall_ms: int(5)?,
        });
    }
    Ok(out)
}
