//! Per-epoch training records and their CSV form.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,wall_ms";

/// Metrics after `epoch` full passes; epoch 0 is the initial model.
/// Test columns are `NaN` when no test split was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub records: Vec<EpochRecord>,
    /// Steps whose learning rate had to be halved before they were accepted.
    pub rejected_steps: usize,
}

impl Metrics {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn best_test_acc(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.test_acc)
            .filter(|a| !a.is_nan())
            .reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc, r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        buf.flush().map_err(|e| Error::io(path, e))
    }

    /// Parses CSV written by [`Metrics::write_csv`]; `path` only labels errors.
    pub fn read_csv<R: Read>(input: R, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut records = Vec::new();
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 {
                if line.trim() != CSV_HEADER {
                    return Err(parse_err(
                        line_no,
                        format!("expected header `{CSV_HEADER}`"),
                    ));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(parse_err(
                    line_no,
                    format!("expected 6 fields, found {}", fields.len()),
                ));
            }
            let float = |k: usize| {
                fields[k]
                    .parse::<f64>()
                    .map_err(|e| parse_err(line_no, format!("field {}: {e}", k + 1)))
            };
            records.push(EpochRecord {
                epoch: fields[0]
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("field 1: {e}")))?,
                train_loss: float(1)?,
                train_acc: float(2)?,
                test_loss: float(3)?,
                test_acc: float(4)?,
                wall_ms: fields[5]
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("field 6: {e}")))?,
            });
        }
        Ok(Self {
            records,
            rejected_steps: 0,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }
}
