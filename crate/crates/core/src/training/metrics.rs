//! One JSON record per training step.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::losses::LossReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub ae_lr: f64,
    pub d_lr: f64,
    #[serde(flatten)]
    pub loss: LossReport,
}

pub struct MetricsLog {
    out: BufWriter<File>,
}

impl MetricsLog {
    /// Opens `path` for appending so resumed runs extend the same log.
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn record(&mut self, record: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<StepRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let r = StepRecord {
            epoch: 2,
            step: 9,
            ae_lr: 1e-4,
            d_lr: 2e-4,
            loss: LossReport {
                rec: 0.5,
                total: 7.25,
                ..LossReport::default()
            },
        };
        {
            let mut log = MetricsLog::open(&path).unwrap();
            log.record(&r).unwrap();
            log.flush().unwrap();
        }
        let mut log = MetricsLog::open(&path).unwrap();
        log.record(&r).unwrap();
        log.flush().unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![r.clone(), r]);
    }
}
