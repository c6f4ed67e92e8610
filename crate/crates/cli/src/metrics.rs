use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CmdError;

/// Append-only metrics log: one `step<TAB>key<TAB>value` line per record,
/// flushed every `flush_every` distinct steps. Steps must be nondecreasing
/// within a run.
pub struct MetricsLog {
    writer: BufWriter<File>,
    path: PathBuf,
    last_step: Option<u64>,
    steps_since_flush: u64,
    flush_every: u64,
}

impl MetricsLog {
    pub fn open(path: impl AsRef<Path>, flush_every: u64) -> Result<Self, CmdError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CmdError::input(format!("cannot open {}: {e}", path.display())))?;
        Ok(MetricsLog {
            writer: BufWriter::new(file),
            path,
            last_step: None,
            steps_since_flush: 0,
            flush_every: flush_every.max(1),
        })
    }

    pub fn record(&mut self, step: u64, key: &str, value: f64) -> Result<(), CmdError> {
        if let Some(last) = self.last_step {
            if step < last {
                return Err(CmdError::input(format!(
                    "metrics step went backwards: {step} after {last}"
                )));
            }
            if step > last {
                self.steps_since_flush += 1;
            }
        }
        self.last_step = Some(step);
        writeln!(self.writer, "{step}\t{key}\t{value}")
            .map_err(|e| CmdError::input(format!("cannot write {}: {e}", self.path.display())))?;
        if self.steps_since_flush >= self.flush_every {
            self.flush()?;
            self.steps_since_flush = 0;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CmdError> {
        self.writer
            .flush()
            .map_err(|e| CmdError::input(format!("cannot flush {}: {e}", self.path.display())))
    }
}

impl Drop for MetricsLog {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

/// Parse a metrics file back into (step, key, value) records.
pub fn parse_metrics(body: &str) -> Result<Vec<(u64, String, f64)>, CmdError> {
    body.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut parts = line.split('\t');
            let step = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CmdError::input(format!("bad metrics line '{line}'")))?;
            let key = parts
                .next()
                .ok_or_else(|| CmdError::input(format!("bad metrics line '{line}'")))?
                .to_string();
            let value = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CmdError::input(format!("bad metrics line '{line}'")))?;
            Ok((step, key, value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        {
            let mut log = MetricsLog::open(&path, 2).unwrap();
            log.record(1, "loss", 0.5).unwrap();
            log.record(1, "lr", 1e-4).unwrap();
            log.record(2, "loss", 0.4).unwrap();
            assert!(log.record(1, "loss", 0.3).is_err(), "steps must not go back");
        }
        let body = std::fs::read_to_string(&path).unwrap();
        let rows = parse_metrics(&body).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], (1, "loss".to_string(), 0.5));
        assert_eq!(rows[2].0, 2);
    }

    #[test]
    fn append_mode_extends_existing_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        {
            let mut log = MetricsLog::open(&path, 1).unwrap();
            log.record(1, "a", 1.0).unwrap();
        }
        {
            let mut log = MetricsLog::open(&path, 1).unwrap();
            log.record(5, "a", 2.0).unwrap();
        }
        let rows = parse_metrics(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, 5);
    }
}
