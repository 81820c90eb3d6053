use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

pub const LOG_HEADER: [&str; 6] = ["wall_ts", "actor_steps", "learner_steps", "learner_walltime_s", "eval_return", "loss"];

/// One evaluation row of a run log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    /// Seconds since the Unix epoch.
    pub wall_ts: f64,
    pub actor_steps: u64,
    pub learner_steps: u64,
    pub learner_walltime_s: f64,
    pub eval_return: Option<f64>,
    pub loss: Option<f64>,
}

impl LogRecord {
    /// Equal apart from the wall-clock fields.
    pub fn same_progress(&self, other: &LogRecord) -> bool {
        self.actor_steps == other.actor_steps
            && self.learner_steps == other.learner_steps
            && self.eval_return == other.eval_return
            && self.loss == other.loss
    }
}

pub fn unix_time() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Append-only CSV log; the header is written on creation and every row
/// is flushed.
pub struct CsvLog {
    writer: csv::Writer<File>,
    rows: usize,
}

impl CsvLog {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(LOG_HEADER)?;
        writer.flush()?;
        Ok(Self { writer, rows: 0 })
    }

    pub fn append(&mut self, r: &LogRecord) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.writer.write_record([
            format!("{:.3}", r.wall_ts),
            r.actor_steps.to_string(),
            r.learner_steps.to_string(),
            r.learner_walltime_s.to_string(),
            opt(r.eval_return),
            opt(r.loss),
        ])?;
        self.writer.flush()?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()?.iter().ne(LOG_HEADER) {
        return Err(Error::Corrupt(format!("{}: unexpected log header", path.display())));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize| Error::Corrupt(format!("{}: bad value '{}' in column {}", path.display(), field(i), LOG_HEADER[i]));
        let opt = |i: usize| -> Result<Option<f64>> {
            match field(i) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(i)),
            }
        };
        out.push(LogRecord {
            wall_ts: field(0).parse().map_err(|_| bad(0))?,
            actor_steps: field(1).parse().map_err(|_| bad(1))?,
            learner_steps: field(2).parse().map_err(|_| bad(2))?,
            learner_walltime_s: field(3).parse().map_err(|_| bad(3))?,
            eval_return: opt(4)?,
            loss: opt(5)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = CsvLog::create(&path).unwrap();
        assert_eq!(log.rows(), 0);
        assert!(read_log(&path).unwrap().is_empty());
        drop(log);

        let mut log = CsvLog::create(&path).unwrap();
        let records = vec![
            LogRecord { wall_ts: 1.5, actor_steps: 10, learner_steps: 1, learner_walltime_s: 0.25, eval_return: Some(-1.0), loss: None },
            LogRecord { wall_ts: 2.0, actor_steps: 20, learner_steps: 3, learner_walltime_s: 0.5, eval_return: None, loss: Some(0.125) },
        ];
        for r in &records {
            log.append(r).unwrap();
        }
        assert_eq!(log.rows(), 2);
        assert_eq!(read_log(&path).unwrap(), records);
    }
}
