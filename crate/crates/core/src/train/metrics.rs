//! Metrics stream: one record per logging interval, serialized to CSV
//! (stable column order, schema tag in every row) or JSON lines.

use crate::task::Split;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Schema tag written into every record.
pub const METRICS_SCHEMA: &str = "v1";

pub const CSV_HEADER: [&str; 10] = [
    "schema",
    "step",
    "split",
    "loss",
    "accuracy",
    "reinit_events_cum",
    "d_abs_min",
    "d_abs_median",
    "d_abs_max",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub split: Split,
    pub loss: f64,
    /// Only defined for classification targets.
    pub accuracy: Option<f64>,
    pub reinit_events_cumulative: u64,
    pub d_abs_min: f64,
    pub d_abs_median: f64,
    pub d_abs_max: f64,
    /// Wall time; a timestamp-like field, excluded from determinism
    /// comparisons.
    pub wall_ms: f64,
}

impl MetricsRecord {
    fn csv_row(&self) -> [String; 10] {
        [
            METRICS_SCHEMA.to_string(),
            self.step.to_string(),
            self.split.to_string(),
            format!("{}", self.loss),
            self.accuracy.map(|a| format!("{a}")).unwrap_or_default(),
            self.reinit_events_cumulative.to_string(),
            format!("{}", self.d_abs_min),
            format!("{}", self.d_abs_median),
            format!("{}", self.d_abs_max),
            format!("{}", self.wall_ms),
        ]
    }
}

pub fn to_csv_string(records: &[MetricsRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record(r.csv_row()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flushed")).expect("utf8")
}

pub fn write_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, to_csv_string(records))
}

pub fn write_jsonl(records: &[MetricsRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = Vec::new();
    for r in records {
        let mut line = serde_json::to_vec(&RecordWithSchema {
            schema: METRICS_SCHEMA,
            record: r,
        })?;
        line.push(b'\n');
        out.write_all(&line)?;
    }
    std::fs::write(path, out)
}

#[derive(Serialize)]
struct RecordWithSchema<'a> {
    schema: &'a str,
    #[serde(flatten)]
    record: &'a MetricsRecord,
}

/// Parse back the records of a metrics CSV (used by summary
/// recomputation); wall_ms is retained but callers typically ignore it.
pub fn read_csv(path: impl AsRef<Path>) -> std::io::Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path.as_ref())
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| std::io::Error::other(e.to_string()))?;
        let get = |i: usize| row.get(i).unwrap_or_default();
        let split = match get(2) {
            "train" => Split::Train,
            _ => Split::Eval,
        };
        let accuracy = if get(4).is_empty() {
            None
        } else {
            get(4).parse().ok()
        };
        out.push(MetricsRecord {
            step: get(1).parse().unwrap_or(0),
            split,
            loss: get(3).parse().unwrap_or(f64::NAN),
            accuracy,
            reinit_events_cumulative: get(5).parse().unwrap_or(0),
            d_abs_min: get(6).parse().unwrap_or(0.0),
            d_abs_median: get(7).parse().unwrap_or(0.0),
            d_abs_max: get(8).parse().unwrap_or(0.0),
            wall_ms: get(9).parse().unwrap_or(0.0),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64) -> MetricsRecord {
        MetricsRecord {
            step,
            split: Split::Train,
            loss: 0.5,
            accuracy: None,
            reinit_events_cumulative: 2,
            d_abs_min: 0.01,
            d_abs_median: 0.1,
            d_abs_max: 0.2,
            wall_ms: 1.5,
        }
    }

    #[test]
    fn csv_roundtrip() {
        let records = vec![record(9), record(19)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_csv(&records, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn csv_header_is_versioned() {
        let text = to_csv_string(&[record(0)]);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("schema,step,split"));
        assert!(lines.next().unwrap().starts_with("v1,0,train"));
    }
}
