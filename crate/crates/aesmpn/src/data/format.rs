//! Line-delimited dataset interchange format.
//!
//! One JSON object per line, UTF-8, each line a self-contained sample
//! carrying the schema version field `v`. Streaming-friendly and
//! line-diffable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{validate_sample, NetworkSample, Strictness};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub struct LoadedDataset {
    pub samples: Vec<NetworkSample>,
    pub warnings: Vec<String>,
}

/// Parse and validate a dataset file. Malformed lines abort with the
/// 1-based line number; an empty file yields an empty dataset plus a
/// warning.
pub fn load_dataset(path: &Path, strictness: Strictness) -> Result<LoadedDataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    let mut warnings = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let display_line = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sample: NetworkSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: display_line,
            message: e.to_string(),
        })?;
        if sample.v != SCHEMA_VERSION {
            return Err(Error::Parse {
                line: display_line,
                message: format!("unsupported schema version {} (expected {})", sample.v, SCHEMA_VERSION),
            });
        }
        validate_sample(&sample, samples.len(), strictness)?;
        samples.push(sample);
    }

    if samples.is_empty() {
        warnings.push(format!("dataset {} is empty", path.display()));
    }
    Ok(LoadedDataset { samples, warnings })
}

pub fn save_dataset(path: &Path, samples: &[NetworkSample]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for sample in samples {
        serde_json::to_writer(&mut w, sample)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FlowRecord, FlowSpec, FlowType, Link, TopologySpec};

    fn sample() -> NetworkSample {
        NetworkSample {
            v: SCHEMA_VERSION,
            topology: TopologySpec {
                nodes: 3,
                l2_links: vec![
                    Link { src: 0, dst: 1, capacity: 1.0e9 },
                    Link { src: 1, dst: 2, capacity: 8.0e10 },
                ],
                l3_links: vec![
                    Link { src: 0, dst: 1, capacity: 1.0e9 },
                    Link { src: 1, dst: 2, capacity: 8.0e10 },
                ],
            },
            flows: vec![FlowRecord {
                spec: FlowSpec {
                    traffic_rate: 1.0e6,
                    packet_rate: 1000.0,
                    packet_size: 1000.0,
                    flow_type: FlowType::Mb,
                    src: 0,
                    dst: 2,
                },
                path: vec![(0, 0), (1, 1)],
                target_delay: 3.5e-5,
            }],
        }
    }

    #[test]
    fn round_trip_field_for_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let original = vec![sample(), sample()];
        save_dataset(&path, &original).unwrap();
        let loaded = load_dataset(&path, Strictness::Structural).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.samples, original);

        // saving what was loaded reproduces the bytes
        let path2 = dir.path().join("ds2.jsonl");
        save_dataset(&path2, &loaded.samples).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn empty_file_warns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        File::create(&path).unwrap();
        let loaded = load_dataset(&path, Strictness::Structural).unwrap();
        assert!(loaded.samples.is_empty());
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&sample()).unwrap();
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{good}").unwrap();
        writeln!(f, "{{ not json").unwrap();
        drop(f);
        match load_dataset(&path, Strictness::Structural) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn invalid_sample_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("invalid.jsonl");
        let mut bad = sample();
        bad.flows[0].path = vec![(0, 9)];
        save_dataset(&path, &[bad]).unwrap();
        assert!(matches!(
            load_dataset(&path, Strictness::Structural),
            Err(Error::Validation { .. })
        ));
    }
}
