//! JSON Lines storage: one header object, then one record per line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Oracle, Provenance, Record};
use crate::scenario::Scenario;

pub const DATASET_FORMAT: &str = "rulefuzz-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    /// Always `"header"`.
    pub kind: String,
    pub schema: String,
    pub scenario: Scenario,
    pub provenance: Provenance,
    pub seed: u64,
    pub n: usize,
    pub strata: BTreeMap<String, usize>,
}

pub fn write_jsonl_string(d: &Dataset) -> String {
    let header = Header {
        kind: "header".into(),
        schema: DATASET_FORMAT.into(),
        scenario: d.scenario,
        provenance: d.provenance,
        seed: d.seed,
        n: d.len(),
        strata: d.strata(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in &d.records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(d: &Dataset, path: &Path) -> Result<(), DataError> {
    fs::write(path, write_jsonl_string(d))?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Dataset, DataError> {
    read_jsonl_str(&fs::read_to_string(path)?)
}

/// Parses a dataset and re-labels every record with the oracle; any
/// disagreement with the stored label is an error.
pub fn read_jsonl_str(text: &str) -> Result<Dataset, DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(DataError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| DataError::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.kind != "header" || header.schema != DATASET_FORMAT {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected a `{DATASET_FORMAT}` header"),
        });
    }
    let oracle = Oracle::new(header.scenario);
    let mut records = Vec::with_capacity(header.n);
    for (i, line) in lines {
        let line_no = i + 1;
        let r: Record = serde_json::from_str(line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if r.input.scenario() != header.scenario {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("{} record in a {} dataset", r.input.scenario(), header.scenario),
            });
        }
        let (label, stratum) = oracle.label(&r.input)?;
        if label != r.label {
            return Err(DataError::LabelMismatch {
                line: line_no,
                stored: r.label,
                oracle: label,
            });
        }
        if stratum != r.stratum {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("stored stratum {} but the oracle gives {stratum}", r.stratum),
            });
        }
        records.push(r);
    }
    if records.len() != header.n {
        return Err(DataError::Parse {
            line: 1,
            message: format!("header announces {} records, file has {}", header.n, records.len()),
        });
    }
    Ok(Dataset {
        scenario: header.scenario,
        provenance: header.provenance,
        seed: header.seed,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_random_industry, gen_recodex, GenSpec};

    #[test]
    fn round_trip() {
        let d = gen_random_industry(&GenSpec::new(200, 7)).unwrap();
        let text = write_jsonl_string(&d);
        assert!(text.lines().next().unwrap().contains(r#""kind":"header""#));
        assert_eq!(read_jsonl_str(&text).unwrap(), d);

        let j = gen_recodex(&GenSpec::new(10, 7)).unwrap();
        assert_eq!(read_jsonl_str(&write_jsonl_string(&j)).unwrap(), j);
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let d = gen_random_industry(&GenSpec::new(40, 3)).unwrap();
        write_jsonl(&d, &path).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), d);
        assert!(matches!(read_jsonl(&dir.path().join("nope.jsonl")), Err(DataError::Io(_))));
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = Dataset {
            scenario: Scenario::Industry,
            provenance: Provenance::Random,
            seed: 0,
            records: vec![],
        };
        let text = write_jsonl_string(&d);
        assert_eq!(text.lines().count(), 1);
        assert_eq!(read_jsonl_str(&text).unwrap(), d);
    }

    #[test]
    fn tampered_label_is_caught() {
        let mut d = gen_random_industry(&GenSpec::new(16, 7)).unwrap();
        d.records[3].label ^= 1;
        let err = read_jsonl_str(&write_jsonl_string(&d)).unwrap_err();
        assert!(matches!(err, DataError::LabelMismatch { line: 5, .. }), "{err}");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let d = gen_random_industry(&GenSpec::new(8, 7)).unwrap();
        let mut text = write_jsonl_string(&d);
        text.push_str("{not json\n");
        match read_jsonl_str(&text).unwrap_err() {
            DataError::Parse { line, .. } => assert_eq!(line, 10),
            other => panic!("{other}"),
        }
    }
}
