//! JSON Lines exchange of pair encodings with external matchers.
//!
//! One object per line: `{"pair_id": "...", "vector": [f64, ...], "confidence": f64}`.
//! The prediction is not stored; it is re-derived from the confidence.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PairEncoding;
use crate::dataset::CandidatePair;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct EncodingLine {
    pair_id: String,
    vector: Vec<f64>,
    confidence: f64,
}

pub fn export_encodings(path: impl AsRef<Path>, encodings: &[PairEncoding]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in encodings {
        let line = EncodingLine {
            pair_id: e.pair_id.clone(),
            vector: e.representation.clone(),
            confidence: e.confidence,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read encodings for pairs of `dataset`. Every vector must share one dimension,
/// confidences must lie in [0, 1] and every pair_id must belong to the dataset.
pub fn import_encodings(path: impl AsRef<Path>, dataset: &[CandidatePair]) -> Result<Vec<PairEncoding>> {
    let path = path.as_ref();
    let known: HashSet<&str> = dataset.iter().map(|p| p.pair_id.as_str()).collect();
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };

    let mut encodings = Vec::new();
    let mut seen = HashSet::new();
    let mut dim = None;
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EncodingLine = serde_json::from_str(&line).map_err(|e| err(line_no, e.to_string()))?;
        if !known.contains(parsed.pair_id.as_str()) {
            return Err(err(line_no, format!("unknown pair_id `{}`", parsed.pair_id)));
        }
        if !seen.insert(parsed.pair_id.clone()) {
            return Err(err(line_no, format!("duplicate pair_id `{}`", parsed.pair_id)));
        }
        if !(0.0..=1.0).contains(&parsed.confidence) {
            return Err(err(line_no, format!("confidence {} is outside [0, 1]", parsed.confidence)));
        }
        if parsed.vector.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "vector has non-finite entries".into()));
        }
        let expected = *dim.get_or_insert(parsed.vector.len());
        if parsed.vector.len() != expected {
            return Err(err(
                line_no,
                Error::DimensionMismatch {
                    expected,
                    found: parsed.vector.len(),
                }
                .to_string(),
            ));
        }
        encodings.push(PairEncoding::new(parsed.pair_id, parsed.vector, parsed.confidence));
    }
    Ok(encodings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;


    fn dataset(n: usize) -> Vec<CandidatePair> {
        (0..n)
            .map(|i| CandidatePair {
                pair_id: i.to_string(),
                left: Record::new("l", vec![]),
                right: Record::new("r", vec![]),
                ground_truth: None,
            })
            .collect()
    }

    fn file(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn reads_well_formed_lines() {
        let f = file(&[
            r#"{"pair_id":"0","vector":[1.0,0.0],"confidence":0.9}"#.into(),
            r#"{"pair_id":"1","vector":[0.5,0.5],"confidence":0.2}"#.into(),
            r#"{"pair_id":"2","vector":[0.0,1.0],"confidence":0.5}"#.into(),
        ]);
        let enc = import_encodings(f.path(), &dataset(3)).unwrap();
        assert_eq!(enc.len(), 3);
        assert_eq!(enc.iter().map(|e| e.prediction).collect::<Vec<_>>(), vec![1, 0, 1]);
    }

    #[test]
    fn rejects_bad_confidence_dimension_and_unknown_ids() {
        let bad = file(&[r#"{"pair_id":"0","vector":[1.0],"confidence":1.3}"#.into()]);
        let msg = import_encodings(bad.path(), &dataset(1)).unwrap_err().to_string();
        assert!(msg.contains("line 1") && msg.contains("outside"), "{msg}");

        let mixed = file(&[
            r#"{"pair_id":"0","vector":[1.0,2.0],"confidence":0.1}"#.into(),
            r#"{"pair_id":"1","vector":[1.0],"confidence":0.1}"#.into(),
        ]);
        let msg = import_encodings(mixed.path(), &dataset(2)).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("dimension"), "{msg}");

        let unknown = file(&[r#"{"pair_id":"zz","vector":[1.0],"confidence":0.1}"#.into()]);
        let msg = import_encodings(unknown.path(), &dataset(1)).unwrap_err().to_string();
        assert!(msg.contains("zz"), "{msg}");

        let garbage = file(&["not json".into()]);
        let msg = import_encodings(garbage.path(), &dataset(1)).unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn accepts_768_dimensional_vectors() {
        let v: Vec<String> = (0..768).map(|i| format!("{}", i as f64 / 768.0)).collect();
        let f = file(&[format!(r#"{{"pair_id":"0","vector":[{}],"confidence":0.7}}"#, v.join(","))]);
        let enc = import_encodings(f.path(), &dataset(1)).unwrap();
        assert_eq!(enc[0].representation.len(), 768);
    }

    #[test]
    fn export_then_import_is_lossless() {
        let enc = vec![
            PairEncoding::new("0", vec![0.1 + 0.2, -1e-300, std::f64::consts::PI], 0.123456789012345678),
            PairEncoding::new("1", vec![1.0 / 3.0, 2.0, 5e10], 1.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.jsonl");
        export_encodings(&path, &enc).unwrap();
        assert_eq!(import_encodings(&path, &dataset(2)).unwrap(), enc);
    }
}
