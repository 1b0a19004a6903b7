//! Datasets as JSON lines, one clip per line:
//! `{"id": "...", "label": 2.5, "segments": [[...], [...]]}`.
//!
//! Generated datasets also get a `<file>.meta.json` sidecar recording the
//! generator parameters.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kffnn_core::dataset::{Clip, Dataset, SyntheticSpec};
use kffnn_core::Vector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{parse_labels, EnvelopeDef};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    label: f64,
    segments: Vec<Vec<f64>>,
}

/// Generator parameters as stored next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub count: usize,
    pub seed: u64,
    pub envelope: EnvelopeDef,
    pub noise_sigma: f64,
    pub n_range: [usize; 2],
    pub feature_dim: usize,
    pub labels: String,
}

impl From<&SyntheticSpec> for Meta {
    fn from(s: &SyntheticSpec) -> Self {
        Meta {
            count: s.count,
            seed: s.seed,
            envelope: EnvelopeDef::from(&s.envelope),
            noise_sigma: s.noise_sigma,
            n_range: [s.n_range.0, s.n_range.1],
            feature_dim: s.feature_dim,
            labels: s.labels.name().into(),
        }
    }
}

impl Meta {
    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            count: self.count,
            n_range: (self.n_range[0], self.n_range[1]),
            feature_dim: self.feature_dim,
            envelope: self.envelope.resolve()?,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            labels: parse_labels(&self.labels)?,
        })
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_jsonl<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    for clip in &ds.clips {
        let rec = Record {
            id: clip.id.clone(),
            label: clip.label,
            segments: clip
                .segments
                .iter()
                .map(|s| s.features.as_slice().to_vec())
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes the dataset and, when it carries generator metadata, the sidecar.
pub fn save_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(ds, BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
    if let Some(spec) = &ds.meta {
        let mp = meta_path(path);
        let mut text = serde_json::to_string_pretty(&Meta::from(spec))
            .map_err(|e| Error::Json { path: mp.clone(), source: e })?;
        text.push('\n');
        fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
    }
    Ok(())
}

/// Parses JSON lines. `source` names the input in error messages. Blank
/// lines are skipped; a file with no clips is an error.
pub fn read_jsonl<R: BufRead>(input: R, source: &Path) -> Result<Dataset> {
    let mut clips = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| Error::parse(source, lineno, e.to_string()))?;
        if rec.segments.is_empty() {
            return Err(Error::parse(source, lineno, "clip has no segments"));
        }
        if !rec.label.is_finite() {
            return Err(Error::parse(source, lineno, "label is not finite"));
        }
        let mut features = Vec::with_capacity(rec.segments.len());
        for (j, seg) in rec.segments.into_iter().enumerate() {
            let expected = *dim.get_or_insert(seg.len());
            if seg.len() != expected {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!(
                        "segment {} has {} features, expected {expected}",
                        j + 1,
                        seg.len()
                    ),
                ));
            }
            let v = Vector::new(seg).map_err(|e| Error::parse(source, lineno, e.to_string()))?;
            features.push(v);
        }
        clips.push(Clip::from_features(rec.id, features, rec.label));
    }
    if clips.is_empty() {
        return Err(Error::parse(source, 0, "no clips in file"));
    }
    Dataset::new(clips).map_err(|e| Error::parse(source, 0, e.to_string()))
}

/// Loads a dataset and its sidecar, if present.
pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_jsonl(BufReader::new(file), path)?;
    let mp = meta_path(path);
    if mp.exists() {
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Json { path: mp.clone(), source: e })?;
        ds.meta = Some(meta.to_spec()?);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kffnn_core::dataset::generate_synthetic;
    use kffnn_core::Envelope;

    fn read(text: &str) -> Result<Dataset> {
        read_jsonl(text.as_bytes(), Path::new("mem"))
    }

    #[test]
    fn round_trip_is_lossless() {
        let spec = SyntheticSpec {
            count: 12,
            feature_dim: 5,
            envelope: Envelope::Fn2,
            seed: 4,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&ds, &mut buf).unwrap();
        let back = read(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.clips, ds.clips);
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 12);
    }

    #[test]
    fn awkward_floats_survive() {
        let values: [f64; 5] = [0.1 + 0.2, 1e-300, -2.2250738585072014e-308, 1.0 / 3.0, 4.999999999999999];
        let text = format!(
            "{{\"id\":\"a\",\"label\":{},\"segments\":[[{},{}],[{},{}]]}}",
            values[0], values[1], values[2], values[3], values[4]
        );
        let ds = read(&text).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&ds, &mut buf).unwrap();
        let again = read(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again.clips[0].label.to_bits(), values[0].to_bits());
        let flat: Vec<u64> = again.clips[0]
            .segments
            .iter()
            .flat_map(|s| s.features.iter().map(|x| x.to_bits()))
            .collect();
        let want: Vec<u64> = values[1..].iter().map(|x| x.to_bits()).collect();
        assert_eq!(flat, want);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "{\"id\":\"a\",\"label\":1,\"segments\":[[1,2,3]]}\n\n{\"id\":\"b\",\"label\":1,\"segments\":[[1,2]]}\n";
        match read(text) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("expected 3"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        match read("{\"id\":\"a\",\"label\":1,\"segments\":[[1]]}\nnot json\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read("").is_err());
        assert!(read("\n\n").is_err());
        assert!(read("{\"id\":\"a\",\"label\":1,\"segments\":[]}").is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = "{\"id\":\"a\",\"label\":1,\"segments\":[[1]]}\n";
        assert!(read(&line.repeat(2)).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let spec = SyntheticSpec {
            count: 3,
            feature_dim: 2,
            envelope: Envelope::custom(vec![0.5; 8]).unwrap(),
            n_range: (8, 8),
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        save_jsonl(&ds, &path).unwrap();
        assert!(meta_path(&path).exists());
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back.meta.as_ref(), Some(&spec));
        assert_eq!(back.clips, ds.clips);
    }
}
