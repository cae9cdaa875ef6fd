use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{queries_from_parts, FilteredQuery, LabeledDataset, VectorMatrix};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metric::MetricKind;

const FBIN_HEADER: usize = 8;

/// Decodes an fbin payload: `u32 n, u32 d` then `n*d` little-endian f32.
/// On failure returns the byte offset and a message.
pub fn decode_fbin(bytes: &[u8]) -> std::result::Result<VectorMatrix, (u64, String)> {
    if bytes.len() < FBIN_HEADER {
        return Err((
            bytes.len() as u64,
            format!("header truncated: {} of 8 bytes", bytes.len()),
        ));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if d == 0 {
        return Err((4, "zero dimension".into()));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or((0, format!("header n={n} d={d} overflows")))?;
    let payload = &bytes[FBIN_HEADER..];
    if payload.len() < expected {
        let whole = payload.len() / 4;
        return Err((
            (FBIN_HEADER + whole * 4) as u64,
            format!(
                "truncated payload: {whole} of {} scalars present (n={n}, d={d})",
                n * d
            ),
        ));
    }
    if payload.len() > expected {
        return Err((
            (FBIN_HEADER + expected) as u64,
            format!(
                "{} trailing bytes after n={n}, d={d} payload",
                payload.len() - expected
            ),
        ));
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().unwrap());
        if !x.is_finite() {
            return Err((
                (FBIN_HEADER + i * 4) as u64,
                format!("non-finite value {x}"),
            ));
        }
        data.push(x);
    }
    Ok(VectorMatrix {
        rows: n,
        dim: d,
        data,
    })
}

pub fn encode_fbin(m: &VectorMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FBIN_HEADER + m.data.len() * 4);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for x in &m.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fbin(&bytes).map_err(|(offset, msg)| Error::Format {
        path: path.to_path_buf(),
        offset,
        msg,
    })
}

pub fn save_vectors(path: impl AsRef<Path>, m: &VectorMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fbin(m)).map_err(|e| Error::io(path, e))
}

/// Parses a label file body: one comma-separated line of label ids per point.
/// Line errors are reported 1-based.
pub fn parse_labels(
    text: &str,
    expected_n: usize,
) -> std::result::Result<Vec<LabelSet>, (usize, String)> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = if text.is_empty() {
        Vec::new()
    } else {
        body.split('\n').collect()
    };
    if lines.len() != expected_n {
        return Err((
            lines.len(),
            format!("expected {expected_n} label lines, found {}", lines.len()),
        ));
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix('\r').unwrap_or(line).trim();
            if line.is_empty() {
                return Ok(LabelSet::empty());
            }
            line.split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    if tok.starts_with('-') {
                        return Err((i + 1, format!("negative label id `{tok}`")));
                    }
                    tok.parse::<u32>()
                        .map_err(|_| (i + 1, format!("non-integer label token `{tok}`")))
                })
                .collect::<std::result::Result<LabelSet, _>>()
        })
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>, expected_n: usize) -> Result<Vec<LabelSet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, expected_n).map_err(|(line, msg)| Error::LabelParse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[LabelSet]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for set in labels {
        text.push_str(&set.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Describes a dataset directory: which files hold base and query data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub metric: MetricKind,
    pub label_universe: u32,
    pub base_vectors: PathBuf,
    pub base_labels: PathBuf,
    pub query_vectors: PathBuf,
    pub query_labels: PathBuf,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "dataset.json";

    pub fn standard(metric: MetricKind, label_universe: u32) -> Self {
        DatasetManifest {
            metric,
            label_universe,
            base_vectors: "base.fbin".into(),
            base_labels: "base.labels".into(),
            query_vectors: "query.fbin".into(),
            query_labels: "query.labels".into(),
        }
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(Self::FILE_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes the manifest and all four data files into `dir`.
    pub fn write_dir(
        &self,
        dir: impl AsRef<Path>,
        ds: &LabeledDataset,
        queries: &[FilteredQuery],
    ) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_vectors(dir.join(&self.base_vectors), ds.vectors())?;
        save_labels(dir.join(&self.base_labels), ds.all_labels())?;
        let dim = ds.dim();
        let qdata: Vec<f32> = queries
            .iter()
            .flat_map(|q| q.vector.iter().copied())
            .collect();
        save_vectors(
            dir.join(&self.query_vectors),
            &VectorMatrix::new(queries.len(), dim, qdata)?,
        )?;
        let qlabels: Vec<LabelSet> = queries.iter().map(|q| q.required.clone()).collect();
        save_labels(dir.join(&self.query_labels), &qlabels)?;
        let path = dir.join(Self::FILE_NAME);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dataset(&self, dir: impl AsRef<Path>) -> Result<LabeledDataset> {
        let dir = dir.as_ref();
        let v = load_vectors(dir.join(&self.base_vectors))?;
        let l = load_labels(dir.join(&self.base_labels), v.rows)?;
        LabeledDataset::new(v, l, self.metric, Some(self.label_universe))
    }

    pub fn load_queries(&self, dir: impl AsRef<Path>) -> Result<Vec<FilteredQuery>> {
        let dir = dir.as_ref();
        let v = load_vectors(dir.join(&self.query_vectors))?;
        let l = load_labels(dir.join(&self.query_labels), v.rows)?;
        queries_from_parts(&v, l)
    }
}
