use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metric::MetricKind;
use crate::PointId;

use super::{GraphIndex, IndexHeader};

pub const INDEX_MAGIC: &[u8; 4] = b"FANN";
pub const INDEX_VERSION: u32 = 1;

pub fn encode_index(index: &GraphIndex) -> Vec<u8> {
    let h = &index.header;
    let edges: usize = index.adjacency.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(64 + 8 * index.start_nodes.len() + 4 * (index.len() + edges));
    out.extend_from_slice(INDEX_MAGIC);
    for v in [INDEX_VERSION, index.len() as u32, h.max_degree, h.l_build] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.alpha_prune.to_le_bytes());
    out.extend_from_slice(&h.w_m.to_le_bytes());
    out.push(h.metric.to_byte());
    out.extend_from_slice(&index.medoid.to_le_bytes());
    out.extend_from_slice(&(index.start_nodes.len() as u32).to_le_bytes());
    for (&f, &s) in &index.start_nodes {
        out.extend_from_slice(&f.to_le_bytes());
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&index.fingerprint);
    for list in &index.adjacency {
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        for &u in list {
            out.extend_from_slice(&u.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptIndex {
                section,
                msg: format!("truncated at byte {} (need {n} more)", self.buf.len()),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, section)?.try_into().unwrap(),
        ))
    }

    fn f32(&mut self, section: &'static str) -> Result<f32> {
        Ok(f32::from_le_bytes(
            self.take(4, section)?.try_into().unwrap(),
        ))
    }
}

fn corrupt(section: &'static str, msg: impl Into<String>) -> Error {
    Error::CorruptIndex {
        section,
        msg: msg.into(),
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<GraphIndex> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != INDEX_MAGIC {
        return Err(corrupt("magic", "not an index file"));
    }
    let version = r.u32("header")?;
    if version != INDEX_VERSION {
        return Err(corrupt("header", format!("unsupported version {version}")));
    }
    let n = r.u32("header")? as usize;
    let max_degree = r.u32("header")?;
    let l_build = r.u32("header")?;
    let alpha_prune = r.f32("header")?;
    let w_m = r.f32("header")?;
    let metric_byte = r.take(1, "header")?[0];
    let metric = MetricKind::from_byte(metric_byte)
        .ok_or_else(|| corrupt("header", format!("unknown metric kind {metric_byte}")))?;
    if n == 0 {
        return Err(corrupt("header", "index has no points"));
    }
    if !(w_m.is_finite() && w_m >= 0.0) || !(alpha_prune.is_finite() && alpha_prune >= 1.0) {
        return Err(corrupt("header", "invalid w_m or alpha_prune"));
    }
    let medoid = r.u32("medoid")?;
    if medoid as usize >= n {
        return Err(corrupt("medoid", format!("medoid {medoid} out of range")));
    }
    let label_count = r.u32("start_nodes")? as usize;
    let mut start_nodes = BTreeMap::new();
    for _ in 0..label_count {
        let f = r.u32("start_nodes")?;
        let s = r.u32("start_nodes")?;
        if s as usize >= n || start_nodes.insert(f, s).is_some() {
            return Err(corrupt("start_nodes", format!("bad entry for label {f}")));
        }
    }
    let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().unwrap();
    let mut adjacency: Vec<Vec<PointId>> = Vec::with_capacity(n);
    for p in 0..n {
        let deg = r.u32("adjacency")? as usize;
        if deg > max_degree as usize {
            return Err(corrupt(
                "adjacency",
                format!("point {p} has degree {deg} > R = {max_degree}"),
            ));
        }
        let mut list = Vec::with_capacity(deg);
        for _ in 0..deg {
            let u = r.u32("adjacency")?;
            if u as usize >= n {
                return Err(corrupt(
                    "adjacency",
                    format!("point {p} links to out-of-range id {u}"),
                ));
            }
            list.push(u);
        }
        adjacency.push(list);
    }
    if r.pos != bytes.len() {
        return Err(corrupt(
            "adjacency",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(GraphIndex {
        adjacency,
        medoid,
        start_nodes,
        header: IndexHeader {
            max_degree,
            l_build,
            alpha_prune,
            w_m,
            metric,
        },
        fingerprint,
    })
}

pub fn save_index(index: &GraphIndex, path: &Path) -> Result<()> {
    std::fs::write(path, encode_index(index)).map_err(|e| Error::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads an index and checks that it was built over `ds`.
pub fn load_index(path: &Path, ds: &LabeledDataset) -> Result<GraphIndex> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let index = decode_index(&bytes)?;
    let expected = ds.fingerprint();
    if index.fingerprint != expected {
        return Err(Error::FingerprintMismatch {
            expected: hex(&expected),
            found: hex(&index.fingerprint),
        });
    }
    if index.header.metric != ds.metric() {
        return Err(corrupt("header", "metric does not match dataset"));
    }
    Ok(index)
}
