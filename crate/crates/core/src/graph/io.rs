//! Binary cache formats for graphs and distance fields.
//!
//! Graph file (little-endian):
//!
//! ```text
//! "WKRG" | version u32 | num_nodes u64 | nnz u64
//! row_ptr: (num_nodes + 1) x u64 | col_indices: nnz x u32
//! title count u32 | per title: byte length u32 + UTF-8 bytes
//! CRC32 of every preceding byte (u32)
//! ```
//!
//! Distance file: `"WKRD" | version u32 | target u32 | num_nodes u64 |
//! dist: num_nodes x u32 | CRC32`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{DistanceField, GraphError, PageGraph, PageId};

pub const GRAPH_MAGIC: &[u8; 4] = b"WKRG";
pub const DISTANCE_MAGIC: &[u8; 4] = b"WKRD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheFormatError {
    #[error("bad magic")]
    BadMagic,
    #[error("format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid UTF-8 in title {0}")]
    InvalidTitle(usize),
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheFormatError> {
        let end = self.pos.checked_add(n).ok_or(CacheFormatError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(CacheFormatError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CacheFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CacheFormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_u64(&mut self) -> Result<usize, CacheFormatError> {
        usize::try_from(self.u64()?).map_err(|_| CacheFormatError::Truncated)
    }
}

/// Splits `bytes` into payload and trailer after checking magic and
/// version. Structure is parsed before the checksum so a short file reports
/// as truncated rather than corrupt.
fn open<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Reader<'a>, CacheFormatError> {
    if bytes.len() < 4 {
        return Err(CacheFormatError::Truncated);
    }
    if &bytes[..4] != magic {
        return Err(CacheFormatError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CacheFormatError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(r)
}

fn finish(mut r: Reader<'_>) -> Result<(), CacheFormatError> {
    let payload_end = r.pos;
    let stored = r.u32()?;
    if r.pos != r.buf.len() {
        return Err(CacheFormatError::TrailingBytes);
    }
    let computed = crc32fast::hash(&r.buf[..payload_end]);
    if stored != computed {
        return Err(CacheFormatError::ChecksumMismatch { stored, computed });
    }
    Ok(())
}

fn seal(mut buf: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Serializes a graph to the binary cache format.
pub fn write_graph(g: &PageGraph) -> Vec<u8> {
    let title_bytes: usize = g.titles().iter().map(|t| t.len() + 4).sum();
    let mut buf = Vec::with_capacity(28 + 8 * g.row_ptr().len() + 4 * g.nnz() + title_bytes);
    buf.extend_from_slice(GRAPH_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.num_nodes() as u64).to_le_bytes());
    buf.extend_from_slice(&(g.nnz() as u64).to_le_bytes());
    for &p in g.row_ptr() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    for &c in g.col_indices() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    buf.extend_from_slice(&(g.num_nodes() as u32).to_le_bytes());
    for t in g.titles() {
        buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.as_bytes());
    }
    seal(buf)
}

pub fn read_graph(bytes: &[u8]) -> Result<PageGraph, CacheFormatError> {
    let mut r = open(bytes, GRAPH_MAGIC)?;
    let n = r.len_u64()?;
    let nnz = r.len_u64()?;
    let row_bytes = r.take(n.checked_add(1).ok_or(CacheFormatError::Truncated)?.saturating_mul(8))?;
    let row_ptr = row_bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let col_bytes = r.take(nnz.saturating_mul(4))?;
    let col_indices = col_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let count = r.u32()? as usize;
    let mut raw_titles = Vec::with_capacity(count.min(n));
    for _ in 0..count {
        let len = r.u32()? as usize;
        raw_titles.push(r.take(len)?);
    }
    finish(r)?;
    let titles = raw_titles
        .into_iter()
        .enumerate()
        .map(|(i, raw)| {
            std::str::from_utf8(raw)
                .map(str::to_owned)
                .map_err(|_| CacheFormatError::InvalidTitle(i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PageGraph::from_raw_parts(row_ptr, col_indices, titles)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub fn save_graph(g: &PageGraph, path: impl AsRef<Path>) -> Result<(), CacheFormatError> {
    Ok(write_atomic(path.as_ref(), &write_graph(g))?)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<PageGraph, CacheFormatError> {
    read_graph(&fs::read(path)?)
}

pub(crate) fn write_distance_field(field: &DistanceField) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 4 * field.len());
    buf.extend_from_slice(DISTANCE_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&field.target().0.to_le_bytes());
    buf.extend_from_slice(&(field.len() as u64).to_le_bytes());
    for &d in field.as_slice() {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    seal(buf)
}

pub(crate) fn read_distance_field(bytes: &[u8]) -> Result<DistanceField, CacheFormatError> {
    let mut r = open(bytes, DISTANCE_MAGIC)?;
    let target = r.u32()?;
    let n = r.len_u64()?;
    let dist = r
        .take(n.saturating_mul(4))?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    finish(r)?;
    Ok(DistanceField::from_parts(PageId(target), dist))
}

pub fn save_distance_field(
    field: &DistanceField,
    path: impl AsRef<Path>,
) -> Result<(), CacheFormatError> {
    Ok(write_atomic(path.as_ref(), &write_distance_field(field))?)
}

pub fn load_distance_field(path: impl AsRef<Path>) -> Result<DistanceField, CacheFormatError> {
    read_distance_field(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::distances_to;
    use crate::graph::tests::graph;

    #[test]
    fn cycle_round_trip() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let bytes = write_graph(&g);
        assert_eq!(&bytes[..4], b"WKRG");
        // header + row_ptr + cols + title table + crc
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 4 * 8 + 3 * 4 + 4 + 3 * (4 + 2) + 4);
        let back = read_graph(&bytes).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = write_graph(&graph(2, &[(0, 1)]));
        bytes[0] = b'X';
        let err = read_graph(&bytes).unwrap_err();
        assert!(matches!(err, CacheFormatError::BadMagic));
        assert_eq!(err.to_string(), "bad magic");
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = write_graph(&graph(2, &[(0, 1)]));
        bytes[4] = 9;
        assert!(matches!(
            read_graph(&bytes).unwrap_err(),
            CacheFormatError::VersionMismatch { found: 9, .. }
        ));
    }

    #[test]
    fn truncated() {
        let bytes = write_graph(&graph(3, &[(0, 1), (1, 2)]));
        for cut in [2, 10, 30, bytes.len() - 1] {
            assert!(
                matches!(read_graph(&bytes[..cut]).unwrap_err(), CacheFormatError::Truncated),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn checksum_failure() {
        let mut bytes = write_graph(&graph(3, &[(0, 1), (1, 2)]));
        let last_title = bytes.len() - 5;
        bytes[last_title] ^= 0x01;
        assert!(matches!(
            read_graph(&bytes).unwrap_err(),
            CacheFormatError::ChecksumMismatch { .. }
        ));
    }

    #[test]
    fn distance_round_trip() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let f = distances_to(&g, PageId(2));
        let bytes = write_distance_field(&f);
        assert_eq!(&bytes[..4], b"WKRD");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 12 + 4);
        assert_eq!(read_distance_field(&bytes).unwrap(), f);
        let mut bad = bytes.clone();
        bad[0] = b'W';
        bad[3] = b'G';
        assert!(matches!(read_distance_field(&bad).unwrap_err(), CacheFormatError::BadMagic));
    }
}
