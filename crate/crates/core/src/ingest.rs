//! Edge-list ingestion: TSV dump → canonical strongly connected graph.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::graph::{build_csr, largest_scc, normalize_title, write_graph, GraphError, PageGraph, PageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeFormat {
    /// `<source title>\t<target title>`
    TsvTitles,
    /// `<source id>\t<target id>` with unsigned integer ids.
    TsvIds,
}

impl FromStr for EdgeFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv-titles" => Ok(EdgeFormat::TsvTitles),
            "tsv-ids" => Ok(EdgeFormat::TsvIds),
            other => Err(IngestError::UnknownFormat(other.to_owned())),
        }
    }
}

impl fmt::Display for EdgeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeFormat::TsvTitles => "tsv-titles",
            EdgeFormat::TsvIds => "tsv-ids",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeListSource {
    pub path: PathBuf,
    pub format: EdgeFormat,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown edge-list format {0:?} (expected tsv-titles or tsv-ids)")]
    UnknownFormat(String),
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line} is not valid UTF-8")]
    Encoding { line: u64 },
    #[error("no nodes survive ingestion")]
    NoNodes,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub malformed: u64,
    pub self_loop: u64,
    pub duplicate: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.malformed + self.self_loop + self.duplicate
    }

    pub fn merge(&mut self, other: &DropCounts) {
        self.malformed += other.malformed;
        self.self_loop += other.self_loop;
        self.duplicate += other.duplicate;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines_read: u64,
    pub edges_kept: u64,
    pub edges_dropped: DropCounts,
    pub nodes_total: usize,
    pub scc_size: usize,
    pub scc_edges: usize,
    pub snapshot_checksum: String,
}

/// CRC32 of the canonical serialized graph.
pub fn snapshot_checksum(g: &PageGraph) -> u32 {
    crc32fast::hash(&write_graph(g))
}

pub fn snapshot_hex(g: &PageGraph) -> String {
    format!("{:08x}", snapshot_checksum(g))
}

pub fn ingest(source: &EdgeListSource) -> Result<(PageGraph, IngestReport), IngestError> {
    let file = File::open(&source.path).map_err(|e| IngestError::Read {
        path: source.path.clone(),
        source: e,
    })?;
    ingest_reader(BufReader::new(file), source.format).map_err(|e| match e {
        IngestError::Read { source: io, .. } => IngestError::Read {
            path: source.path.clone(),
            source: io,
        },
        other => other,
    })
}

/// Assigns dense ids to names in first-appearance order.
#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(name.to_owned(), id);
        self.names.push(name.to_owned());
        id
    }
}

pub fn ingest_reader<R: BufRead>(
    mut reader: R,
    format: EdgeFormat,
) -> Result<(PageGraph, IngestReport), IngestError> {
    let mut lines_read = 0u64;
    let mut drops = DropCounts::default();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut interner = Interner::default();
    let mut raw_ids: Vec<(u64, u64)> = Vec::new();

    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| IngestError::Read {
            path: PathBuf::new(),
            source: e,
        })?;
        if n == 0 {
            break;
        }
        lines_read += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| IngestError::Encoding { line: lines_read })?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            drops.malformed += 1;
            continue;
        };
        match format {
            EdgeFormat::TsvTitles => {
                let (a, b) = (normalize_title(a), normalize_title(b));
                if a.is_empty() || b.is_empty() {
                    drops.malformed += 1;
                    continue;
                }
                if a == b {
                    drops.self_loop += 1;
                    continue;
                }
                let edge = (interner.intern(&a), interner.intern(&b));
                if seen.insert(edge) {
                    edges.push(edge);
                } else {
                    drops.duplicate += 1;
                }
            }
            EdgeFormat::TsvIds => {
                let (Ok(a), Ok(b)) = (a.trim().parse::<u64>(), b.trim().parse::<u64>()) else {
                    drops.malformed += 1;
                    continue;
                };
                if a == b {
                    drops.self_loop += 1;
                    continue;
                }
                raw_ids.push((a, b));
            }
        }
    }

    if format == EdgeFormat::TsvIds {
        let max = raw_ids.iter().map(|&(a, b)| a.max(b)).max();
        let distinct: HashSet<u64> = raw_ids.iter().flat_map(|&(a, b)| [a, b]).collect();
        let dense = max.is_some_and(|m| m + 1 == distinct.len() as u64);
        if dense {
            let n = distinct.len();
            interner.names = (0..n).map(|i| i.to_string()).collect();
        } else if !raw_ids.is_empty() {
            warn!(
                distinct = distinct.len(),
                max_id = max.unwrap_or(0),
                "edge-list ids are not dense; remapping in first-appearance order"
            );
        }
        for (a, b) in raw_ids {
            let edge = if dense {
                (a as u32, b as u32)
            } else {
                (interner.intern(&a.to_string()), interner.intern(&b.to_string()))
            };
            if seen.insert(edge) {
                edges.push(edge);
            } else {
                drops.duplicate += 1;
            }
        }
    }

    let nodes_total = interner.names.len();
    if nodes_total == 0 {
        return Err(IngestError::NoNodes);
    }
    let edges_kept = edges.len() as u64;
    let full = build_csr(
        edges.into_iter().map(|(a, b)| (PageId(a), PageId(b))),
        nodes_total,
        interner.names,
    )?;
    let (graph, _) = largest_scc(&full)?;
    if graph.num_nodes() == 0 {
        return Err(IngestError::NoNodes);
    }
    let report = IngestReport {
        lines_read,
        edges_kept,
        edges_dropped: drops,
        nodes_total,
        scc_size: graph.num_nodes(),
        scc_edges: graph.nnz(),
        snapshot_checksum: snapshot_hex(&graph),
    };
    Ok((graph, report))
}

/// Out-degree summary of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub min: usize,
    pub median: f64,
    pub mean: f64,
    pub max: usize,
    pub cap: usize,
    /// Fraction of pages with more outgoing links than `cap`.
    pub frac_over_cap: f64,
}

pub fn stats(g: &PageGraph, cap: usize) -> DegreeStats {
    let mut deg: Vec<usize> = g.node_ids().map(|v| g.out_degree(v)).collect();
    deg.sort_unstable();
    let n = deg.len();
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => deg[n / 2] as f64,
        _ => (deg[n / 2 - 1] + deg[n / 2]) as f64 / 2.0,
    };
    let over = deg.iter().filter(|&&d| d > cap).count();
    DegreeStats {
        num_nodes: n,
        num_edges: g.nnz(),
        min: deg.first().copied().unwrap_or(0),
        median,
        mean: if n == 0 { 0.0 } else { g.nnz() as f64 / n as f64 },
        max: deg.last().copied().unwrap_or(0),
        cap,
        frac_over_cap: if n == 0 { 0.0 } else { over as f64 / n as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str, format: EdgeFormat) -> (PageGraph, IngestReport) {
        ingest_reader(text.as_bytes(), format).unwrap()
    }

    #[test]
    fn cycle_plus_dangling() {
        let (g, r) = run("A\tB\nB\tC\nC\tA\nC\tD\n", EdgeFormat::TsvTitles);
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(r.scc_size, 3);
        assert_eq!(r.nodes_total, 4);
        assert_eq!(r.edges_dropped.total(), 0);
        assert_eq!(r.edges_kept, 4);
        assert_eq!(g.lookup("C"), Some(PageId(2)));
        assert_eq!(g.lookup("D"), None);
    }

    #[test]
    fn empty_field_is_malformed() {
        let (_, r) = run("A\t\tB\nA\tB\nB\tA\n", EdgeFormat::TsvTitles);
        assert_eq!(r.edges_dropped.malformed, 1);
        assert_eq!(r.edges_kept, 2);
        let (_, r) = run("A\t\nA\tB\nB\tA\nnotab\n", EdgeFormat::TsvTitles);
        assert_eq!(r.edges_dropped.malformed, 2);
    }

    #[test]
    fn comments_self_loops_duplicates() {
        let text = "# header\n\nA\tB\nA\tB\nB\tB\nB_\tA\n";
        let (g, r) = run(text, EdgeFormat::TsvTitles);
        assert_eq!(r.lines_read, 6);
        assert_eq!(r.edges_kept, 2);
        assert_eq!(
            r.edges_dropped,
            DropCounts {
                malformed: 0,
                self_loop: 1,
                duplicate: 1
            }
        );
        assert_eq!(g.num_nodes(), 2);
    }

    #[test]
    fn dense_and_sparse_ids() {
        let (g, _) = run("0\t1\n1\t2\n2\t0\n", EdgeFormat::TsvIds);
        assert_eq!(g.titles(), &["0", "1", "2"]);
        assert_eq!(g.neighbors(PageId(0)), &[1]);

        let (g, _) = run("10\t30\n30\t20\n20\t10\n", EdgeFormat::TsvIds);
        assert_eq!(g.titles(), &["10", "30", "20"]);
        assert_eq!(g.lookup("20"), Some(PageId(2)));
    }

    #[test]
    fn nothing_survives() {
        let err = ingest_reader("# only comments\n\n".as_bytes(), EdgeFormat::TsvTitles).unwrap_err();
        assert!(matches!(err, IngestError::NoNodes));
    }

    #[test]
    fn unknown_format() {
        assert!("csv".parse::<EdgeFormat>().is_err());
        assert_eq!("tsv-ids".parse::<EdgeFormat>().unwrap(), EdgeFormat::TsvIds);
    }

    #[test]
    fn degree_stats() {
        let (g, _) = run("A\tB\nB\tC\nC\tA\n", EdgeFormat::TsvTitles);
        let s = stats(&g, 50);
        assert_eq!((s.min, s.max), (1, 1));
        assert_eq!(s.median, 1.0);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.frac_over_cap, 0.0);

        let star: String = (1..=60).map(|i| format!("Hub\tL{i}\nL{i}\tHub\n")).collect();
        let (g, _) = run(&star, EdgeFormat::TsvTitles);
        let s = stats(&g, 50);
        assert_eq!(s.max, 60);
        assert_eq!(s.min, 1);
        assert!((s.frac_over_cap - 1.0 / 61.0).abs() < 1e-12);
    }
}
