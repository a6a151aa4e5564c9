//! Task generation: difficulty splits, the link-existence probe set,
//! training-pair export and external pair import.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{episode_seed, filter_links, render_user_prompt, step_rng, SYSTEM_PROMPT};
use crate::graph::{distances_from, DistanceCache, DistanceCacheError, PageGraph, PageId, ReverseGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Easy,
    Medium,
    Hard,
    Imported,
    Custom,
    Train,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Easy => "easy",
            Split::Medium => "medium",
            Split::Hard => "hard",
            Split::Imported => "imported",
            Split::Custom => "custom",
            Split::Train => "train",
        }
    }

    pub const EVALUATION: [Split; 3] = [Split::Easy, Split::Medium, Split::Hard];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "easy" => Split::Easy,
            "medium" => Split::Medium,
            "hard" => Split::Hard,
            "imported" => Split::Imported,
            "custom" => Split::Custom,
            "train" => Split::Train,
            other => return Err(TaskError::UnknownSplit(other.to_owned())),
        })
    }
}

/// One source → target game.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaskInstance {
    pub source: PageId,
    pub target: PageId,
    pub optimal_length: u32,
    pub split: Split,
    pub snapshot: String,
}

/// Title-based form of a task, one JSON object per line in task files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub source: String,
    pub target: String,
    pub optimal_length: u32,
    pub split: Split,
    pub snapshot: String,
}

impl TaskInstance {
    pub fn to_record(&self, g: &PageGraph) -> TaskRecord {
        TaskRecord {
            source: g.title(self.source).to_owned(),
            target: g.title(self.target).to_owned(),
            optimal_length: self.optimal_length,
            split: self.split,
            snapshot: self.snapshot.clone(),
        }
    }

    pub fn pair(&self) -> (PageId, PageId) {
        (self.source, self.target)
    }
}

impl TaskRecord {
    pub fn resolve(&self, g: &PageGraph) -> Result<TaskInstance, TaskError> {
        let lookup = |t: &str| g.lookup(t).ok_or_else(|| TaskError::UnknownTitle(t.to_owned()));
        Ok(TaskInstance {
            source: lookup(&self.source)?,
            target: lookup(&self.target)?,
            optimal_length: self.optimal_length,
            split: self.split,
            snapshot: self.snapshot.clone(),
        })
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("split {name}: {pair_count} pairs cannot be divided evenly over {lengths} lengths")]
    Unbalanced {
        name: Split,
        pair_count: usize,
        lengths: usize,
    },
    #[error("could not sample {needed} pairs at length {length} after {attempts} attempts ({found} found)")]
    LengthUnreachable {
        length: u32,
        needed: usize,
        found: usize,
        attempts: usize,
    },
    #[error("probe category {category} exhausted after {attempts} attempts ({found} found)")]
    CategoryExhausted {
        category: ProbeCategory,
        found: usize,
        attempts: usize,
    },
    #[error("oracle disagrees for {from}->{to}: sampled {sampled}, oracle {oracle}")]
    OracleMismatch {
        from: u32,
        to: u32,
        sampled: u32,
        oracle: u32,
    },
    #[error("title {0:?} not found in graph")]
    UnknownTitle(String),
    #[error("task file snapshot {found} does not match graph snapshot {expected}")]
    SnapshotMismatch { found: String, expected: String },
    #[error("graph has too few nodes ({0}) to sample from")]
    GraphTooSmall(usize),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Distance(#[from] DistanceCacheError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Split definition: how many pairs at each shortest-path length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub name: Split,
    pub quotas: Vec<(u32, usize)>,
}

impl SplitSpec {
    /// `pair_count` pairs spread evenly over `lengths`; uneven counts are
    /// rejected.
    pub fn balanced(name: Split, pair_count: usize, lengths: &[u32]) -> Result<Self, TaskError> {
        if lengths.is_empty() || !pair_count.is_multiple_of(lengths.len()) {
            return Err(TaskError::Unbalanced {
                name,
                pair_count,
                lengths: lengths.len(),
            });
        }
        let per = pair_count / lengths.len();
        Ok(Self {
            name,
            quotas: lengths.iter().map(|&l| (l, per)).collect(),
        })
    }

    /// Like [`balanced`](Self::balanced) but hands any remainder to the
    /// shortest lengths one pair at a time.
    pub fn spread(name: Split, pair_count: usize, lengths: &[u32]) -> Self {
        let k = lengths.len().max(1);
        let (per, extra) = (pair_count / k, pair_count % k);
        Self {
            name,
            quotas: lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| (l, per + usize::from(i < extra)))
                .collect(),
        }
    }

    pub fn easy() -> Self {
        Self::balanced(Split::Easy, 200, &[3, 4]).unwrap()
    }

    pub fn medium() -> Self {
        Self::balanced(Split::Medium, 150, &[5, 6]).unwrap()
    }

    pub fn hard() -> Self {
        Self::balanced(Split::Hard, 100, &[7, 8]).unwrap()
    }

    pub fn for_split(split: Split) -> Option<Self> {
        match split {
            Split::Easy => Some(Self::easy()),
            Split::Medium => Some(Self::medium()),
            Split::Hard => Some(Self::hard()),
            _ => None,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.quotas.iter().map(|&(_, c)| c).sum()
    }
}

fn attempt_budget(needed: usize) -> usize {
    1_000 + 100 * needed
}

/// Samples a split. For each length, a source is drawn uniformly, its
/// forward BFS is computed, and a target is drawn uniformly among pages at
/// exactly that distance. Every pair is then re-checked against the
/// target-side oracle. Pairs in `exclude` and repeated pairs are rejected.
pub fn generate_split(
    g: &PageGraph,
    cache: &DistanceCache,
    spec: &SplitSpec,
    seed: u64,
    exclude: &HashSet<(PageId, PageId)>,
    snapshot: &str,
) -> Result<Vec<TaskInstance>, TaskError> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(TaskError::GraphTooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(PageId, PageId)> = HashSet::new();
    let mut tasks = Vec::with_capacity(spec.pair_count());

    for &(length, needed) in &spec.quotas {
        let budget = attempt_budget(needed);
        let mut found = 0;
        let mut attempts = 0;
        while found < needed {
            if attempts == budget {
                return Err(TaskError::LengthUnreachable {
                    length,
                    needed,
                    found,
                    attempts,
                });
            }
            attempts += 1;
            let source = PageId(rng.random_range(0..n as u32));
            let forward = distances_from(g, source);
            let stratum: Vec<u32> = forward
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d == length)
                .map(|(v, _)| v as u32)
                .collect();
            let Some(&target) = stratum.choose(&mut rng) else {
                continue;
            };
            let pair = (source, PageId(target));
            if exclude.contains(&pair) || !seen.insert(pair) {
                continue;
            }
            let oracle = cache.get(pair.1)?.get(source);
            if oracle != length {
                return Err(TaskError::OracleMismatch {
                    from: source.0,
                    to: target,
                    sampled: length,
                    oracle,
                });
            }
            tasks.push(TaskInstance {
                source,
                target: pair.1,
                optimal_length: length,
                split: spec.name,
                snapshot: snapshot.to_owned(),
            });
            found += 1;
        }
    }
    tasks.shuffle(&mut rng);
    Ok(tasks)
}

pub fn write_tasks<W: Write>(mut w: W, tasks: &[TaskInstance], g: &PageGraph) -> io::Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut w, &t.to_record(g))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_tasks(path: impl AsRef<Path>, tasks: &[TaskInstance], g: &PageGraph) -> io::Result<()> {
    write_tasks(BufWriter::new(File::create(path)?), tasks, g)
}

pub fn read_task_records<R: Read>(r: R) -> Result<Vec<TaskRecord>, TaskError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| TaskError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// Loads a task file and binds it to `g`. Every record must carry
/// `snapshot`.
pub fn load_tasks(path: impl AsRef<Path>, g: &PageGraph, snapshot: &str) -> Result<Vec<TaskInstance>, TaskError> {
    read_task_records(File::open(path)?)?
        .iter()
        .map(|r| {
            if r.snapshot != snapshot {
                return Err(TaskError::SnapshotMismatch {
                    found: r.snapshot.clone(),
                    expected: snapshot.to_owned(),
                });
            }
            r.resolve(g)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Link-existence probe

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeCategory {
    #[serde(rename = "connected")]
    Connected,
    #[serde(rename = "distance-2")]
    Distance2,
    #[serde(rename = "distance-3")]
    Distance3,
    #[serde(rename = "distance-4")]
    Distance4,
    #[serde(rename = "reversed")]
    Reversed,
}

impl ProbeCategory {
    pub const ALL: [ProbeCategory; 5] = [
        ProbeCategory::Connected,
        ProbeCategory::Distance2,
        ProbeCategory::Distance3,
        ProbeCategory::Distance4,
        ProbeCategory::Reversed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeCategory::Connected => "connected",
            ProbeCategory::Distance2 => "distance-2",
            ProbeCategory::Distance3 => "distance-3",
            ProbeCategory::Distance4 => "distance-4",
            ProbeCategory::Reversed => "reversed",
        }
    }
}

impl fmt::Display for ProbeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSample {
    pub source: PageId,
    pub target: PageId,
    pub category: ProbeCategory,
    /// True iff the source page links directly to the target page.
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub source: String,
    pub target: String,
    pub category: ProbeCategory,
    pub label: bool,
    pub snapshot: String,
}

impl ProbeSample {
    pub fn to_record(&self, g: &PageGraph, snapshot: &str) -> ProbeRecord {
        ProbeRecord {
            source: g.title(self.source).to_owned(),
            target: g.title(self.target).to_owned(),
            category: self.category,
            label: self.label,
            snapshot: snapshot.to_owned(),
        }
    }
}

pub const PROBE_PER_CATEGORY: usize = 200;

/// User prompt asking whether `source` links to `target`.
pub fn probe_prompt(source: &str, target: &str) -> String {
    format!(
        "We are playing a game where you navigate Wikipedia from a starting page to a target page solely by clicking links on each page.\n\n\
         Can you tell us if {source} contains a link to {target}? Reply with either 'yes' or 'no' in the following format:\\boxed{{}}."
    )
}

/// Reads a boxed yes/no answer; the last boxed answer counts. Anything else
/// is unparsed.
pub fn parse_probe_answer(raw: &str) -> Option<bool> {
    crate::game::boxed_contents(raw).into_iter().rev().find_map(|c| {
        let c = c.trim().trim_start_matches("\\text{").trim_end_matches('}');
        match c.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        }
    })
}

/// Builds the probe set: `per_category` samples in each of the five
/// categories, all pairs distinct.
pub fn generate_probe_set(g: &PageGraph, seed: u64, per_category: usize) -> Result<Vec<ProbeSample>, TaskError> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(TaskError::GraphTooSmall(n));
    }
    let reverse = ReverseGraph::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(PageId, PageId)> = HashSet::new();
    let mut out = Vec::with_capacity(per_category * ProbeCategory::ALL.len());

    for category in ProbeCategory::ALL {
        let budget = attempt_budget(per_category);
        let mut found = 0;
        let mut attempts = 0;
        while found < per_category {
            if attempts == budget {
                return Err(TaskError::CategoryExhausted {
                    category,
                    found,
                    attempts,
                });
            }
            attempts += 1;
            let source = PageId(rng.random_range(0..n as u32));
            let target = match category {
                ProbeCategory::Connected => g.neighbors(source).choose(&mut rng).copied(),
                ProbeCategory::Distance2 | ProbeCategory::Distance3 | ProbeCategory::Distance4 => {
                    let k = match category {
                        ProbeCategory::Distance2 => 2,
                        ProbeCategory::Distance3 => 3,
                        _ => 4,
                    };
                    let stratum: Vec<u32> = distances_from(g, source)
                        .iter()
                        .enumerate()
                        .filter(|&(_, &d)| d == k)
                        .map(|(v, _)| v as u32)
                        .collect();
                    stratum.choose(&mut rng).copied()
                }
                ProbeCategory::Reversed => {
                    let back: Vec<u32> = reverse
                        .in_neighbors(source)
                        .iter()
                        .copied()
                        .filter(|&v| !g.has_edge(source, PageId(v)))
                        .collect();
                    back.choose(&mut rng).copied()
                }
            };
            let Some(target) = target.map(PageId) else {
                continue;
            };
            if !seen.insert((source, target)) {
                continue;
            }
            out.push(ProbeSample {
                source,
                target,
                category,
                label: g.has_edge(source, target),
            });
            found += 1;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training export

/// A single-step training example rooted at the task's source page.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub task: TaskInstance,
    pub presented: Vec<PageId>,
    pub optimal_choice_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub source: String,
    pub target: String,
    pub optimal_length: u32,
    pub split: Split,
    pub snapshot: String,
    pub system: String,
    pub prompt: String,
    pub presented: Vec<String>,
    pub optimal_choice_index: usize,
}

impl TrainingPair {
    pub fn to_record(&self, g: &PageGraph) -> TrainingRecord {
        let links: Vec<&str> = self.presented.iter().map(|&v| g.title(v)).collect();
        let source = g.title(self.task.source);
        TrainingRecord {
            source: source.to_owned(),
            target: g.title(self.task.target).to_owned(),
            optimal_length: self.task.optimal_length,
            split: self.task.split,
            snapshot: self.task.snapshot.clone(),
            system: SYSTEM_PROMPT.to_owned(),
            prompt: render_user_prompt(source, g.title(self.task.target), &[source], &links),
            presented: links.iter().map(|s| s.to_string()).collect(),
            optimal_choice_index: self.optimal_choice_index,
        }
    }
}

pub const TRAINING_LENGTHS: [u32; 5] = [2, 3, 4, 5, 6];

/// Samples training pairs over lengths 2..=6, disjoint from `exclude`, and
/// labels each with the first presented link on a shortest path. The links
/// are those the game would show at step 0 under `seed` and `link_cap`.
pub fn export_training_pairs(
    g: &PageGraph,
    cache: &DistanceCache,
    seed: u64,
    count: usize,
    exclude: &HashSet<(PageId, PageId)>,
    link_cap: usize,
    snapshot: &str,
) -> Result<Vec<TrainingPair>, TaskError> {
    let spec = SplitSpec::spread(Split::Train, count, &TRAINING_LENGTHS);
    let tasks = generate_split(g, cache, &spec, seed, exclude, snapshot)?;
    tasks
        .into_iter()
        .map(|task| {
            let field = cache.get(task.target)?;
            let game_seed = episode_seed(seed, task.source, task.target);
            let presented = filter_links(g.neighbors(task.source), &field, link_cap, &mut step_rng(game_seed, 0));
            let want = task.optimal_length - 1;
            let optimal_choice_index = presented
                .iter()
                .position(|&v| field.get(v) == want)
                .ok_or(TaskError::OracleMismatch {
                    from: task.source.0,
                    to: task.target.0,
                    sampled: task.optimal_length,
                    oracle: field.get(task.source),
                })?;
            Ok(TrainingPair {
                task,
                presented,
                optimal_choice_index,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// External pair import

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub rows: usize,
    pub imported: usize,
    pub skipped: Vec<SkippedRow>,
}

#[derive(Deserialize)]
struct ImportRow {
    source: String,
    target: String,
}

/// Reads `source,target` title pairs and recomputes their shortest-path
/// length on this graph. Rows that do not resolve are skipped and reported.
pub fn import_pairs<R: Read>(
    r: R,
    g: &PageGraph,
    cache: &DistanceCache,
    snapshot: &str,
) -> Result<(Vec<TaskInstance>, ImportReport), TaskError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(r);
    let mut report = ImportReport::default();
    let mut tasks = Vec::new();
    for (i, row) in reader.deserialize::<ImportRow>().enumerate() {
        report.rows += 1;
        let row_no = i + 1;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                report.skipped.push(SkippedRow {
                    row: row_no,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let (Some(source), Some(target)) = (g.lookup(&row.source), g.lookup(&row.target)) else {
            let missing = if g.lookup(&row.source).is_none() { &row.source } else { &row.target };
            report.skipped.push(SkippedRow {
                row: row_no,
                reason: format!("unknown title {missing:?}"),
            });
            continue;
        };
        if source == target {
            report.skipped.push(SkippedRow {
                row: row_no,
                reason: "source equals target".into(),
            });
            continue;
        }
        let Some(length) = cache.get(target)?.distance(source) else {
            report.skipped.push(SkippedRow {
                row: row_no,
                reason: "target unreachable from source".into(),
            });
            continue;
        };
        tasks.push(TaskInstance {
            source,
            target,
            optimal_length: length,
            split: Split::Imported,
            snapshot: snapshot.to_owned(),
        });
        report.imported += 1;
    }
    Ok((tasks, report))
}
