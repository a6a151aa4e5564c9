//! Batch episode runner: K workers, one ordered writer.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{anyhow, Result};
use wikirace_core::game::write_trajectory;
use wikirace_core::{run_episode, Agent, DistanceCache, GameConfig, GameTrajectory, PageGraph, TaskInstance};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchSummary {
    pub total: usize,
    pub written: usize,
    pub successes: usize,
    pub max_steps_taken: u32,
    /// Stopped early by the stop flag.
    pub interrupted: bool,
    /// First fatal error, if any. Trajectories finished before it are kept.
    pub error: Option<String>,
}

/// Plays every task and writes trajectories to `out` in task order, so the
/// file does not depend on `parallel`. Each episode uses
/// [`GameConfig::for_task`]. When `stop` is raised, no new episodes start;
/// those in flight finish and are written.
#[allow(clippy::too_many_arguments)]
pub fn run_batch<W: Write>(
    tasks: &[TaskInstance],
    agent: &dyn Agent,
    g: &PageGraph,
    cache: &DistanceCache,
    config: &GameConfig,
    parallel: usize,
    stop: &AtomicBool,
    out: &mut W,
) -> Result<BatchSummary> {
    let parallel = parallel.clamp(1, tasks.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let mut summary = BatchSummary {
        total: tasks.len(),
        ..Default::default()
    };

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, Result<GameTrajectory>)>();
        for _ in 0..parallel {
            let tx = tx.clone();
            let (next, failed) = (&next, &failed);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) || failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let result = cache
                    .get(task.target)
                    .map_err(|e| anyhow!(e))
                    .and_then(|field| run_episode(task, agent, g, &field, &config.for_task(task)).map_err(|e| anyhow!(e)));
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, GameTrajectory> = BTreeMap::new();
        let mut cursor = 0;
        let mut emit = |t: &GameTrajectory, summary: &mut BatchSummary| -> Result<()> {
            write_trajectory(out, t)?;
            summary.written += 1;
            summary.successes += t.is_success() as usize;
            summary.max_steps_taken = summary.max_steps_taken.max(t.steps_taken);
            Ok(())
        };
        for (i, result) in rx {
            match result {
                Ok(t) => {
                    pending.insert(i, t);
                }
                Err(e) => {
                    summary.error.get_or_insert_with(|| format!("task {i}: {e:#}"));
                }
            }
            while let Some(t) = pending.remove(&cursor) {
                emit(&t, &mut summary)?;
                cursor += 1;
            }
        }
        // Gaps left by a failure: keep whatever finished, still in order.
        for t in pending.into_values() {
            emit(&t, &mut summary)?;
        }
        out.flush()?;
        Ok(())
    })?;

    summary.interrupted = stop.load(Ordering::SeqCst) && summary.written < summary.total;
    Ok(summary)
}
