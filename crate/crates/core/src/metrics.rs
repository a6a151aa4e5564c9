//! Metrics over trajectory logs. Every function here is a pure function of
//! the logged trajectories.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::game::{FailureReason, GameTrajectory};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no trajectories")]
    Empty,
    #[error("suboptimal steps are only defined for successful games")]
    NotSuccessful,
    #[error("linear fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("linear fit needs at least two distinct x values")]
    DegenerateX,
    #[error("every probe sample was discarded")]
    AllDiscarded,
    #[error("unknown grouping field {0:?}")]
    UnknownGroup(String),
}

pub fn success_rate(trajs: &[GameTrajectory]) -> Result<f64, MetricsError> {
    if trajs.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(trajs.iter().filter(|t| t.is_success()).count() as f64 / trajs.len() as f64)
}

/// Steps taken beyond the optimal path length.
pub fn suboptimal_steps(t: &GameTrajectory) -> Result<u32, MetricsError> {
    if !t.is_success() {
        return Err(MetricsError::NotSuccessful);
    }
    Ok(t.steps_taken.saturating_sub(t.task.optimal_length))
}

/// Mean suboptimal steps over the successful games; `None` when none
/// succeeded.
pub fn mean_suboptimal_steps(trajs: &[GameTrajectory]) -> Option<f64> {
    let subs: Vec<u32> = trajs.iter().filter_map(|t| suboptimal_steps(t).ok()).collect();
    (!subs.is_empty()).then(|| subs.iter().map(|&s| s as f64).sum::<f64>() / subs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopStats {
    pub games: usize,
    pub looping: usize,
    pub looping_successes: usize,
    /// Share of games that revisit some page.
    pub loop_frequency: f64,
    /// Share of looping games that still succeed; `None` if nothing looped.
    pub recovery_rate: Option<f64>,
    /// Mean over games of the highest visit count of any page.
    pub avg_max_visitation: f64,
}

pub fn loop_stats(trajs: &[GameTrajectory]) -> Result<LoopStats, MetricsError> {
    if trajs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut looping = 0;
    let mut looping_successes = 0;
    let mut visit_sum = 0usize;
    for t in trajs {
        let m = t.max_visitation();
        visit_sum += m;
        if m >= 2 {
            looping += 1;
            if t.is_success() {
                looping_successes += 1;
            }
        }
    }
    let n = trajs.len();
    Ok(LoopStats {
        games: n,
        looping,
        looping_successes,
        loop_frequency: looping as f64 / n as f64,
        recovery_rate: (looping > 0).then(|| looping_successes as f64 / looping as f64),
        avg_max_visitation: visit_sum as f64 / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided 95% interval for the slope.
    pub slope_ci: (f64, f64),
    pub n: usize,
}

/// Ordinary least squares with a t-based 95% interval on the slope
/// (n − 2 degrees of freedom).
pub fn linear_fit(points: &[(f64, f64)]) -> Result<FitResult, MetricsError> {
    let n = points.len();
    if n < 3 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * nf * mx.abs().max(1.0) {
        return Err(MetricsError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(FitResult {
        slope,
        intercept,
        slope_ci: (slope - t * se, slope + t * se),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub discarded: usize,
}

/// F1 on the "link exists" class over `(label, prediction)` pairs.
/// Unparsed predictions (`None`) are dropped and counted.
pub fn probe_f1(items: &[(bool, Option<bool>)]) -> Result<ProbeScore, MetricsError> {
    let (mut tp, mut fp, mut fn_, mut tn, mut discarded) = (0, 0, 0, 0, 0);
    for &(label, pred) in items {
        match (label, pred) {
            (_, None) => discarded += 1,
            (true, Some(true)) => tp += 1,
            (false, Some(true)) => fp += 1,
            (true, Some(false)) => fn_ += 1,
            (false, Some(false)) => tn += 1,
        }
    }
    if discarded == items.len() {
        return Err(MetricsError::AllDiscarded);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    Ok(ProbeScore {
        precision,
        recall,
        f1,
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        true_negative: tn,
        discarded,
    })
}

// ---------------------------------------------------------------------------
// Grouped report

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupField {
    Split,
    Agent,
    Player,
    MaxSteps,
    LinkCap,
}

impl GroupField {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupField::Split => "split",
            GroupField::Agent => "agent",
            GroupField::Player => "player",
            GroupField::MaxSteps => "max_steps",
            GroupField::LinkCap => "link_cap",
        }
    }
}

impl FromStr for GroupField {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "split" => Ok(GroupField::Split),
            "agent" => Ok(GroupField::Agent),
            "player" => Ok(GroupField::Player),
            "max_steps" => Ok(GroupField::MaxSteps),
            "link_cap" => Ok(GroupField::LinkCap),
            other => Err(MetricsError::UnknownGroup(other.to_owned())),
        }
    }
}

pub fn parse_group_fields(spec: &str) -> Result<Vec<GroupField>, MetricsError> {
    spec.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

fn group_value(t: &GameTrajectory, f: GroupField) -> String {
    match f {
        GroupField::Split => t.task.split.to_string(),
        GroupField::Agent => t.agent.name.clone(),
        GroupField::Player => t.player.clone(),
        GroupField::MaxSteps => t.config.max_steps.to_string(),
        GroupField::LinkCap => t.config.link_cap.to_string(),
    }
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: BTreeMap<GroupField, String>,
    pub games: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub parse_errors: usize,
    pub agent_errors: usize,
    pub suboptimal_steps: Option<f64>,
    pub steps: usize,
    /// Output tokens per step.
    pub tokens_per_step: f64,
    pub input_tokens_per_step: f64,
    pub cost_per_step: Option<f64>,
    pub loop_frequency: f64,
    pub recovery_rate: Option<f64>,
    pub avg_max_visitation: f64,
}

pub fn group_metrics(trajs: &[GameTrajectory]) -> Result<GroupMetrics, MetricsError> {
    let loops = loop_stats(trajs)?;
    let count_reason = |r: FailureReason| trajs.iter().filter(|t| t.outcome.failure_reason() == Some(r)).count();
    let steps: usize = trajs.iter().map(|t| t.steps.len()).sum();
    let out: u64 = trajs.iter().map(|t| t.totals.tokens_out).sum();
    let inp: u64 = trajs.iter().map(|t| t.totals.tokens_in).sum();
    let costs: Vec<f64> = trajs.iter().filter_map(|t| t.totals.cost).collect();
    let per_step = |x: f64| if steps == 0 { 0.0 } else { x / steps as f64 };
    Ok(GroupMetrics {
        group: BTreeMap::new(),
        games: trajs.len(),
        successes: trajs.iter().filter(|t| t.is_success()).count(),
        success_rate: success_rate(trajs)?,
        parse_errors: count_reason(FailureReason::ParseError),
        agent_errors: count_reason(FailureReason::AgentError),
        suboptimal_steps: mean_suboptimal_steps(trajs),
        steps,
        tokens_per_step: per_step(out as f64),
        input_tokens_per_step: per_step(inp as f64),
        cost_per_step: (!costs.is_empty()).then(|| per_step(costs.iter().sum())),
        loop_frequency: loops.loop_frequency,
        recovery_rate: loops.recovery_rate,
        avg_max_visitation: loops.avg_max_visitation,
    })
}

/// Drops games that ended by inactivity timeout.
pub fn exclude_abandoned(trajs: &[GameTrajectory]) -> Vec<GameTrajectory> {
    trajs
        .iter()
        .filter(|t| t.outcome.failure_reason() != Some(FailureReason::Abandoned))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub by: Vec<GroupField>,
    pub rows: Vec<GroupMetrics>,
    /// Success rate regressed on loop frequency, one point per agent.
    pub loop_regression: Option<FitResult>,
    pub regression_points: Vec<(String, f64, f64)>,
}

/// Groups trajectories by the given fields (sorted by group values) and
/// fits the per-agent success-vs-loop line when at least three agents with
/// distinct loop frequencies are present.
pub fn build_report(trajs: &[GameTrajectory], by: &[GroupField]) -> MetricsReport {
    let mut groups: BTreeMap<Vec<String>, Vec<GameTrajectory>> = BTreeMap::new();
    for t in trajs {
        let key = by.iter().map(|&f| group_value(t, f)).collect();
        groups.entry(key).or_default().push(t.clone());
    }
    let rows = groups
        .into_iter()
        .filter_map(|(key, members)| {
            let mut m = group_metrics(&members).ok()?;
            m.group = by.iter().copied().zip(key).collect();
            Some(m)
        })
        .collect();

    let mut per_agent: BTreeMap<String, Vec<GameTrajectory>> = BTreeMap::new();
    for t in trajs {
        per_agent.entry(t.agent.name.clone()).or_default().push(t.clone());
    }
    let regression_points: Vec<(String, f64, f64)> = per_agent
        .into_iter()
        .filter_map(|(name, ts)| {
            let loops = loop_stats(&ts).ok()?;
            Some((name, loops.loop_frequency, success_rate(&ts).ok()?))
        })
        .collect();
    let xy: Vec<(f64, f64)> = regression_points.iter().map(|p| (p.1, p.2)).collect();

    MetricsReport {
        by: by.to_vec(),
        rows,
        loop_regression: linear_fit(&xy).ok(),
        regression_points,
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "N/A".to_owned(), |v| format!("{v:.digits$}"))
}

pub fn render_table(report: &MetricsReport) -> String {
    let mut header: Vec<String> = report.by.iter().map(|f| f.as_str().to_owned()).collect();
    header.extend(
        [
            "games", "success%", "parse_err", "subopt", "tok/step", "cost/step", "loop%", "recovery%", "max_visit",
        ]
        .map(String::from),
    );
    let mut rows: Vec<Vec<String>> = Vec::new();
    for r in &report.rows {
        let mut cells: Vec<String> = report.by.iter().map(|f| r.group.get(f).cloned().unwrap_or_default()).collect();
        cells.extend([
            r.games.to_string(),
            pct(r.success_rate),
            r.parse_errors.to_string(),
            opt(r.suboptimal_steps, 2),
            format!("{:.1}", r.tokens_per_step),
            opt(r.cost_per_step, 6),
            pct(r.loop_frequency),
            r.recovery_rate.map_or_else(|| "N/A".to_owned(), pct),
            format!("{:.2}", r.avg_max_visitation),
        ]);
        rows.push(cells);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i < report.by.len() { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&rule, &mut out);
    for r in &rows {
        line(r, &mut out);
    }
    if let Some(fit) = &report.loop_regression {
        let _ = writeln!(
            out,
            "\nsuccess ~ loop frequency over {} agents: slope {:.3} (95% CI {:.3} to {:.3}), intercept {:.3}",
            fit.n, fit.slope, fit.slope_ci.0, fit.slope_ci.1, fit.intercept
        );
    }
    out
}

/// One JSON object per row, then the regression (if any) as a final line.
pub fn render_jsonl(report: &MetricsReport) -> String {
    let mut out = String::new();
    for r in &report.rows {
        out.push_str(&serde_json::to_string(r).expect("row serializes"));
        out.push('\n');
    }
    if let Some(fit) = &report.loop_regression {
        let v = serde_json::json!({
            "loop_regression": fit,
            "points": report.regression_points,
            "note": "one point per agent: (mean loop frequency, success rate)",
        });
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
