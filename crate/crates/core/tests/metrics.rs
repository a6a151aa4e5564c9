mod common;

use common::*;
use wikirace_core::game::{FailureReason, GameTrajectory};
use wikirace_core::metrics::{
    build_report, exclude_abandoned, group_metrics, linear_fit, loop_stats, mean_suboptimal_steps, probe_f1,
    render_jsonl, render_table, success_rate, suboptimal_steps, GroupField, MetricsError,
};
use wikirace_core::tasks::Split;

fn three_games() -> Vec<GameTrajectory> {
    vec![
        fixture_trajectory("a", Split::Easy, 1, &["S", "X", "S", "T"], success()),
        fixture_trajectory("a", Split::Easy, 3, &["S", "X", "S", "X"], failure(FailureReason::StepBudget)),
        fixture_trajectory("a", Split::Easy, 2, &["S", "Y", "T"], success()),
    ]
}

#[test]
fn loop_fixture_values() {
    let ts = three_games();
    let l = loop_stats(&ts).unwrap();
    assert_eq!(l.loop_frequency, 2.0 / 3.0);
    assert_eq!(l.recovery_rate, Some(0.5));
    assert_eq!(l.avg_max_visitation, 5.0 / 3.0);
    assert_eq!(success_rate(&ts).unwrap(), 2.0 / 3.0);
    assert_eq!(suboptimal_steps(&ts[0]).unwrap(), 2);
    assert_eq!(suboptimal_steps(&ts[2]).unwrap(), 0);
    assert_eq!(suboptimal_steps(&ts[1]).unwrap_err(), MetricsError::NotSuccessful);
    assert_eq!(mean_suboptimal_steps(&ts), Some(1.0));
}

#[test]
fn empty_and_loop_free_inputs() {
    assert_eq!(success_rate(&[]).unwrap_err(), MetricsError::Empty);
    assert!(loop_stats(&[]).is_err());
    let clean = vec![fixture_trajectory("a", Split::Easy, 2, &["S", "Y", "T"], success())];
    assert_eq!(loop_stats(&clean).unwrap().recovery_rate, None);
    let lost = vec![fixture_trajectory("a", Split::Hard, 7, &["S", "Y"], failure(FailureReason::StepBudget))];
    assert_eq!(mean_suboptimal_steps(&lost), None);
}

#[test]
fn failure_reasons_stay_separate() {
    let mut ts = three_games();
    ts.push(fixture_trajectory("a", Split::Easy, 3, &["S"], failure(FailureReason::ParseError)));
    ts.push(fixture_trajectory("a", Split::Easy, 3, &["S"], failure(FailureReason::Abandoned)));
    let kept = exclude_abandoned(&ts);
    assert_eq!(kept.len(), 4);
    let m = group_metrics(&kept).unwrap();
    assert_eq!(m.games, 4);
    assert_eq!(m.successes, 2);
    assert_eq!(m.success_rate, 0.5);
    assert_eq!(m.parse_errors, 1);
    assert_eq!(m.steps, 8);
    assert_eq!(m.tokens_per_step, 10.0);
    assert_eq!(m.cost_per_step, None);
}

#[test]
fn linear_fit_fixtures() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.37, 2.0 * i as f64 * 0.37 + 1.0)).collect();
    let f = linear_fit(&pts).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-9);
    assert!((f.intercept - 1.0).abs() < 1e-9);

    // Slope interval against a hand-computed value: x = 0..4, y = 0,2,1,3,5.
    let f = linear_fit(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (3.0, 3.0), (4.0, 5.0)]).unwrap();
    assert!((f.slope - 1.1).abs() < 1e-12);
    // sse = 2.7, se = sqrt(2.7 / 3 / 10) = 0.3, t(0.975, 3) = 3.182446305284263
    let half = 3.182446305284263 * 0.3;
    assert!((f.slope_ci.0 - (1.1 - half)).abs() < 1e-9);
    assert!((f.slope_ci.1 - (1.1 + half)).abs() < 1e-9);
}

#[test]
fn probe_f1_fixture() {
    let mut items = vec![(true, Some(true)); 30];
    items.extend(vec![(false, Some(true)); 10]);
    items.extend(vec![(true, Some(false)); 20]);
    items.extend(vec![(false, Some(false)); 40]);
    let s = probe_f1(&items).unwrap();
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    assert!((s.precision - 0.75).abs() < 1e-12);
    assert!((s.recall - 0.6).abs() < 1e-12);
    assert_eq!(s.true_negative, 40);
}

#[test]
fn report_groups_and_regression() {
    // Agent loop frequencies 0, 1/2, 1 with success 1, 1/2, 0.
    let ts = vec![
        fixture_trajectory("clean", Split::Easy, 2, &["S", "Y", "T"], success()),
        fixture_trajectory("clean", Split::Hard, 2, &["S", "Y", "T"], success()),
        fixture_trajectory("mixed", Split::Easy, 2, &["S", "Y", "T"], success()),
        fixture_trajectory("mixed", Split::Hard, 3, &["S", "X", "S"], failure(FailureReason::StepBudget)),
        fixture_trajectory("loopy", Split::Easy, 3, &["S", "X", "S"], failure(FailureReason::StepBudget)),
        fixture_trajectory("loopy", Split::Hard, 3, &["S", "X", "S"], failure(FailureReason::ParseError)),
    ];

    let r = build_report(&ts, &[GroupField::Split, GroupField::Agent]);
    assert_eq!(r.rows.len(), 6);
    assert_eq!(r.rows[0].group[&GroupField::Split], "easy");
    assert_eq!(r.rows[0].group[&GroupField::Agent], "clean");
    let fit = r.loop_regression.unwrap();
    assert!((fit.slope + 1.0).abs() < 1e-12);
    assert_eq!(fit.n, 3);

    let table = render_table(&r);
    let header = table.lines().next().unwrap();
    for col in ["split", "agent", "success%", "parse_err", "subopt", "loop%", "recovery%", "max_visit"] {
        assert!(header.contains(col), "{col} missing");
    }
    assert!(table.contains("N/A"));
    assert!(table.contains("slope -1.000"));
    assert_eq!(render_table(&r), table);

    let jsonl = render_jsonl(&r);
    assert_eq!(jsonl.lines().count(), 7);
    for line in jsonl.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}
