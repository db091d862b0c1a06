use proptest::prelude::*;

use l4s_sim::cc::ControllerKind;
use l4s_sim::harness::{
    run_comparison, run_matrix, Case, ComparisonRow, ComparisonTable, MetricValues,
};

fn short(name: &str, secs: f64) -> Case {
    let mut c = Case::preset(name).unwrap();
    c.scenario.duration_s = secs;
    c
}

#[test]
fn four_controllers_five_seeds_gives_twenty_runs_four_rows() {
    let seeds = [1, 2, 3, 4, 5];
    let records = run_matrix(&[short("case4b", 3.0)], &ControllerKind::ALL, &seeds).unwrap();
    assert_eq!(records.len(), 20);
    let table = ComparisonTable::aggregate(&records);
    assert_eq!(table.rows.len(), 4);
    for (row, kind) in table.rows.iter().zip(ControllerKind::ALL) {
        assert_eq!(row.controller, kind);
        assert_eq!(row.seed_count, 5);
    }
}

#[test]
fn results_follow_input_order() {
    let cases = [short("case2", 2.0), short("case1", 2.0)];
    let kinds = [ControllerKind::L4sGcc, ControllerKind::Gcc];
    let records = run_matrix(&cases, &kinds, &[3, 1]).unwrap();
    let order: Vec<(&str, ControllerKind, u64)> = records
        .iter()
        .map(|r| (r.case.as_str(), r.controller, r.seed))
        .collect();
    let mut expect = Vec::new();
    for c in ["case2", "case1"] {
        for k in kinds {
            for s in [3, 1] {
                expect.push((c, k, s));
            }
        }
    }
    assert_eq!(order, expect);
}

#[test]
fn aggregation_matches_independent_recomputation() {
    let records = run_matrix(
        &[short("case4c", 4.0)],
        &ControllerKind::ALL,
        &[1, 2, 3, 4, 5],
    )
    .unwrap();
    let table = ComparisonTable::aggregate(&records);
    for row in &table.rows {
        let runs: Vec<[f64; 8]> = records
            .iter()
            .filter(|r| r.controller == row.controller)
            .map(|r| {
                let m = &r.report;
                [
                    m.rtt_max_ms,
                    m.rtt_min_ms,
                    m.rtt_avg_ms,
                    m.stalling_rate,
                    m.quality_mbps,
                    m.bandwidth_utilization,
                    m.mark_count as f64,
                    m.drop_count as f64,
                ]
            })
            .collect();
        let n = runs.len() as f64;
        let (mean, sd) = (row.mean.to_array(), row.stdev.to_array());
        for i in 0..8 {
            let mut m = 0.0;
            for r in &runs {
                m += r[i];
            }
            m /= n;
            let mut ss = 0.0;
            for r in &runs {
                ss += (r[i] - m).powi(2);
            }
            let s = (ss / (n - 1.0)).sqrt();
            assert!(
                (mean[i] - m).abs() <= 1e-12 * m.abs().max(1.0),
                "{} col {i}",
                row.controller
            );
            assert!(
                (sd[i] - s).abs() <= 1e-12 * s.abs().max(1.0),
                "{} col {i}",
                row.controller
            );
        }
    }
}

#[test]
fn single_run_table_equals_its_report() {
    let records = run_matrix(&[short("case1", 3.0)], &[ControllerKind::L4sCc], &[9]).unwrap();
    let table = ComparisonTable::aggregate(&records);
    let row = &table.rows[0];
    let r = &records[0].report;
    assert_eq!(row.seed_count, 1);
    assert_eq!(row.mean.rtt_max_ms, r.rtt_max_ms);
    assert_eq!(row.mean.stall_rate, r.stalling_rate);
    assert_eq!(row.mean.utilization, r.bandwidth_utilization);
    assert_eq!(row.stdev, MetricValues::default());
}

#[test]
fn identical_inputs_give_identical_tables() {
    let cases = [short("case4a", 3.0)];
    let a = run_comparison(&cases, &ControllerKind::ALL, &[1, 2]).unwrap();
    let b = run_comparison(&cases, &ControllerKind::ALL, &[1, 2]).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
}

#[test]
fn heavy_jitter_favours_l4s_gcc() {
    let records = run_matrix(
        &[Case::preset("case4c").unwrap()],
        &[ControllerKind::Gcc, ControllerKind::L4sGcc],
        &[1, 2, 3, 4, 5],
    )
    .unwrap();
    let table = ComparisonTable::aggregate(&records);
    let util = |k| table.row("case4c", k).unwrap().mean.utilization;
    assert!(util(ControllerKind::L4sGcc) > util(ControllerKind::Gcc));
}

#[test]
fn utilization_stays_bounded_on_every_preset() {
    let cases: Vec<Case> = l4s_sim::harness::PRESETS
        .iter()
        .map(|n| short(n, 30.0))
        .collect();
    for r in run_matrix(&cases, &ControllerKind::ALL, &[1]).unwrap() {
        let m = &r.report;
        assert!(
            m.bandwidth_utilization <= 1.01,
            "{}/{}",
            r.case,
            r.controller
        );
        assert!(m.rtt_min_ms <= m.rtt_avg_ms && m.rtt_avg_ms <= m.rtt_max_ms);
        assert!((0.0..=1.0).contains(&m.stalling_rate));
    }
}

#[test]
fn two_row_table_emits_header_and_two_lines() {
    let records = run_matrix(
        &[short("case1", 2.0)],
        &[ControllerKind::Gcc, ControllerKind::L4sGcc],
        &[1],
    )
    .unwrap();
    let csv = ComparisonTable::aggregate(&records).to_csv_string();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with(
        "case,controller,seed_count,rtt_max_ms,rtt_min_ms,rtt_avg_ms,stall_rate,quality_mbps,utilization,marks,drops"
    ));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e9..1e9f64,
        Just(0.0),
        (0u32..1000).prop_map(|v| v as f64 / 7.0)
    ]
}

fn row() -> impl Strategy<Value = ComparisonRow> {
    (
        "[a-z0-9_]{1,12}",
        0usize..4,
        1usize..50,
        prop::array::uniform8(finite()),
        prop::array::uniform8(finite()),
    )
        .prop_map(|(case, k, n, mean, sd)| ComparisonRow {
            case,
            controller: ControllerKind::ALL[k],
            seed_count: n,
            mean: MetricValues::from_array(mean),
            stdev: MetricValues::from_array(sd),
        })
}

proptest! {
    #[test]
    fn csv_round_trips_exactly(rows in prop::collection::vec(row(), 0..8)) {
        let table = ComparisonTable { rows };
        let text = table.to_csv_string();
        let back = ComparisonTable::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back, table);
    }
}
