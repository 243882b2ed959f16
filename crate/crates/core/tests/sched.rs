use proptest::prelude::*;
use splitforge::design::presets;
use splitforge::linalg::Mat;
use splitforge::sched::{self, Dependencies, GanttFormat, TimingModel};

fn two_group_timing(t: f64, low: f64, high: f64) -> TimingModel {
    let l = Mat::from_fn(6, 6, |i, j| {
        if i == j {
            0.0
        } else if (i < 3) == (j < 3) {
            low
        } else {
            high
        }
    });
    TimingModel::new(vec![t; 6], l).unwrap()
}

#[test]
fn two_block_attains_the_single_iteration_bound() {
    for n in [4, 6] {
        let timing = TimingModel::constant(n, 1.0, 0.25);
        let s = sched::schedule_design(&presets::two_block_fiedler(n).unwrap(), &timing, 8).unwrap();
        let stats = sched::iteration_stats(&s);
        assert_eq!(stats.c1, 2.5);
        assert!(stats.ck.iter().all(|c| *c == 2.5));
        assert_eq!(stats.c_inf, Some(2.5));
        assert_eq!(sched::lower_bound_q(&timing, Some(0.25)), 2.5);
    }
}

#[test]
fn serial_mt_chain() {
    let timing = TimingModel::constant(3, 1.0, 1.0);
    let s = sched::schedule_design(&presets::mt(3).unwrap(), &timing, 6).unwrap();
    let stats = sched::iteration_stats(&s);
    assert_eq!(stats.c1, 6.0);
    assert!(stats.c_inf.unwrap() <= stats.c1);
}

#[test]
fn single_iteration_has_no_asymptotic_estimate() {
    let timing = TimingModel::new(vec![16.0, 16.0], Mat::from_row_slice(2, 2, &[0.0, 0.25, 0.25, 0.0])).unwrap();
    let s = sched::schedule_design(&presets::dr(), &timing, 1).unwrap();
    assert_eq!(s.end, vec![32.5]);
    assert!(sched::iteration_stats(&s).c_inf.is_none());
}

#[test]
fn cluster_design_overlaps_iterations() {
    let d = presets::cluster_pair();
    let timing = two_group_timing(16.0, 0.25, 10.0);
    let s = sched::schedule_design(&d, &timing, 12).unwrap();
    let overlap = (0..11).any(|k| {
        let next_first = s.start[(k + 1, 0)];
        next_first < s.start[(k, 4)] + 16.0 && next_first < s.start[(k, 5)] + 16.0
    });
    assert!(overlap);
    assert!(s.end[11].is_finite() && s.end.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn cluster_activity_network_matches_its_sparsity() {
    let d = presets::cluster_pair();
    let net = sched::export_activity_network(&Dependencies::from_design(&d));
    assert_eq!(net.nodes, 6);
    assert_eq!(net.within, vec![(0, 1), (0, 2), (0, 3), (1, 2), (3, 4), (3, 5), (4, 5)]);
    assert_eq!(net.between, vec![(0, 1), (0, 2), (0, 3), (1, 2), (3, 4), (3, 5), (4, 5)]);
    let dot = net.to_dot();
    assert!(dot.contains("r1 -> r4 [color=blue]"));
    assert!(dot.contains("color=orange"));
}

#[test]
fn activity_network_counts() {
    let dr = sched::export_activity_network(&Dependencies::from_design(&presets::dr()));
    assert_eq!((dr.within.len(), dr.between.len()), (1, 1));
    let mt = sched::export_activity_network(&Dependencies::from_design(&presets::mt(3).unwrap()));
    assert_eq!((mt.within.len(), mt.between.len()), (3, 2));
}

#[test]
fn lower_bound_examples() {
    assert_eq!(sched::lower_bound_q(&TimingModel::constant(5, 16.0, 0.25), Some(0.25)), 32.5);
    let t = TimingModel::new(vec![1.0, 2.0], Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
    assert_eq!(sched::lower_bound_q(&t, Some(1.0)), 5.0);
    let l = Mat::from_row_slice(3, 3, &[0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0]);
    let t = TimingModel::new(vec![0.5, 2.0, 1.0], l).unwrap();
    assert_eq!(sched::lower_bound_q(&t, None), 4.5);
}

#[test]
fn single_iteration_respects_the_lower_bound() {
    for d in [
        presets::dr(),
        presets::ryu(),
        presets::mt(5).unwrap(),
        presets::fully_connected(5).unwrap(),
        presets::two_block_fiedler(6).unwrap(),
        presets::dblock_mt(6, 3).unwrap(),
    ] {
        for (t, l) in [(1.0, 0.25), (16.0, 0.25), (2.0, 3.0)] {
            let timing = TimingModel::constant(d.n, t, l);
            let s = sched::schedule_design(&d, &timing, 1).unwrap();
            assert!(s.end[0] >= sched::lower_bound_q(&timing, Some(l)) - 1e-9);
        }
    }
}

#[test]
fn gantt_csv_lists_every_bar() {
    let timing = TimingModel::constant(4, 1.0, 0.25);
    let s = sched::schedule_design(&presets::two_block_fiedler(4).unwrap(), &timing, 3).unwrap();
    let csv = sched::export_gantt(&s, &timing, GanttFormat::Csv);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "iter,resolvent,start,end");
    assert_eq!(rows.len(), 1 + 3 * 4);
    assert_eq!(rows[1], "1,1,0,1");
    // Two bands of two parallel bars per iteration.
    for k in 0..3 {
        let mut starts: Vec<f64> = (0..4).map(|i| s.start[(k, i)]).collect();
        starts.sort_by(f64::total_cmp);
        assert_eq!(starts[0], starts[1]);
        assert_eq!(starts[2], starts[3]);
        assert!(starts[1] < starts[2]);
    }
}

#[test]
fn empty_schedule_exports_header_only() {
    let timing = TimingModel::constant(3, 1.0, 1.0);
    let s = sched::schedule_design(&presets::mt(3).unwrap(), &timing, 0).unwrap();
    assert_eq!(sched::export_gantt(&s, &timing, GanttFormat::Csv).trim_end(), "iter,resolvent,start,end");
}

#[test]
fn gantt_svg_has_bars_and_arrows() {
    let timing = TimingModel::constant(3, 1.0, 0.5);
    let s = sched::schedule_design(&presets::mt(3).unwrap(), &timing, 2).unwrap();
    let svg = sched::export_gantt(&s, &timing, GanttFormat::Svg);
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.matches("<rect").count() >= 6);
    assert!(svg.contains("<line") || svg.contains("<path"));
}

#[test]
fn timing_json_round_trip_and_validation() {
    let t = TimingModel::constant(3, 1.5, 0.5);
    let back = TimingModel::from_json(&t.to_json().unwrap()).unwrap();
    assert_eq!(back.t, t.t);
    assert_eq!(back.l, t.l);
    assert!(TimingModel::from_json(r#"{"t":[1,1],"l":[[0,1],[2,0]]}"#).is_err());
    assert!(TimingModel::from_json(r#"{"t":[1,0],"l":[[0,1],[1,0]]}"#).is_err());
    assert!(TimingModel::from_json(r#"{"t":[1,1],"l":[[0,0],[0,0]]}"#).is_err());
}

#[test]
fn starts_respect_every_dependency() {
    let d = presets::cluster_pair();
    let timing = two_group_timing(16.0, 0.25, 10.0);
    let s = sched::schedule_design(&d, &timing, 5).unwrap();
    let deps = &s.deps;
    for k in 0..5 {
        for j in 0..6 {
            for i in 0..6 {
                if deps.within[j][i] {
                    assert!(s.start[(k, j)] >= s.start[(k, i)] + 16.0 + timing.l[(i, j)] - 1e-12);
                }
                if k > 0 && deps.between[j][i] {
                    assert!(s.start[(k, j)] >= s.start[(k - 1, i)] + 16.0 + timing.l[(i, j)] - 1e-12);
                }
            }
        }
    }
    assert_eq!((0..6).map(|i| s.start[(0, i)]).fold(f64::INFINITY, f64::min), 0.0);
}

fn timing_strategy(n: usize) -> impl Strategy<Value = TimingModel> {
    (prop::collection::vec(0.5f64..2.0, n), prop::collection::vec(0.1f64..5.0, n * n)).prop_map(move |(t, raw)| {
        let l = Mat::from_fn(n, n, |i, j| if i == j { 0.0 } else { raw[i.min(j) * n + i.max(j)] });
        TimingModel::new(t, l).unwrap()
    })
}

proptest! {
    #[test]
    fn dropping_a_dependency_never_delays(
        (timing, pick, within) in (3usize..6).prop_flat_map(|n| (timing_strategy(n), 0usize..100, any::<bool>()))
    ) {
        let n = timing.n();
        let full = Dependencies::from_design(&presets::fully_connected(n).unwrap());
        let mut reduced = full.clone();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).filter(|&(a, b)| a != b).collect();
        let (a, b) = pairs[pick % pairs.len()];
        if within {
            let (lo, hi) = (a.min(b), a.max(b));
            reduced.within[hi][lo] = false;
        } else {
            reduced.between[a][b] = false;
        }
        let before = sched::compute_schedule(&full, &timing, 4).unwrap();
        let after = sched::compute_schedule(&reduced, &timing, 4).unwrap();
        for k in 0..4 {
            for i in 0..n {
                prop_assert!(after.start[(k, i)] <= before.start[(k, i)] + 1e-12);
            }
            prop_assert!(after.end[k] <= before.end[k] + 1e-12);
        }
    }

    #[test]
    fn end_times_are_nondecreasing(timing in (2usize..6).prop_flat_map(timing_strategy)) {
        let n = timing.n();
        let s = sched::schedule_design(&presets::mt(n).unwrap(), &timing, 6).unwrap();
        prop_assert!(s.end.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(sched::iteration_stats(&s).c1 >= sched::lower_bound_q(&timing, None) - 1e-9 || n == 2);
    }
}
