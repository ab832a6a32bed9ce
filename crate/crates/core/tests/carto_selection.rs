use medmap_core::carto::{
    assemble_map, gaussian_smooth, percentile_intervals, render_map, rising_window_interval, smooth_dense, LlmMap,
    MapParams, Span,
};
use medmap_core::metric::{LayerStat, MetricKind, MetricSeries};
use medmap_core::seed::rng_from_seed;
use medmap_core::Concept;
use rand::Rng;

fn some(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().copied().map(Some).collect()
}

fn ends(spans: &[Span]) -> Vec<(usize, usize)> {
    spans.iter().map(|s| (s.start, s.end)).collect()
}

/// Every window, scored directly.
fn best_window_oracle(s: &[f64], w: usize) -> (usize, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 1..=s.len() - w {
        let rate = (i..i + w).map(|j| s[j] - s[j - 1]).sum::<f64>() / w as f64;
        if rate > best.0 {
            best = (rate, i);
        }
    }
    (best.1, best.1 + w - 1)
}

#[test]
fn step_series_window_contains_the_step() {
    let step: Vec<f64> = (0..16).map(|l| if l >= 8 { 10.0 } else { 0.0 }).collect();
    let w = rising_window_interval(&some(&step), 3).unwrap();
    assert_eq!((w.start, w.end), best_window_oracle(&step, 3));
    assert_eq!((w.start, w.end), (6, 8));
    assert!((w.strength - 10.0 / 3.0).abs() < 1e-12);

    // After smoothing the rise is symmetric about 7.5, so the window centers on layer 8.
    let smoothed = smooth_dense(&step, 1.0).unwrap();
    let w = rising_window_interval(&some(&smoothed), 3).unwrap();
    assert_eq!((w.start, w.end), best_window_oracle(&smoothed, 3));
    assert_eq!((w.start, w.end), (7, 9));
}

#[test]
fn linear_series_picks_the_first_window() {
    let lin: Vec<f64> = (0..10).map(|l| 2.0 * l as f64 + 1.0).collect();
    let w = rising_window_interval(&some(&lin), 3).unwrap();
    assert_eq!((w.start, w.end), (1, 3));
}

#[test]
fn worked_percentile_fixture() {
    let s = some(&[0.0, 0.0, 0.0, 0.0, 9.0, 9.0, 0.0, 0.0]);
    let spans = percentile_intervals(&s, 75.0, 2, 3).unwrap();
    assert_eq!(ends(&spans), vec![(4, 5)]);
    assert_eq!(spans[0].strength, 9.0);
}

#[test]
fn constant_series_has_no_intervals() {
    assert!(percentile_intervals(&some(&[3.0; 12]), 75.0, 2, 3).unwrap().is_empty());
}

#[test]
fn five_plateaus_keep_the_highest_three() {
    let mut s = vec![0.0; 40];
    let plateaus = [(2, 7.0), (10, 5.0), (18, 9.0), (26, 6.0), (34, 8.0)];
    for &(start, v) in &plateaus {
        s[start] = v;
        s[start + 1] = v;
    }
    // Threshold: 75th percentile of 30 zeros and ten plateau cells = 1.25,
    // so all five plateaus qualify; the top three by mean are 9, 8, 7.
    let mut oracle: Vec<(usize, f64)> = plateaus.to_vec();
    oracle.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut expected: Vec<(usize, usize)> = oracle[..3].iter().map(|&(st, _)| (st, st + 1)).collect();
    expected.sort();
    let spans = percentile_intervals(&some(&s), 75.0, 2, 3).unwrap();
    assert_eq!(ends(&spans), expected);
    assert_eq!(ends(&spans), vec![(2, 3), (18, 19), (34, 35)]);
}

#[test]
fn single_layer_runs_are_dropped() {
    let s = some(&[0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 4.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(ends(&percentile_intervals(&s, 75.0, 2, 3).unwrap()), vec![(6, 7)]);
}

#[test]
fn smoothing_constant_and_impulse() {
    let c = smooth_dense(&[2.75; 11], 1.0).unwrap();
    assert!(c.iter().all(|v| (v - 2.75).abs() < 1e-12));

    // Hand-evaluated: weights exp(-d²/2) for |d| ≤ 3, renormalized over
    // the in-range part of the kernel at each position.
    let expected = [
        0.00633722495855543,
        0.05735747492292101,
        0.24311396529634755,
        0.3990502796524549,
        0.24311396529634755,
        0.05735747492292101,
        0.00633722495855543,
    ];
    let mut impulse = [0.0; 7];
    impulse[3] = 1.0;
    let out = smooth_dense(&impulse, 1.0).unwrap();
    for (o, e) in out.iter().zip(expected) {
        assert!((o - e).abs() < 1e-9, "{o} vs {e}");
    }
}

#[test]
fn selectors_are_shift_and_scale_invariant() {
    let mut rng = rng_from_seed(31);
    for case in 0..100 {
        let n = rng.random_range(8..60);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = rng.random_range(0.1..10.0);
        let shift = rng.random_range(-100.0..100.0);
        let sm = gaussian_smooth(&some(&s), 1.0).unwrap();
        let scaled = gaussian_smooth(&some(&s.iter().map(|v| v * scale).collect::<Vec<_>>()), 1.0).unwrap();
        let shifted = gaussian_smooth(&some(&s.iter().map(|v| v + shift).collect::<Vec<_>>()), 1.0).unwrap();

        let base = rising_window_interval(&sm, 3).unwrap();
        for other in [&scaled, &shifted] {
            let w = rising_window_interval(other, 3).unwrap();
            assert_eq!((w.start, w.end), (base.start, base.end), "case {case}");
        }
        let base = ends(&percentile_intervals(&sm, 75.0, 2, 3).unwrap());
        assert_eq!(
            ends(&percentile_intervals(&scaled, 75.0, 2, 3).unwrap()),
            base,
            "case {case}"
        );

        let spans = percentile_intervals(&sm, 75.0, 2, 3).unwrap();
        assert!(spans.len() <= 3);
        for pair in spans.windows(2) {
            assert!(pair[0].end < pair[1].start, "case {case}: overlap or unsorted");
        }
        assert!(spans.iter().all(|s| s.end - s.start + 1 >= 2));
    }
}

fn planted(len: usize, lo: usize, hi: usize, base: f64, peak: f64) -> Vec<Option<LayerStat>> {
    (0..len)
        .map(|l| Some(LayerStat::exact(if (lo..=hi).contains(&l) { peak } else { base }, 1)))
        .collect()
}

#[test]
fn planted_peak_overlaps_in_every_row() {
    let n_layers = 24;
    let series = vec![
        MetricSeries::new(
            MetricKind::UmapSilhouette,
            Concept::Symptoms,
            planted(n_layers + 1, 10, 15, 0.05, 0.6),
        )
        .with_label_key("group"),
        MetricSeries::new(
            MetricKind::Saliency,
            Concept::Symptoms,
            planted(n_layers, 10, 15, 1.0, 4.0),
        ),
        MetricSeries::new(
            MetricKind::Lesioning,
            Concept::Symptoms,
            planted(n_layers, 10, 15, 1.0, 8.0),
        ),
        MetricSeries::new(
            MetricKind::Patching,
            Concept::Symptoms,
            planted(n_layers, 10, 15, 0.0, 0.9),
        ),
    ];
    let map = assemble_map("planted", n_layers, &series, &MapParams::default()).unwrap();
    let rows = &map.rows[&Concept::Symptoms];
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(!row.intervals.is_empty(), "{:?}", row.analysis);
        assert!(row.intervals.iter().any(|iv| iv.start <= 15 && iv.end >= 10), "{row:?}");
        assert!(row.intervals.iter().all(|iv| iv.end <= n_layers));
    }
    assert!(map.metadata.warnings.is_empty());

    let json = render_map(&map, "json").unwrap();
    let back: LlmMap = serde_json::from_str(&json).unwrap();
    assert_eq!(back, map);
    let svg = render_map(&map, "svg").unwrap();
    assert_eq!(svg, render_map(&map, "svg").unwrap());
    assert_eq!(
        svg.matches("<title>").count(),
        rows.iter().map(|r| r.intervals.len()).sum::<usize>()
    );
}
