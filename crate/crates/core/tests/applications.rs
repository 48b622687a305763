use mised::applications::{change_scores, forward_select, js_divergence, roc_auc_labels, WindowConfig};
use mised::divergence::KlMethod;
use mised::experiments::planted_features;
use mised::synthetic::{generate_change_series, sample_normal, ChangeSeriesSpec, Regime, Segment};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn normal_segment(mean: f64, duration: usize) -> Segment {
    Segment {
        regime: Regime::Normal { mean, std: 1.0 },
        duration,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn single_shift_peaks_near_the_change() {
    let cfg = WindowConfig::new(20, 5).unwrap();
    for (seed, method) in [(1u64, KlMethod::Nn), (2, KlMethod::Gp)] {
        let spec = ChangeSeriesSpec {
            segments: vec![normal_segment(0.0, 150), normal_segment(5.0, 150)],
            noise: 0.0,
            seed,
        };
        let series = generate_change_series(&spec).unwrap();
        let out = change_scores(&series.values, &series.change_points, &cfg, &method).unwrap();
        let (best, _) = out
            .times
            .iter()
            .zip(&out.scores)
            .filter_map(|(&t, s)| s.map(|v| (t, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let dist = best.abs_diff(150);
        assert!(dist <= 2 * cfg.lag(), "{}: peak at {best}", method.name());
    }
}

#[test]
fn stationary_series_has_no_outlying_peak() {
    // The operating window of the change-detection benchmark.
    let cfg = WindowConfig::new(50, 5).unwrap();
    let spec = ChangeSeriesSpec {
        segments: vec![normal_segment(0.0, 300)],
        noise: 0.0,
        seed: 8,
    };
    let series = generate_change_series(&spec).unwrap();
    let out = change_scores(&series.values, &[], &cfg, &KlMethod::Gp).unwrap();
    let scores: Vec<f64> = out.scores.iter().map(|s| s.unwrap()).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(scores);
    assert!(med > 0.0);
    assert!(max / med < 5.0, "max {max}, median {med}");
}

#[test]
fn constant_series_scores_are_finite() {
    let cfg = WindowConfig::new(10, 3).unwrap();
    let series = vec![1.5; 60];
    let out = change_scores(&series, &[], &cfg, &KlMethod::Nn).unwrap();
    assert_eq!(out.missing(), 0);
    assert!(out.scores.iter().all(|s| s.unwrap().is_finite()));
}

#[test]
fn permuted_labels_give_chance_auc() {
    let scores: Vec<f64> = sample_normal(400, 1, 3).unwrap().column(0);
    let mut labels: Vec<bool> = (0..400).map(|i| i < 80).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut total = 0.0;
    for _ in 0..20 {
        labels.shuffle(&mut rng);
        total += roc_auc_labels(&scores, &labels).unwrap();
    }
    let mean = total / 20.0;
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn js_on_random_labels_is_near_zero() {
    let values: Vec<f64> = (0..10u64)
        .map(|s| {
            let x = sample_normal(400, 2, 60 + s).unwrap();
            let labels: Vec<u8> = (0..400).map(|i| 1 + (i % 2) as u8).collect();
            js_divergence(&x, &labels, &KlMethod::Nn).unwrap()
        })
        .collect();
    let m = median(values.clone());
    assert!(m.abs() < 0.2, "{m} from {values:?}");
}

#[test]
fn gaussian_js_grows_with_separation() {
    let values: Vec<f64> = [0.5, 1.0, 2.0, 3.0]
        .iter()
        .map(|&shift| {
            let (x, labels) = planted_features(400, 2, &[0], shift, 5).unwrap();
            js_divergence(&x, &labels, &KlMethod::Gp).unwrap()
        })
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
    // JS is bounded by log 2.
    assert!(values.iter().all(|&v| v > 0.0 && v < 2f64.ln()), "{values:?}");
}

#[test]
fn forward_selection_is_deterministic() {
    let (x, labels) = planted_features(200, 4, &[2], 2.0, 13).unwrap();
    let a = forward_select(&x, &labels, 2, &KlMethod::Nn, true).unwrap();
    let b = forward_select(&x, &labels, 2, &KlMethod::Nn, true).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.features[0], 2);
    assert_eq!(a.skipped, 0);
}
