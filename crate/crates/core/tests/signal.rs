use std::f64::consts::{PI, TAU};

use mixfmm::signal::{angle_diff, wrap_angle};
use mixfmm::{canonicalize, eval_model, eval_wave, rescale_time, Error, FmmModel, FmmWave, Signal, TimeGrid};
use proptest::prelude::*;

fn wave(a: f64, alpha: f64, beta: f64, omega: f64) -> FmmWave {
    FmmWave::new(a, alpha, beta, omega).unwrap()
}

#[test]
fn rescale_sixty_four_samples() {
    let raw: Vec<f64> = (0..64).map(f64::from).collect();
    let grid = rescale_time(&raw).unwrap();
    for (j, t) in grid.points().iter().enumerate() {
        assert!((t - TAU * j as f64 / 64.0).abs() < 1e-14);
    }
    assert_eq!(grid.original_span(), (0.0, 64.0));
}

#[test]
fn rescale_three_samples() {
    let grid = rescale_time(&[10.0, 11.0, 12.0]).unwrap();
    let expected = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
    for (t, e) in grid.points().iter().zip(expected) {
        assert!((t - e).abs() < 1e-14);
    }
}

#[test]
fn rescale_errors() {
    assert!(matches!(rescale_time(&[1.0, 1.0, 2.0]), Err(Error::InvalidGrid(_))));
    assert!(matches!(rescale_time(&[3.0, 2.0]), Err(Error::InvalidGrid(_))));
    assert!(matches!(rescale_time(&[0.0]), Err(Error::InvalidGrid(_))));
    assert!(matches!(TimeGrid::new(vec![0.0, TAU]), Err(Error::InvalidGrid(_))));
}

#[test]
fn parameter_and_signal_validation() {
    assert!(FmmWave::new(-1.0, 0.0, 0.0, 0.5).is_err());
    assert!(FmmWave::new(1.0, 0.0, 0.0, 1.5).is_err());
    assert!(FmmWave::new(1.0, f64::NAN, 0.0, 0.5).is_err());
    assert!(FmmModel::new(0.0, vec![]).is_err());
    assert!(Signal::new("x", vec![1.0, f64::INFINITY]).is_err());
    let w = wave(1.0, -0.5, 7.0, 0.3);
    assert!((w.alpha - (TAU - 0.5)).abs() < 1e-15);
    assert!((w.beta - (7.0 - TAU)).abs() < 1e-15);
}

#[test]
fn wave_point_examples() {
    assert!((eval_wave(&wave(1.0, 0.0, PI, 0.2), 0.0) + 1.0).abs() < 1e-15);
    assert!((eval_wave(&wave(2.0, 1.0, 0.0, 0.5), 1.0) - 2.0).abs() < 1e-15);
    let w = wave(1.0, 0.0, PI, 1.0);
    for t in [0.1, 1.0, 2.5, 3.1] {
        assert!((eval_wave(&w, t) + t.cos()).abs() < 1e-12);
    }
}

#[test]
fn two_waves_on_eight_points_are_additive() {
    let grid = TimeGrid::uniform(8).unwrap();
    let (w1, w2) = (wave(1.5, 0.3, 2.0, 0.4), wave(0.7, 4.2, 5.0, 0.1));
    let model = FmmModel::new(-0.25, vec![w1, w2]).unwrap();
    let y = eval_model(&model, &grid);
    for (v, &t) in y.iter().zip(grid.points()) {
        // independent evaluation through the tangent form away from its pole
        let direct = |w: &FmmWave| {
            let d = t - w.alpha;
            let phase = if (wrap_angle(d) - PI).abs() < 1e-9 {
                PI
            } else {
                2.0 * (w.omega * (d / 2.0).tan()).atan()
            };
            w.amplitude * (w.beta + phase).cos()
        };
        assert!((v - (-0.25 + direct(&w1) + direct(&w2))).abs() < 1e-12);
    }
}

#[test]
fn three_wave_canonical_order() {
    let model = FmmModel::new(
        0.0,
        vec![wave(1.0, 0.5, 0.0, 0.3), wave(5.0, 4.0, 0.0, 0.3), wave(2.0, 2.0, 0.0, 0.3)],
    )
    .unwrap();
    let c = canonicalize(&model);
    let order: Vec<(f64, f64)> = c.waves.iter().map(|w| (w.amplitude, w.alpha)).collect();
    assert_eq!(order, vec![(5.0, 4.0), (1.0, 0.5), (2.0, 2.0)]);
    assert_eq!(canonicalize(&c), c);
}

#[test]
fn model_json_layout() {
    let model = FmmModel::new(1.0, vec![wave(2.0, 0.5, 1.0, 0.25)]).unwrap();
    let json = serde_json::to_value(&model).unwrap();
    assert_eq!(json["M"], 1.0);
    assert_eq!(json["A"][0], 2.0);
    assert_eq!(json["omega"][0], 0.25);
    let back: FmmModel = serde_json::from_value(json).unwrap();
    assert_eq!(back, model);
}

fn any_wave() -> impl Strategy<Value = FmmWave> {
    (0.01..10.0f64, 0.0..TAU, 0.0..TAU, 0.0..=1.0f64).prop_map(|(a, al, b, w)| wave(a, al, b, w))
}

proptest! {
    #[test]
    fn periodic_in_time_and_location(w in any_wave(), t in 0.0..TAU) {
        let v = eval_wave(&w, t);
        let scale = 1e-12 * w.amplitude.max(1.0);
        prop_assert!((eval_wave(&w, t + TAU) - v).abs() <= 1e-10 * w.amplitude.max(1.0));
        let shifted = FmmWave { alpha: w.alpha + TAU, ..w };
        prop_assert!((eval_wave(&shifted, t) - v).abs() <= 1e-10 * w.amplitude.max(1.0));
        prop_assert!(v.abs() <= w.amplitude + scale);
    }

    // the phase slope at the pole is 1/ω, so the check needs ω well above 2ε/tolerance
    #[test]
    fn continuous_across_the_pole(w in any_wave().prop_filter("steep", |w| w.omega >= 0.02)) {
        let pole = w.alpha + PI;
        let left = eval_wave(&w, pole - 1e-6);
        let right = eval_wave(&w, pole + 1e-6);
        prop_assert!((left - right).abs() <= 1e-4 * w.amplitude);
    }

    #[test]
    fn unit_omega_is_a_sinusoid(a in 0.01..10.0f64, alpha in 0.0..TAU, beta in 0.0..TAU) {
        let w = wave(a, alpha, beta, 1.0);
        for j in 0..200 {
            let t = TAU * j as f64 / 200.0;
            prop_assert!((eval_wave(&w, t) - a * (beta + t - alpha).cos()).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn canonical_form_preserves_the_curve(
        intercept in -5.0..5.0f64,
        waves in prop::collection::vec(any_wave(), 1..=5),
    ) {
        let model = FmmModel::new(intercept, waves).unwrap();
        let c = canonicalize(&model);
        let grid = TimeGrid::uniform(50).unwrap();
        let scale = model.waves.iter().map(|w| w.amplitude).sum::<f64>() + intercept.abs();
        for (a, b) in eval_model(&model, &grid).iter().zip(eval_model(&c, &grid)) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let lead = c.waves[0];
        prop_assert!(c.waves.iter().all(|w| w.amplitude <= lead.amplitude));
        let offsets: Vec<f64> = c.waves.iter().map(|w| wrap_angle(w.alpha - lead.alpha)).collect();
        prop_assert!(offsets.windows(2).all(|p| p[0] <= p[1]));
        prop_assert_eq!(canonicalize(&c), c.clone());
    }

    #[test]
    fn angle_helpers(a in -50.0..50.0f64, b in -50.0..50.0f64) {
        let w = wrap_angle(a);
        prop_assert!((0.0..TAU).contains(&w));
        let d = angle_diff(a, b);
        prop_assert!(d > -PI - 1e-12 && d <= PI + 1e-12);
        prop_assert!(angle_diff(b + d, a).abs() < 1e-9);
    }
}
