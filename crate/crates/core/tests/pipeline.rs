use mixfmm::metrics::accuracy;
use mixfmm::mixture::EmConfig;
use mixfmm::pipeline::detect::detection_threshold;
use mixfmm::pipeline::generate::{benchmark_templates, template_rms};
use mixfmm::pipeline::io;
use mixfmm::pipeline::{
    benchmark_spec, detect_spikes, generate, plant_spikes, run_experiment, segment, ExperimentConfig, GeneratorSpec,
    KChoice, Method, Recording,
};
use mixfmm::TimeGrid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn plain_spec(noise_sigma: f64, counts: Vec<usize>, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        templates: benchmark_templates(),
        counts,
        noise_sigma,
        jitter: 0.0,
        amplitude_scatter: 0.0,
        background_sigma: 0.0,
        background_harmonics: 2,
        points: 64,
        seed,
    }
}

fn quick_config() -> ExperimentConfig {
    ExperimentConfig {
        em: EmConfig {
            n_starts: 3,
            ..EmConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn noiseless_generation_reproduces_templates() {
    let set = generate(&plain_spec(0.0, vec![2, 3, 1], 0)).unwrap();
    let templates: Vec<Vec<f64>> = benchmark_templates().iter().map(|t| t.eval(&set.grid)).collect();
    let labels = set.true_labels.clone().unwrap();
    assert_eq!(labels, vec![0, 0, 1, 1, 1, 2]);
    for (s, &l) in set.signals.iter().zip(&labels) {
        assert_eq!(s.values, templates[l]);
    }
}

#[test]
fn benchmark_templates_share_peak_and_alignment() {
    let grid = TimeGrid::uniform(64).unwrap();
    for t in benchmark_templates() {
        let v = t.eval(&grid);
        let (argmax, peak) = v.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
        assert_eq!(argmax, 19);
        assert!((peak - 5.0).abs() < 1e-12);
        assert_eq!(t.order(), 3);
    }
}

#[test]
fn residual_variance_matches_the_noise_level() {
    let sigma = 0.7;
    let set = generate(&plain_spec(sigma, vec![500, 1, 1], 11)).unwrap();
    let template = benchmark_templates()[0].eval(&set.grid);
    let residuals: Vec<f64> = set.signals[..500]
        .iter()
        .flat_map(|s| s.values.iter().zip(&template).map(|(a, b)| a - b))
        .collect();
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (residuals.len() - 1) as f64;
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn seeds_change_draws_but_not_class_means() {
    let a = generate(&plain_spec(0.3, vec![200, 200, 200], 1)).unwrap();
    let b = generate(&plain_spec(0.3, vec![200, 200, 200], 2)).unwrap();
    assert_ne!(a.signals[0].values, b.signals[0].values);
    assert_eq!(a, generate(&plain_spec(0.3, vec![200, 200, 200], 1)).unwrap());
    for class in 0..3 {
        for j in 0..64 {
            let mean = |set: &mixfmm::pipeline::SpikeSet| {
                set.signals[200 * class..200 * (class + 1)].iter().map(|s| s.values[j]).sum::<f64>() / 200.0
            };
            // five standard errors of a difference of two means
            assert!((mean(&a) - mean(&b)).abs() < 5.0 * 0.3 * (2.0f64 / 200.0).sqrt());
        }
    }
}

#[test]
fn benchmark_noise_is_a_fifth_of_template_rms() {
    let spec = benchmark_spec(0);
    let grid = TimeGrid::uniform(64).unwrap();
    let rms = spec.templates.iter().map(|t| template_rms(t, &grid)).sum::<f64>() / 3.0;
    assert!((spec.noise_sigma - 0.2 * rms).abs() < 1e-15);
    assert_eq!(spec.counts, vec![100, 100, 100]);
}

#[test]
fn pure_noise_rarely_crosses_the_threshold() {
    let mut total = 0;
    let mut samples = 0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
        samples += x.len();
        total += detect_spikes(&Recording::new(x, 1.0).unwrap(), 4.0, 64).unwrap().len();
    }
    assert!((total as f64) < 1e-3 * samples as f64, "{total}");
}

#[test]
fn threshold_and_edge_cases() {
    assert_eq!(detection_threshold(&[0.0; 10], 4.0), 0.0);
    assert!(detect_spikes(&Recording::new(vec![0.0; 100], 1.0).unwrap(), 4.0, 64).unwrap().is_empty());
    let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.7).sin()).collect();
    let expected = 4.0 * {
        let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        a.sort_by(f64::total_cmp);
        (a[149] + a[150]) / 2.0
    } / 0.6745;
    assert!((detection_threshold(&x, 4.0) - expected).abs() < 1e-15);
    assert!(detect_spikes(&Recording::new(vec![1.0; 10], 1.0).unwrap(), 4.0, 64).is_err());
}

#[test]
fn windows_are_cut_around_the_alignment_point() {
    let rec = Recording::new((0..300).map(f64::from).collect(), 1.0).unwrap();
    let seg = segment(&rec, &[100, 5, 290], 64, 20).unwrap();
    assert_eq!(seg.peaks, vec![100]);
    assert_eq!(seg.dropped, vec![5, 290]);
    let values = &seg.spikes.signals[0].values;
    assert_eq!(values.first(), Some(&81.0));
    assert_eq!(values.last(), Some(&144.0));
    assert_eq!(values[19], 100.0);
    assert_eq!(seg.spikes.grid.points(), TimeGrid::uniform(64).unwrap().points());
}

#[test]
fn noiseless_planted_spikes_round_trip() {
    let grid = TimeGrid::uniform(64).unwrap();
    let waveforms: Vec<Vec<f64>> = benchmark_templates()
        .iter()
        .map(|t| {
            let v = t.eval(&grid);
            v.iter().map(|x| x - v[0]).collect()
        })
        .collect();
    let sources: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let planted = plant_spikes(&waveforms, &sources, 64, 0.0, 3).unwrap();
    let peaks = detect_spikes(&planted.recording, 4.0, 64).unwrap();
    assert_eq!(peaks, planted.peaks);
    let seg = segment(&planted.recording, &peaks, 64, 20).unwrap();
    assert!(seg.dropped.is_empty());
    for (s, &src) in seg.spikes.signals.iter().zip(&sources) {
        assert_eq!(s.values, waveforms[src]);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = generate(&plain_spec(0.2, vec![3, 2, 2], 5)).unwrap();
    let path = dir.path().join("nested/spikes.csv");
    io::write_spikes(io::create(&path).unwrap(), &set).unwrap();
    let back = io::read_spikes(io::open(&path).unwrap(), "file").unwrap();
    assert_eq!(back.true_labels, set.true_labels);
    for (a, b) in back.signals.iter().zip(&set.signals) {
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn mixfmm3_recovers_noiseless_classes() {
    let set = generate(&plain_spec(0.0, vec![20, 20, 20], 0)).unwrap();
    let report = run_experiment(&set, Method::Mixfmm3, KChoice::Fixed(3), &quick_config()).unwrap();
    assert_eq!(report.metrics.accuracy, Some(1.0));
    assert_eq!(report.templates.len(), 3);

    let baseline = run_experiment(&set, Method::PcaKm, KChoice::Fixed(3), &quick_config()).unwrap();
    assert!(baseline.metrics.accuracy.is_some());
    assert_eq!(baseline.metrics.to_table().lines().next(), report.metrics.to_table().lines().next());
    assert!(run_experiment(&set, Method::PcaKm, KChoice::Auto, &quick_config()).is_err());
}

#[test]
fn automatic_k_and_written_outputs() {
    let set = generate(&plain_spec(0.1, vec![20, 20, 20], 4)).unwrap();
    let report = run_experiment(&set, Method::Mixfmm3, KChoice::Auto, &quick_config()).unwrap();
    assert_eq!(report.k, 3);
    assert_eq!(report.selection.as_ref().unwrap().chosen_k, 3);
    assert_eq!(accuracy(&report.labels, set.true_labels.as_ref().unwrap()).unwrap(), 1.0);

    let dir = tempfile::tempdir().unwrap();
    report.write(&set, dir.path()).unwrap();
    for file in ["labels.csv", "model.json", "metrics.tsv", "templates.csv", "selection.tsv", "report.json"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["k"], 3);
    assert_eq!(json["chosen_by_selection"], true);
}

#[test]
fn small_noise_round_trip_through_em() {
    let set = generate(&plain_spec(0.1, vec![100, 100, 100], 8)).unwrap();
    let report = run_experiment(&set, Method::Mixfmm3, KChoice::Fixed(3), &quick_config()).unwrap();
    assert!(report.metrics.accuracy.unwrap() >= 0.99);
}
