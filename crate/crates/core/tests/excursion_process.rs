use excursus::pathsim::{extract_excursions, sample_path};
use excursus::ppp::{sample_excursion_process, ProcessOptions};
use excursus::rng::{par_samples, stream};
use excursus::spec::Preset;
use excursus::stats::{ks2_test, EmpiricalLaw, Welford};

#[test]
fn levels_match_excursions_of_simulated_paths() {
    let spec = Preset::BmDrift { mu: 0.5 }.build().unwrap();
    let (eps, dt) = (0.05, 1e-3);
    let from_paths: Vec<f64> = par_samples(1500, 21, |_, rng| {
        let path = sample_path(&spec, 0.0, dt, 40.0, rng).unwrap();
        extract_excursions(&path, eps).unwrap().into_iter().map(|e| e.level).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let mut opts = ProcessOptions::new(eps, dt);
    opts.with_paths = false;
    let from_process: Vec<f64> = (0..1500u64)
        .flat_map(|i| sample_excursion_process(&spec, 0.0, opts.clone(), &mut stream(22, i)).unwrap())
        .map(|p| p.level)
        .collect();
    let r = ks2_test(&EmpiricalLaw::new(from_paths), &EmpiricalLaw::new(from_process)).unwrap();
    assert!(r.passes(0.01), "{r:?}");
}

#[test]
fn counts_in_a_level_band_are_poisson() {
    let spec = Preset::BmDrift { mu: 0.5 }.build().unwrap();
    let mut opts = ProcessOptions::new(0.01, 1e-3);
    opts.with_paths = false;
    opts.stop_at_escape = false;
    opts.y_min = Some(-1.0);
    let counts: Welford = (0..4000u64)
        .map(|i| sample_excursion_process(&spec, 0.0, opts.clone(), &mut stream(5, i)).unwrap().len() as f64)
        .collect();
    // 2(φ(μ√ε)/√ε + μΦ(μ√ε)) per unit level
    let rate = 8.488_82;
    assert!((counts.mean() - rate).abs() < 4.0 * counts.se(), "{} ± {}", counts.mean(), counts.se());
    let dispersion = counts.variance() / counts.mean();
    assert!((dispersion - 1.0).abs() < 0.1, "variance / mean = {dispersion}");
}
