use tensorm::simulate::{generate, SimSpec};
use tensorm::tensor::OBSERVED_ONE;

fn spec(noise_p: f64, seed: u64) -> SimSpec {
    SimSpec {
        dims: vec![20, 20, 20],
        rank: 5,
        factor_density: 0.4,
        noise_p,
        seed,
    }
}

fn ones(t: &tensorm::ObservedTensor) -> usize {
    t.entries().iter().filter(|&&v| v == OBSERVED_ONE).count()
}

#[test]
fn clean_density_matches_closed_form() {
    // 1 − (1 − 0.4³)^5, written out independently of the library
    let expected = 1.0 - (1.0f64 - 0.064).powi(5);
    let densities: Vec<f64> = (0..60)
        .map(|seed| ones(&generate(&spec(0.0, seed)).unwrap().clean) as f64 / 8000.0)
        .collect();
    let n = densities.len() as f64;
    let mean = densities.iter().sum::<f64>() / n;
    let sd = (densities.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
}

#[test]
fn flip_rate_matches_noise_level() {
    let p = 0.15;
    let mut flips = 0usize;
    let mut total = 0usize;
    for seed in 0..50 {
        let sim = generate(&spec(p, seed)).unwrap();
        flips += sim
            .clean
            .entries()
            .iter()
            .zip(sim.noisy.entries())
            .filter(|(a, b)| a != b)
            .count();
        total += sim.clean.len();
    }
    let n = total as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    assert!((flips as f64 - n * p).abs() < 3.0 * sigma, "{flips} flips in {total}");
}

#[test]
fn outputs_are_fully_observed() {
    let sim = generate(&spec(0.3, 1)).unwrap();
    assert_eq!(sim.clean.missing_count(), 0);
    assert_eq!(sim.noisy.missing_count(), 0);
    assert_eq!(sim.truth.len(), 3);
    assert!(sim.truth.iter().all(|f| f.rows() == 20 && f.rank() == 5));
}
