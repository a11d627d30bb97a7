use tensorm::reconstruct::{accuracy, posterior_predictive, Scope};
use tensorm::simulate::{density_for_target, generate, SimSpec};
use tensorm::tensor::ObservedTensor;
use tensorm::{run_chain, SamplerConfig};

fn fit_cfg(rank: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        rank,
        seed,
        threads: 2,
        convergence_window: 50,
        convergence_tol: 1e-4,
        restarts: 8,
        ..SamplerConfig::default()
    }
}

#[test]
fn noise_free_fit_is_exact() {
    let factor_density = density_for_target(0.3, 3, 3).unwrap();
    let sim = generate(&SimSpec {
        dims: vec![20, 20, 20],
        rank: 3,
        factor_density,
        noise_p: 0.0,
        seed: 21,
    })
    .unwrap();
    let chain = run_chain(&sim.noisy, &fit_cfg(3, 21)).unwrap();
    let last = chain.trace.last().unwrap();
    assert_eq!(last.train_accuracy, Some(1.0));
    // Laplace-smoothed MAP with every one of the 8000 entries correct
    let expected = (1.0 + 8000.0) / (2.0 + 8000.0);
    assert!((last.sigma_lambda - expected).abs() < 1e-12);
    let recon = posterior_predictive(&chain.accumulator).unwrap();
    assert_eq!(accuracy(&recon, Scope::Observed(&sim.clean)).unwrap(), 1.0);
}

#[test]
fn unobserved_tensor_leaves_factors_at_prior() {
    let t = ObservedTensor::all_missing(vec![4, 3, 5]).unwrap();
    let cfg = SamplerConfig {
        rank: 2,
        seed: 3,
        n_samples: 500,
        max_burn_in_sweeps: 10,
        ..SamplerConfig::default()
    };
    let chain = run_chain(&t, &cfg).unwrap();
    for k in 0..3 {
        for m in chain.accumulator.factor_means(k).unwrap() {
            assert!((0.4..=0.6).contains(&m), "mean {m}");
        }
    }
    // no observations: σ(λ) = α / (α + β)
    assert!((chain.trace.last().unwrap().sigma_lambda - 0.5).abs() < 1e-12);
    assert_eq!(chain.trace.last().unwrap().train_accuracy, None);
}

#[test]
fn identical_configurations_give_identical_chains() {
    let sim = generate(&SimSpec {
        dims: vec![10, 12, 8],
        rank: 4,
        factor_density: 0.5,
        noise_p: 0.1,
        seed: 8,
    })
    .unwrap();
    let cfg = |threads| SamplerConfig {
        rank: 4,
        seed: 99,
        threads,
        restarts: 2,
        n_samples: 10,
        ..SamplerConfig::default()
    };
    let a = run_chain(&sim.noisy, &cfg(1)).unwrap();
    let b = run_chain(&sim.noisy, &cfg(1)).unwrap();
    let c = run_chain(&sim.noisy, &cfg(6)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace, c.trace);
    assert_eq!(a.accumulator, c.accumulator);
    assert_eq!(a.state, c.state);
    let d = run_chain(&sim.noisy, &SamplerConfig { seed: 100, ..cfg(1) }).unwrap();
    assert_ne!(a.trace, d.trace);
}

#[test]
fn trace_phases_and_lengths() {
    let sim = generate(&SimSpec {
        dims: vec![6, 6, 6],
        rank: 2,
        factor_density: 0.5,
        noise_p: 0.05,
        seed: 2,
    })
    .unwrap();
    let cfg = SamplerConfig {
        rank: 2,
        seed: 1,
        max_burn_in_sweeps: 15,
        convergence_tol: 0.0,
        n_samples: 7,
        ..SamplerConfig::default()
    };
    let chain = run_chain(&sim.noisy, &cfg).unwrap();
    assert!(!chain.trace.converged);
    assert_eq!(chain.trace.burn_in_sweeps, 15);
    assert_eq!(chain.trace.records.len(), 22);
    assert_eq!(chain.accumulator.samples_seen(), 7);
    for (i, r) in chain.trace.records.iter().enumerate() {
        assert_eq!(r.sweep, i);
    }
    let mut buf = Vec::new();
    chain.trace.write_ndjson(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.lines().next().unwrap().contains("\"phase\":\"burnin\""));
    assert!(text.lines().last().unwrap().contains("\"phase\":\"sample\""));
}
