//! Random Boolean tensors and the reconstruction benchmark grid.
//!
//! Factors are i.i.d. Bernoulli matrices; the clean tensor is their Boolean
//! product and the noisy tensor flips every entry independently.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorMatrix, ModelState, NoiseModel};
use crate::reconstruct::{accuracy, reconstruct, EstimatorKind, Scope};
use crate::rng::{self, Domain};
use crate::sampler::{run_chain, SamplerConfig};
use crate::tensor::ObservedTensor;

/// `E(X) = 1 − (1 − d^K)^L` for factor density `d`.
pub fn expected_density(factor_density: f64, rank: usize, modes: usize) -> f64 {
    1.0 - (1.0 - factor_density.powi(modes as i32)).powi(rank as i32)
}

/// Factor density whose expected tensor density is `target`.
pub fn density_for_target(target: f64, rank: usize, modes: usize) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::arg(format!("target density {target} not in (0, 1)")));
    }
    if rank == 0 || modes == 0 {
        return Err(Error::arg("rank and number of modes must be positive"));
    }
    let per_dim = 1.0 - (1.0 - target).powf(1.0 / rank as f64);
    Ok(per_dim.powf(1.0 / modes as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub dims: Vec<usize>,
    pub rank: usize,
    pub factor_density: f64,
    pub noise_p: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::arg(format!("invalid dims {:?}", self.dims)));
        }
        if !(self.factor_density > 0.0 && self.factor_density < 1.0) {
            return Err(Error::arg(format!(
                "factor density {} not in (0, 1)",
                self.factor_density
            )));
        }
        if !(0.0..0.5).contains(&self.noise_p) {
            return Err(Error::arg(format!("noise level {} not in [0, 0.5)", self.noise_p)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Simulated {
    pub clean: ObservedTensor,
    pub noisy: ObservedTensor,
    pub truth: Vec<FactorMatrix>,
}

impl Simulated {
    /// The generating factors as a model state with `λ = logit(1 − noise)`,
    /// or a large `λ` for noise-free data.
    pub fn truth_state(&self, noise_p: f64) -> ModelState {
        let lambda = if noise_p > 0.0 {
            crate::model::logit(1.0 - noise_p)
        } else {
            40.0
        };
        ModelState::new(self.truth.clone(), NoiseModel { lambda, alpha: 1.0, beta: 1.0 })
            .expect("generated factors share a rank")
    }
}

pub fn generate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let truth: Vec<FactorMatrix> = spec
        .dims
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = rng::stream(spec.seed, Domain::SimFactors, k as u64, 0, 0);
            FactorMatrix::from_fn(k, n, spec.rank, |_, _| rng.gen_bool(spec.factor_density))
        })
        .collect();
    let state = ModelState::new(truth.clone(), NoiseModel::default())?;
    let product = state.boolean_product();
    let clean = ObservedTensor::from_bits(spec.dims.clone(), &product)?;
    let mut rng = rng::stream(spec.seed, Domain::SimNoise, 0, 0, 0);
    let noisy_bits: Vec<bool> = product
        .iter()
        .map(|&v| if spec.noise_p > 0.0 && rng.gen_bool(spec.noise_p) { !v } else { v })
        .collect();
    let noisy = ObservedTensor::from_bits(spec.dims.clone(), &noisy_bits)?;
    Ok(Simulated { clean, noisy, truth })
}

/// Grid of simulation conditions. Densities are expected tensor densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub densities: Vec<f64>,
    pub noises: Vec<f64>,
    pub repeats: usize,
    /// Rank to fit; `None` fits at the true rank.
    pub rank_fit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: u64,
    pub dims: String,
    pub rank_true: usize,
    pub rank_fit: usize,
    pub factor_density: f64,
    pub noise_p: f64,
    pub estimator: EstimatorKind,
    pub train_acc: f64,
    pub test_acc: f64,
    pub sweeps_to_converge: usize,
    pub wall_ms: u64,
}

struct Cell {
    rank: usize,
    density: f64,
    noise: f64,
    seed: u64,
}

/// Runs every cell of the grid. Each cell simulates a tensor, fits the
/// noisy version and scores every estimator against the noisy training data
/// and the clean tensor. Rows come back in grid order regardless of how
/// cells were scheduled.
pub fn run_bench(grid: &BenchGrid, cfg: &SamplerConfig) -> Result<Vec<BenchRow>> {
    let modes = grid.dims.len();
    let mut cells = Vec::new();
    for &noise in &grid.noises {
        for &density in &grid.densities {
            for &rank in &grid.ranks {
                for rep in 0..grid.repeats {
                    let seed = rng::derive_seed(cfg.seed, cells.len() as u64, rep as u64);
                    cells.push(Cell { rank, density, noise, seed });
                }
            }
        }
    }
    let dims_label = grid
        .dims
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join("x");

    let run_cell = |cell: &Cell| -> Result<Vec<BenchRow>> {
        let factor_density = density_for_target(cell.density, cell.rank, modes)?;
        let sim = generate(&SimSpec {
            dims: grid.dims.clone(),
            rank: cell.rank,
            factor_density,
            noise_p: cell.noise,
            seed: cell.seed,
        })?;
        let rank_fit = grid.rank_fit.unwrap_or(cell.rank);
        let cell_cfg = SamplerConfig {
            rank: rank_fit,
            seed: cell.seed,
            threads: 1,
            ..cfg.clone()
        };
        let started = Instant::now();
        let chain = run_chain(&sim.noisy, &cell_cfg)?;
        let wall_ms = started.elapsed().as_millis() as u64;
        EstimatorKind::ALL
            .iter()
            .map(|&kind| {
                let recon = reconstruct(&chain.accumulator, kind)?;
                Ok(BenchRow {
                    seed: cell.seed,
                    dims: dims_label.clone(),
                    rank_true: cell.rank,
                    rank_fit,
                    factor_density,
                    noise_p: cell.noise,
                    estimator: kind,
                    train_acc: accuracy(&recon, Scope::Observed(&sim.noisy))?,
                    test_acc: accuracy(&recon, Scope::Observed(&sim.clean))?,
                    sweeps_to_converge: chain.trace.burn_in_sweeps,
                    wall_ms,
                })
            })
            .collect()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    let per_cell: Vec<Result<Vec<BenchRow>>> = pool.install(|| cells.par_iter().map(run_cell).collect());
    let mut rows = Vec::with_capacity(per_cell.len() * 3);
    for r in per_cell {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
