//! Gibbs sampling of binary factor entries.
//!
//! The full conditional of `f[n_k, l]` is `σ(λ · f̃ · m)` where `m` sums the
//! signed observations `x̃` over the slice with `n_k` fixed, restricted to
//! entries for which `f[n_k, l]` is relevant: every co-parent in dimension
//! `l` is one and no other dimension `l'` already explains the entry.
//! Missing entries have `x̃ = 0` and drop out of the sum.
//!
//! A sweep of mode `k` first computes, for every position of the other
//! modes, the conjunction mask of their factor rows. That mask does not
//! depend on the row being updated, so it is shared by all rows. Positions
//! are bucketed by the latent dimensions their mask contains; updating
//! `f[n_k, l]` then visits only the bucket for `l` (the relevance check) and
//! skips entries where the mask intersects the current row outside `l` (the
//! explaining-away check). Rows are independent given the other modes and
//! are updated in parallel, each with its own counter-addressed random stream.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bit, logit, sigmoid, FactorMatrix, ModelState, NoiseModel};
use crate::rng::{self, Domain};
use crate::tensor::{ObservedTensor, MISSING};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub rank: usize,
    pub max_burn_in_sweeps: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
    pub lambda_init: f64,
    pub alpha: f64,
    pub beta: f64,
    pub update_lambda_during_sampling: bool,
    /// Keep `λ` at `lambda_init` for the whole chain.
    pub fix_lambda: bool,
    /// Visit modes in a freshly shuffled order each sweep.
    pub random_scan: bool,
    /// Independent burn-in runs; sampling continues from the one that ends
    /// with the highest log-likelihood.
    pub restarts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            rank: 5,
            max_burn_in_sweeps: 500,
            convergence_window: 20,
            convergence_tol: 1e-3,
            n_samples: 50,
            seed: 0,
            threads: 0,
            lambda_init: 0.5,
            alpha: 1.0,
            beta: 1.0,
            update_lambda_during_sampling: true,
            fix_lambda: false,
            random_scan: false,
            restarts: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(Error::arg("rank must be at least 1"));
        }
        if self.n_samples < 1 {
            return Err(Error::arg("n_samples must be at least 1"));
        }
        if self.restarts < 1 {
            return Err(Error::arg("restarts must be at least 1"));
        }
        if self.convergence_window < 2 {
            return Err(Error::arg("convergence_window must be at least 2"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::arg("convergence_tol must be non-negative"));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            return Err(Error::arg("lambda_init must be finite and non-negative"));
        }
        NoiseModel::new(self.lambda_init, self.alpha, self.beta)?;
        Ok(())
    }

    fn noise(&self) -> NoiseModel {
        NoiseModel {
            lambda: self.lambda_init,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

/// Running sums over posterior samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorAccumulator {
    dims: Vec<usize>,
    rank: usize,
    labels: Vec<usize>,
    factor_mean_sums: Vec<Vec<f64>>,
    predictive_sums: Vec<f64>,
    samples_seen: usize,
}

impl PosteriorAccumulator {
    pub fn new(dims: &[usize], rank: usize) -> Self {
        Self::with_labels(dims, (0..rank).collect())
    }

    pub fn with_labels(dims: &[usize], labels: Vec<usize>) -> Self {
        let rank = labels.len();
        Self {
            dims: dims.to_vec(),
            rank,
            labels,
            factor_mean_sums: dims.iter().map(|&n| vec![0.0; n * rank]).collect(),
            predictive_sums: vec![0.0; dims.iter().product()],
            samples_seen: 0,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    pub fn predictive_sums(&self) -> &[f64] {
        &self.predictive_sums
    }

    /// Adds one posterior sample: its factor bits and, per entry,
    /// `p(x = 1 | sample)` at the sample's `λ`.
    pub fn record(&mut self, state: &ModelState) -> Result<()> {
        state.check_dims(&self.dims)?;
        if state.rank() != self.rank {
            return Err(Error::arg(format!(
                "sample has rank {} but accumulator rank is {}",
                state.rank(),
                self.rank
            )));
        }
        for (sums, f) in self.factor_mean_sums.iter_mut().zip(state.factors()) {
            for n in 0..f.rows() {
                for l in 0..self.rank {
                    if f.get(n, l) {
                        sums[n * self.rank + l] += 1.0;
                    }
                }
            }
        }
        let p_active = sigmoid(state.noise.lambda);
        let p_inactive = sigmoid(-state.noise.lambda);
        let sums = &mut self.predictive_sums;
        state.for_each_product(|off, active| {
            sums[off] += if active { p_active } else { p_inactive };
        });
        self.samples_seen += 1;
        Ok(())
    }

    fn require_samples(&self) -> Result<f64> {
        if self.samples_seen == 0 {
            return Err(Error::State("accumulator holds no samples".into()));
        }
        Ok(self.samples_seen as f64)
    }

    /// Posterior mean of every entry of mode `k`, row-major `N_k × L`.
    pub fn factor_means(&self, k: usize) -> Result<Vec<f64>> {
        let s = self.require_samples()?;
        Ok(self.factor_mean_sums[k].iter().map(|v| v / s).collect())
    }

    pub fn predictive_means(&self) -> Result<Vec<f64>> {
        let s = self.require_samples()?;
        Ok(self.predictive_sums.iter().map(|v| v / s).collect())
    }

    /// Marginal MAP factors: mean > ½ rounds to one, ties to zero.
    pub fn map_factors(&self) -> Result<Vec<FactorMatrix>> {
        (0..self.dims.len())
            .map(|k| {
                let means = self.factor_means(k)?;
                Ok(FactorMatrix::from_fn(k, self.dims[k], self.rank, |n, l| {
                    means[n * self.rank + l] > 0.5
                }))
            })
            .collect()
    }

    pub fn map_state(&self, noise: NoiseModel) -> Result<ModelState> {
        ModelState::with_labels(self.map_factors()?, noise, self.labels.clone())
    }

    /// Builds an accumulator from explicit sums, e.g. for reconstruction
    /// from stored factor means.
    pub fn from_parts(
        dims: &[usize],
        labels: Vec<usize>,
        factor_mean_sums: Vec<Vec<f64>>,
        predictive_sums: Vec<f64>,
        samples_seen: usize,
    ) -> Result<Self> {
        let rank = labels.len();
        if factor_mean_sums.len() != dims.len()
            || factor_mean_sums.iter().zip(dims).any(|(s, &n)| s.len() != n * rank)
            || predictive_sums.len() != dims.iter().product::<usize>()
        {
            return Err(Error::arg("accumulator parts do not match dims and rank"));
        }
        let bound = samples_seen as f64;
        let in_range = |v: &f64| (0.0..=bound).contains(v);
        if !factor_mean_sums.iter().flatten().all(in_range) || !predictive_sums.iter().all(in_range) {
            return Err(Error::arg("accumulator sums must lie in [0, samples_seen]"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            rank,
            labels,
            factor_mean_sums,
            predictive_sums,
            samples_seen,
        })
    }

    /// Writes the posterior means of mode `k` as CSV.
    pub fn write_mean_csv<W: Write>(&self, k: usize, w: W) -> Result<()> {
        let means = self.factor_means(k)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.labels.iter().map(|l| format!("l{l}")))?;
        for row in means.chunks(self.rank.max(1)).take(self.dims[k]) {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        if self.rank == 0 {
            for _ in 0..self.dims[k] {
                out.write_record(std::iter::empty::<&str>())?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "burnin")]
    BurnIn,
    #[serde(rename = "sample")]
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sweep: usize,
    pub sigma_lambda: f64,
    /// `None` when the tensor has no observed entries.
    pub train_accuracy: Option<f64>,
    pub phase: Phase,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// False when burn-in hit `max_burn_in_sweeps` without converging.
    pub converged: bool,
    pub burn_in_sweeps: usize,
    /// Which burn-in run the samples continue from.
    pub restart: usize,
}

impl Trace {
    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

#[derive(Clone, Debug)]
pub struct ChainResult {
    pub accumulator: PosteriorAccumulator,
    pub state: ModelState,
    pub trace: Trace,
}

fn check_coordinates(state: &ModelState, k: usize, n_k: usize, l: usize) -> Result<()> {
    if k >= state.ndim() || n_k >= state.factor(k).rows() || l >= state.rank() {
        return Err(Error::OutOfBounds {
            index: vec![k, n_k, l],
            dims: vec![state.ndim(), state.factor(k.min(state.ndim() - 1)).rows(), state.rank()],
        });
    }
    Ok(())
}

/// Whether `f[n_k, l]` can change the likelihood of the entry at `idx`.
///
/// Stops at the first inactive co-parent in dimension `l`, then at the first
/// other dimension that is fully active at `idx`.
pub fn relevance_indicator(state: &ModelState, k: usize, n_k: usize, l: usize, idx: &[usize]) -> Result<bool> {
    check_coordinates(state, k, n_k, l)?;
    if idx.len() != state.ndim() || idx[k] != n_k || idx.iter().zip(state.factors()).any(|(&i, f)| i >= f.rows()) {
        return Err(Error::OutOfBounds {
            index: idx.to_vec(),
            dims: state.dims(),
        });
    }
    Ok(relevant(state, k, l, idx))
}

fn relevant(state: &ModelState, k: usize, l: usize, idx: &[usize]) -> bool {
    for (j, (f, &n)) in state.factors().iter().zip(idx).enumerate() {
        if j != k && !f.get(n, l) {
            return false;
        }
    }
    'dims: for other in (0..state.rank()).filter(|&o| o != l) {
        for (f, &n) in state.factors().iter().zip(idx) {
            if !f.get(n, other) {
                continue 'dims;
            }
        }
        return false;
    }
    true
}

/// The signed count `m = Σ x̃ · M` over the slice with `n_k` fixed.
pub fn conditional_count(state: &ModelState, t: &ObservedTensor, k: usize, n_k: usize, l: usize) -> Result<i64> {
    check_coordinates(state, k, n_k, l)?;
    state.check_dims(t.dims())?;
    let dims = t.dims();
    let strides = t.strides();
    let mut stack = [0usize; 8];
    let mut heap = Vec::new();
    let idx: &mut [usize] = if dims.len() <= stack.len() {
        &mut stack[..dims.len()]
    } else {
        heap.resize(dims.len(), 0);
        &mut heap
    };
    idx[k] = n_k;
    let mut offset = n_k * strides[k];
    let mut m = 0i64;
    loop {
        let x = t.entries()[offset];
        if x != MISSING && relevant(state, k, l, idx) {
            m += i64::from(x);
        }
        // advance every mode except k
        let mut d = dims.len();
        loop {
            if d == 0 {
                return Ok(m);
            }
            d -= 1;
            if d == k {
                continue;
            }
            idx[d] += 1;
            offset += strides[d];
            if idx[d] < dims[d] {
                break;
            }
            offset -= dims[d] * strides[d];
            idx[d] = 0;
        }
    }
}

/// `p(f[n_k, l] = 1 | everything else)`.
pub fn conditional_prob_one(state: &ModelState, t: &ObservedTensor, k: usize, n_k: usize, l: usize) -> Result<f64> {
    let m = conditional_count(state, t, k, n_k, l)?;
    Ok(sigmoid(state.noise.lambda * m as f64))
}

/// Conditional probability of the current value of `f[n_k, l]`.
pub fn conditional_prob(state: &ModelState, t: &ObservedTensor, k: usize, n_k: usize, l: usize) -> Result<f64> {
    let m = conditional_count(state, t, k, n_k, l)?;
    let sign = f64::from(state.factor(k).signed(n_k, l));
    Ok(sigmoid(state.noise.lambda * sign * m as f64))
}

/// Shared, read-only context for sweeping one mode.
pub(crate) struct ModeSweep {
    words: usize,
    /// Offset of each position of the other modes with `n_k = 0`.
    offsets: Vec<usize>,
    /// Conjunction of the other modes' rows at each position.
    masks: Vec<u64>,
    /// Positions whose mask contains dimension `l`.
    by_dim: Vec<Vec<u32>>,
    stride: usize,
}

impl ModeSweep {
    pub(crate) fn new(state: &ModelState, dims: &[usize], k: usize) -> Self {
        let words = state.words();
        let rank = state.rank();
        let kk = dims.len();
        let strides = crate::tensor::strides_for(dims);
        let others: Vec<usize> = (0..kk).filter(|&d| d != k).collect();
        let positions: usize = others.iter().map(|&d| dims[d]).product();

        let mut offsets = Vec::with_capacity(positions);
        let mut masks = vec![0u64; positions * words];
        let mut by_dim: Vec<Vec<u32>> = vec![Vec::new(); rank];
        let mut idx = vec![0usize; others.len()];
        for j in 0..positions {
            offsets.push(others.iter().zip(&idx).map(|(&d, &i)| i * strides[d]).sum());
            let mask = &mut masks[j * words..(j + 1) * words];
            mask.fill(u64::MAX);
            for (&d, &i) in others.iter().zip(&idx) {
                let row = state.factor(d).row_mask(i);
                let mut any = 0;
                for (m, &r) in mask.iter_mut().zip(row) {
                    *m &= r;
                    any |= *m;
                }
                if any == 0 {
                    break;
                }
            }
            for (w, &word) in mask.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let l = w * 64 + bits.trailing_zeros() as usize;
                    if l < rank {
                        by_dim[l].push(j as u32);
                    }
                    bits &= bits - 1;
                }
            }
            for p in (0..idx.len()).rev() {
                idx[p] += 1;
                if idx[p] < dims[others[p]] {
                    break;
                }
                idx[p] = 0;
            }
        }
        Self {
            words,
            offsets,
            masks,
            by_dim,
            stride: strides[k],
        }
    }

    /// The signed count for dimension `l` of the row at `n_k` whose current
    /// bits are `row`.
    #[inline]
    pub(crate) fn count(&self, entries: &[i8], n_k: usize, row: &[u64], l: usize) -> i64 {
        let base = n_k * self.stride;
        let (lw, lb) = bit(l);
        let mut m = 0i64;
        for &j in &self.by_dim[l] {
            let j = j as usize;
            let x = entries[base + self.offsets[j]];
            if x == MISSING {
                continue;
            }
            let mask = &self.masks[j * self.words..(j + 1) * self.words];
            let explained = mask.iter().zip(row).enumerate().any(|(w, (&c, &r))| {
                let shared = c & r;
                (if w == lw { shared & !lb } else { shared }) != 0
            });
            if !explained {
                m += i64::from(x);
            }
        }
        m
    }
}

/// Resamples every entry of mode `k` from its full conditional.
///
/// Entries of a row are updated left to right in `l`; rows run in parallel
/// on the current rayon pool. The random stream of row `n` is addressed by
/// `(seed, sweep, k, n)`, so the result does not depend on the thread count.
pub fn sweep_mode(state: &mut ModelState, t: &ObservedTensor, k: usize, seed: u64, sweep: u64) -> Result<()> {
    state.check_dims(t.dims())?;
    if k >= state.ndim() {
        return Err(Error::arg(format!("mode {k} out of range")));
    }
    let rank = state.rank();
    if rank == 0 {
        return Ok(());
    }
    let ctx = ModeSweep::new(state, t.dims(), k);
    let lambda = state.noise.lambda;
    let words = state.words();
    let entries = t.entries();
    state
        .factor_mut(k)
        .bits_mut()
        .par_chunks_mut(words)
        .enumerate()
        .for_each(|(n, row)| {
            let mut rng = rng::stream(seed, Domain::Sweep, sweep, k as u64, n as u64);
            for l in 0..rank {
                let m = ctx.count(entries, n, row, l);
                let p = sigmoid(lambda * m as f64);
                let u: f64 = rng.gen();
                let (w, b) = bit(l);
                if u < p {
                    row[w] |= b;
                } else {
                    row[w] &= !b;
                }
            }
        });
    Ok(())
}

/// `logit((α + correct) / (α + β + observed))`.
pub fn lambda_map(correct: usize, observed: usize, alpha: f64, beta: f64) -> f64 {
    logit((alpha + correct as f64) / (alpha + beta + observed as f64))
}

/// Sets `λ` to its conditional MAP given the current factors and returns
/// it. Missing entries count toward neither the numerator nor the
/// denominator.
pub fn update_lambda(state: &mut ModelState, t: &ObservedTensor) -> Result<f64> {
    let (correct, observed) = state.count_correct(t)?;
    state.noise.lambda = lambda_map(correct, observed, state.noise.alpha, state.noise.beta);
    Ok(state.noise.lambda)
}

/// Factors drawn i.i.d. Bernoulli(½) from the chain's seed.
pub fn initial_state(dims: &[usize], cfg: &SamplerConfig) -> Result<ModelState> {
    cfg.validate()?;
    let factors = dims
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = rng::stream(cfg.seed, Domain::FactorInit, k as u64, 0, 0);
            FactorMatrix::from_fn(k, n, cfg.rank, |_, _| rng.gen_bool(0.5))
        })
        .collect();
    ModelState::new(factors, cfg.noise())
}

/// Runs burn-in to convergence and then collects `n_samples` sweeps.
pub fn run_chain(t: &ObservedTensor, cfg: &SamplerConfig) -> Result<ChainResult> {
    run_chain_observed(t, cfg, |_| {})
}

/// Like [`run_chain`], calling `on_sample` with the state after every
/// sampling-phase sweep.
pub fn run_chain_observed(
    t: &ObservedTensor,
    cfg: &SamplerConfig,
    on_sample: impl FnMut(&ModelState) + Send,
) -> Result<ChainResult> {
    run_chain_with(t, |seed| initial_state(t.dims(), &SamplerConfig { seed, ..cfg.clone() }), cfg, on_sample)
}

/// Continues a chain from a given state; `cfg.rank` is ignored in favour of
/// the state's rank. The noise prior comes from `cfg`; `λ` from the state.
/// With several restarts every burn-in begins at `state`.
pub fn run_chain_from(
    t: &ObservedTensor,
    state: ModelState,
    cfg: &SamplerConfig,
    on_sample: impl FnMut(&ModelState) + Send,
) -> Result<ChainResult> {
    run_chain_with(t, |_| Ok(state.clone()), cfg, on_sample)
}

/// Seed of burn-in run `r`; the first run uses the configured seed.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        rng::derive_seed(seed, Domain::FactorInit as u64, r as u64)
    }
}

struct BurnIn {
    state: ModelState,
    trace: Trace,
    seed: u64,
    log_likelihood: f64,
}

fn burn_in(t: &ObservedTensor, mut state: ModelState, cfg: &SamplerConfig, seed: u64) -> Result<BurnIn> {
    state.check_dims(t.dims())?;
    state.noise.alpha = cfg.alpha;
    state.noise.beta = cfg.beta;
    let mut trace = Trace::default();
    let mut sigmas: Vec<f64> = Vec::new();
    while trace.records.len() < cfg.max_burn_in_sweeps {
        let sweep = trace.records.len() as u64;
        let record = full_sweep(&mut state, t, cfg, seed, sweep, Phase::BurnIn, true)?;
        sigmas.push(record.sigma_lambda);
        trace.records.push(record);
        if converged(&sigmas, cfg.convergence_window, cfg.convergence_tol) {
            trace.converged = true;
            break;
        }
    }
    trace.burn_in_sweeps = trace.records.len();
    let log_likelihood = state.total_log_likelihood_observed(t)?;
    Ok(BurnIn {
        state,
        trace,
        seed,
        log_likelihood,
    })
}

fn run_chain_with(
    t: &ObservedTensor,
    start: impl Fn(u64) -> Result<ModelState> + Send + Sync,
    cfg: &SamplerConfig,
    mut on_sample: impl FnMut(&ModelState) + Send,
) -> Result<ChainResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;

    pool.install(move || {
        let mut best: Option<BurnIn> = None;
        for r in 0..cfg.restarts {
            let seed = restart_seed(cfg.seed, r);
            let mut run = burn_in(t, start(seed)?, cfg, seed)?;
            run.trace.restart = r;
            // strict comparison keeps the earliest run on ties
            if best.as_ref().is_none_or(|b| run.log_likelihood > b.log_likelihood) {
                best = Some(run);
            }
        }
        let BurnIn {
            mut state,
            mut trace,
            seed,
            ..
        } = best.expect("restarts validated to be at least 1");

        let mut accumulator = PosteriorAccumulator::with_labels(t.dims(), state.labels().to_vec());
        let mut sweep = trace.records.len() as u64;
        for _ in 0..cfg.n_samples {
            let record = full_sweep(&mut state, t, cfg, seed, sweep, Phase::Sample, cfg.update_lambda_during_sampling)?;
            trace.records.push(record);
            accumulator.record(&state)?;
            on_sample(&state);
            sweep += 1;
        }
        Ok(ChainResult {
            accumulator,
            state,
            trace,
        })
    })
}

fn full_sweep(
    state: &mut ModelState,
    t: &ObservedTensor,
    cfg: &SamplerConfig,
    seed: u64,
    sweep: u64,
    phase: Phase,
    update_noise: bool,
) -> Result<TraceRecord> {
    let mut order: Vec<usize> = (0..state.ndim()).collect();
    if cfg.random_scan {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::stream(seed, Domain::ModeOrder, sweep, 0, 0));
    }
    for k in order {
        sweep_mode(state, t, k, seed, sweep)?;
    }
    let (correct, observed) = state.count_correct(t)?;
    if update_noise && !cfg.fix_lambda {
        state.noise.lambda = lambda_map(correct, observed, state.noise.alpha, state.noise.beta);
    }
    Ok(TraceRecord {
        sweep: sweep as usize,
        sigma_lambda: state.noise.sigma(),
        train_accuracy: (observed > 0).then(|| correct as f64 / observed as f64),
        phase,
    })
}

/// Mean of the last `window` values against the mean of the `window` before.
fn converged(sigmas: &[f64], window: usize, tol: f64) -> bool {
    if sigmas.len() < 2 * window {
        return false;
    }
    let tail = &sigmas[sigmas.len() - 2 * window..];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&tail[window..]) - mean(&tail[..window])).abs() < tol
}
