//! Factor matrices, noise model and the pointwise likelihood.
//!
//! A factor matrix row is stored as a packed bit mask over latent
//! dimensions, so the conjunction over modes of one tensor entry is a word-wise
//! AND of K rows and the disjunction over latent dimensions is a non-zero test.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ObservedTensor, MISSING, OBSERVED_ONE};

pub(crate) const WORD_BITS: usize = 64;

pub(crate) fn words_for(rank: usize) -> usize {
    rank.div_ceil(WORD_BITS)
}

#[inline]
pub(crate) fn bit(l: usize) -> (usize, u64) {
    (l / WORD_BITS, 1u64 << (l % WORD_BITS))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)` without overflow for large `|z|`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Binary `rows × rank` matrix for one tensor mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorMatrix {
    mode: usize,
    rows: usize,
    rank: usize,
    words: usize,
    bits: Vec<u64>,
}

impl FactorMatrix {
    pub fn zeros(mode: usize, rows: usize, rank: usize) -> Self {
        let words = words_for(rank);
        Self {
            mode,
            rows,
            rank,
            words,
            bits: vec![0; rows * words],
        }
    }

    pub fn from_fn(mode: usize, rows: usize, rank: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(mode, rows, rank);
        for n in 0..rows {
            for l in 0..rank {
                m.set(n, l, f(n, l));
            }
        }
        m
    }

    /// Builds from explicit 0/1 rows; every row must have `rank` entries.
    pub fn from_rows(mode: usize, rank: usize, rows: &[Vec<u8>]) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != rank || r.iter().any(|&v| v > 1)) {
            return Err(Error::arg(format!("row {bad} is not a 0/1 vector of length {rank}")));
        }
        Ok(Self::from_fn(mode, rows.len(), rank, |n, l| rows[n][l] == 1))
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub(crate) fn words(&self) -> usize {
        self.words
    }

    #[inline]
    pub fn get(&self, n: usize, l: usize) -> bool {
        debug_assert!(l < self.rank);
        let (w, b) = bit(l);
        self.bits[n * self.words + w] & b != 0
    }

    #[inline]
    pub fn set(&mut self, n: usize, l: usize, value: bool) {
        debug_assert!(l < self.rank);
        let (w, b) = bit(l);
        let word = &mut self.bits[n * self.words + w];
        if value {
            *word |= b;
        } else {
            *word &= !b;
        }
    }

    /// `2f − 1`.
    pub fn signed(&self, n: usize, l: usize) -> i8 {
        if self.get(n, l) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub(crate) fn row_mask(&self, n: usize) -> &[u64] {
        &self.bits[n * self.words..(n + 1) * self.words]
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u64] {
        &mut self.bits
    }

    pub fn column(&self, l: usize) -> Vec<bool> {
        (0..self.rows).map(|n| self.get(n, l)).collect()
    }

    pub fn set_column(&mut self, l: usize, value: bool) {
        for n in 0..self.rows {
            self.set(n, l, value);
        }
    }

    /// Keeps the listed latent dimensions, in the listed order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        Self::from_fn(self.mode, self.rows, keep.len(), |n, j| self.get(n, keep[j]))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// CSV with header `l<label>,...` and one 0/1 row per index.
    pub fn write_csv<W: Write>(&self, labels: &[usize], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(labels.iter().map(|l| format!("l{l}")))?;
        for n in 0..self.rows {
            out.write_record((0..self.rank).map(|l| if self.get(n, l) { "1" } else { "0" }))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Noise strength `λ` with a Beta(α, β) prior on `σ(λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl NoiseModel {
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        let noise = Self { lambda, alpha, beta };
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be finite, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::arg(format!(
                "prior pseudo-counts must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Probability that an observed entry agrees with the Boolean product.
    pub fn sigma(&self) -> f64 {
        sigmoid(self.lambda)
    }
}

/// Factor matrices for every mode plus the noise model.
///
/// Latent dimensions carry integer labels that survive pruning, so traces of
/// a dimension remain identifiable after others are removed.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    factors: Vec<FactorMatrix>,
    pub noise: NoiseModel,
    labels: Vec<usize>,
}

impl ModelState {
    pub fn new(factors: Vec<FactorMatrix>, noise: NoiseModel) -> Result<Self> {
        let rank = factors.first().map(|f| f.rank()).unwrap_or(0);
        let labels = (0..rank).collect();
        Self::with_labels(factors, noise, labels)
    }

    pub fn with_labels(factors: Vec<FactorMatrix>, noise: NoiseModel, labels: Vec<usize>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::arg("a model needs at least 2 factor matrices"));
        }
        let rank = factors[0].rank();
        for (k, f) in factors.iter().enumerate() {
            if f.rank() != rank {
                return Err(Error::arg(format!(
                    "factor {k} has rank {} but factor 0 has rank {rank}",
                    f.rank()
                )));
            }
            if f.mode() != k {
                return Err(Error::arg(format!("factor at position {k} is labelled mode {}", f.mode())));
            }
        }
        if labels.len() != rank {
            return Err(Error::arg(format!("{} labels for rank {rank}", labels.len())));
        }
        noise.validate()?;
        Ok(Self {
            factors,
            noise,
            labels,
        })
    }

    pub fn factors(&self) -> &[FactorMatrix] {
        &self.factors
    }

    pub fn factor(&self, k: usize) -> &FactorMatrix {
        &self.factors[k]
    }

    pub fn factor_mut(&mut self, k: usize) -> &mut FactorMatrix {
        &mut self.factors[k]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rank(&self) -> usize {
        self.factors[0].rank()
    }

    pub fn ndim(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    pub(crate) fn words(&self) -> usize {
        self.factors[0].words()
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.factors.len() != dims.len() || self.factors.iter().zip(dims).any(|(f, &n)| f.rows() != n) {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: dims.to_vec(),
            });
        }
        Ok(())
    }

    fn check_index(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.ndim() || idx.iter().zip(&self.factors).any(|(&i, f)| i >= f.rows()) {
            return Err(Error::OutOfBounds {
                index: idx.to_vec(),
                dims: self.dims(),
            });
        }
        Ok(())
    }

    /// Keeps the listed latent dimensions (by position) with their labels.
    pub fn select_dims(&self, keep: &[usize]) -> Self {
        Self {
            factors: self.factors.iter().map(|f| f.select_columns(keep)).collect(),
            noise: self.noise,
            labels: keep.iter().map(|&j| self.labels[j]).collect(),
        }
    }

    /// Whether any latent dimension has all factors active at `idx`.
    pub fn deterministic_product_entry(&self, idx: &[usize]) -> Result<bool> {
        self.check_index(idx)?;
        Ok(self.product_at(idx))
    }

    pub(crate) fn product_at(&self, idx: &[usize]) -> bool {
        (0..self.words()).any(|w| {
            let mut acc = u64::MAX;
            for (f, &n) in self.factors.iter().zip(idx) {
                acc &= f.row_mask(n)[w];
                if acc == 0 {
                    break;
                }
            }
            acc != 0
        })
    }

    /// `ln p(x | state)` for a signed observation; a missing entry gives `ln ½`.
    pub fn entry_log_likelihood(&self, idx: &[usize], x: i8) -> Result<f64> {
        self.check_index(idx)?;
        if !(-1..=1).contains(&x) {
            return Err(Error::arg(format!("observation {x} outside {{-1, 0, 1}}")));
        }
        if x == MISSING {
            return Ok(-std::f64::consts::LN_2);
        }
        let sign = if self.product_at(idx) { 1.0 } else { -1.0 };
        Ok(log_sigmoid(self.noise.lambda * f64::from(x) * sign))
    }

    /// Sum of per-entry log-likelihoods, missing entries included as `ln ½`.
    pub fn total_log_likelihood(&self, t: &ObservedTensor) -> Result<f64> {
        self.check_dims(t.dims())?;
        let lambda = self.noise.lambda;
        let mut total = 0.0;
        self.for_each_product(|off, active| {
            total += match t.entries()[off] {
                MISSING => -std::f64::consts::LN_2,
                x => log_sigmoid(lambda * f64::from(x) * if active { 1.0 } else { -1.0 }),
            };
        });
        Ok(total)
    }

    /// Same value as [`Self::total_log_likelihood`], computed from the
    /// correct/incorrect counts over observed entries plus the constant
    /// contribution of missing entries.
    pub fn total_log_likelihood_observed(&self, t: &ObservedTensor) -> Result<f64> {
        let (correct, observed) = self.count_correct(t)?;
        let missing = t.len() - observed;
        let lambda = self.noise.lambda;
        Ok(correct as f64 * log_sigmoid(lambda)
            + (observed - correct) as f64 * log_sigmoid(-lambda)
            - missing as f64 * std::f64::consts::LN_2)
    }

    /// `(#observed entries matching the Boolean product, #observed)`.
    pub fn count_correct(&self, t: &ObservedTensor) -> Result<(usize, usize)> {
        self.check_dims(t.dims())?;
        let entries = t.entries();
        let (mut correct, mut observed) = (0usize, 0usize);
        self.for_each_product(|off, active| {
            let x = entries[off];
            if x != MISSING {
                observed += 1;
                if (x == OBSERVED_ONE) == active {
                    correct += 1;
                }
            }
        });
        Ok((correct, observed))
    }

    /// The Boolean product at every entry, row-major.
    pub fn boolean_product(&self) -> Vec<bool> {
        let total: usize = self.dims().iter().product();
        let mut out = vec![false; total];
        self.for_each_product(|off, active| out[off] = active);
        out
    }

    /// Visits entries in row-major order, passing whether the product is one.
    ///
    /// Conjunctions are accumulated as prefix masks along the modes so each
    /// AND is shared by all entries below it.
    pub fn for_each_product(&self, mut visit: impl FnMut(usize, bool)) {
        let k = self.ndim();
        let words = self.words();
        let dims = self.dims();
        let mut prefix = vec![u64::MAX; (k + 1) * words];
        let mut idx = vec![0usize; k];
        let total: usize = dims.iter().product();
        // Modes at or after `fresh` need their prefix mask recomputed.
        let mut fresh = 0;
        for off in 0..total {
            for d in fresh..k {
                let row = self.factors[d].row_mask(idx[d]);
                let (head, tail) = prefix.split_at_mut((d + 1) * words);
                let prev = &head[d * words..];
                for ((dst, &p), &r) in tail[..words].iter_mut().zip(prev).zip(row) {
                    *dst = p & r;
                }
            }
            let active = prefix[k * words..].iter().any(|&w| w != 0);
            visit(off, active);
            // advance, remembering the outermost mode that changed
            fresh = k;
            for d in (0..k).rev() {
                idx[d] += 1;
                fresh = d;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Applies the same permutation of latent dimensions to every mode.
    pub fn permute_dims(&self, perm: &[usize]) -> Result<Self> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.rank()).collect::<Vec<_>>() {
            return Err(Error::arg(format!("{perm:?} is not a permutation of 0..{}", self.rank())));
        }
        Ok(self.select_dims(perm))
    }
}
