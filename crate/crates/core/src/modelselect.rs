//! Choosing the number of latent dimensions.
//!
//! Two procedures:
//! - pruning: start large, and after convergence remove every dimension
//!   whose removal from the marginal MAP factors does not lose correctly
//!   reconstructed observations; re-run burn-in and repeat until every
//!   remaining dimension contributes;
//! - cross-validation: hide a fraction of the observations, fit every
//!   candidate rank, and keep the rank with the best held-out accuracy.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::reconstruct::{accuracy, posterior_predictive, Scope};
use crate::rng;
use crate::sampler::{run_chain, run_chain_from, ChainResult, SamplerConfig};
use crate::tensor::{mask_holdout, ObservedTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Occam,
    CrossValidation,
}

/// One fitted candidate: a pruning round or a cross-validated rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub rank: usize,
    /// Held-out accuracy (cross-validation) or MAP training log-likelihood
    /// (pruning).
    pub score: f64,
    pub seed: u64,
    /// Latent labels removed after this round (pruning only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<usize>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSelectionReport {
    pub method: SelectionMethod,
    pub chosen_rank: usize,
    pub candidates: Vec<CandidateScore>,
}

impl RankSelectionReport {
    pub fn seeds(&self) -> Vec<u64> {
        self.candidates.iter().map(|c| c.seed).collect()
    }

    /// One JSON record per candidate followed by a summary record.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let to_io = |e: serde_json::Error| Error::Io(e.into());
        for c in &self.candidates {
            let mut value = serde_json::to_value(c).map_err(to_io)?;
            value["record"] = "candidate".into();
            serde_json::to_writer(&mut w, &value).map_err(to_io)?;
            w.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "record": "summary",
            "method": self.method,
            "chosen_rank": self.chosen_rank,
        });
        serde_json::to_writer(&mut w, &summary).map_err(to_io)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for RankSelectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let method = match self.method {
            SelectionMethod::Occam => "occam",
            SelectionMethod::CrossValidation => "cross_validation",
        };
        writeln!(f, "method: {method}")?;
        let score = match self.method {
            SelectionMethod::Occam => "map_log_lik",
            SelectionMethod::CrossValidation => "heldout_acc",
        };
        writeln!(f, "{:>6}  {:>14}  {:>20}  {:>9}  removed", "rank", score, "seed", "converged")?;
        for c in &self.candidates {
            let removed: Vec<String> = c.removed.iter().map(|l| format!("l{l}")).collect();
            writeln!(
                f,
                "{:>6}  {:>14.6}  {:>20}  {:>9}  {}",
                c.rank,
                c.score,
                c.seed,
                c.converged,
                removed.join(",")
            )?;
        }
        writeln!(f, "chosen rank: {}", self.chosen_rank)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccamOptions {
    /// A dimension contributes only if removing it loses more than this
    /// many correctly reconstructed observations.
    pub min_gain: usize,
    pub max_rounds: usize,
}

impl Default for OccamOptions {
    fn default() -> Self {
        Self {
            min_gain: 0,
            max_rounds: 50,
        }
    }
}

/// Marks which latent dimensions of `map` contribute.
///
/// Dimensions are tested in order against the model with all previously
/// rejected dimensions already removed, so of two identical dimensions
/// exactly one is kept.
pub fn contributing_dims(map: &ModelState, t: &ObservedTensor, min_gain: usize) -> Result<Vec<bool>> {
    let mut keep = vec![true; map.rank()];
    let mut current = map.clone();
    let (mut baseline, _) = current.count_correct(t)?;
    for l in 0..map.rank() {
        let mut without = current.clone();
        for k in 0..without.ndim() {
            without.factor_mut(k).set_column(l, false);
        }
        let (correct, _) = without.count_correct(t)?;
        if correct + min_gain >= baseline {
            keep[l] = false;
            current = without;
            baseline = correct;
        }
    }
    Ok(keep)
}

/// Pruning-based selection starting from `initial_rank` dimensions.
///
/// Returns the report together with the final chain.
pub fn occam_select(
    t: &ObservedTensor,
    initial_rank: usize,
    cfg: &SamplerConfig,
    opts: &OccamOptions,
) -> Result<(RankSelectionReport, ChainResult)> {
    if initial_rank == 0 {
        return Err(Error::arg("initial rank must be at least 1"));
    }
    let mut candidates = Vec::new();
    let mut start: Option<ModelState> = None;
    for round in 0..opts.max_rounds.max(1) {
        let round_cfg = SamplerConfig {
            rank: initial_rank,
            seed: if round == 0 { cfg.seed } else { rng::derive_seed(cfg.seed, 0x0cca, round as u64) },
            ..cfg.clone()
        };
        let chain = match start.take() {
            None => run_chain(t, &round_cfg)?,
            Some(state) => run_chain_from(t, state, &round_cfg, |_| {})?,
        };
        let map = chain.accumulator.map_state(chain.state.noise)?;
        let keep = contributing_dims(&map, t, opts.min_gain)?;
        let removed: Vec<usize> = keep
            .iter()
            .zip(map.labels())
            .filter(|(&k, _)| !k)
            .map(|(_, &label)| label)
            .collect();
        candidates.push(CandidateScore {
            rank: map.rank(),
            score: map.total_log_likelihood_observed(t)?,
            seed: round_cfg.seed,
            removed: removed.clone(),
            converged: chain.trace.converged,
        });
        let last_round = round + 1 == opts.max_rounds.max(1);
        if removed.is_empty() || last_round {
            let report = RankSelectionReport {
                method: SelectionMethod::Occam,
                chosen_rank: if removed.is_empty() { map.rank() } else { map.rank() - removed.len() },
                candidates,
            };
            return Ok((report, chain));
        }
        let kept: Vec<usize> = (0..keep.len()).filter(|&l| keep[l]).collect();
        if kept.is_empty() {
            // nothing left to re-converge
            let report = RankSelectionReport {
                method: SelectionMethod::Occam,
                chosen_rank: 0,
                candidates,
            };
            return Ok((report, chain));
        }
        // restart burn-in from the surviving MAP dimensions
        let mut next = map.select_dims(&kept);
        next.noise = chain.state.noise;
        start = Some(next);
    }
    unreachable!("loop returns on its last round")
}

/// Cross-validated selection over `ranks`, all scored on one shared mask.
/// Ties go to the smallest rank.
pub fn cv_select(
    t: &ObservedTensor,
    ranks: &[usize],
    holdout_fraction: f64,
    cfg: &SamplerConfig,
) -> Result<RankSelectionReport> {
    if ranks.is_empty() {
        return Err(Error::arg("no candidate ranks given"));
    }
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::arg(format!("hold-out fraction {holdout_fraction} not in (0, 1)")));
    }
    let (train, heldout) = mask_holdout(t, holdout_fraction, cfg.seed)?;
    if heldout.is_empty() {
        return Err(Error::arg("hold-out mask selected no entries"));
    }
    let mut candidates = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let rank_cfg = SamplerConfig {
            rank,
            seed: rng::derive_seed(cfg.seed, 0xc5, rank as u64),
            ..cfg.clone()
        };
        let chain = run_chain(&train, &rank_cfg)?;
        let recon = posterior_predictive(&chain.accumulator)?;
        candidates.push(CandidateScore {
            rank,
            score: accuracy(&recon, Scope::HeldOut(&heldout))?,
            seed: rank_cfg.seed,
            removed: Vec::new(),
            converged: chain.trace.converged,
        });
    }
    let best = candidates
        .iter()
        .max_by(|a, b| a.score.total_cmp(&b.score).then(b.rank.cmp(&a.rank)))
        .expect("at least one candidate");
    Ok(RankSelectionReport {
        method: SelectionMethod::CrossValidation,
        chosen_rank: best.rank,
        candidates,
    })
}
