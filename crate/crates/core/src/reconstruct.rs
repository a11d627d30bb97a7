//! Reconstruction estimators and accuracy.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelState, NoiseModel};
use crate::sampler::PosteriorAccumulator;
use crate::tensor::{HeldOutEntry, ObservedTensor, MISSING, OBSERVED_ONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Average over samples of `p(x = 1 | sample)`.
    PosteriorPredictive,
    /// Boolean product of the marginal MAP factors.
    FactorMap,
    /// `1 − ∏_l (1 − ∏_n f̂)` from posterior factor means.
    FactorMean,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::PosteriorPredictive,
        EstimatorKind::FactorMap,
        EstimatorKind::FactorMean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::PosteriorPredictive => "posterior_predictive",
            EstimatorKind::FactorMap => "factor_map",
            EstimatorKind::FactorMean => "factor_mean",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub dims: Vec<usize>,
    pub probabilities: Vec<f64>,
    /// One iff the probability exceeds ½; exactly ½ rounds to zero.
    pub hard: Vec<bool>,
    pub kind: EstimatorKind,
}

impl Reconstruction {
    pub fn from_probabilities(dims: Vec<usize>, probabilities: Vec<f64>, kind: EstimatorKind) -> Self {
        let hard = probabilities.iter().map(|&p| p > 0.5).collect();
        Self {
            dims,
            probabilities,
            hard,
            kind,
        }
    }

    /// The hard reconstruction as a fully observed tensor.
    pub fn to_tensor(&self) -> Result<ObservedTensor> {
        ObservedTensor::from_bits(self.dims.clone(), &self.hard)
    }

    /// CSV `i1,..,iK,probability` for every entry, row-major.
    pub fn write_probability_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dims.len()).map(|k| format!("i{k}")).collect();
        header.push("probability".into());
        out.write_record(&header)?;
        let mut idx = vec![0usize; self.dims.len()];
        for &p in &self.probabilities {
            let mut record: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            record.push(p.to_string());
            out.write_record(&record)?;
            crate::tensor::advance(&mut idx, &self.dims);
        }
        out.flush()?;
        Ok(())
    }
}

pub fn posterior_predictive(acc: &PosteriorAccumulator) -> Result<Reconstruction> {
    let probabilities = acc.predictive_means()?;
    Ok(Reconstruction::from_probabilities(
        acc.dims().to_vec(),
        probabilities,
        EstimatorKind::PosteriorPredictive,
    ))
}

pub fn factor_map_reconstruct(acc: &PosteriorAccumulator) -> Result<Reconstruction> {
    let state = acc.map_state(NoiseModel::default())?;
    let probabilities = state
        .boolean_product()
        .into_iter()
        .map(|v| if v { 1.0 } else { 0.0 })
        .collect();
    Ok(Reconstruction::from_probabilities(
        acc.dims().to_vec(),
        probabilities,
        EstimatorKind::FactorMap,
    ))
}

pub fn factor_mean_reconstruct(acc: &PosteriorAccumulator) -> Result<Reconstruction> {
    let dims = acc.dims().to_vec();
    let rank = acc.rank();
    let means: Vec<Vec<f64>> = (0..dims.len()).map(|k| acc.factor_means(k)).collect::<Result<_>>()?;
    let total: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    let mut probabilities = Vec::with_capacity(total);
    for _ in 0..total {
        let mut none = 1.0;
        for l in 0..rank {
            let all: f64 = means
                .iter()
                .zip(&idx)
                .map(|(m, &n)| m[n * rank + l])
                .product();
            none *= 1.0 - all;
        }
        probabilities.push(1.0 - none);
        crate::tensor::advance(&mut idx, &dims);
    }
    Ok(Reconstruction::from_probabilities(dims, probabilities, EstimatorKind::FactorMean))
}

pub fn reconstruct(acc: &PosteriorAccumulator, kind: EstimatorKind) -> Result<Reconstruction> {
    match kind {
        EstimatorKind::PosteriorPredictive => posterior_predictive(acc),
        EstimatorKind::FactorMap => factor_map_reconstruct(acc),
        EstimatorKind::FactorMean => factor_mean_reconstruct(acc),
    }
}

/// Which entries an accuracy is computed over.
#[derive(Clone, Copy, Debug)]
pub enum Scope<'a> {
    /// Every observed entry of a reference tensor.
    Observed(&'a ObservedTensor),
    /// A list of held-out entries with their true values.
    HeldOut(&'a [HeldOutEntry]),
}

/// Fraction of in-scope entries where the hard reconstruction is correct.
pub fn accuracy(recon: &Reconstruction, scope: Scope<'_>) -> Result<f64> {
    let (correct, total) = match scope {
        Scope::Observed(reference) => {
            if reference.dims() != recon.dims.as_slice() {
                return Err(Error::DimensionMismatch {
                    expected: recon.dims.clone(),
                    found: reference.dims().to_vec(),
                });
            }
            reference
                .entries()
                .iter()
                .zip(&recon.hard)
                .filter(|(&x, _)| x != MISSING)
                .fold((0usize, 0usize), |(c, n), (&x, &h)| (c + usize::from((x == OBSERVED_ONE) == h), n + 1))
        }
        Scope::HeldOut(entries) => {
            let mut correct = 0;
            for e in entries {
                let h = *recon.hard.get(e.offset).ok_or_else(|| Error::OutOfBounds {
                    index: e.index.clone(),
                    dims: recon.dims.clone(),
                })?;
                correct += usize::from(h == e.value);
            }
            (correct, entries.len())
        }
    };
    if total == 0 {
        return Err(Error::arg("accuracy scope contains no entries"));
    }
    Ok(correct as f64 / total as f64)
}

/// Reconstruction from a single state with its own `λ`, i.e. the
/// posterior predictive of a one-sample chain.
pub fn state_probabilities(state: &ModelState) -> Reconstruction {
    let mut acc = PosteriorAccumulator::with_labels(&state.dims(), state.labels().to_vec());
    acc.record(state).expect("accumulator built from the state's own shape");
    posterior_predictive(&acc).expect("one sample recorded")
}
