//! Sample records, standardization, and stratified fold splitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Per-symbol training example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub features: [f64; 2],
    pub label: usize,
    pub frame: usize,
    pub antenna: usize,
    pub grid_index: usize,
    pub snr_db: f64,
}

pub const SIGMA_FLOOR: f64 = 1e-12;

/// Per-feature standardization `(u - mu) / sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

impl Scaler {
    /// Fits mean and population standard deviation.
    pub fn fit(features: &[[f64; 2]]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidInput("cannot fit a scaler on an empty set".into()));
        }
        let n = features.len() as f64;
        let mut mu = [0.0; 2];
        for f in features {
            mu[0] += f[0];
            mu[1] += f[1];
        }
        mu[0] /= n;
        mu[1] /= n;
        let mut var = [0.0; 2];
        for f in features {
            var[0] += (f[0] - mu[0]).powi(2);
            var[1] += (f[1] - mu[1]).powi(2);
        }
        let sigma = [(var[0] / n).sqrt().max(SIGMA_FLOOR), (var[1] / n).sqrt().max(SIGMA_FLOOR)];
        Ok(Scaler { mu, sigma })
    }

    pub fn fit_subset(features: &[[f64; 2]], idx: &[usize]) -> Result<Self> {
        let subset: Vec<[f64; 2]> = idx.iter().map(|&i| features[i]).collect();
        Self::fit(&subset)
    }

    pub fn transform(&self, f: [f64; 2]) -> [f64; 2] {
        [(f[0] - self.mu[0]) / self.sigma[0], (f[1] - self.mu[1]) / self.sigma[1]]
    }

    pub fn apply(&self, features: &[[f64; 2]]) -> Vec<[f64; 2]> {
        features.iter().map(|&f| self.transform(f)).collect()
    }
}

/// One `(train, validation)` split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Splits indices into `k` folds with per-class shuffling and round-robin
/// dealing. Classes absent from `labels` are ignored.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = Rng::new(seed, crate::numerics::stream_id("kfold", k as u64));
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0usize;
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {class} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
        rng.shuffle(members);
        for &i in members.iter() {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}
