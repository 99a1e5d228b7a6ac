//! Gaussian-kernel multiclass SVM over limb-orientation vectors.
//!
//! Six activity classes (five violent plus neutral), one-vs-one binary models
//! trained by sequential minimal optimization, majority-vote prediction with
//! margin-sum tie breaking, and stratified k-fold cross-validation for
//! hyperparameter selection. Features are standardized per dimension with
//! statistics from the training set before entering the kernel.

pub mod oracle;
pub mod smo;

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{DssError, Result};
use smo::BinaryModel;

/// The closed set of activity labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ActivityLabel {
    Punching,
    Stabbing,
    Shooting,
    Kicking,
    Strangling,
    Neutral,
}

pub const ALL_LABELS: [ActivityLabel; 6] = [
    ActivityLabel::Punching,
    ActivityLabel::Stabbing,
    ActivityLabel::Shooting,
    ActivityLabel::Kicking,
    ActivityLabel::Strangling,
    ActivityLabel::Neutral,
];

impl ActivityLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActivityLabel::Punching => "punching",
            ActivityLabel::Stabbing => "stabbing",
            ActivityLabel::Shooting => "shooting",
            ActivityLabel::Kicking => "kicking",
            ActivityLabel::Strangling => "strangling",
            ActivityLabel::Neutral => "neutral",
        }
    }

    pub fn from_str_label(s: &str) -> Result<Self> {
        ALL_LABELS
            .iter()
            .find(|l| l.as_str() == s)
            .copied()
            .ok_or_else(|| DssError::param(format!("unknown activity label '{s}'")))
    }

    pub fn is_violent(&self) -> bool {
        !matches!(self, ActivityLabel::Neutral)
    }

    pub fn index(&self) -> usize {
        ALL_LABELS.iter().position(|l| l == self).unwrap()
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Soft-margin and kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmHyperparams {
    pub c: f64,
    pub gamma: f64,
    pub kkt_tolerance: f64,
}

impl Default for SvmHyperparams {
    fn default() -> Self {
        SvmHyperparams {
            c: 14.0,
            gamma: 2e-5,
            kkt_tolerance: 1e-3,
        }
    }
}

impl SvmHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(DssError::param("C must be positive"));
        }
        if self.gamma < 0.0 {
            return Err(DssError::param("gamma must be >= 0"));
        }
        Ok(())
    }
}

/// Gaussian kernel exp(-gamma ||a - b||^2); always in (0, 1].
pub fn gaussian_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Per-dimension standardization statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &[Vec<f64>]) -> Self {
        let dim = data[0].len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in data {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for v in data {
            for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

/// Trained one-vs-one multiclass model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub hyperparams: SvmHyperparams,
    pub standardizer: Standardizer,
    /// One model per unordered label pair, ordered by (index a, index b).
    pub pairs: Vec<(ActivityLabel, ActivityLabel, BinaryModel)>,
    /// Pairs skipped for lack of data.
    pub skipped_pairs: Vec<(ActivityLabel, ActivityLabel)>,
    pub feature_dim: usize,
}

/// Trains the one-vs-one multiclass model. Positive class in each binary
/// problem is the pair's first (lower-index) label.
pub fn train_multiclass(
    data: &[(Vec<f64>, ActivityLabel)],
    hp: &SvmHyperparams,
) -> Result<SvmModel> {
    hp.validate()?;
    if data.is_empty() {
        return Err(DssError::Training("empty training set".into()));
    }
    let present: Vec<ActivityLabel> = ALL_LABELS
        .iter()
        .filter(|l| data.iter().any(|(_, y)| y == *l))
        .copied()
        .collect();
    if present.len() < 2 {
        return Err(DssError::Training(
            "need at least two classes to train".into(),
        ));
    }
    let feature_dim = data[0].0.len();
    let raw: Vec<Vec<f64>> = data.iter().map(|(v, _)| v.clone()).collect();
    let standardizer = Standardizer::fit(&raw);
    let standardized: Vec<Vec<f64>> = raw.iter().map(|v| standardizer.apply(v)).collect();

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for ai in 0..ALL_LABELS.len() {
        for bi in ai + 1..ALL_LABELS.len() {
            let (la, lb) = (ALL_LABELS[ai], ALL_LABELS[bi]);
            let subset: Vec<(Vec<f64>, f64)> = standardized
                .iter()
                .zip(data)
                .filter(|(_, (_, y))| *y == la || *y == lb)
                .map(|(v, (_, y))| (v.clone(), if *y == la { 1.0 } else { -1.0 }))
                .collect();
            let has_pos = subset.iter().any(|(_, y)| *y > 0.0);
            let has_neg = subset.iter().any(|(_, y)| *y < 0.0);
            if !has_pos || !has_neg {
                skipped.push((la, lb));
                continue;
            }
            let model = smo::train_binary(&subset, hp)?;
            pairs.push((la, lb, model));
        }
    }
    Ok(SvmModel {
        hyperparams: *hp,
        standardizer,
        pairs,
        skipped_pairs: skipped,
        feature_dim,
    })
}

/// Prediction output: the voted label plus per-class vote counts.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub label: ActivityLabel,
    pub votes: [usize; 6],
}

/// Classifies a (raw, unstandardized) feature vector.
pub fn predict(model: &SvmModel, features: &[f64]) -> Result<Prediction> {
    if features.len() != model.feature_dim {
        return Err(DssError::dim(format!(
            "feature dim {} != model dim {}",
            features.len(),
            model.feature_dim
        )));
    }
    let x = model.standardizer.apply(features);
    let mut votes = [0usize; 6];
    let mut margins = [0.0f64; 6];
    for (la, lb, m) in &model.pairs {
        let d = m.decision(&x, model.hyperparams.gamma);
        if d >= 0.0 {
            votes[la.index()] += 1;
        } else {
            votes[lb.index()] += 1;
        }
        margins[la.index()] += d;
        margins[lb.index()] -= d;
    }
    let mut best = 0usize;
    for i in 1..6 {
        if votes[i] > votes[best] || (votes[i] == votes[best] && margins[i] > margins[best]) {
            best = i;
        }
    }
    Ok(Prediction {
        label: ALL_LABELS[best],
        votes,
    })
}

/// Stratified k-fold cross-validation over a (C, gamma) grid; returns the
/// combination with the highest mean validation accuracy, ties broken toward
/// smaller C, then smaller gamma.
pub fn cross_validate(
    data: &[(Vec<f64>, ActivityLabel)],
    c_grid: &[f64],
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<SvmHyperparams> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(DssError::param("empty hyperparameter grid"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // stratified fold assignment
    let mut fold_of = vec![0usize; data.len()];
    for label in ALL_LABELS {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].1 == label).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            return Err(DssError::param(format!(
                "class {label} has {} samples, fewer than {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }

    let mut c_sorted = c_grid.to_vec();
    c_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut g_sorted = gamma_grid.to_vec();
    g_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut best: Option<(f64, SvmHyperparams)> = None;
    for &c in &c_sorted {
        for &gamma in &g_sorted {
            let hp = SvmHyperparams {
                c,
                gamma,
                ..SvmHyperparams::default()
            };
            let mut correct = 0usize;
            let mut total = 0usize;
            for f in 0..folds {
                let train: Vec<(Vec<f64>, ActivityLabel)> = data
                    .iter()
                    .zip(&fold_of)
                    .filter(|(_, &ff)| ff != f)
                    .map(|(d, _)| d.clone())
                    .collect();
                let test: Vec<&(Vec<f64>, ActivityLabel)> = data
                    .iter()
                    .zip(&fold_of)
                    .filter(|(_, &ff)| ff == f)
                    .map(|(d, _)| d)
                    .collect();
                let model = train_multiclass(&train, &hp)?;
                for (v, y) in test {
                    if predict(&model, v)?.label == *y {
                        correct += 1;
                    }
                    total += 1;
                }
            }
            let acc = correct as f64 / total as f64;
            // strict > keeps the first (smallest C, then gamma) on ties
            if best.as_ref().map_or(true, |(a, _)| acc > *a) {
                best = Some((acc, hp));
            }
        }
    }
    Ok(best.unwrap().1)
}
