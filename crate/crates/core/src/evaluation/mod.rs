//! Level scoring against model sets, median-based ranking and the rank
//! statistics used to compare score distributions.

mod stats;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment_chunks, CorpusError, Level};
use crate::generation::best_model;
use crate::model::LNode;
use crate::rng::{self, streams};

pub use stats::{
    mann_whitney_u, midranks, spearman, wilcoxon_signed_rank, Alternative, Correlation, TestResult, EXACT_LIMIT,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("no models given")]
    NoModels,
    #[error("ranking needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("paired samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("no nonzero differences between the paired samples")]
    NoNonzeroDifferences,
    #[error("correlation needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("ranks are constant; correlation is undefined")]
    ConstantRanks,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Per-chunk scores of one level under one model set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub level_id: String,
    pub model_set_id: String,
    pub scores: Vec<f64>,
}

impl ScoreDistribution {
    pub fn median(&self) -> f64 {
        median(&self.scores)
    }

    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            0.0
        } else {
            self.scores.iter().sum::<f64>() / self.scores.len() as f64
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn model_set_id(models: &[LNode]) -> String {
    models.iter().map(|m| m.id.as_str()).collect::<Vec<_>>().join(",")
}

/// Scores each uniform chunk of a level with its best model. With `sample`,
/// that many chunks are drawn without replacement (all of them if the level
/// has fewer), keeping level order.
pub fn score_level(
    level: &Level,
    models: &[LNode],
    chunk_width: usize,
    sample: Option<usize>,
    seed: u64,
) -> Result<ScoreDistribution, EvaluationError> {
    if models.is_empty() {
        return Err(EvaluationError::NoModels);
    }
    let chunks = segment_chunks(level, chunk_width, chunk_width)?;
    let mut picked: Vec<usize> = (0..chunks.len()).collect();
    if let Some(k) = sample.filter(|&k| k < chunks.len()) {
        let mut rng = rng::stream(seed, streams::SAMPLE);
        picked = index::sample(&mut rng, chunks.len(), k).into_vec();
        picked.sort_unstable();
    }
    let scores = picked.iter().map(|&i| best_model(models, &chunks[i].grid).1).collect();
    Ok(ScoreDistribution { level_id: level.id.clone(), model_set_id: model_set_id(models), scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    /// 1-based.
    pub rank: usize,
    pub level_id: String,
    pub median: f64,
    pub mean: f64,
}

/// Orders levels by descending median chunk score, then descending mean,
/// then level id.
pub fn rank_distributions(dists: &[ScoreDistribution]) -> Vec<RankEntry> {
    let mut rows: Vec<(String, f64, f64)> = dists.iter().map(|d| (d.level_id.clone(), d.median(), d.mean())).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(&b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (level_id, median, mean))| RankEntry { rank: i + 1, level_id, median, mean })
        .collect()
}

pub fn rank_levels(levels: &[Level], models: &[LNode], chunk_width: usize) -> Result<Vec<RankEntry>, EvaluationError> {
    if levels.len() < 2 {
        return Err(EvaluationError::TooFewLevels(levels.len()));
    }
    let dists = levels.iter().map(|l| score_level(l, models, chunk_width, None, 0)).collect::<Result<Vec<_>, _>>()?;
    Ok(rank_distributions(&dists))
}
