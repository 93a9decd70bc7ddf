//! Corpus-to-models learning: segment every level, categorize the chunks and
//! learn one L node per category.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    categorize_chunks, Categorization, CategorizeConfig, ClusterError, DEFAULT_CATEGORY_K_MAX,
    DEFAULT_RECLUSTER_THRESHOLD,
};
use crate::corpus::{segment_chunks, Corpus, CorpusError, LevelChunk};
use crate::model::{learn_lnode, LNode, ModelError};
use crate::rng;

pub const DEFAULT_CHUNK_WIDTH: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub chunk_width: usize,
    pub stride: usize,
    pub seed: u64,
    pub recluster_threshold: f64,
    pub k_max: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            chunk_width: DEFAULT_CHUNK_WIDTH,
            stride: DEFAULT_CHUNK_WIDTH,
            seed: 0,
            recluster_threshold: DEFAULT_RECLUSTER_THRESHOLD,
            k_max: DEFAULT_CATEGORY_K_MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnedModels {
    pub chunks: Vec<LevelChunk>,
    pub categorization: Categorization,
    /// One per category, in category order.
    pub lnodes: Vec<LNode>,
}

/// Most common level tag among a category's chunks; the alphabetically first
/// wins ties.
fn majority_tag(chunks: &[&LevelChunk], tags: &BTreeMap<&str, Option<&str>>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in chunks {
        if let Some(Some(t)) = tags.get(c.source_level.as_str()) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(&str, usize)>, (t, n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((t, n)),
        })
        .map(|(t, _)| t.to_string())
}

pub fn learn_corpus(corpus: &Corpus, config: &LearnConfig) -> Result<LearnedModels, PipelineError> {
    let mut chunks = Vec::new();
    for level in &corpus.levels {
        chunks.extend(segment_chunks(level, config.chunk_width, config.stride)?);
    }
    let categorization = categorize_chunks(
        &chunks,
        &corpus.legend,
        config.seed,
        CategorizeConfig { k_max: config.k_max, recluster_threshold: config.recluster_threshold },
    )?;
    let tags: BTreeMap<&str, Option<&str>> = corpus.levels.iter().map(|l| (l.id.as_str(), l.tag.as_deref())).collect();
    let lnodes = categorization
        .categories
        .iter()
        .enumerate()
        .map(|(i, cat)| {
            let members: Vec<LevelChunk> = cat.chunks.iter().map(|&c| chunks[c].clone()).collect();
            let mut lnode = learn_lnode(&cat.id, &members, rng::derive(config.seed, i as u64))?;
            lnode.tag = majority_tag(&members.iter().collect::<Vec<_>>(), &tags);
            Ok(lnode)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(LearnedModels { chunks, categorization, lnodes })
}
