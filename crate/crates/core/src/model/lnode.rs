//! The L node: styles, count vectors, the conditional relation table and
//! chunk-level style co-occurrence of one chunk category.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::shape::{grid_count_vector, BBox, CountVector, RelKey, RelationVectors};
use super::style::{chunk_diag, cluster_styles, style_distance, CategoryShapes, ShapeProfile, Style, StyleId};
use super::ModelError;
use crate::corpus::{LevelChunk, SpriteId};
use crate::rng::{self, streams};

/// A style is required by another when they co-occur in more than this share
/// of the other's chunks.
pub const REQUIRED_COOCCUR: f64 = 0.95;

/// `P(style, rel | given)`: a shape of `style` sits at `rel` relative to a
/// shape of `given`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondEntry {
    pub given: StyleId,
    pub style: StyleId,
    pub rel: RelKey,
    pub p: f64,
}

/// `p(style | given)`: share of the chunks containing `given` that also
/// contain `style`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooccurEntry {
    pub style: StyleId,
    pub given: StyleId,
    pub p: f64,
}

/// Summed 8-dim cardinal vectors of `style` shapes relative to `given`
/// shapes, over every observed ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeature {
    pub style: StyleId,
    pub given: StyleId,
    pub sum: [f64; 8],
    pub count: usize,
}

impl PairFeature {
    pub fn mean(&self) -> [f64; 8] {
        self.sum.map(|x| x / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LNode {
    pub id: String,
    pub tag: Option<String>,
    pub chunk_width: usize,
    pub chunk_height: usize,
    /// Style `i` has id `i`.
    pub styles: Vec<Style>,
    pub count_vectors: Vec<CountVector>,
    /// Sorted by `(given, style, rel)`.
    pub cond_table: Vec<CondEntry>,
    /// Sorted by `(style, given)`; zero entries are omitted.
    pub cooccur: Vec<CooccurEntry>,
    /// Sorted by `(style, given)`.
    pub pair_features: Vec<PairFeature>,
}

impl LNode {
    pub fn style(&self, id: StyleId) -> Result<&Style, ModelError> {
        self.styles.get(id.0 as usize).filter(|s| s.id == id).ok_or(ModelError::UnknownStyle(id))
    }

    pub fn style_ids(&self) -> impl Iterator<Item = StyleId> + '_ {
        self.styles.iter().map(|s| s.id)
    }

    /// Sprite types with at least one style, ascending.
    pub fn sprite_types(&self) -> BTreeSet<SpriteId> {
        self.styles.iter().map(|s| s.sprite_type).collect()
    }

    /// Table entries conditioned on `given`, sorted by `(style, rel)`.
    pub fn cond_row(&self, given: StyleId) -> &[CondEntry] {
        let lo = self.cond_table.partition_point(|e| e.given < given);
        let hi = self.cond_table.partition_point(|e| e.given <= given);
        &self.cond_table[lo..hi]
    }

    /// `P(s1 at rel | s2)`; 0 for unseen combinations.
    pub fn cond_prob(&self, s1: StyleId, rel: RelKey, s2: StyleId) -> Result<f64, ModelError> {
        self.style(s2)?;
        Ok(self.cond_prob_unchecked(s1, rel, s2))
    }

    pub(crate) fn cond_prob_unchecked(&self, s1: StyleId, rel: RelKey, s2: StyleId) -> f64 {
        let row = self.cond_row(s2);
        row.binary_search_by(|e| (e.style, e.rel).cmp(&(s1, rel))).map_or(0.0, |i| row[i].p)
    }

    /// `p(s1 | s2)` chunk co-occurrence.
    pub fn cooccur(&self, s1: StyleId, s2: StyleId) -> f64 {
        self.cooccur.binary_search_by(|e| (e.style, e.given).cmp(&(s1, s2))).map_or(0.0, |i| self.cooccur[i].p)
    }

    /// Styles that must accompany `s`.
    pub fn required_by(&self, s: StyleId) -> Vec<StyleId> {
        self.cooccur
            .iter()
            .filter(|e| e.given == s && e.style != s && e.p > REQUIRED_COOCCUR)
            .map(|e| e.style)
            .collect()
    }

    pub fn pair_feature(&self, style: StyleId, given: StyleId) -> Option<&PairFeature> {
        self.pair_features
            .binary_search_by(|e| (e.style, e.given).cmp(&(style, given)))
            .ok()
            .map(|i| &self.pair_features[i])
    }

    /// Nearest style of the profile's type by distance to the style
    /// exemplars; lower id on ties.
    pub fn assign_style(&self, profile: &ShapeProfile) -> Option<StyleId> {
        let diag = chunk_diag(self.chunk_width, self.chunk_height);
        let mut best: Option<(f64, StyleId)> = None;
        for style in self.styles.iter().filter(|s| s.sprite_type == profile.sprite_type) {
            let d = style_distance(profile, &style.exemplar, diag).expect("types match");
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, style.id));
            }
        }
        best.map(|(_, id)| id)
    }
}

/// Learns an L node from the chunks of one category. Every sprite type is
/// clustered with the same seed so that renaming types does not change the
/// learned structure.
pub fn learn_lnode(category_id: &str, category_chunks: &[LevelChunk], seed: u64) -> Result<LNode, ModelError> {
    let first = category_chunks.first().ok_or(ModelError::EmptyCategory)?;
    let (width, height) = (first.width(), first.height());
    if let Some(c) = category_chunks.iter().find(|c| (c.width(), c.height()) != (width, height)) {
        return Err(ModelError::MixedChunkSizes { expected: (width, height), found: (c.width(), c.height()) });
    }
    let data = CategoryShapes::new(category_chunks);
    let types: BTreeSet<SpriteId> = data.shapes.iter().flatten().map(|s| s.sprite_type).collect();
    let style_seed = rng::derive(seed, streams::STYLES);
    let diag = chunk_diag(width, height);

    let mut styles: Vec<Style> = Vec::new();
    for ty in types {
        let learned = cluster_styles(&data, ty, diag, style_seed, styles.len() as u32)?;
        styles.extend(learned);
    }

    // style of every (chunk, shape)
    let mut label: Vec<Vec<StyleId>> = data.shapes.iter().map(|s| vec![StyleId(u32::MAX); s.len()]).collect();
    for style in &styles {
        for inst in &style.instances {
            label[inst.chunk][inst.shape] = style.id;
        }
    }

    let mut cond_counts: BTreeMap<(StyleId, StyleId, RelKey), usize> = BTreeMap::new();
    let mut given_totals: BTreeMap<StyleId, usize> = BTreeMap::new();
    let mut features: BTreeMap<(StyleId, StyleId), ([f64; 8], usize)> = BTreeMap::new();
    for (c, shapes) in data.shapes.iter().enumerate() {
        for (a, shape_a) in shapes.iter().enumerate() {
            for (b, shape_b) in shapes.iter().enumerate() {
                if a == b {
                    continue;
                }
                let (sa, sb) = (label[c][a], label[c][b]);
                *cond_counts.entry((sb, sa, RelKey::of(&shape_a.bbox, &shape_b.bbox))).or_insert(0) += 1;
                *given_totals.entry(sb).or_insert(0) += 1;
                let f = relative_feature(&shape_a.bbox, &shape_b.bbox);
                let slot = features.entry((sa, sb)).or_insert(([0.0; 8], 0));
                for (acc, x) in slot.0.iter_mut().zip(f) {
                    *acc += x;
                }
                slot.1 += 1;
            }
        }
    }
    let cond_table = cond_counts
        .into_iter()
        .map(|((given, style, rel), n)| CondEntry { given, style, rel, p: n as f64 / given_totals[&given] as f64 })
        .collect();

    let mut cooccur = Vec::new();
    for s1 in &styles {
        for s2 in &styles {
            let both = s1.chunk_ids.intersection(&s2.chunk_ids).count();
            if both > 0 {
                cooccur.push(CooccurEntry { style: s1.id, given: s2.id, p: both as f64 / s2.chunk_ids.len() as f64 });
            }
        }
    }

    let pair_features =
        features.into_iter().map(|((style, given), (sum, count))| PairFeature { style, given, sum, count }).collect();

    Ok(LNode {
        id: category_id.to_string(),
        tag: None,
        chunk_width: width,
        chunk_height: height,
        styles,
        count_vectors: category_chunks.iter().enumerate().map(|(i, c)| grid_count_vector(&c.grid, i)).collect(),
        cond_table,
        cooccur,
        pair_features,
    })
}

/// Cardinal vectors of `a` relative to `b`.
fn relative_feature(a: &BBox, b: &BBox) -> [f64; 8] {
    RelationVectors::between(b, a).feature()
}
