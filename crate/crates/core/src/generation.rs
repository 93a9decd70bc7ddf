//! Greedy chunk generation under an L node and level assembly from L-node
//! sequences.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment_chunks, CorpusError, Grid, Level, LevelChunk, SpriteId};
use crate::model::{extract_grid_shapes, BBox, CountVector, LNode, Mask, ModelError, RelKey, ShapeProfile, StyleId};
use crate::rng::{self, streams};

pub const DEFAULT_TOP_P: usize = 5;
/// Generation stops once no candidate shape relates to the assembly with at
/// least this probability.
pub const STOP_PROBABILITY: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum GenerationError {
    #[error("model {0} has no styles")]
    NoStyles(String),
    #[error("model {model} learned {expected:?} chunks, asked for {found:?}")]
    SizeMismatch { model: String, expected: (usize, usize), found: (usize, usize) },
    #[error("no models given")]
    NoModels,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A style instance placed in an assembly, anchored at its mask's top-left.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub style: StyleId,
    pub mask: Mask,
    pub top: usize,
    pub left: usize,
}

impl Placement {
    pub fn bbox(&self) -> BBox {
        self.mask.bbox_at(self.top, self.left)
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask.cells.iter().map(|&(r, c)| (self.top + r, self.left + c))
    }
}

/// Working state of one generated chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub placed: Vec<Placement>,
    pub grid: Grid,
    pub n_target: CountVector,
    pub pending_required: VecDeque<StyleId>,
    /// Sum of pair probabilities over ordered placed pairs.
    pair_total: f64,
}

impl Assembly {
    pub fn new(width: usize, height: usize, n_target: CountVector) -> Self {
        Self {
            placed: Vec::new(),
            grid: Grid::filled(width, height, SpriteId::BACKGROUND),
            n_target,
            pending_required: VecDeque::new(),
            pair_total: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    /// Inside the grid and only over background cells.
    pub fn fits(&self, mask: &Mask, top: usize, left: usize) -> bool {
        top + mask.height <= self.height()
            && left + mask.width <= self.width()
            && mask.cells.iter().all(|&(r, c)| self.grid.get(top + r, left + c).is_background())
    }

    pub fn type_count(&self, ty: SpriteId) -> usize {
        self.grid.cells().iter().filter(|&&c| c == ty).count()
    }

    pub fn is_placed(&self, style: StyleId) -> bool {
        self.placed.iter().any(|p| p.style == style)
    }

    fn below_target(&self, ty: SpriteId) -> bool {
        self.type_count(ty) < self.n_target.get(ty)
    }

    /// Every target count reached and nothing left that placed shapes need.
    pub fn satisfied(&self) -> bool {
        self.pending_required.is_empty() && self.n_target.counts.keys().all(|&ty| !self.below_target(ty))
    }

    fn place(&mut self, lnode: &LNode, placement: Placement, banned: &BTreeSet<StyleId>) {
        let ty = lnode.styles[placement.style.0 as usize].sprite_type;
        self.pair_total += contribution(lnode, &self.placed, placement.style, &placement.bbox());
        for (r, c) in placement.cells() {
            self.grid.set(r, c, ty);
        }
        let style = placement.style;
        self.placed.push(placement);
        self.pending_required.retain(|&s| s != style);
        for req in lnode.required_by(style) {
            if !self.is_placed(req) && !self.pending_required.contains(&req) && !banned.contains(&req) {
                self.pending_required.push_back(req);
            }
        }
    }

    fn rebuild(&mut self, lnode: &LNode) {
        let placed = std::mem::take(&mut self.placed);
        let pending: Vec<StyleId> = self.pending_required.drain(..).collect();
        self.grid = Grid::filled(self.width(), self.height(), SpriteId::BACKGROUND);
        self.pair_total = 0.0;
        let none = BTreeSet::new();
        for p in placed {
            self.place(lnode, p, &none);
        }
        // keep the original queue order for requirements that still apply
        let still: BTreeSet<StyleId> = self.pending_required.drain(..).collect();
        self.pending_required = pending.into_iter().filter(|s| still.contains(s)).collect();
        for s in still {
            if !self.pending_required.contains(&s) {
                self.pending_required.push_back(s);
            }
        }
    }

    /// Current value of the chunk score over the placed shapes.
    pub fn score(&self) -> f64 {
        if self.placed.len() <= 1 {
            0.0
        } else {
            self.pair_total / self.placed.len() as f64
        }
    }
}

/// Mean over shapes of the summed conditional probabilities of every other
/// shape: `(1/N) Σ_i Σ_{j≠i} P(style_i, rel(i, j) | style_j)`. Shapes
/// without a style count in `N` but add nothing. Zero for `N ≤ 1`.
pub fn pairwise_score(lnode: &LNode, shapes: &[(Option<StyleId>, BBox)]) -> f64 {
    let n = shapes.len();
    if n <= 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, (si, bi)) in shapes.iter().enumerate() {
        for (j, (sj, bj)) in shapes.iter().enumerate() {
            if i == j {
                continue;
            }
            if let (Some(si), Some(sj)) = (si, sj) {
                total += lnode.cond_prob_unchecked(*si, RelKey::of(bi, bj), *sj);
            }
        }
    }
    total / n as f64
}

pub fn score_assembly(assembly: &Assembly, lnode: &LNode) -> Result<f64, GenerationError> {
    for p in &assembly.placed {
        lnode.style(p.style)?;
    }
    let shapes: Vec<_> = assembly.placed.iter().map(|p| (Some(p.style), p.bbox())).collect();
    Ok(pairwise_score(lnode, &shapes))
}

/// Chunk score of an arbitrary grid: shapes are extracted, assigned to the
/// nearest style and scored together.
pub fn score_grid(lnode: &LNode, grid: &Grid) -> f64 {
    let shapes = extract_grid_shapes(grid, 0);
    let items: Vec<_> =
        ShapeProfile::all(&shapes).iter().zip(&shapes).map(|(p, s)| (lnode.assign_style(p), s.bbox)).collect();
    pairwise_score(lnode, &items)
}

/// Added pair mass when a `style` shape at `bbox` joins `placed`.
fn contribution(lnode: &LNode, placed: &[Placement], style: StyleId, bbox: &BBox) -> f64 {
    let mut total = 0.0;
    for p in placed {
        let pb = p.bbox();
        total += lnode.cond_prob_unchecked(style, RelKey::of(bbox, &pb), p.style);
        total += lnode.cond_prob_unchecked(p.style, RelKey::of(&pb, bbox), style);
    }
    total
}

/// Strongest single relation between a new shape and any placed shape.
fn best_pair(lnode: &LNode, placed: &[Placement], style: StyleId, bbox: &BBox) -> f64 {
    placed
        .iter()
        .map(|p| {
            let pb = p.bbox();
            lnode.cond_prob_unchecked(style, RelKey::of(bbox, &pb), p.style).max(lnode.cond_prob_unchecked(
                p.style,
                RelKey::of(&pb, bbox),
                style,
            ))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Move {
    pub style: StyleId,
    pub mask: Mask,
    pub top: usize,
    pub left: usize,
}

impl Move {
    fn placement(self) -> Placement {
        Placement { style: self.style, mask: self.mask, top: self.top, left: self.left }
    }
}

/// Anchors for a mask whose center should sit at `rel` from `anchor`; the
/// floor and ceiling of the exact position are tried and kept only if the
/// placed shape rounds back to `rel`.
fn anchors_for(mask: &Mask, rel: RelKey, anchor: &BBox) -> Vec<(usize, usize)> {
    let [cx, cy] = anchor.center();
    let left = cx + rel.dx as f64 - mask.width as f64 / 2.0;
    let top = cy + rel.dy as f64 - mask.height as f64 / 2.0;
    let mut out = Vec::new();
    for t in [top.floor(), top.ceil()] {
        for l in [left.floor(), left.ceil()] {
            if t < 0.0 || l < 0.0 {
                continue;
            }
            let (t, l) = (t as usize, l as usize);
            if RelKey::of(&mask.bbox_at(t, l), anchor) == rel && !out.contains(&(t, l)) {
                out.push((t, l));
            }
        }
    }
    out
}

fn candidate_styles(assembly: &Assembly, lnode: &LNode, banned: &BTreeSet<StyleId>) -> Vec<StyleId> {
    let mut styles: Vec<StyleId> = assembly.pending_required.iter().copied().collect();
    for s in &lnode.styles {
        if !banned.contains(&s.id) && !styles.contains(&s.id) && assembly.below_target(s.sprite_type) {
            styles.push(s.id);
        }
    }
    styles
}

fn moves_for(
    assembly: &Assembly,
    lnode: &LNode,
    top_p: usize,
    style: StyleId,
    mask: &Mask,
    seen: &mut BTreeSet<(StyleId, usize, usize)>,
    out: &mut Vec<Move>,
) {
    for placed in &assembly.placed {
        let row = lnode.cond_row(placed.style);
        let lo = row.partition_point(|e| e.style < style);
        let hi = row.partition_point(|e| e.style <= style);
        let mut keys: Vec<_> = row[lo..hi].iter().map(|e| (e.p, e.rel)).collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let pb = placed.bbox();
        for &(_, rel) in keys.iter().take(top_p) {
            for (top, left) in anchors_for(mask, rel, &pb) {
                if assembly.fits(mask, top, left) && seen.insert((style, top, left)) {
                    out.push(Move { style, mask: mask.clone(), top, left });
                }
            }
        }
    }
}

/// Moves for styles still needed by the count target or by placed shapes,
/// positioned at the `top_p` most likely offsets from each placed shape.
/// Geometry is each style's most frequent mask.
pub fn candidate_moves(assembly: &Assembly, lnode: &LNode, top_p: usize) -> Vec<Move> {
    candidate_moves_inner(assembly, lnode, top_p, &BTreeSet::new(), &mut |s| {
        lnode.styles[s.0 as usize].modal_mask().clone()
    })
}

fn candidate_moves_inner(
    assembly: &Assembly,
    lnode: &LNode,
    top_p: usize,
    banned: &BTreeSet<StyleId>,
    geometry: &mut dyn FnMut(StyleId) -> Mask,
) -> Vec<Move> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for style in candidate_styles(assembly, lnode, banned) {
        let mask = geometry(style);
        moves_for(assembly, lnode, top_p, style, &mask, &mut seen, &mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every target count met and no required shape outstanding.
    Satisfied,
    NoCandidates,
    /// The best candidate relation fell below the stop probability.
    LowProbability,
    /// Safety bound on the number of steps; never expected in practice.
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateConfig {
    pub top_p: usize,
    /// Draw each candidate's geometry from its style's pool by frequency
    /// instead of always using the most frequent mask.
    pub sample_geometry: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { top_p: DEFAULT_TOP_P, sample_geometry: false }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub chunk: LevelChunk,
    pub assembly: Assembly,
    pub stop: StopReason,
    /// Strongest single candidate relation when the loop ended.
    pub final_best_pair: f64,
    /// Styles removed because a shape they require could not be placed.
    pub pruned: Vec<StyleId>,
}

pub fn generate_chunk(lnode: &LNode, width: usize, height: usize, seed: u64) -> Result<LevelChunk, GenerationError> {
    generate_chunk_with(lnode, width, height, seed, &GenerateConfig::default()).map(|o| o.chunk)
}

fn sample_mask(lnode: &LNode, style: StyleId, rng: &mut rng::Rng) -> Mask {
    let pool = &lnode.styles[style.0 as usize].geometry_pool;
    let total: usize = pool.iter().map(|g| g.count).sum();
    let mut pick = rng.random_range(0..total);
    for g in pool {
        if pick < g.count {
            return g.mask.clone();
        }
        pick -= g.count;
    }
    unreachable!("pick is below the pool total")
}

/// Best position anywhere in the grid for a required style that no relation
/// offset could place.
fn scan_anywhere(assembly: &Assembly, lnode: &LNode, style: StyleId, mask: &Mask) -> Option<Move> {
    let mut best: Option<(f64, Move)> = None;
    for top in 0..assembly.height() {
        for left in 0..assembly.width() {
            if !assembly.fits(mask, top, left) {
                continue;
            }
            let gain = contribution(lnode, &assembly.placed, style, &mask.bbox_at(top, left));
            if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, Move { style, mask: mask.clone(), top, left }));
            }
        }
    }
    best.map(|(_, m)| m)
}

/// Removes placed shapes whose required styles are banned, repeatedly, and
/// bans their styles in turn.
fn prune(assembly: &mut Assembly, lnode: &LNode, banned: &mut BTreeSet<StyleId>, pruned: &mut Vec<StyleId>) {
    loop {
        let unmet: BTreeSet<StyleId> = assembly
            .placed
            .iter()
            .map(|p| p.style)
            .filter(|&s| lnode.required_by(s).iter().any(|r| banned.contains(r)))
            .collect();
        if unmet.is_empty() {
            break;
        }
        assembly.placed.retain(|p| !unmet.contains(&p.style));
        for s in unmet {
            if banned.insert(s) {
                pruned.push(s);
            }
        }
    }
    assembly.rebuild(lnode);
    assembly.pending_required.retain(|s| !banned.contains(s));
}

fn choose(assembly: &Assembly, lnode: &LNode, moves: Vec<Move>) -> Option<Move> {
    let mut best: Option<(f64, Move)> = None;
    for m in moves {
        let gain = contribution(lnode, &assembly.placed, m.style, &m.mask.bbox_at(m.top, m.left));
        if best.as_ref().is_none_or(|(g, _)| gain > *g) {
            best = Some((gain, m));
        }
    }
    best.map(|(_, m)| m)
}

/// Grows a chunk from one random training shape towards a random training
/// count vector, each step adding the candidate that raises the chunk score
/// most. Shapes that co-occur with a placed shape in more than 95% of its
/// chunks are added unconditionally; a shape whose requirement cannot be
/// placed is removed again.
pub fn generate_chunk_with(
    lnode: &LNode,
    width: usize,
    height: usize,
    seed: u64,
    config: &GenerateConfig,
) -> Result<GenerationOutcome, GenerationError> {
    if lnode.styles.is_empty() || lnode.count_vectors.is_empty() {
        return Err(GenerationError::NoStyles(lnode.id.clone()));
    }
    if (width, height) != (lnode.chunk_width, lnode.chunk_height) {
        return Err(GenerationError::SizeMismatch {
            model: lnode.id.clone(),
            expected: (lnode.chunk_width, lnode.chunk_height),
            found: (width, height),
        });
    }
    let mut rng = rng::stream(seed, streams::GENERATE);
    let target = lnode.count_vectors[rng.random_range(0..lnode.count_vectors.len())].clone();
    let mut assembly = Assembly::new(width, height, target);
    let mut banned = BTreeSet::new();
    let mut pruned = Vec::new();

    let instances: Vec<_> = lnode.styles.iter().flat_map(|s| s.instances.iter().map(move |i| (s, i))).collect();
    let (style, inst) = instances[rng.random_range(0..instances.len())];
    let seed_shape = Placement {
        style: style.id,
        mask: style.geometry_pool[inst.geometry].mask.clone(),
        top: inst.top,
        left: inst.left,
    };
    assembly.place(lnode, seed_shape, &banned);

    let step_limit = (width * height + 1) * (lnode.styles.len() + 1);
    let geometry = |s: StyleId, rng: &mut rng::Rng| {
        if config.sample_geometry {
            sample_mask(lnode, s, rng)
        } else {
            lnode.styles[s.0 as usize].modal_mask().clone()
        }
    };
    let (stop, final_best_pair) = 'grow: {
        for _ in 0..step_limit {
            if assembly.satisfied() {
                break 'grow (StopReason::Satisfied, 0.0);
            }
            let moves = candidate_moves_inner(&assembly, lnode, config.top_p, &banned, &mut |s| geometry(s, &mut rng));
            if let Some(&front) = assembly.pending_required.front() {
                let required: Vec<Move> =
                    moves.iter().filter(|m| assembly.pending_required.contains(&m.style)).cloned().collect();
                let next = choose(&assembly, lnode, required)
                    .or_else(|| scan_anywhere(&assembly, lnode, front, &geometry(front, &mut rng)));
                match next {
                    Some(m) => assembly.place(lnode, m.placement(), &banned),
                    None => {
                        assembly.pending_required.pop_front();
                        banned.insert(front);
                        prune(&mut assembly, lnode, &mut banned, &mut pruned);
                    }
                }
                continue;
            }
            let best = moves
                .iter()
                .map(|m| best_pair(lnode, &assembly.placed, m.style, &m.mask.bbox_at(m.top, m.left)))
                .fold(0.0, f64::max);
            if moves.is_empty() {
                break 'grow (StopReason::NoCandidates, 0.0);
            }
            if best < STOP_PROBABILITY {
                break 'grow (StopReason::LowProbability, best);
            }
            let m = choose(&assembly, lnode, moves).expect("moves is nonempty");
            assembly.place(lnode, m.placement(), &banned);
        }
        (StopReason::StepLimit, 0.0)
    };

    let chunk = LevelChunk::from_grid(assembly.grid.clone(), format!("generated:{}", lnode.id));
    Ok(GenerationOutcome { chunk, assembly, stop, final_best_pair, pruned })
}

/// The best-explaining model of one uniform chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkExplanation {
    pub chunk: usize,
    /// Index into the model list.
    pub model: usize,
    pub model_id: String,
    pub score: f64,
}

/// Scores every uniform chunk of a level under every model and keeps the
/// highest-scoring one; the earlier model wins ties.
pub fn explain_sequence(
    level: &Level,
    models: &[LNode],
    chunk_width: usize,
) -> Result<Vec<ChunkExplanation>, GenerationError> {
    if models.is_empty() {
        return Err(GenerationError::NoModels);
    }
    let chunks = segment_chunks(level, chunk_width, chunk_width)?;
    Ok(chunks
        .iter()
        .enumerate()
        .map(|(i, chunk)| {
            let (model, score) = best_model(models, &chunk.grid);
            ChunkExplanation { chunk: i, model, model_id: models[model].id.clone(), score }
        })
        .collect())
}

pub(crate) fn best_model(models: &[LNode], grid: &Grid) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, m) in models.iter().enumerate() {
        let s = score_grid(m, grid);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// One generated chunk per model, concatenated left to right. Seams are not
/// repaired.
pub fn generate_level(
    sequence: &[&LNode],
    width_per_chunk: usize,
    height: usize,
    seed: u64,
) -> Result<Level, GenerationError> {
    generate_level_with(sequence, width_per_chunk, height, seed, &GenerateConfig::default())
}

pub fn generate_level_with(
    sequence: &[&LNode],
    width_per_chunk: usize,
    height: usize,
    seed: u64,
    config: &GenerateConfig,
) -> Result<Level, GenerationError> {
    if sequence.is_empty() {
        return Err(GenerationError::NoModels);
    }
    let grids = sequence
        .iter()
        .enumerate()
        .map(|(i, l)| {
            generate_chunk_with(l, width_per_chunk, height, rng::derive(seed, i as u64), config).map(|o| o.chunk.grid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grid = Grid::hconcat(&grids).expect("chunks share a height");
    Ok(Level { id: "generated".into(), grid, tag: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::learn_lnode;

    fn chunk(rows: &[&str]) -> LevelChunk {
        let id = |ch| match ch {
            '-' => 0,
            'X' => 1,
            'E' => 2,
            'B' => 3,
            _ => panic!(),
        };
        LevelChunk::from_grid(
            Grid::from_rows(rows.iter().map(|r| r.chars().map(|c| SpriteId(id(c))).collect()).collect()).unwrap(),
            "t",
        )
    }

    const SCENE: [&str; 6] = ["--------", "-BB-----", "--------", "-----E--", "XXXX-XXX", "XXXX-XXX"];

    fn repeated() -> LNode {
        let chunks: Vec<_> = (0..4).map(|_| chunk(&SCENE)).collect();
        learn_lnode("r", &chunks, 0).unwrap()
    }

    #[test]
    fn single_shape_scores_zero() {
        let l = repeated();
        let mut a = Assembly::new(8, 6, CountVector { counts: Default::default(), source_chunk: 0 });
        a.place(&l, Placement { style: StyleId(0), mask: Mask::rect(1, 1), top: 0, left: 0 }, &BTreeSet::new());
        assert_eq!(score_assembly(&a, &l).unwrap(), 0.0);
        assert_eq!(a.score(), 0.0);
    }

    #[test]
    fn regenerates_single_exemplar() {
        let l = repeated();
        let original = chunk(&SCENE);
        for seed in 0..20 {
            let out = generate_chunk_with(&l, 8, 6, seed, &GenerateConfig::default()).unwrap();
            assert_eq!(out.stop, StopReason::Satisfied, "seed {seed}");
            assert_eq!(out.chunk.grid, original.grid, "seed {seed}");
            assert_eq!(out.assembly.score(), score_assembly(&out.assembly, &l).unwrap());
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let l = repeated();
        assert!(matches!(generate_chunk(&l, 9, 6, 0), Err(GenerationError::SizeMismatch { .. })));
    }

    #[test]
    fn anchors_round_back() {
        let anchor = BBox { top: 2, left: 2, bottom: 2, right: 4 };
        for dx in -4..=4 {
            for dy in -3..=3 {
                let rel = RelKey { dx, dy };
                for (t, l) in anchors_for(&Mask::rect(2, 1), rel, &anchor) {
                    assert_eq!(RelKey::of(&Mask::rect(2, 1).bbox_at(t, l), &anchor), rel);
                }
            }
        }
    }

    #[test]
    fn explain_picks_own_model() {
        let a = repeated();
        let other = learn_lnode(
            "o",
            &vec![chunk(&["--------", "--------", "BBBBBBBB", "--------", "-E----E-", "XXXXXXXX"]); 3],
            0,
        )
        .unwrap();
        let level = Level {
            id: "l".into(),
            grid: Grid::hconcat(&[chunk(&SCENE).grid, chunk(&SCENE).grid]).unwrap(),
            tag: None,
        };
        let ex = explain_sequence(&level, &[other, a], 8).unwrap();
        assert_eq!(ex.len(), 2);
        assert!(ex.iter().all(|e| e.model_id == "r"));
    }

    #[test]
    fn level_is_concatenation() {
        let l = repeated();
        let level = generate_level(&[&l, &l, &l], 8, 6, 1).unwrap();
        assert_eq!(level.grid.width(), 24);
        assert_eq!(level, generate_level(&[&l, &l, &l], 8, 6, 1).unwrap());
        assert_eq!(generate_level(&[], 8, 6, 1), Err(GenerationError::NoModels));
    }
}
