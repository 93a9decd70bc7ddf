//! Style graphs of L nodes, analogical mapping between them and the blended
//! L nodes built from those mappings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment_chunks, CorpusError, Level, SpriteId, TileLegend};
use crate::generation::{explain_sequence, GenerationError};
use crate::model::{extract_grid_shapes, LNode, ModelError, ShapeProfile, StyleId};

/// Θ starts at 1 and drops by `1 / THETA_STEPS` per iteration.
pub const THETA_STEPS: u32 = 20;
const THETA_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BlendError {
    #[error("model {0} has no styles")]
    EmptyModel(String),
    #[error("edge feature vector is zero")]
    ZeroFeature,
    #[error("target graph has no edges")]
    NoTargetEdges,
    #[error("blending needs at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("no model is tagged {0:?}")]
    MissingTag(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Undirected relation between two styles, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SEdge {
    pub a: StyleId,
    pub b: StyleId,
    pub probability: f64,
    /// Mean cardinal vectors of `b` shapes relative to `a` shapes.
    pub feature: [f64; 8],
}

impl SEdge {
    /// The same edge read from `b` to `a`.
    pub fn reversed(&self) -> SEdge {
        SEdge { a: self.b, b: self.a, probability: self.probability, feature: self.feature.map(|x| -x) }
    }

    pub fn touches(&self, s: StyleId) -> bool {
        self.a == s || self.b == s
    }
}

pub fn theta(step: u32) -> f64 {
    f64::from(THETA_STEPS - step) / f64::from(THETA_STEPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SStructureGraph {
    pub lnode_id: String,
    pub nodes: Vec<StyleId>,
    /// Every co-occurring style pair; the admitted edges are a subset.
    pub candidates: Vec<SEdge>,
    pub edges: Vec<SEdge>,
    /// Number of Θ decrements per node.
    pub steps: BTreeMap<StyleId, u32>,
    /// Nodes whose joint decrement completed the graph.
    pub last_lowered: Vec<StyleId>,
}

impl SStructureGraph {
    pub fn threshold(&self, s: StyleId) -> f64 {
        theta(self.steps.get(&s).copied().unwrap_or(0))
    }

    pub fn thresholds(&self) -> BTreeMap<StyleId, f64> {
        self.nodes.iter().map(|&s| (s, self.threshold(s))).collect()
    }

    /// Nodes with at least one candidate edge.
    pub fn connected_nodes(&self) -> Vec<StyleId> {
        self.nodes.iter().copied().filter(|&s| self.candidates.iter().any(|e| e.touches(s))).collect()
    }

    /// Candidate edges whose probability reaches the threshold of either
    /// endpoint.
    pub fn admitted(&self, steps: &BTreeMap<StyleId, u32>) -> Vec<SEdge> {
        let th = |s: StyleId| theta(steps.get(&s).copied().unwrap_or(0));
        self.candidates
            .iter()
            .filter(|e| e.probability >= th(e.a) - THETA_EPS || e.probability >= th(e.b) - THETA_EPS)
            .copied()
            .collect()
    }
}

/// Whether `edges` connect every node of `nodes`.
pub fn is_connected(nodes: &[StyleId], edges: &[SEdge]) -> bool {
    let Some(&start) = nodes.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        for e in edges.iter().filter(|e| e.touches(s)) {
            let other = if e.a == s { e.b } else { e.a };
            if seen.insert(other) {
                stack.push(other);
            }
        }
    }
    nodes.iter().all(|n| seen.contains(n))
}

fn candidate_edges(lnode: &LNode) -> Vec<SEdge> {
    let mut out = Vec::new();
    for a in lnode.style_ids() {
        for b in lnode.style_ids().filter(|&b| b > a) {
            let p = lnode.cooccur(a, b).max(lnode.cooccur(b, a));
            if p <= 0.0 {
                continue;
            }
            let feature = lnode.pair_feature(b, a).map_or([0.0; 8], |f| f.mean());
            out.push(SEdge { a, b, probability: p, feature });
        }
    }
    out
}

/// Component label of every node under `edges`.
fn components(nodes: &[StyleId], edges: &[SEdge]) -> BTreeMap<StyleId, usize> {
    let mut label = BTreeMap::new();
    for (i, &start) in nodes.iter().enumerate() {
        if label.contains_key(&start) {
            continue;
        }
        label.insert(start, i);
        let mut stack = vec![start];
        while let Some(s) = stack.pop() {
            for e in edges.iter().filter(|e| e.touches(s)) {
                let other = if e.a == s { e.b } else { e.a };
                if label.insert(other, i).is_none() {
                    stack.push(other);
                }
            }
        }
    }
    label
}

/// Nodes of candidate edges whose endpoints `admitted` does not yet join.
pub fn unjoined_nodes(candidates: &[SEdge], admitted: &[SEdge], nodes: &[StyleId]) -> BTreeSet<StyleId> {
    let label = components(nodes, admitted);
    candidates.iter().filter(|e| label[&e.a] != label[&e.b]).flat_map(|e| [e.a, e.b]).collect()
}

/// Admits edges by lowering per-node thresholds from 1, one step at a time
/// on the nodes with the fewest admitted edges, until every pair of styles
/// joined by co-occurrence is joined by admitted edges. Tied nodes are lowered
/// together so the result does not depend on style numbering. Styles that
/// never co-occur stay in separate components.
pub fn build_sgraph(lnode: &LNode) -> Result<SStructureGraph, BlendError> {
    if lnode.styles.is_empty() {
        return Err(BlendError::EmptyModel(lnode.id.clone()));
    }
    let nodes: Vec<StyleId> = lnode.style_ids().collect();
    let mut graph = SStructureGraph {
        lnode_id: lnode.id.clone(),
        steps: nodes.iter().map(|&s| (s, 0)).collect(),
        nodes,
        candidates: candidate_edges(lnode),
        edges: Vec::new(),
        last_lowered: Vec::new(),
    };
    loop {
        let admitted = graph.admitted(&graph.steps);
        let degree = |s: StyleId| admitted.iter().filter(|e| e.touches(s)).count();
        let open: Vec<StyleId> = unjoined_nodes(&graph.candidates, &admitted, &graph.nodes)
            .into_iter()
            .filter(|s| graph.steps[s] < THETA_STEPS)
            .collect();
        let Some(fewest) = open.iter().map(|&s| degree(s)).min() else {
            graph.edges = admitted;
            break;
        };
        graph.last_lowered = open.into_iter().filter(|&s| degree(s) == fewest).collect();
        for s in &graph.last_lowered {
            *graph.steps.get_mut(s).expect("node") += 1;
        }
    }
    Ok(graph)
}

/// DOT rendering; nodes are labelled `type:style`.
pub fn to_dot(graph: &SStructureGraph, lnode: &LNode, legend: &TileLegend) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph \"{}\" {{", graph.lnode_id.replace('"', "'"));
    for &s in &graph.nodes {
        let ty = lnode.styles[s.0 as usize].sprite_type;
        let name = legend.name_of(ty).map_or_else(|| ty.to_string(), str::to_string);
        let _ = writeln!(out, "  s{s} [label=\"{name}:{s}\"];");
    }
    for e in &graph.edges {
        let _ = writeln!(out, "  s{} -- s{} [label=\"{:.3}\"];", e.a, e.b, e.probability);
    }
    out.push_str("}\n");
    out
}

fn cosine(f1: &[f64; 8], f2: &[f64; 8]) -> Option<f64> {
    let dot: f64 = f1.iter().zip(f2).map(|(x, y)| x * y).sum();
    let n1 = f1.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n2 = f2.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n1 > 0.0 && n2 > 0.0).then(|| (dot / (n1 * n2)).clamp(-1.0, 1.0))
}

/// `(|p1 − p2| + (1 − cos(f1, f2)) / 2) / 2`, in `[0, 1]`.
pub fn edge_distance(e1: &SEdge, e2: &SEdge) -> Result<f64, BlendError> {
    let cos = cosine(&e1.feature, &e2.feature).ok_or(BlendError::ZeroFeature)?;
    Ok(((e1.probability - e2.probability).abs() + (1.0 - cos) / 2.0) / 2.0)
}

/// Like [`edge_distance`], with a neutral direction term for zero features.
fn mapping_distance(e1: &SEdge, e2: &SEdge) -> f64 {
    let dir = cosine(&e1.feature, &e2.feature).map_or(0.5, |c| (1.0 - c) / 2.0);
    ((e1.probability - e2.probability).abs() + dir) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMapping {
    pub source: SEdge,
    /// Closest target edge, oriented so that `target.a` corresponds to
    /// `source.a`.
    pub target: SEdge,
    pub distance: f64,
}

/// Maps every source edge to its closest target edge, comparing both
/// readings of each target edge. Ties go to the smallest target pair, then to
/// the reading in stored order.
pub fn map_edges(source: &SStructureGraph, target: &SStructureGraph) -> Result<Vec<EdgeMapping>, BlendError> {
    if target.edges.is_empty() {
        return Err(BlendError::NoTargetEdges);
    }
    let mut targets = target.edges.clone();
    targets.sort_by_key(|e| (e.a, e.b));
    Ok(source
        .edges
        .iter()
        .map(|s| {
            let mut best: Option<EdgeMapping> = None;
            for t in &targets {
                for oriented in [*t, t.reversed()] {
                    let d = mapping_distance(s, &oriented);
                    if best.is_none_or(|b| d < b.distance) {
                        best = Some(EdgeMapping { source: *s, target: oriented, distance: d });
                    }
                }
            }
            best.expect("targets is nonempty")
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationRule {
    /// Each edge mapping votes in whichever endpoint pairing agrees more with
    /// the tally of all pairings.
    #[default]
    GlobalEvidence,
    /// Each edge mapping votes in the pairing its direction match implies.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappedTo {
    To(StyleId),
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleMapping {
    pub source: StyleId,
    pub target: MappedTo,
    pub evidence: usize,
}

/// Turns edge mappings into one mapping per source style: endpoint pairings
/// are tallied and each source style keeps its best-supported target (lower
/// id on ties) among those allowed by `target_set`.
pub fn derive_style_mappings(
    edge_mappings: &[EdgeMapping],
    rule: OrientationRule,
    target_set: Option<&BTreeSet<StyleId>>,
) -> Vec<StyleMapping> {
    let pairings = |m: &EdgeMapping| {
        let (s, t) = (m.source, m.target);
        ([(s.a, t.a), (s.b, t.b)], [(s.a, t.b), (s.b, t.a)])
    };
    let mut votes: BTreeMap<(StyleId, StyleId), usize> = BTreeMap::new();
    let chosen: Vec<[(StyleId, StyleId); 2]> = match rule {
        OrientationRule::Geometric => edge_mappings.iter().map(|m| pairings(m).0).collect(),
        OrientationRule::GlobalEvidence => {
            let mut tally: BTreeMap<(StyleId, StyleId), usize> = BTreeMap::new();
            for m in edge_mappings {
                let (geo, alt) = pairings(m);
                for p in geo.into_iter().chain(alt) {
                    *tally.entry(p).or_insert(0) += 1;
                }
            }
            let support = |ps: &[(StyleId, StyleId); 2]| ps.iter().map(|p| tally[p]).sum::<usize>();
            edge_mappings
                .iter()
                .map(|m| {
                    let (geo, alt) = pairings(m);
                    if support(&alt) > support(&geo) {
                        alt
                    } else {
                        geo
                    }
                })
                .collect()
        }
    };
    for ps in chosen {
        for p in ps {
            *votes.entry(p).or_insert(0) += 1;
        }
    }
    let mut by_source: BTreeMap<StyleId, Vec<(StyleId, usize)>> = BTreeMap::new();
    for ((s, t), n) in votes {
        by_source.entry(s).or_default().push((t, n));
    }
    by_source
        .into_iter()
        .map(|(source, cands)| {
            let best = cands.into_iter().filter(|(t, _)| target_set.is_none_or(|set| set.contains(t))).fold(
                None,
                |best: Option<(StyleId, usize)>, (t, n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((t, n)),
                },
            );
            match best {
                Some((t, n)) => StyleMapping { source, target: MappedTo::To(t), evidence: n },
                None => StyleMapping { source, target: MappedTo::Unchanged, evidence: 0 },
            }
        })
        .collect()
}

/// Every style of `lnode` mapped onto itself.
pub fn identity_mappings(lnode: &LNode) -> Vec<StyleMapping> {
    lnode.style_ids().map(|s| StyleMapping { source: s, target: MappedTo::To(s), evidence: 1 }).collect()
}

/// Rewrites `source` through `mappings`: each mapped style takes the sprite
/// type, geometry and exemplar of its target style and keeps its own id, so
/// every relation and co-occurrence of the source carries over with its
/// probability. Count vectors follow the best-supported sprite-type mapping.
pub fn blend_lnode(source: &LNode, target: &LNode, mappings: &[StyleMapping]) -> Result<LNode, BlendError> {
    let mut out = source.clone();
    let mut type_votes: BTreeMap<SpriteId, BTreeMap<SpriteId, usize>> = BTreeMap::new();
    for m in mappings {
        let MappedTo::To(t) = m.target else {
            continue;
        };
        let from = source.style(m.source)?;
        let to = target.style(t)?;
        *type_votes.entry(from.sprite_type).or_default().entry(to.sprite_type).or_insert(0) += m.evidence;
        let slot = &mut out.styles[m.source.0 as usize];
        *slot = to.clone();
        slot.id = m.source;
    }
    let type_map: BTreeMap<SpriteId, SpriteId> = type_votes
        .into_iter()
        .map(|(from, votes)| {
            let (to, _) = votes.into_iter().fold((from, 0), |best, (to, n)| if n > best.1 { (to, n) } else { best });
            (from, to)
        })
        .collect();
    for cv in &mut out.count_vectors {
        let mut counts = BTreeMap::new();
        for (&ty, &n) in &cv.counts {
            *counts.entry(type_map.get(&ty).copied().unwrap_or(ty)).or_insert(0) += n;
        }
        cv.counts = counts;
    }
    out.id = format!("{}+{}", source.id, target.id);
    Ok(out)
}

/// Styles of `lnode` that some shape of the level is assigned to.
pub fn assignable_styles(lnode: &LNode, level: &Level, chunk_width: usize) -> Result<BTreeSet<StyleId>, BlendError> {
    let mut set = BTreeSet::new();
    for chunk in segment_chunks(level, chunk_width, chunk_width)? {
        let shapes = extract_grid_shapes(&chunk.grid, 0);
        set.extend(ShapeProfile::all(&shapes).iter().filter_map(|p| lnode.assign_style(p)));
    }
    Ok(set)
}

/// Blends `source` into `target` with the target set drawn from `level`.
/// `None` when either graph has no edges to map.
pub fn blend_pair(
    source: &LNode,
    target: &LNode,
    level: &Level,
    chunk_width: usize,
) -> Result<Option<(LNode, Vec<StyleMapping>)>, BlendError> {
    let (gs, gt) = (build_sgraph(source)?, build_sgraph(target)?);
    if gs.edges.is_empty() || gt.edges.is_empty() {
        return Ok(None);
    }
    let target_set = assignable_styles(target, level, chunk_width)?;
    let mappings = derive_style_mappings(&map_edges(&gs, &gt)?, OrientationRule::default(), Some(&target_set));
    Ok(Some((blend_lnode(source, target, &mappings)?, mappings)))
}

/// Which pair a blend came from and the style mappings it applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRecord {
    pub source: String,
    pub target: String,
    pub mappings: Vec<StyleMapping>,
}

#[derive(Debug, Clone)]
pub struct AutoBlend {
    /// Indices of the models that best explain some chunk of the level.
    pub selected: Vec<usize>,
    /// The input models followed by every blend.
    pub models: Vec<LNode>,
    /// One per blend, in blend order.
    pub records: Vec<BlendRecord>,
    /// Fewer than two models explain the level, so nothing was blended.
    pub degenerate: bool,
}

/// Blends every ordered pair of the models that best explain the chunks of
/// `level`, each time using the level to decide which target styles a
/// mapping may use.
pub fn auto_blend(models: &[LNode], level: &Level, chunk_width: usize) -> Result<AutoBlend, BlendError> {
    if models.len() < 2 {
        return Err(BlendError::TooFewModels(models.len()));
    }
    let selected: Vec<usize> = explain_sequence(level, models, chunk_width)?
        .iter()
        .map(|e| e.model)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = models.to_vec();
    let mut records = Vec::new();
    let degenerate = selected.len() < 2;
    if !degenerate {
        for &a in &selected {
            for &b in selected.iter().filter(|&&b| b != a) {
                if let Some((l, mappings)) = blend_pair(&models[a], &models[b], level, chunk_width)? {
                    records.push(BlendRecord { source: models[a].id.clone(), target: models[b].id.clone(), mappings });
                    out.push(l);
                }
            }
        }
    }
    Ok(AutoBlend { selected, models: out, records, degenerate })
}

/// Blends every model tagged `tag_a` with every model tagged `tag_b`, in both
/// directions.
pub fn full_blend(
    models: &[LNode],
    tag_a: &str,
    tag_b: &str,
    level: &Level,
    chunk_width: usize,
) -> Result<Vec<LNode>, BlendError> {
    let tagged = |tag: &str| -> Result<Vec<&LNode>, BlendError> {
        let v: Vec<&LNode> = models.iter().filter(|m| m.tag.as_deref() == Some(tag)).collect();
        if v.is_empty() {
            Err(BlendError::MissingTag(tag.to_string()))
        } else {
            Ok(v)
        }
    };
    let (xs, ys) = (tagged(tag_a)?, tagged(tag_b)?);
    let mut out = Vec::new();
    for x in &xs {
        for y in &ys {
            for (s, t) in [(x, y), (y, x)] {
                if let Some((l, _)) = blend_pair(s, t, level, chunk_width)? {
                    out.push(l);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Grid, LevelChunk};
    use crate::model::learn_lnode;

    fn edge(a: u32, b: u32, p: f64, f: [f64; 8]) -> SEdge {
        SEdge { a: StyleId(a), b: StyleId(b), probability: p, feature: f }
    }

    const RIGHT: [f64; 8] = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];

    #[test]
    fn edge_distance_cases() {
        let e = edge(0, 1, 0.7, RIGHT);
        assert_eq!(edge_distance(&e, &e).unwrap(), 0.0);
        assert_eq!(edge_distance(&e, &e.reversed()).unwrap(), 0.5);
        let (p9, p5) = (edge(0, 1, 0.9, RIGHT), edge(0, 1, 0.5, RIGHT));
        assert!((edge_distance(&p9, &p5).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(edge_distance(&e, &edge(0, 1, 0.7, [0.0; 8])), Err(BlendError::ZeroFeature));
    }

    fn graph(edges: Vec<SEdge>) -> SStructureGraph {
        let nodes: BTreeSet<StyleId> = edges.iter().flat_map(|e| [e.a, e.b]).collect();
        SStructureGraph {
            lnode_id: "g".into(),
            nodes: nodes.into_iter().collect(),
            candidates: edges.clone(),
            edges,
            steps: BTreeMap::new(),
            last_lowered: Vec::new(),
        }
    }

    #[test]
    fn identical_graphs_map_to_themselves() {
        let g = graph(vec![edge(0, 1, 0.9, RIGHT), edge(1, 2, 0.4, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0])]);
        let maps = map_edges(&g, &g).unwrap();
        for m in &maps {
            assert_eq!(m.source, m.target);
            assert_eq!(m.distance, 0.0);
        }
        let styles = derive_style_mappings(&maps, OrientationRule::GlobalEvidence, None);
        assert!(styles.iter().all(|m| m.target == MappedTo::To(m.source)));
        let single = graph(vec![edge(7, 8, 0.5, RIGHT)]);
        assert!(map_edges(&g, &single).unwrap().iter().all(|m| [m.target.a, m.target.b].contains(&StyleId(7))));
        assert_eq!(map_edges(&g, &graph(vec![])), Err(BlendError::NoTargetEdges));
    }

    #[test]
    fn target_set_filters_and_falls_back() {
        let src = graph(vec![edge(0, 1, 1.0, RIGHT)]);
        let tgt = graph(vec![edge(5, 6, 1.0, RIGHT)]);
        let maps = map_edges(&src, &tgt).unwrap();
        let only5 = BTreeSet::from([StyleId(5)]);
        let styles = derive_style_mappings(&maps, OrientationRule::GlobalEvidence, Some(&only5));
        assert_eq!(styles[0], StyleMapping { source: StyleId(0), target: MappedTo::To(StyleId(5)), evidence: 1 });
        assert_eq!(styles[1], StyleMapping { source: StyleId(1), target: MappedTo::Unchanged, evidence: 0 });
    }

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

    fn model() -> LNode {
        let chunks = [
            chunk(&["--B-----", "------E-", "XXXXXXXX"]),
            chunk(&["-----B--", "-E------", "XXXXXXXX"]),
            chunk(&["--------", "---E----", "XXXX-XXX"]),
        ];
        learn_lnode("m", &chunks, 0).unwrap()
    }

    #[test]
    fn sgraph_connects_and_is_minimal() {
        let l = model();
        let g = build_sgraph(&l).unwrap();
        assert!(is_connected(&g.connected_nodes(), &g.edges));
        if !g.last_lowered.is_empty() {
            let mut steps = g.steps.clone();
            for s in &g.last_lowered {
                *steps.get_mut(s).unwrap() -= 1;
            }
            assert!(!is_connected(&g.connected_nodes(), &g.admitted(&steps)));
        }
        let dot = to_dot(
            &g,
            &l,
            &crate::corpus::parse_legend("-\t0\tempty\nX\t1\tground\nE\t2\tgoomba\nB\t3\tblock\nempty\t0\n").unwrap(),
        );
        assert!(dot.contains("ground:"));
    }

    #[test]
    fn two_style_graph_lowers_to_probability() {
        let l = learn_lnode(
            "two",
            &[
                chunk(&["--------", "--E-----", "XXXXXXXX"]),
                chunk(&["--------", "--------", "XXXXXXXX"]),
                chunk(&["--------", "--------", "XXXXXXXX"]),
            ],
            0,
        )
        .unwrap();
        let g = build_sgraph(&l).unwrap();
        for e in &g.edges {
            assert!(e.probability >= g.threshold(e.a) - 1e-9 || e.probability >= g.threshold(e.b) - 1e-9);
        }
        assert!(is_connected(&g.connected_nodes(), &g.edges));
    }

    #[test]
    fn identity_blend_preserves_model() {
        let l = model();
        let b = blend_lnode(&l, &l, &identity_mappings(&l)).unwrap();
        assert_eq!(b.cond_table, l.cond_table);
        assert_eq!(b.styles, l.styles);
        assert_eq!(b.id, "m+m");
        let bad = [StyleMapping { source: StyleId(0), target: MappedTo::To(StyleId(99)), evidence: 1 }];
        assert_eq!(blend_lnode(&l, &l, &bad).unwrap_err(), BlendError::Model(ModelError::UnknownStyle(StyleId(99))));
    }

    #[test]
    fn auto_blend_needs_two_models() {
        let l = model();
        let level = Level { id: "x".into(), grid: chunk(&["--B-----", "------E-", "XXXXXXXX"]).grid, tag: None };
        assert_eq!(auto_blend(std::slice::from_ref(&l), &level, 8).unwrap_err(), BlendError::TooFewModels(1));
        let r = auto_blend(&[l.clone(), l], &level, 8).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.models.len(), 2);
    }
}
