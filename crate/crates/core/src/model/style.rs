//! Styles: clusters of (shape, relation set) pairs of one sprite type.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::shape::{extract_grid_shapes, relation_set_at, Mask, RelationSet, Shape};
use super::ModelError;
use crate::clustering::{kmedoids_matrix, scan_limit, select_k, DistanceMatrix};
use crate::corpus::{LevelChunk, SpriteId};
use crate::rng;

/// Upper bound on the number of styles tried per sprite type.
pub const STYLE_K_MAX: usize = 10;
/// Dimension fed to the distortion-ratio weights when selecting style counts.
pub const STYLE_DISTORTION_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleId(pub u32);

impl fmt::Display for StyleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a style comparison needs from a shape: its type, its cell mask and
/// the 8-dimensional cardinal vectors to every other shape of its chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeProfile {
    pub sprite_type: SpriteId,
    pub mask: Mask,
    pub relations: Vec<[f64; 8]>,
}

impl ShapeProfile {
    pub fn new(shape: &Shape, relations: &RelationSet) -> Self {
        Self {
            sprite_type: shape.sprite_type,
            mask: shape.mask(),
            relations: relations.relations.iter().map(|(_, v)| v.feature()).collect(),
        }
    }

    /// Profiles of every shape in a chunk, in shape order.
    pub fn all(shapes: &[Shape]) -> Vec<ShapeProfile> {
        (0..shapes.len()).map(|i| ShapeProfile::new(&shapes[i], &relation_set_at(i, shapes))).collect()
    }
}

fn euclid8(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_nearest(from: &[[f64; 8]], to: &[[f64; 8]]) -> f64 {
    from.iter().map(|a| to.iter().map(|b| euclid8(a, b)).fold(f64::INFINITY, f64::min)).sum::<f64>() / from.len() as f64
}

/// Symmetric mean Chamfer distance between two relation sets. Two empty sets
/// are identical; an empty set against a nonempty one is infinitely far.
pub fn chamfer(a: &[[f64; 8]], b: &[[f64; 8]]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => 0.5 * (mean_nearest(a, b) + mean_nearest(b, a)),
    }
}

/// `0.5·(1 − Jaccard) + 0.5·clamp(chamfer / chunk_diag)`, in `[0, 1]`.
pub fn style_distance(a: &ShapeProfile, b: &ShapeProfile, chunk_diag: f64) -> Result<f64, ModelError> {
    if a.sprite_type != b.sprite_type {
        return Err(ModelError::TypeMismatch { a: a.sprite_type, b: b.sprite_type });
    }
    let geometry = 1.0 - a.mask.jaccard(&b.mask);
    let relation = (chamfer(&a.relations, &b.relations) / chunk_diag).clamp(0.0, 1.0);
    Ok(0.5 * geometry + 0.5 * relation)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryCount {
    pub mask: Mask,
    pub count: usize,
}

/// One training shape belonging to a style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleInstance {
    /// Chunk index within the category.
    pub chunk: usize,
    /// Shape index within that chunk.
    pub shape: usize,
    /// Index into the style's geometry pool.
    pub geometry: usize,
    pub top: usize,
    pub left: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub id: StyleId,
    pub sprite_type: SpriteId,
    /// Profile of the medoid member; styles are compared through it.
    pub exemplar: ShapeProfile,
    /// Distinct member masks, most frequent first.
    pub geometry_pool: Vec<GeometryCount>,
    pub instances: Vec<StyleInstance>,
    /// Index into `instances`.
    pub medoid: usize,
    pub chunk_ids: BTreeSet<usize>,
}

impl Style {
    /// Most frequent member geometry (first in pool order on ties).
    pub fn modal_mask(&self) -> &Mask {
        &self.geometry_pool[0].mask
    }
}

/// Shapes and profiles of every chunk of a category.
pub(crate) struct CategoryShapes {
    pub shapes: Vec<Vec<Shape>>,
    pub profiles: Vec<Vec<ShapeProfile>>,
}

impl CategoryShapes {
    pub fn new(chunks: &[LevelChunk]) -> Self {
        let shapes: Vec<Vec<Shape>> = chunks.iter().enumerate().map(|(i, c)| extract_grid_shapes(&c.grid, i)).collect();
        let profiles = shapes.iter().map(|s| ShapeProfile::all(s)).collect();
        Self { shapes, profiles }
    }

    /// `(chunk, shape)` references of every shape of one type.
    pub fn of_type(&self, ty: SpriteId) -> Vec<(usize, usize)> {
        self.shapes
            .iter()
            .enumerate()
            .flat_map(|(c, shapes)| {
                shapes.iter().enumerate().filter(|(_, s)| s.sprite_type == ty).map(move |(i, _)| (c, i))
            })
            .collect()
    }
}

pub(crate) fn chunk_diag(width: usize, height: usize) -> f64 {
    ((width * width + height * height) as f64).sqrt()
}

/// Clusters the shapes of one sprite type. The style count comes from the
/// distortion ratio over K-medoids runs, with the squared distance to the
/// medoid as distortion. Style ids start at `first_id`.
pub(crate) fn cluster_styles(
    data: &CategoryShapes,
    sprite_type: SpriteId,
    diag: f64,
    seed: u64,
    first_id: u32,
) -> Result<Vec<Style>, ModelError> {
    let members = data.of_type(sprite_type);
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let profile = |i: usize| &data.profiles[members[i].0][members[i].1];
    let matrix = DistanceMatrix::from_fn(
        members.len(),
        |i, j| style_distance(profile(i), profile(j), diag).expect("members share a type"),
        seed,
    )?;
    let k_max = scan_limit(STYLE_K_MAX, members.len());
    let fits =
        (1..=k_max).map(|k| kmedoids_matrix(&matrix, k, rng::derive(seed, k as u64))).collect::<Result<Vec<_>, _>>()?;
    let distortions: Vec<f64> = fits.iter().map(|f| f.assignment.inertia).collect();
    let k = select_k(&distortions, STYLE_DISTORTION_DIM).k;
    let fit = &fits[k - 1];

    let mut styles = Vec::with_capacity(k);
    for (cluster, &medoid_member) in fit.medoids.iter().enumerate() {
        let member_idx: Vec<usize> = fit.assignment.members(cluster);
        let mut pool: BTreeMap<Mask, usize> = BTreeMap::new();
        for &m in &member_idx {
            let (c, s) = members[m];
            *pool.entry(data.shapes[c][s].mask()).or_insert(0) += 1;
        }
        let mut geometry_pool: Vec<GeometryCount> =
            pool.into_iter().map(|(mask, count)| GeometryCount { mask, count }).collect();
        geometry_pool.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.mask.cmp(&b.mask)));
        let instances: Vec<StyleInstance> = member_idx
            .iter()
            .map(|&m| {
                let (c, s) = members[m];
                let shape = &data.shapes[c][s];
                let mask = shape.mask();
                StyleInstance {
                    chunk: c,
                    shape: s,
                    geometry: geometry_pool.iter().position(|g| g.mask == mask).expect("pooled"),
                    top: shape.bbox.top,
                    left: shape.bbox.left,
                }
            })
            .collect();
        let medoid = member_idx.iter().position(|&m| m == medoid_member).expect("medoid is a member");
        styles.push(Style {
            id: StyleId(first_id + cluster as u32),
            sprite_type,
            exemplar: profile(medoid_member).clone(),
            chunk_ids: instances.iter().map(|i| i.chunk).collect(),
            geometry_pool,
            instances,
            medoid,
        });
    }
    Ok(styles)
}

/// Learns the styles of one sprite type over a category's chunks. Types that
/// never occur yield no styles.
pub fn learn_styles(
    category_chunks: &[LevelChunk],
    sprite_type: SpriteId,
    seed: u64,
) -> Result<Vec<Style>, ModelError> {
    let first = category_chunks.first().ok_or(ModelError::EmptyCategory)?;
    let data = CategoryShapes::new(category_chunks);
    cluster_styles(&data, sprite_type, chunk_diag(first.width(), first.height()), seed, 0)
}
