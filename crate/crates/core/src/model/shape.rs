//! Shapes, cardinal-point relation vectors and per-chunk sprite counts.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::{Grid, LevelChunk, SpriteId};

/// Inclusive tile bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

/// Cardinal points in `(x, y)` = `(col, row)` tile coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cardinals {
    pub n: [f64; 2],
    pub s: [f64; 2],
    pub e: [f64; 2],
    pub w: [f64; 2],
}

impl BBox {
    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.left + self.right + 1) as f64 / 2.0, (self.top + self.bottom + 1) as f64 / 2.0]
    }

    pub fn cardinals(&self) -> Cardinals {
        let [cx, cy] = self.center();
        Cardinals {
            n: [cx, self.top as f64],
            s: [cx, (self.bottom + 1) as f64],
            w: [self.left as f64, cy],
            e: [(self.right + 1) as f64, cy],
        }
    }
}

/// Cell pattern of a shape, relative to its bounding box's top-left corner.
/// Cells are `(row, col)` and sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<(usize, usize)>,
}

impl Mask {
    pub fn rect(height: usize, width: usize) -> Self {
        let cells = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).collect();
        Self { height, width, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn bbox_at(&self, top: usize, left: usize) -> BBox {
        BBox { top, left, bottom: top + self.height - 1, right: left + self.width - 1 }
    }

    /// `|A ∩ B| / |A ∪ B|` with both masks anchored at their top-left corner.
    pub fn jaccard(&self, other: &Mask) -> f64 {
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < self.cells.len() && j < other.cells.len() {
            match self.cells[i].cmp(&other.cells[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = self.cells.len() + other.cells.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// A maximal 4-connected region of one non-background sprite type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub sprite_type: SpriteId,
    /// `(row, col)` cells, sorted.
    pub cells: Vec<(usize, usize)>,
    pub bbox: BBox,
    pub source_chunk: usize,
}

impl Shape {
    pub fn from_cells(sprite_type: SpriteId, mut cells: Vec<(usize, usize)>, source_chunk: usize) -> Self {
        assert!(!cells.is_empty(), "a shape needs at least one cell");
        cells.sort_unstable();
        let bbox = BBox {
            top: cells.iter().map(|c| c.0).min().unwrap(),
            bottom: cells.iter().map(|c| c.0).max().unwrap(),
            left: cells.iter().map(|c| c.1).min().unwrap(),
            right: cells.iter().map(|c| c.1).max().unwrap(),
        };
        Self { sprite_type, cells, bbox, source_chunk }
    }

    pub fn cardinals(&self) -> Cardinals {
        self.bbox.cardinals()
    }

    pub fn mask(&self) -> Mask {
        let mut cells: Vec<_> = self.cells.iter().map(|&(r, c)| (r - self.bbox.top, c - self.bbox.left)).collect();
        cells.sort_unstable();
        Mask { height: self.bbox.height(), width: self.bbox.width(), cells }
    }
}

/// Connected components of every non-background type, in row-major order of
/// each component's first cell.
pub fn extract_shapes(chunk: &LevelChunk) -> Vec<Shape> {
    extract_grid_shapes(&chunk.grid, 0)
}

pub(crate) fn extract_grid_shapes(grid: &Grid, source_chunk: usize) -> Vec<Shape> {
    let (w, h) = (grid.width(), grid.height());
    let mut seen = vec![false; w * h];
    let mut shapes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        let ty = grid.cells()[start];
        if seen[start] || ty.is_background() {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            cells.push((r, c));
            let mut visit = |j: usize| {
                if !seen[j] && grid.cells()[j] == ty {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        shapes.push(Shape::from_cells(ty, cells, source_chunk));
    }
    shapes
}

/// Same-cardinal differences `B.X − A.X` for an ordered shape pair `(A, B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationVectors {
    pub n: [f64; 2],
    pub s: [f64; 2],
    pub e: [f64; 2],
    pub w: [f64; 2],
}

impl RelationVectors {
    pub fn between(a: &BBox, b: &BBox) -> Self {
        let (ca, cb) = (a.cardinals(), b.cardinals());
        let d = |p: [f64; 2], q: [f64; 2]| [q[0] - p[0], q[1] - p[1]];
        Self { n: d(ca.n, cb.n), s: d(ca.s, cb.s), e: d(ca.e, cb.e), w: d(ca.w, cb.w) }
    }

    /// Mean of the four vectors; equals the offset between the two centers.
    pub fn centroid_offset(&self) -> [f64; 2] {
        [(self.n[0] + self.s[0] + self.e[0] + self.w[0]) / 4.0, (self.n[1] + self.s[1] + self.e[1] + self.w[1]) / 4.0]
    }

    /// `[n, s, e, w]` concatenated.
    pub fn feature(&self) -> [f64; 8] {
        [self.n[0], self.n[1], self.s[0], self.s[1], self.e[0], self.e[1], self.w[0], self.w[1]]
    }

    pub fn negated(&self) -> Self {
        let neg = |v: [f64; 2]| [-v[0], -v[1]];
        Self { n: neg(self.n), s: neg(self.s), e: neg(self.e), w: neg(self.w) }
    }
}

pub fn relation_vectors(a: &Shape, b: &Shape) -> Result<RelationVectors, ModelError> {
    if a == b {
        return Err(ModelError::SameShape);
    }
    Ok(RelationVectors::between(&a.bbox, &b.bbox))
}

/// Relations from one shape to every other shape of its chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationSet {
    /// Index of the owner in the chunk's shape list.
    pub owner: usize,
    pub relations: Vec<(usize, RelationVectors)>,
}

pub fn build_relation_set(shape: &Shape, chunk_shapes: &[Shape]) -> Result<RelationSet, ModelError> {
    let owner = chunk_shapes.iter().position(|s| s == shape).ok_or(ModelError::ShapeMissing)?;
    Ok(relation_set_at(owner, chunk_shapes))
}

pub(crate) fn relation_set_at(owner: usize, chunk_shapes: &[Shape]) -> RelationSet {
    let a = &chunk_shapes[owner].bbox;
    let relations = chunk_shapes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != owner)
        .map(|(i, s)| (i, RelationVectors::between(a, &s.bbox)))
        .collect();
    RelationSet { owner, relations }
}

/// Discretized relative position: the center offset rounded half away from
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelKey {
    pub dx: i32,
    pub dy: i32,
}

impl RelKey {
    pub fn from_offset(offset: [f64; 2]) -> Self {
        Self { dx: offset[0].round() as i32, dy: offset[1].round() as i32 }
    }

    /// Position of `a` relative to `b`.
    pub fn of(a: &BBox, b: &BBox) -> Self {
        let (ca, cb) = (a.center(), b.center());
        Self::from_offset([ca[0] - cb[0], ca[1] - cb[1]])
    }
}

/// Non-background cell counts of one chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    pub counts: BTreeMap<SpriteId, usize>,
    pub source_chunk: usize,
}

impl CountVector {
    pub fn get(&self, id: SpriteId) -> usize {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn count_vector(chunk: &LevelChunk) -> CountVector {
    grid_count_vector(&chunk.grid, 0)
}

pub(crate) fn grid_count_vector(grid: &Grid, source_chunk: usize) -> CountVector {
    let mut counts = BTreeMap::new();
    for &c in grid.cells().iter().filter(|c| !c.is_background()) {
        *counts.entry(c).or_insert(0) += 1;
    }
    CountVector { counts, source_chunk }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn grid_from(rows: &[&str]) -> Grid {
        let id = |ch| match ch {
            '-' => 0,
            'X' => 1,
            'E' => 2,
            'B' => 3,
            'P' => 4,
            _ => panic!("glyph {ch}"),
        };
        Grid::from_rows(rows.iter().map(|r| r.chars().map(|c| SpriteId(id(c))).collect()).collect()).unwrap()
    }

    /// 16×14: two goombas, three block shapes, a pipe, one 17-cell ground shape.
    pub(crate) fn fig_chunk() -> LevelChunk {
        LevelChunk::from_grid(
            grid_from(&[
                "----------------",
                "----------------",
                "----------------",
                "----BBB---------",
                "-------------B--",
                "-------------B--",
                "----------------",
                "--BB------PPP---",
                "----------------",
                "----------------",
                "----------------",
                "-----E---E------",
                "XXXXXXXXXXXXXXXX",
                "--X-------------",
            ]),
            "fig",
        )
    }

    #[test]
    fn single_block_region() {
        let chunk = LevelChunk::from_grid(grid_from(&["----", "-BB-", "-BB-"]), "a");
        let shapes = extract_shapes(&chunk);
        assert_eq!(shapes.len(), 1);
        assert_eq!(shapes[0].cells.len(), 4);
        assert_eq!(shapes[0].bbox, BBox { top: 1, left: 1, bottom: 2, right: 2 });
    }

    #[test]
    fn gap_splits_ground() {
        let chunk = LevelChunk::from_grid(grid_from(&["------", "XX--XX"]), "a");
        let shapes = extract_shapes(&chunk);
        assert_eq!(shapes.len(), 2);
        assert!(shapes.iter().all(|s| s.sprite_type == SpriteId(1)));
    }

    #[test]
    fn diagonal_cells_are_separate() {
        let chunk = LevelChunk::from_grid(grid_from(&["B-", "-B"]), "a");
        assert_eq!(extract_shapes(&chunk).len(), 2);
    }

    #[test]
    fn figure_chunk_shapes_and_counts() {
        let chunk = fig_chunk();
        let shapes = extract_shapes(&chunk);
        let goombas: Vec<_> = shapes.iter().filter(|s| s.sprite_type == SpriteId(2)).collect();
        assert_eq!(goombas.len(), 2);
        assert!(goombas.iter().all(|g| g.cells.len() == 1));
        let grounds: Vec<_> = shapes.iter().filter(|s| s.sprite_type == SpriteId(1)).collect();
        assert_eq!(grounds.len(), 1);
        assert_eq!(grounds[0].cells.len(), 17);
        let counts = count_vector(&chunk);
        assert_eq!(counts.get(SpriteId(2)), 2);
        assert_eq!(counts.get(SpriteId(1)), 17);
    }

    #[test]
    fn relations_of_translated_unit_shapes() {
        let a = Shape::from_cells(SpriteId(2), vec![(5, 2)], 0);
        let b = Shape::from_cells(SpriteId(2), vec![(5, 5)], 0);
        let v = relation_vectors(&a, &b).unwrap();
        for d in [v.n, v.s, v.e, v.w] {
            assert_eq!(d, [3.0, 0.0]);
        }
        assert_eq!(relation_vectors(&b, &a).unwrap(), v.negated());
    }

    #[test]
    fn relations_hand_computed() {
        let a = Shape::from_cells(SpriteId(3), vec![(0, 0)], 0);
        let b = Shape::from_cells(SpriteId(3), vec![(2, 2), (2, 3), (3, 2), (3, 3)], 0);
        let v = relation_vectors(&a, &b).unwrap();
        // a: cx = cy = 0.5; b: cx = cy = 3
        assert_eq!(v.n, [2.5, 2.0]);
        assert_eq!(v.s, [2.5, 3.0]);
        assert_eq!(v.e, [3.0, 2.5]);
        assert_eq!(v.w, [2.0, 2.5]);
        assert_eq!(v.centroid_offset(), [2.5, 2.5]);
        assert_eq!(RelKey::of(&b.bbox, &a.bbox), RelKey { dx: 3, dy: 3 });
        assert_eq!(RelKey::of(&a.bbox, &b.bbox), RelKey { dx: -3, dy: -3 });
    }

    #[test]
    fn same_shape_twice_is_an_error() {
        let a = Shape::from_cells(SpriteId(3), vec![(0, 0)], 0);
        assert_eq!(relation_vectors(&a, &a).unwrap_err(), ModelError::SameShape);
    }

    #[test]
    fn relation_set_sizes() {
        let shapes = extract_shapes(&fig_chunk());
        let n = shapes.len();
        let mut total = 0;
        for s in &shapes {
            let set = build_relation_set(s, &shapes).unwrap();
            assert_eq!(set.relations.len(), n - 1);
            assert!(set.relations.iter().all(|(i, _)| *i != set.owner));
            total += set.relations.len();
        }
        assert_eq!(total, n * (n - 1));

        let lone = extract_shapes(&LevelChunk::from_grid(grid_from(&["-B-"]), "a"));
        assert!(build_relation_set(&lone[0], &lone).unwrap().relations.is_empty());
        let stranger = Shape::from_cells(SpriteId(1), vec![(9, 9)], 0);
        assert_eq!(build_relation_set(&stranger, &lone).unwrap_err(), ModelError::ShapeMissing);
    }

    #[test]
    fn five_shape_chunk_relations() {
        let chunk = LevelChunk::from_grid(grid_from(&["-P---B--", "------BB", "--E-----", "XXXXXXXX"]), "d");
        let shapes = extract_shapes(&chunk);
        assert_eq!(shapes.len(), 5);
        for s in &shapes {
            assert_eq!(build_relation_set(s, &shapes).unwrap().relations.len(), 4);
        }
    }

    #[test]
    fn empty_chunk_counts() {
        let chunk = LevelChunk::from_grid(grid_from(&["---", "---"]), "a");
        assert!(count_vector(&chunk).counts.is_empty());
        assert!(extract_shapes(&chunk).is_empty());
    }

    #[test]
    fn jaccard_of_unit_and_bar() {
        let unit = Mask::rect(1, 1);
        let bar = Mask::rect(1, 4);
        assert_eq!(unit.jaccard(&bar), 0.25);
        assert_eq!(bar.jaccard(&bar), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid_strategy() -> impl Strategy<Value = Grid> {
            (1usize..10, 1usize..8).prop_flat_map(|(w, h)| {
                proptest::collection::vec(0u32..4, w * h).prop_map(move |cells| {
                    Grid::from_rows(cells.chunks(w).map(|r| r.iter().map(|&c| SpriteId(c)).collect()).collect())
                        .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn shapes_partition_cells(grid in grid_strategy()) {
                let shapes = extract_grid_shapes(&grid, 0);
                let mut covered = vec![false; grid.width() * grid.height()];
                for s in &shapes {
                    for &(r, c) in &s.cells {
                        prop_assert_eq!(grid.get(r, c), s.sprite_type);
                        prop_assert!(!covered[r * grid.width() + c]);
                        covered[r * grid.width() + c] = true;
                    }
                }
                for r in 0..grid.height() {
                    for c in 0..grid.width() {
                        prop_assert_eq!(covered[r * grid.width() + c], !grid.get(r, c).is_background());
                    }
                }
            }

            #[test]
            fn relations_antisymmetric(grid in grid_strategy()) {
                let shapes = extract_grid_shapes(&grid, 0);
                for a in &shapes {
                    for b in &shapes {
                        if a == b { continue; }
                        let ab = relation_vectors(a, b).unwrap();
                        prop_assert_eq!(relation_vectors(b, a).unwrap(), ab.negated());
                        let (ca, cb) = (a.bbox.center(), b.bbox.center());
                        prop_assert_eq!(ab.centroid_offset(), [cb[0] - ca[0], cb[1] - ca[1]]);
                    }
                }
            }

            #[test]
            fn counts_survive_mirroring(grid in grid_strategy()) {
                let w = grid.width();
                let mut mirrored = grid.clone();
                for r in 0..grid.height() {
                    for c in 0..w {
                        mirrored.set(r, c, grid.get(r, w - 1 - c));
                    }
                }
                prop_assert_eq!(grid_count_vector(&grid, 0), grid_count_vector(&mirrored, 0));
            }
        }
    }
}
