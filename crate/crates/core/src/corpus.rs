//! Tile corpora: legends, levels, chunk segmentation and chunk features.
//!
//! Legend files map one glyph per line to a sprite type, fields separated by tabs:
//!
//! ```text
//! -    0    empty
//! X    1    ground
//! E    2    goomba
//! empty    0
//! ```
//!
//! Level files hold one glyph per tile, rows top to bottom. An optional first
//! line `#tag:<level-type>` labels the level.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a sprite type within a legend. Id 0 is always background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpriteId(pub u32);

impl SpriteId {
    pub const BACKGROUND: SpriteId = SpriteId(0);

    pub fn is_background(self) -> bool {
        self == Self::BACKGROUND
    }
}

impl fmt::Display for SpriteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpriteType {
    pub id: SpriteId,
    pub name: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("legend line {line}: {reason}")]
    MalformedLegend { line: usize, reason: String },
    #[error("legend line {line}: duplicate glyph '{glyph}'")]
    DuplicateGlyph { line: usize, glyph: char },
    #[error("legend line {line}: duplicate sprite id {id}")]
    DuplicateId { line: usize, id: u32 },
    #[error("legend has no `empty` background declaration")]
    MissingBackground,
    #[error("background must be sprite id 0 and carry a glyph, got id {0}")]
    InvalidBackground(u32),
    #[error("level is empty")]
    EmptyLevel,
    #[error("ragged level: row {row} has {found} columns, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("unknown glyph '{glyph}' at row {row}, column {col}")]
    UnknownGlyph { glyph: char, row: usize, col: usize },
    #[error("sprite id {0} is not in the legend")]
    UnknownSprite(u32),
    #[error("chunk width {width} exceeds level width {level_width}")]
    ChunkTooWide { width: usize, level_width: usize },
    #[error("chunk width and stride must be positive")]
    ZeroWindow,
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("corpus {0} contains no levels")]
    EmptyCorpus(PathBuf),
}

/// Glyph-to-sprite mapping for a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLegend {
    entries: BTreeMap<char, SpriteType>,
    empty_id: SpriteId,
}

impl TileLegend {
    pub fn new(entries: impl IntoIterator<Item = (char, SpriteType)>) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for (i, (glyph, ty)) in entries.into_iter().enumerate() {
            if !ids.insert(ty.id) {
                return Err(CorpusError::DuplicateId { line: i + 1, id: ty.id.0 });
            }
            if map.insert(glyph, ty).is_some() {
                return Err(CorpusError::DuplicateGlyph { line: i + 1, glyph });
            }
        }
        if !ids.contains(&SpriteId::BACKGROUND) {
            return Err(CorpusError::InvalidBackground(0));
        }
        Ok(Self { entries: map, empty_id: SpriteId::BACKGROUND })
    }

    pub fn empty_id(&self) -> SpriteId {
        self.empty_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, glyph: char) -> Option<&SpriteType> {
        self.entries.get(&glyph)
    }

    pub fn glyph_of(&self, id: SpriteId) -> Option<char> {
        self.entries.iter().find(|(_, t)| t.id == id).map(|(g, _)| *g)
    }

    pub fn name_of(&self, id: SpriteId) -> Option<&str> {
        self.entries.values().find(|t| t.id == id).map(|t| t.name.as_str())
    }

    pub fn id_by_name(&self, name: &str) -> Option<SpriteId> {
        self.entries.values().find(|t| t.name == name).map(|t| t.id)
    }

    pub fn contains_id(&self, id: SpriteId) -> bool {
        self.entries.values().any(|t| t.id == id)
    }

    /// Sprite ids in ascending order. Feature vectors are indexed by position
    /// in this list.
    pub fn sprite_ids(&self) -> Vec<SpriteId> {
        let mut ids: Vec<_> = self.entries.values().map(|t| t.id).collect();
        ids.sort();
        ids
    }

    pub fn glyphs(&self) -> impl Iterator<Item = (char, &SpriteType)> {
        self.entries.iter().map(|(g, t)| (*g, t))
    }
}

/// Parses a legend document: `glyph<TAB>id<TAB>name` lines plus `empty<TAB>id`.
/// Blank lines are skipped.
pub fn parse_legend(text: &str) -> Result<TileLegend, CorpusError> {
    let mut entries: BTreeMap<char, SpriteType> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    let mut empty = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let malformed = |reason: &str| CorpusError::MalformedLegend { line: line_no, reason: reason.to_string() };
        if fields[0] == "empty" {
            if fields.len() != 2 {
                return Err(malformed("expected `empty<TAB>id`"));
            }
            let id: u32 = fields[1].trim().parse().map_err(|_| malformed("bad background id"))?;
            if empty.replace(id).is_some() {
                return Err(malformed("background declared twice"));
            }
            continue;
        }
        if fields.len() != 3 {
            return Err(malformed("expected `glyph<TAB>id<TAB>name`"));
        }
        let mut chars = fields[0].chars();
        let glyph = match (chars.next(), chars.next()) {
            (Some(c), None) if c != '\n' => c,
            _ => return Err(malformed("glyph must be a single character")),
        };
        let id: u32 = fields[1].trim().parse().map_err(|_| malformed("bad sprite id"))?;
        if entries.contains_key(&glyph) {
            return Err(CorpusError::DuplicateGlyph { line: line_no, glyph });
        }
        if !ids.insert(id) {
            return Err(CorpusError::DuplicateId { line: line_no, id });
        }
        entries.insert(glyph, SpriteType { id: SpriteId(id), name: fields[2].to_string() });
    }
    let empty = empty.ok_or(CorpusError::MissingBackground)?;
    if empty != 0 || !ids.contains(&0) {
        return Err(CorpusError::InvalidBackground(empty));
    }
    Ok(TileLegend { entries, empty_id: SpriteId(empty) })
}

/// Row-major grid of sprite ids. Row 0 is the top.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
    cells: Vec<SpriteId>,
}

impl Grid {
    pub fn filled(width: usize, height: usize, id: SpriteId) -> Self {
        Self { width, height, cells: vec![id; width * height] }
    }

    pub fn from_rows(rows: Vec<Vec<SpriteId>>) -> Result<Self, CorpusError> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if height == 0 || width == 0 {
            return Err(CorpusError::EmptyLevel);
        }
        let mut cells = Vec::with_capacity(width * height);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != width {
                return Err(CorpusError::RaggedRows { row, expected: width, found: r.len() });
            }
            cells.extend(r);
        }
        Ok(Self { width, height, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> SpriteId {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, id: SpriteId) {
        self.cells[row * self.width + col] = id;
    }

    pub fn cells(&self) -> &[SpriteId] {
        &self.cells
    }

    /// Columns `[start, start + width)` as a new grid.
    pub fn columns(&self, start: usize, width: usize) -> Grid {
        let mut cells = Vec::with_capacity(width * self.height);
        for row in 0..self.height {
            let base = row * self.width + start;
            cells.extend_from_slice(&self.cells[base..base + width]);
        }
        Grid { width, height: self.height, cells }
    }

    /// Horizontal concatenation. All grids must share a height.
    pub fn hconcat(parts: &[Grid]) -> Option<Grid> {
        let height = parts.first()?.height;
        if parts.iter().any(|g| g.height != height) {
            return None;
        }
        let width: usize = parts.iter().map(|g| g.width).sum();
        let mut cells = Vec::with_capacity(width * height);
        for row in 0..height {
            for g in parts {
                cells.extend_from_slice(&g.cells[row * g.width..(row + 1) * g.width]);
            }
        }
        Some(Grid { width, height, cells })
    }

    pub fn map(&self, f: impl Fn(SpriteId) -> SpriteId) -> Grid {
        Grid { width: self.width, height: self.height, cells: self.cells.iter().map(|&c| f(c)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub id: String,
    pub grid: Grid,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelChunk {
    pub grid: Grid,
    pub origin_col: usize,
    pub source_level: String,
    /// Seconds the player spent in the chunk. Text corpora never carry it.
    pub dwell_time: Option<f64>,
}

impl LevelChunk {
    pub fn from_grid(grid: Grid, source_level: impl Into<String>) -> Self {
        Self { grid, origin_col: 0, source_level: source_level.into(), dwell_time: None }
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }
}

const TAG_PREFIX: &str = "#tag:";

pub fn parse_level(id: &str, text: &str, legend: &TileLegend) -> Result<Level, CorpusError> {
    let mut lines = text.split('\n').peekable();
    let mut tag = None;
    if let Some(first) = lines.peek() {
        if let Some(t) = first.strip_prefix(TAG_PREFIX) {
            tag = Some(t.trim_end_matches('\r').to_string());
            lines.next();
        }
    }
    let mut rows: Vec<&str> = lines.collect();
    // The file is LF-terminated, so the final split piece is empty.
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    if rows.is_empty() {
        return Err(CorpusError::EmptyLevel);
    }
    let mut grid_rows = Vec::with_capacity(rows.len());
    let mut width = None;
    for (row, line) in rows.iter().enumerate() {
        let mut ids = Vec::with_capacity(line.len());
        for (col, glyph) in line.chars().enumerate() {
            let ty = legend.lookup(glyph).ok_or(CorpusError::UnknownGlyph { glyph, row, col })?;
            ids.push(ty.id);
        }
        match width {
            None => width = Some(ids.len()),
            Some(w) if w != ids.len() => return Err(CorpusError::RaggedRows { row, expected: w, found: ids.len() }),
            _ => {}
        }
        grid_rows.push(ids);
    }
    Ok(Level { id: id.to_string(), grid: Grid::from_rows(grid_rows)?, tag })
}

/// Renders a grid as glyph rows joined by `\n` (no trailing newline).
pub fn render_grid(grid: &Grid, legend: &TileLegend) -> Result<String, CorpusError> {
    let glyphs: BTreeMap<SpriteId, char> = legend.glyphs().map(|(g, t)| (t.id, g)).collect();
    let mut out = String::with_capacity((grid.width() + 1) * grid.height());
    for row in 0..grid.height() {
        if row > 0 {
            out.push('\n');
        }
        for col in 0..grid.width() {
            let id = grid.get(row, col);
            out.push(*glyphs.get(&id).ok_or(CorpusError::UnknownSprite(id.0))?);
        }
    }
    Ok(out)
}

/// Inverse of [`parse_level`], without the trailing file newline.
pub fn render_level(level: &Level, legend: &TileLegend) -> Result<String, CorpusError> {
    let body = render_grid(&level.grid, legend)?;
    Ok(match &level.tag {
        Some(tag) => format!("{TAG_PREFIX}{tag}\n{body}"),
        None => body,
    })
}

/// Level file contents: [`render_level`] plus the terminating LF.
pub fn level_file_text(level: &Level, legend: &TileLegend) -> Result<String, CorpusError> {
    let mut text = render_level(level, legend)?;
    text.push('\n');
    Ok(text)
}

/// Cuts a level into fixed-width chunks left to right. A trailing window
/// narrower than `width` is dropped.
pub fn segment_chunks(level: &Level, width: usize, stride: usize) -> Result<Vec<LevelChunk>, CorpusError> {
    if width == 0 || stride == 0 {
        return Err(CorpusError::ZeroWindow);
    }
    let level_width = level.grid.width();
    if width > level_width {
        return Err(CorpusError::ChunkTooWide { width, level_width });
    }
    Ok((0..=level_width - width)
        .step_by(stride)
        .map(|origin_col| LevelChunk {
            grid: level.grid.columns(origin_col, width),
            origin_col,
            source_level: level.id.clone(),
            dwell_time: None,
        })
        .collect())
}

/// Per-sprite-type normalized counts, indexed like [`TileLegend::sprite_ids`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

pub fn chunk_features(chunk: &LevelChunk, legend: &TileLegend) -> FeatureVector {
    let ids = legend.sprite_ids();
    let mut counts = vec![0usize; ids.len()];
    for &cell in chunk.grid.cells() {
        if cell == legend.empty_id() {
            continue;
        }
        if let Ok(i) = ids.binary_search(&cell) {
            counts[i] += 1;
        }
    }
    let area = chunk.grid.cells().len() as f64;
    FeatureVector(counts.into_iter().map(|c| c as f64 / area).collect())
}

/// A legend plus its levels, loaded from `legend.txt` and `levels/*.txt`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub legend: TileLegend,
    pub levels: Vec<Level>,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn in_file(path: &Path) -> impl FnOnce(CorpusError) -> CorpusError + '_ {
    move |e| CorpusError::InFile { path: path.to_path_buf(), source: Box::new(e) }
}

pub fn load_legend(path: &Path) -> Result<TileLegend, CorpusError> {
    parse_legend(&read(path)?).map_err(in_file(path))
}

pub fn load_level(path: &Path, legend: &TileLegend) -> Result<Level, CorpusError> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_level(&id, &read(path)?, legend).map_err(in_file(path))
}

/// Loads a corpus directory. Levels are ordered by file name.
pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let legend = load_legend(&dir.join("legend.txt"))?;
    let levels_dir = dir.join("levels");
    let entries =
        fs::read_dir(&levels_dir).map_err(|e| CorpusError::Io { path: levels_dir.clone(), message: e.to_string() })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CorpusError::EmptyCorpus(dir.to_path_buf()));
    }
    let levels = paths.iter().map(|p| load_level(p, &legend)).collect::<Result<_, _>>()?;
    Ok(Corpus { legend, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "-\t0\tempty\nX\t1\tground\nE\t2\tgoomba\nempty\t0\n";

    fn mini() -> TileLegend {
        parse_legend(MINI).unwrap()
    }

    fn blank_level(width: usize) -> Level {
        Level { id: "blank".into(), grid: Grid::filled(width, 14, SpriteId(0)), tag: None }
    }

    #[test]
    fn minimal_legend() {
        let legend = mini();
        assert_eq!(legend.len(), 3);
        assert_eq!(legend.lookup('-').unwrap().id, SpriteId(0));
        assert_eq!(legend.empty_id(), SpriteId(0));
        assert_eq!(legend.name_of(SpriteId(2)), Some("goomba"));
    }

    #[test]
    fn duplicate_glyph_rejected() {
        let err = parse_legend("-\t0\tempty\n-\t1\tground\nempty\t0\n").unwrap_err();
        assert_eq!(err, CorpusError::DuplicateGlyph { line: 2, glyph: '-' });
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_legend("-\t0\tempty\nX\t0\tground\nempty\t0\n").unwrap_err();
        assert_eq!(err, CorpusError::DuplicateId { line: 2, id: 0 });
    }

    #[test]
    fn missing_background_rejected() {
        assert_eq!(parse_legend("-\t0\tempty\nX\t1\tground\n").unwrap_err(), CorpusError::MissingBackground);
        assert_eq!(
            parse_legend("-\t0\tempty\nX\t1\tground\nempty\t1\n").unwrap_err(),
            CorpusError::InvalidBackground(1)
        );
    }

    #[test]
    fn all_background_level() {
        let level = parse_level("a", "---\n---\n", &mini()).unwrap();
        assert_eq!((level.grid.width(), level.grid.height()), (3, 2));
        assert!(level.grid.cells().iter().all(|c| c.is_background()));
        assert_eq!(level.tag, None);
    }

    #[test]
    fn unknown_glyph_position() {
        let err = parse_level("a", "---\n-?-\n", &mini()).unwrap_err();
        assert_eq!(err, CorpusError::UnknownGlyph { glyph: '?', row: 1, col: 1 });
    }

    #[test]
    fn ragged_rows() {
        let err = parse_level("a", "---\n--\n", &mini()).unwrap_err();
        assert_eq!(err, CorpusError::RaggedRows { row: 1, expected: 3, found: 2 });
    }

    #[test]
    fn tag_line() {
        let level = parse_level("a", "#tag:castle\n-X\nXX\n", &mini()).unwrap();
        assert_eq!(level.tag.as_deref(), Some("castle"));
        assert_eq!(level.grid.height(), 2);
        assert_eq!(level_file_text(&level, &mini()).unwrap(), "#tag:castle\n-X\nXX\n");
    }

    #[test]
    fn render_blank_two_by_two() {
        let level = Level { id: "b".into(), grid: Grid::filled(2, 2, SpriteId(0)), tag: None };
        assert_eq!(render_level(&level, &mini()).unwrap(), "--\n--");
    }

    #[test]
    fn render_rejects_unknown_id() {
        let level = Level { id: "b".into(), grid: Grid::filled(1, 1, SpriteId(9)), tag: None };
        assert_eq!(render_level(&level, &mini()).unwrap_err(), CorpusError::UnknownSprite(9));
    }

    #[test]
    fn segmentation_counts() {
        let origins = |w, width, stride| -> Vec<usize> {
            segment_chunks(&blank_level(w), width, stride).unwrap().iter().map(|c| c.origin_col).collect()
        };
        assert_eq!(origins(48, 16, 16), vec![0, 16, 32]);
        assert_eq!(origins(50, 16, 16), vec![0, 16, 32]);
        assert_eq!(origins(48, 16, 8), vec![0, 8, 16, 24, 32]);
    }

    #[test]
    fn segmentation_errors() {
        assert_eq!(
            segment_chunks(&blank_level(10), 16, 16).unwrap_err(),
            CorpusError::ChunkTooWide { width: 16, level_width: 10 }
        );
        assert_eq!(segment_chunks(&blank_level(10), 0, 1).unwrap_err(), CorpusError::ZeroWindow);
    }

    #[test]
    fn features_background_only() {
        let chunk = LevelChunk::from_grid(Grid::filled(16, 14, SpriteId(0)), "x");
        assert_eq!(chunk_features(&chunk, &mini()).0, vec![0.0; 3]);
    }

    #[test]
    fn features_seventeen_ground() {
        let mut grid = Grid::filled(16, 14, SpriteId(0));
        for col in 0..16 {
            grid.set(13, col, SpriteId(1));
        }
        grid.set(12, 4, SpriteId(1));
        grid.set(12, 7, SpriteId(2));
        let f = chunk_features(&LevelChunk::from_grid(grid, "x"), &mini());
        assert_eq!(f.0[0], 0.0);
        assert_eq!(f.0[1], 17.0 / 224.0);
        assert!((f.0[1] - 0.0759).abs() < 1e-4);
        assert_eq!(f.0[2], 1.0 / 224.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn level_text() -> impl Strategy<Value = String> {
            (1usize..12, 1usize..6).prop_flat_map(|(w, h)| {
                proptest::collection::vec(proptest::collection::vec(prop_oneof![Just('-'), Just('X'), Just('E')], w), h)
                    .prop_map(|rows| {
                        rows.into_iter().map(|r| r.into_iter().collect::<String>() + "\n").collect::<String>()
                    })
            })
        }

        proptest! {
            #[test]
            fn file_round_trip(text in level_text()) {
                let legend = mini();
                let level = parse_level("p", &text, &legend).unwrap();
                prop_assert_eq!(level_file_text(&level, &legend).unwrap(), text);
                let again = parse_level("p", &render_level(&level, &legend).unwrap(), &legend).unwrap();
                prop_assert_eq!(again, level);
            }

            #[test]
            fn segment_count_formula(w in 1usize..80, width in 1usize..20, stride in 1usize..20) {
                prop_assume!(width <= w);
                let chunks = segment_chunks(&blank_level(w), width, stride).unwrap();
                prop_assert_eq!(chunks.len(), (w - width) / stride + 1);
                prop_assert!(chunks.iter().all(|c| c.width() == width));
            }

            #[test]
            fn features_ignore_positions(cells in proptest::collection::vec(0u32..3, 12), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let legend = mini();
                let grid = |cs: &[u32]| {
                    Grid::from_rows(cs.chunks(4).map(|r| r.iter().map(|&c| SpriteId(c)).collect()).collect()).unwrap()
                };
                let mut shuffled = cells.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = chunk_features(&LevelChunk::from_grid(grid(&cells), "a"), &legend);
                let b = chunk_features(&LevelChunk::from_grid(grid(&shuffled), "b"), &legend);
                prop_assert_eq!(a, b);
            }
        }
    }
}
