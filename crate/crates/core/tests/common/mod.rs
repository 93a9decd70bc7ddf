//! Procedural tile corpora shared by the integration tests.

#![allow(dead_code)]

use chunkblend::corpus::{parse_legend, Grid, Level, LevelChunk, SpriteId, TileLegend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: usize = 12;
pub const HEIGHT: usize = 10;

pub const EMPTY: SpriteId = SpriteId(0);
pub const GROUND: SpriteId = SpriteId(1);
pub const GOOMBA: SpriteId = SpriteId(2);
pub const BLOCK: SpriteId = SpriteId(3);
pub const PIPE: SpriteId = SpriteId(4);
pub const SEABLOCK: SpriteId = SpriteId(5);
pub const SQUID: SpriteId = SpriteId(6);
pub const WATER: SpriteId = SpriteId(7);

pub const LEGEND: &str = "-\t0\tempty\nX\t1\tground\nE\t2\tgoomba\nB\t3\tblock\nP\t4\tpipe\nS\t5\tseablock\nQ\t6\tsquid\nW\t7\twater\nempty\t0\n";

pub fn legend() -> TileLegend {
    parse_legend(LEGEND).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ground along the bottom two rows with an optional gap, goombas walking
/// on it, an optional floating block run and an optional pipe.
pub fn overworld_grid(rng: &mut ChaCha8Rng) -> Grid {
    let mut g = Grid::filled(WIDTH, HEIGHT, EMPTY);
    let gap = rng.random_bool(0.4).then(|| {
        let start = rng.random_range(2..WIDTH - 4);
        start..start + rng.random_range(2..=3)
    });
    let solid = |c: usize| gap.as_ref().is_none_or(|r| !r.contains(&c));
    for c in (0..WIDTH).filter(|&c| solid(c)) {
        g.set(HEIGHT - 2, c, GROUND);
        g.set(HEIGHT - 1, c, GROUND);
    }
    if rng.random_bool(0.6) {
        let len = rng.random_range(1..=4);
        let row = rng.random_range(2..=4);
        let col = rng.random_range(0..=WIDTH - len);
        for c in col..col + len {
            g.set(row, c, BLOCK);
        }
    }
    if rng.random_bool(0.35) {
        let h = rng.random_range(2..=3);
        let col = rng.random_range(0..WIDTH - 1);
        if solid(col) && solid(col + 1) {
            for r in HEIGHT - 2 - h..HEIGHT - 2 {
                g.set(r, col, PIPE);
                g.set(r, col + 1, PIPE);
            }
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        let col = rng.random_range(0..WIDTH);
        let row = HEIGHT - 3;
        let free = |c: usize| c < WIDTH && g.get(row, c) == EMPTY;
        if solid(col) && free(col) && (col == 0 || free(col - 1)) && free(col + 1) {
            g.set(row, col, GOOMBA);
        }
    }
    g
}

/// Seablock floor, a water surface strip along row 1 and one squid below
/// it. Squids never appear without the water strip.
pub fn underwater_grid(rng: &mut ChaCha8Rng) -> Grid {
    let mut g = Grid::filled(WIDTH, HEIGHT, EMPTY);
    for c in 0..WIDTH {
        g.set(HEIGHT - 1, c, SEABLOCK);
    }
    if rng.random_bool(0.8) {
        for c in 0..WIDTH {
            g.set(1, c, WATER);
        }
        g.set(rng.random_range(3..HEIGHT - 2), rng.random_range(0..WIDTH), SQUID);
    }
    g
}

pub fn chunks_of(grids: impl IntoIterator<Item = Grid>, name: &str) -> Vec<LevelChunk> {
    grids.into_iter().map(|g| LevelChunk::from_grid(g, name)).collect()
}

pub fn overworld_chunks(n: usize, seed: u64) -> Vec<LevelChunk> {
    let mut r = rng(seed);
    chunks_of((0..n).map(|_| overworld_grid(&mut r)), "overworld")
}

pub fn underwater_chunks(n: usize, seed: u64) -> Vec<LevelChunk> {
    let mut r = rng(seed);
    chunks_of((0..n).map(|_| underwater_grid(&mut r)), "underwater")
}

/// Renames ground to seablock and goomba to squid.
pub fn relabel(g: &Grid) -> Grid {
    g.map(|id| match id {
        GROUND => SEABLOCK,
        GOOMBA => SQUID,
        other => other,
    })
}

/// Renames ground only; goombas stay.
pub fn relabel_ground(g: &Grid) -> Grid {
    g.map(|id| if id == GROUND { SEABLOCK } else { id })
}

pub fn level(id: &str, grids: &[Grid]) -> Level {
    Level { id: id.into(), grid: Grid::hconcat(grids).unwrap(), tag: None }
}

pub fn count(g: &Grid, id: SpriteId) -> usize {
    g.cells().iter().filter(|&&c| c == id).count()
}
