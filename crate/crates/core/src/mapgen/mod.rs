//! Map generators for the corridor, pattern-matching and random-maze tasks,
//! with train/unseen splits and an on-disk layout.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Rng;
use crate::worldsim::{
    Cell, MapSpec, Task, WorldError, DEFAULT_MAX_STEPS, DEFAULT_PENALTY, FOV_DEGREES,
    LARGE_MAX_STEPS, LARGE_PENALTY, SHADING,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("no valid {task} map of size {size} after {attempts} attempts")]
    Exhausted {
        task: Task,
        size: usize,
        attempts: usize,
    },
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest encoding: {0}")]
    Json(#[from] serde_json::Error),
}

pub const IMAZE_TRAIN_LENGTHS: [usize; 3] = [5, 7, 9];
pub const IMAZE_EVAL_LENGTHS: [usize; 10] = [4, 6, 8, 10, 15, 20, 25, 30, 35, 40];
pub const WALL_PROBABILITY: f64 = 0.25;
pub const MAX_ATTEMPTS: usize = 1000;
pub const PATTERN_SET_SIZE: usize = 250;
pub const MAZES_PER_SPLIT: usize = 1000;

/// Interior side lengths `(train, unseen-large)` per random-maze task.
pub fn size_ranges(task: Task) -> Option<([usize; 2], [usize; 2])> {
    match task {
        Task::Single => Some(([4, 8], [9, 14])),
        Task::Seq => Some(([5, 7], [8, 10])),
        Task::SingleInd => Some(([5, 7], [8, 10])),
        Task::SeqInd => Some(([4, 6], [7, 9])),
        _ => None,
    }
}

/// Corridor map: a three-cell top arm with the spawn below the indicator,
/// a vertical corridor of `length` cells, and a bottom arm with red at the
/// west end and blue at the east end.
pub fn gen_imaze(length: usize) -> Result<MapSpec, GenError> {
    if length == 0 {
        return Err(GenError::Params("corridor length must be at least 1".into()));
    }
    let (w, h) = (5, length + 5);
    let mut map = MapSpec {
        task: Task::IMaze,
        width: w,
        height: h,
        cells: vec![Cell::Wall; w * h],
        penalty: DEFAULT_PENALTY,
        max_steps: DEFAULT_MAX_STEPS,
    };
    map.set(2, 1, Cell::Indicator);
    map.set(1, 2, Cell::Floor);
    map.set(2, 2, Cell::Spawn);
    map.set(3, 2, Cell::Floor);
    for y in 3..3 + length {
        map.set(2, y, Cell::Floor);
    }
    let bottom = 3 + length;
    map.set(1, bottom, Cell::Red);
    map.set(2, bottom, Cell::Floor);
    map.set(3, bottom, Cell::Blue);
    map.validate()?;
    Ok(map)
}

/// A 3×3 two-colour pattern; bit `3r + c` set means a light tile.
pub type Pattern = u16;
pub const PATTERN_COUNT: Pattern = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternPair {
    pub left: Pattern,
    pub right: Pattern,
    pub identical: bool,
}

impl PatternPair {
    pub fn new(left: Pattern, right: Pattern) -> Self {
        Self {
            left,
            right,
            identical: left == right,
        }
    }
}

/// Two 3×3 rooms either side of the spawn, joined by a corridor that leads
/// south to blue (west) and red (east) goals.
pub fn pattern_map(pair: PatternPair) -> Result<MapSpec, GenError> {
    if pair.left >= PATTERN_COUNT || pair.right >= PATTERN_COUNT {
        return Err(GenError::Params("pattern index out of range".into()));
    }
    let (w, h) = (9, 7);
    let mut map = MapSpec {
        task: Task::PatternMatch,
        width: w,
        height: h,
        cells: vec![Cell::Wall; w * h],
        penalty: DEFAULT_PENALTY,
        max_steps: DEFAULT_MAX_STEPS,
    };
    let tile = |p: Pattern, i: usize| {
        if p >> i & 1 == 1 {
            Cell::TileLight
        } else {
            Cell::TileDark
        }
    };
    for r in 0..3 {
        for c in 0..3 {
            map.set(1 + c, 1 + r, tile(pair.left, 3 * r + c));
            map.set(5 + c, 1 + r, tile(pair.right, 3 * r + c));
        }
    }
    map.set(4, 1, Cell::Floor);
    map.set(4, 2, Cell::Spawn);
    map.set(4, 3, Cell::Floor);
    map.set(4, 4, Cell::Floor);
    map.set(3, 5, Cell::Blue);
    map.set(4, 5, Cell::Floor);
    map.set(5, 5, Cell::Red);
    map.validate()?;
    Ok(map)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSplit {
    pub bases: Vec<Pattern>,
    pub pairs: Vec<PatternPair>,
    pub maps: Vec<MapSpec>,
}

/// 250 base patterns for training and a disjoint 250 for evaluation. Each
/// base yields one identical-room map and one map where a randomly chosen
/// room gets a different random pattern.
pub fn gen_pattern_matching_sets(rng: &mut Rng) -> Result<(PatternSplit, PatternSplit), GenError> {
    let mut universe: Vec<Pattern> = (0..PATTERN_COUNT).collect();
    rng.shuffle(&mut universe);
    // different-room pairs of the unseen split are redrawn if they repeat a
    // training pair, so the two map sets never share a grid
    let mut split = |bases: &[Pattern], avoid: &HashSet<PatternPair>| -> Result<PatternSplit, GenError> {
        let mut pairs = Vec::with_capacity(2 * bases.len());
        for &b in bases {
            pairs.push(PatternPair::new(b, b));
            loop {
                let mut other = rng.below(PATTERN_COUNT as usize - 1) as Pattern;
                if other >= b {
                    other += 1;
                }
                let pair = if rng.bernoulli(0.5) {
                    PatternPair::new(other, b)
                } else {
                    PatternPair::new(b, other)
                };
                if !avoid.contains(&pair) {
                    pairs.push(pair);
                    break;
                }
            }
        }
        let maps = pairs.iter().map(|&p| pattern_map(p)).collect::<Result<_, _>>()?;
        Ok(PatternSplit {
            bases: bases.to_vec(),
            pairs,
            maps,
        })
    };
    let train = split(&universe[..PATTERN_SET_SIZE], &HashSet::new())?;
    let seen: HashSet<PatternPair> = train.pairs.iter().copied().collect();
    let unseen = split(&universe[PATTERN_SET_SIZE..2 * PATTERN_SET_SIZE], &seen)?;
    Ok((train, unseen))
}

/// Episode limits for a map: larger evaluation mazes get more steps and a
/// smaller step penalty.
pub fn limits(large: bool) -> (f64, usize) {
    if large {
        (LARGE_PENALTY, LARGE_MAX_STEPS)
    } else {
        (DEFAULT_PENALTY, DEFAULT_MAX_STEPS)
    }
}

/// `size × size` interior where each cell is a wall with probability 0.25,
/// goals on distinct floor cells, and for indicator tasks a fixed spawn at
/// `(1, 1)` with the indicator at `(2, 1)`. Candidates are redrawn until
/// every goal is reachable from every legal spawn.
pub fn gen_random_maze(task: Task, size: usize, large: bool, rng: &mut Rng) -> Result<MapSpec, GenError> {
    gen_random_maze_with(task, size, large, WALL_PROBABILITY, rng)
}

/// [`gen_random_maze`] with an explicit wall probability.
pub fn gen_random_maze_with(
    task: Task,
    size: usize,
    large: bool,
    wall_probability: f64,
    rng: &mut Rng,
) -> Result<MapSpec, GenError> {
    if size_ranges(task).is_none() {
        return Err(GenError::Params(format!("{task} is not a random-maze task")));
    }
    if size < 3 {
        return Err(GenError::Params(format!("maze size {size} is below 3")));
    }
    let (penalty, max_steps) = limits(large);
    let w = size + 2;
    for _ in 0..MAX_ATTEMPTS {
        let mut map = MapSpec {
            task,
            width: w,
            height: w,
            cells: vec![Cell::Wall; w * w],
            penalty,
            max_steps,
        };
        for y in 1..=size {
            for x in 1..=size {
                if !rng.bernoulli(wall_probability) {
                    map.set(x, y, Cell::Floor);
                }
            }
        }
        if task.has_indicator() {
            map.set(1, 1, Cell::Spawn);
            map.set(2, 1, Cell::Indicator);
        }
        let mut free = map.positions(Cell::Floor);
        if free.len() < 2 {
            continue;
        }
        for goal in [Cell::Red, Cell::Blue] {
            let (x, y) = free.swap_remove(rng.below(free.len()));
            map.set(x, y, goal);
        }
        if map.validate().is_ok() {
            return Ok(map);
        }
    }
    Err(GenError::Exhausted {
        task,
        size,
        attempts: MAX_ATTEMPTS,
    })
}

/// Train, unseen same-size and unseen larger maps for one random-maze task.
#[derive(Clone, Debug, PartialEq)]
pub struct MazeFamily {
    pub task: Task,
    pub seed: u64,
    pub train: Vec<MapSpec>,
    pub unseen: Vec<MapSpec>,
    pub unseen_large: Vec<MapSpec>,
}

/// Draws `count` maps per split with sizes uniform over the task's ranges.
/// Unseen same-size maps whose grid matches a training map are redrawn.
pub fn gen_maze_family(task: Task, count: usize, seed: u64) -> Result<MazeFamily, GenError> {
    let ([lo, hi], [llo, lhi]) =
        size_ranges(task).ok_or_else(|| GenError::Params(format!("{task} is not a random-maze task")))?;
    let root = Rng::new(seed);
    let draw = |label: &str, lo: usize, hi: usize, large: bool, avoid: &HashSet<u64>| {
        let mut rng = root.split(label);
        let mut maps = Vec::with_capacity(count);
        while maps.len() < count {
            let size = lo + rng.below(hi - lo + 1);
            let map = gen_random_maze(task, size, large, &mut rng)?;
            if !avoid.contains(&map.grid_hash()) {
                maps.push(map);
            }
        }
        Ok::<_, GenError>(maps)
    };
    let train = draw("train", lo, hi, false, &HashSet::new())?;
    let seen: HashSet<u64> = train.iter().map(MapSpec::grid_hash).collect();
    let unseen = draw("unseen", lo, hi, false, &seen)?;
    let unseen_large = draw("unseen-l", llo, lhi, true, &HashSet::new())?;
    Ok(MazeFamily {
        task,
        seed,
        train,
        unseen,
        unseen_large,
    })
}

/// Maps grouped by split name, ready to be written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSet {
    pub task: Task,
    pub seed: u64,
    pub splits: Vec<(String, Vec<MapSpec>)>,
}

/// Standard splits for a task. Corridor splits are `train` (lengths 5, 7, 9)
/// and `unseen` (the ten evaluation lengths); the corridor maps are the same
/// for every seed.
pub fn gen_task_maps(task: Task, seed: u64) -> Result<MapSet, GenError> {
    let splits = match task {
        Task::IMaze => vec![
            ("train".to_string(), imaze_set(&IMAZE_TRAIN_LENGTHS)?),
            ("unseen".to_string(), imaze_set(&IMAZE_EVAL_LENGTHS)?),
        ],
        Task::PatternMatch => {
            let (train, unseen) = gen_pattern_matching_sets(&mut Rng::new(seed).split("pattern"))?;
            vec![("train".to_string(), train.maps), ("unseen".to_string(), unseen.maps)]
        }
        _ => {
            let f = gen_maze_family(task, MAZES_PER_SPLIT, seed)?;
            vec![
                ("train".to_string(), f.train),
                ("unseen".to_string(), f.unseen),
                ("unseen-l".to_string(), f.unseen_large),
            ]
        }
    };
    Ok(MapSet { task, seed, splits })
}

pub fn imaze_set(lengths: &[usize]) -> Result<Vec<MapSpec>, GenError> {
    lengths.iter().map(|&l| gen_imaze(l)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub seed: u64,
    pub counts: Vec<(String, usize)>,
    pub fov_degrees: f64,
    pub shading: f64,
    pub layout: String,
}

fn layout_note(task: Task) -> String {
    match task {
        Task::IMaze => "width 5; top arm row 2 with spawn at x=2 under the indicator at (2,1); \
                        corridor x=2; bottom arm with red at x=1 and blue at x=3"
            .into(),
        Task::PatternMatch => "9x7; rooms at x 1-3 and 5-7, rows 1-3; spawn (4,2); \
                               corridor x=4 to row 5 with blue at (3,5) and red at (5,5); \
                               light tile 'w', dark tile 'k'; identical rooms reward blue"
            .into(),
        _ => format!(
            "interior walls with probability {WALL_PROBABILITY}; indicator tasks spawn at (1,1) \
             with the indicator at (2,1)"
        ),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GenError + '_ {
    move |source| GenError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `<out>/<task>/<split>/<index>.map` and `<out>/<task>/manifest.json`.
pub fn write_map_set(set: &MapSet, out: &Path) -> Result<Manifest, GenError> {
    let base = out.join(set.task.name());
    for (split, maps) in &set.splits {
        let dir = base.join(split);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (i, m) in maps.iter().enumerate() {
            let path = dir.join(format!("{i}.map"));
            fs::write(&path, m.serialize()).map_err(io_err(&path))?;
        }
    }
    let manifest = Manifest {
        task: set.task,
        seed: set.seed,
        counts: set.splits.iter().map(|(s, m)| (s.clone(), m.len())).collect(),
        fov_degrees: FOV_DEGREES,
        shading: SHADING,
        layout: layout_note(set.task),
    };
    let path = base.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads every `<index>.map` in a split directory, in index order.
pub fn load_split(dir: &Path) -> Result<Vec<MapSpec>, GenError> {
    let mut entries: Vec<(usize, std::path::PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let idx = p.file_stem()?.to_str()?.parse::<usize>().ok()?;
            (p.extension()? == "map").then_some((idx, p))
        })
        .collect();
    entries.sort();
    let mut maps = Vec::with_capacity(entries.len());
    for (_, p) in entries {
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        maps.push(MapSpec::parse(&text).map_err(|e| GenError::Params(format!("{}: {e}", p.display())))?);
    }
    if maps.is_empty() {
        return Err(GenError::Params(format!("no .map files in {}", dir.display())));
    }
    Ok(maps)
}

#[cfg(test)]
mod tests;
