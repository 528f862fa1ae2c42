use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WorldError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    IMaze,
    PatternMatch,
    Single,
    Seq,
    SingleInd,
    SeqInd,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::IMaze,
        Task::PatternMatch,
        Task::Single,
        Task::Seq,
        Task::SingleInd,
        Task::SeqInd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::IMaze => "imaze",
            Task::PatternMatch => "pattern",
            Task::Single => "single",
            Task::Seq => "seq",
            Task::SingleInd => "single-ind",
            Task::SeqInd => "seq-ind",
        }
    }

    pub fn has_indicator(self) -> bool {
        matches!(self, Task::IMaze | Task::SingleInd | Task::SeqInd)
    }

    /// Tasks whose agent always starts on the `S` cell.
    pub fn fixed_spawn(self) -> bool {
        !matches!(self, Task::Single | Task::Seq)
    }

    /// Tasks that require visiting both goals in order.
    pub fn is_sequential(self) -> bool {
        matches!(self, Task::Seq | Task::SeqInd)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| WorldError::UnknownTask(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Floor,
    Red,
    Blue,
    Indicator,
    Spawn,
    /// Light floor tile of a pattern room.
    TileLight,
    /// Dark floor tile of a pattern room.
    TileDark,
}

impl Cell {
    pub fn glyph(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Floor => '.',
            Cell::Red => 'R',
            Cell::Blue => 'B',
            Cell::Indicator => 'I',
            Cell::Spawn => 'S',
            Cell::TileLight => 'w',
            Cell::TileDark => 'k',
        }
    }

    pub fn from_glyph(c: char) -> Option<Cell> {
        Some(match c {
            '#' => Cell::Wall,
            '.' => Cell::Floor,
            'R' => Cell::Red,
            'B' => Cell::Blue,
            'I' => Cell::Indicator,
            'S' => Cell::Spawn,
            'w' => Cell::TileLight,
            'k' => Cell::TileDark,
            _ => return None,
        })
    }

    pub fn is_goal(self) -> bool {
        matches!(self, Cell::Red | Cell::Blue)
    }

    /// Cells the agent can stand on or enter.
    pub fn is_passable(self) -> bool {
        !matches!(self, Cell::Wall | Cell::Indicator)
    }

    /// Cells that stop a view ray.
    pub fn is_solid(self) -> bool {
        matches!(self, Cell::Wall | Cell::Indicator | Cell::Red | Cell::Blue)
    }

    pub fn is_tile(self) -> bool {
        matches!(self, Cell::TileLight | Cell::TileDark)
    }
}

/// One map instance: grid, task and episode limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub task: Task,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    /// Reward added at every step (negative).
    pub penalty: f64,
    pub max_steps: usize,
}

pub const DEFAULT_PENALTY: f64 = -0.04;
pub const DEFAULT_MAX_STEPS: usize = 50;
pub const LARGE_PENALTY: f64 = -0.02;
pub const LARGE_MAX_STEPS: usize = 100;

impl MapSpec {
    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    /// Out-of-range coordinates read as wall.
    pub fn cell_at(&self, x: i64, y: i64) -> Cell {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            Cell::Wall
        } else {
            self.cell(x as usize, y as usize)
        }
    }

    pub fn set(&mut self, x: usize, y: usize, c: Cell) {
        self.cells[y * self.width + x] = c;
    }

    pub fn positions(&self, c: Cell) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.cell(x, y) == c)
            .collect()
    }

    pub fn find(&self, c: Cell) -> Option<(usize, usize)> {
        self.positions(c).into_iter().next()
    }

    /// Cells an episode may start on.
    pub fn spawn_cells(&self) -> Vec<(usize, usize)> {
        if self.task.fixed_spawn() {
            self.positions(Cell::Spawn)
        } else {
            (0..self.height)
                .flat_map(|y| (0..self.width).map(move |x| (x, y)))
                .filter(|&(x, y)| {
                    let c = self.cell(x, y);
                    c.is_passable() && !c.is_goal()
                })
                .collect()
        }
    }

    /// BFS step counts from `from`. Goal cells receive a distance but are not
    /// expanded, so every path ends at the first goal it enters.
    pub fn distances_from(&self, from: (usize, usize)) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cells.len()];
        let idx = |x: usize, y: usize| y * self.width + x;
        dist[idx(from.0, from.1)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[idx(x, y)].expect("queued cells have a distance");
            if (x, y) != from && self.cell(x, y).is_goal() {
                continue;
            }
            for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if !self.cell_at(nx, ny).is_passable() {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if dist[idx(nx, ny)].is_none() {
                    dist[idx(nx, ny)] = Some(d + 1);
                    queue.push_back((nx, ny));
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: (usize, usize), to: (usize, usize)) -> Option<usize> {
        self.distances_from(from)[to.1 * self.width + to.0]
    }

    /// Tiles of the rooms left and right of the spawn, in row-major order.
    pub fn rooms(&self) -> Option<(Vec<Cell>, Vec<Cell>)> {
        let (sx, _) = self.find(Cell::Spawn)?;
        let mut left = Vec::new();
        let mut right = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.cell(x, y);
                if c.is_tile() {
                    if x < sx {
                        left.push(c);
                    } else {
                        right.push(c);
                    }
                }
            }
        }
        Some((left, right))
    }

    /// Pattern-matching maps: whether both rooms show the same pattern.
    pub fn rooms_identical(&self) -> Option<bool> {
        let (l, r) = self.rooms()?;
        (!l.is_empty() && l.len() == r.len()).then(|| l == r)
    }

    /// FNV-1a over the glyph grid, used for set-disjointness checks.
    pub fn grid_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in [self.width as u8, self.height as u8]
            .into_iter()
            .chain(self.cells.iter().map(|c| c.glyph() as u8))
        {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }

    pub fn grid_string(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            s.extend((0..self.width).map(|x| self.cell(x, y).glyph()));
            s.push('\n');
        }
        s
    }

    /// Header line followed by one line per row.
    pub fn serialize(&self) -> String {
        format!(
            "task={} w={} h={} penalty={} max_steps={}\n{}",
            self.task,
            self.width,
            self.height,
            self.penalty,
            self.max_steps,
            self.grid_string()
        )
    }

    pub fn parse(text: &str) -> Result<MapSpec, WorldError> {
        let err = |line: usize, column: usize, msg: String| WorldError::Parse { line, column, msg };
        let mut lines = text.lines();
        let header = lines
            .next()
            .filter(|l| !l.trim().is_empty())
            .ok_or_else(|| err(1, 1, "empty map file".into()))?;
        let mut task = None;
        let mut width = None;
        let mut height = None;
        let mut penalty = None;
        let mut max_steps = None;
        let mut col = 1;
        for field in header.split(' ') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(1, col, format!("expected key=value, found '{field}'")))?;
            let bad = |what: &str| err(1, col + key.len() + 1, format!("invalid {what} '{value}'"));
            match key {
                "task" => task = Some(value.parse::<Task>().map_err(|_| bad("task"))?),
                "w" => width = Some(value.parse::<usize>().map_err(|_| bad("width"))?),
                "h" => height = Some(value.parse::<usize>().map_err(|_| bad("height"))?),
                "penalty" => penalty = Some(value.parse::<f64>().map_err(|_| bad("penalty"))?),
                "max_steps" => max_steps = Some(value.parse::<usize>().map_err(|_| bad("max_steps"))?),
                _ => return Err(err(1, col, format!("unknown header key '{key}'"))),
            }
            col += field.len() + 1;
        }
        let missing = |k: &str| err(1, 1, format!("header is missing '{k}'"));
        let task = task.ok_or_else(|| missing("task"))?;
        let width = width.ok_or_else(|| missing("w"))?;
        let height = height.ok_or_else(|| missing("h"))?;
        let penalty = penalty.ok_or_else(|| missing("penalty"))?;
        let max_steps = max_steps.ok_or_else(|| missing("max_steps"))?;
        if width < 3 || height < 3 {
            return Err(err(1, 1, format!("grid {width}x{height} is smaller than 3x3")));
        }
        if !penalty.is_finite() || max_steps == 0 {
            return Err(err(1, 1, "penalty must be finite and max_steps positive".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        for y in 0..height {
            let row = lines
                .next()
                .ok_or_else(|| err(y + 2, 1, format!("expected {height} grid rows, found {y}")))?;
            let glyphs: Vec<char> = row.chars().collect();
            if glyphs.len() != width {
                return Err(err(
                    y + 2,
                    glyphs.len().min(width) + 1,
                    format!("row has {} cells, expected {width}", glyphs.len()),
                ));
            }
            for (x, &g) in glyphs.iter().enumerate() {
                cells.push(
                    Cell::from_glyph(g)
                        .ok_or_else(|| err(y + 2, x + 1, format!("unknown glyph '{g}'")))?,
                );
            }
        }
        if let Some((i, extra)) = lines.enumerate().find(|(_, l)| !l.is_empty()) {
            return Err(err(height + 2 + i, 1, format!("unexpected trailing line '{extra}'")));
        }
        let map = MapSpec {
            task,
            width,
            height,
            cells,
            penalty,
            max_steps,
        };
        map.validate()?;
        Ok(map)
    }

    /// Structural checks; positions in errors are 1-based file coordinates.
    pub fn validate(&self) -> Result<(), WorldError> {
        let at = |x: usize, y: usize, msg: String| WorldError::Parse {
            line: y + 2,
            column: x + 1,
            msg,
        };
        if self.cells.len() != self.width * self.height {
            return Err(WorldError::Invalid("cell count does not match dimensions".into()));
        }
        for y in 0..self.height {
            for x in 0..self.width {
                let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
                if border && self.cell(x, y) != Cell::Wall {
                    return Err(at(x, y, "boundary cell is not a wall".into()));
                }
            }
        }
        let count = |c: Cell| self.positions(c).len();
        for (c, name) in [(Cell::Red, "red goal"), (Cell::Blue, "blue goal")] {
            if count(c) != 1 {
                return Err(WorldError::Invalid(format!(
                    "expected exactly one {name}, found {}",
                    count(c)
                )));
            }
        }
        let indicators = count(Cell::Indicator);
        if self.task.has_indicator() != (indicators == 1) || indicators > 1 {
            return Err(WorldError::Invalid(format!(
                "task {} has {indicators} indicator cells",
                self.task
            )));
        }
        let spawns = count(Cell::Spawn);
        if self.task.fixed_spawn() && spawns != 1 {
            return Err(WorldError::Invalid(format!(
                "task {} needs exactly one spawn, found {spawns}",
                self.task
            )));
        }
        if self.task == Task::PatternMatch && self.rooms_identical().is_none() {
            return Err(WorldError::Invalid("pattern rooms are missing or unequal in size".into()));
        }
        let spawn_cells = self.spawn_cells();
        if spawn_cells.is_empty() {
            return Err(WorldError::Invalid("no cell to spawn on".into()));
        }
        let goals = [self.find(Cell::Red).unwrap(), self.find(Cell::Blue).unwrap()];
        for &s in &spawn_cells {
            let dist = self.distances_from(s);
            for &(gx, gy) in &goals {
                if dist[gy * self.width + gx].is_none() {
                    return Err(at(gx, gy, format!("goal is unreachable from spawn {s:?}")));
                }
            }
            if self.task.is_sequential() {
                // the second goal must be reachable from the first
                for (a, b) in [(goals[0], goals[1]), (goals[1], goals[0])] {
                    if self.distance(a, b).is_none() {
                        return Err(at(b.0, b.1, "goal is unreachable from the other goal".into()));
                    }
                }
            }
        }
        Ok(())
    }
}
