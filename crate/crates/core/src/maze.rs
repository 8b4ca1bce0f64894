//! N-stage maze navigation diagrams.
//!
//! Grid text: one character per tile, `#` wall, `.` open, `*` goal; the
//! area outside the grid counts as wall. `x` is the column and `y` the row,
//! row 0 at the top, so north decreases `y`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{DiagramBuilder, InfluenceDiagram, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tile {
    Wall,
    Open,
    Goal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Original,
    ExactSensors,
    ExactBoth,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Variant::Original),
            "exact-sensors" => Ok(Variant::ExactSensors),
            "exact-both" => Ok(Variant::ExactBoth),
            other => Err(Error::Maze(format!("unknown variant {other:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Original => "original",
            Variant::ExactSensors => "exact-sensors",
            Variant::ExactBoth => "exact-both",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

pub const DIRECTIONS: [Direction; 4] = [
    Direction::North,
    Direction::East,
    Direction::South,
    Direction::West,
];

impl Direction {
    fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    fn opposite(self) -> Direction {
        DIRECTIONS[(self as usize + 2) % 4]
    }

    fn sides(self) -> [Direction; 2] {
        [
            DIRECTIONS[(self as usize + 1) % 4],
            DIRECTIONS[(self as usize + 3) % 4],
        ]
    }

    fn sensor_name(self) -> &'static str {
        ["ns", "es", "ss", "ws"][self as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Move(Direction),
    Stay,
}

pub const ACTIONS: [Action; 5] = [
    Action::Move(Direction::North),
    Action::Move(Direction::East),
    Action::Move(Direction::South),
    Action::Move(Direction::West),
    Action::Stay,
];

pub const ACTION_NAMES: [&str; 5] = ["N", "E", "S", "W", "stay"];
pub const SENSOR_STATES: [&str; 2] = ["wall", "no-wall"];

pub type Cell = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeSpec {
    /// `grid[y][x]`.
    pub grid: Vec<Vec<Tile>>,
    pub stages: usize,
    pub variant: Variant,
}

pub fn parse_grid(text: &str) -> Result<Vec<Vec<Tile>>> {
    let mut grid = Vec::new();
    for line in text.lines().map(str::trim_end).filter(|l| !l.is_empty()) {
        let row = line
            .chars()
            .map(|c| match c {
                '#' => Ok(Tile::Wall),
                '.' => Ok(Tile::Open),
                '*' => Ok(Tile::Goal),
                other => Err(Error::Maze(format!("unexpected tile {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        grid.push(row);
    }
    if grid.is_empty() {
        return Err(Error::Maze("empty grid".into()));
    }
    if grid.iter().any(|r| r.len() != grid[0].len()) {
        return Err(Error::Maze("rows differ in length".into()));
    }
    Ok(grid)
}

impl MazeSpec {
    pub fn new(grid: Vec<Vec<Tile>>, stages: usize, variant: Variant) -> Result<Self> {
        let spec = MazeSpec {
            grid,
            stages,
            variant,
        };
        if spec.start_cells().is_empty() {
            return Err(Error::Maze("no open non-goal cell".into()));
        }
        if !spec.cells().any(|c| spec.tile(c) == Tile::Goal) {
            return Err(Error::Maze("no goal cell".into()));
        }
        Ok(spec)
    }

    pub fn parse(text: &str, stages: usize, variant: Variant) -> Result<Self> {
        MazeSpec::new(parse_grid(text)?, stages, variant)
    }

    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn tile(&self, (x, y): Cell) -> Tile {
        self.grid
            .get(y)
            .and_then(|r| r.get(x))
            .copied()
            .unwrap_or(Tile::Wall)
    }

    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows()).flat_map(move |y| (0..self.cols()).map(move |x| (x, y)))
    }

    /// Open non-goal cells, row by row.
    pub fn start_cells(&self) -> Vec<Cell> {
        self.cells()
            .filter(|c| self.tile(*c) == Tile::Open)
            .collect()
    }

    fn neighbor(&self, (x, y): Cell, d: Direction) -> Option<Cell> {
        let (dx, dy) = d.delta();
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        (self.tile((nx, ny)) != Tile::Wall).then_some((nx, ny))
    }

    fn check_cell(&self, cell: Cell) -> Result<()> {
        if self.tile(cell) == Tile::Wall {
            return Err(Error::Maze(format!("cell {cell:?} is a wall")));
        }
        Ok(())
    }
}

/// Distribution over destination cells.
pub fn transition_table(
    spec: &MazeSpec,
    cell: Cell,
    action: Action,
) -> Result<BTreeMap<Cell, f64>> {
    spec.check_cell(cell)?;
    let Action::Move(dir) = action else {
        return Ok(BTreeMap::from([(cell, 1.0)]));
    };
    let outcomes: Vec<(Option<Cell>, f64)> = match spec.variant {
        Variant::ExactBoth => vec![(spec.neighbor(cell, dir), 0.89), (Some(cell), 0.11)],
        _ => {
            let [left, right] = dir.sides();
            vec![
                (spec.neighbor(cell, dir), 0.89),
                (Some(cell), 0.089),
                (spec.neighbor(cell, left), 0.01),
                (spec.neighbor(cell, right), 0.01),
                (spec.neighbor(cell, dir.opposite()), 0.001),
            ]
        }
    };
    let total: f64 = outcomes
        .iter()
        .filter(|(c, _)| c.is_some())
        .map(|(_, p)| p)
        .sum();
    let mut out = BTreeMap::new();
    for (c, p) in outcomes {
        if let Some(c) = c {
            *out.entry(c).or_insert(0.0) += p / total;
        }
    }
    Ok(out)
}

/// `[P(wall reading), P(no-wall reading)]` for the sensor facing `direction`.
pub fn sensor_table(spec: &MazeSpec, cell: Cell, direction: Direction) -> Result<[f64; 2]> {
    spec.check_cell(cell)?;
    let wall = spec.neighbor(cell, direction).is_none();
    Ok(match (spec.variant, wall) {
        (Variant::Original, true) => [0.9, 0.1],
        (Variant::Original, false) => [0.05, 0.95],
        (_, true) => [1.0, 0.0],
        (_, false) => [0.0, 1.0],
    })
}

/// Builds the diagram with variables per stage `x_i, y_i, ns_i, es_i,
/// ss_i, ws_i, d_i`, then `x_n, y_n, u`, with no-forgetting applied.
/// Rows for impossible parent configurations (wall cells, coordinate
/// combinations of probability 0) are deterministic "stay" rows.
pub fn build_maze_id(spec: &MazeSpec) -> Result<InfluenceDiagram> {
    let (cols, rows) = (spec.cols(), spec.rows());
    let xs: Vec<String> = (0..cols).map(|i| i.to_string()).collect();
    let ys: Vec<String> = (0..rows).map(|i| i.to_string()).collect();
    let xs: Vec<&str> = xs.iter().map(String::as_str).collect();
    let ys: Vec<&str> = ys.iter().map(String::as_str).collect();
    let mut b = DiagramBuilder::new();

    let starts = spec.start_cells();
    let n = starts.len() as f64;
    let mut px = vec![0.0; cols];
    let mut py = vec![0.0; cols * rows];
    for &(x, _) in &starts {
        px[x] += 1.0 / n;
    }
    for x in 0..cols {
        let in_col: Vec<usize> = starts.iter().filter(|c| c.0 == x).map(|c| c.1).collect();
        for y in 0..rows {
            py[x * rows + y] = if in_col.is_empty() {
                if y == 0 {
                    1.0
                } else {
                    0.0
                }
            } else if in_col.contains(&y) {
                1.0 / in_col.len() as f64
            } else {
                0.0
            };
        }
    }
    let mut x = b.chance("x_0", &xs, &[], px);
    let mut y = b.chance("y_0", &ys, &[x], py);

    for i in 0..spec.stages {
        let mut sensors = Vec::new();
        for dir in DIRECTIONS {
            let mut t = Vec::with_capacity(cols * rows * 2);
            for cx in 0..cols {
                for cy in 0..rows {
                    match sensor_table(spec, (cx, cy), dir) {
                        Ok(row) => t.extend_from_slice(&row),
                        Err(_) => t.extend_from_slice(&[1.0, 0.0]),
                    }
                }
            }
            sensors.push(b.chance(
                &format!("{}_{i}", dir.sensor_name()),
                &SENSOR_STATES,
                &[x, y],
                t,
            ));
        }
        let d = b.decision(&format!("d_{i}"), &ACTION_NAMES, &sensors);
        let (tx, ty) = transition_cpts(spec, cols, rows)?;
        let nx = b.chance(&format!("x_{}", i + 1), &xs, &[x, y, d], tx);
        let ny = b.chance(&format!("y_{}", i + 1), &ys, &[x, y, d, nx], ty);
        x = nx;
        y = ny;
    }
    let mut u = Vec::with_capacity(cols * rows);
    for cx in 0..cols {
        for cy in 0..rows {
            u.push(if spec.tile((cx, cy)) == Tile::Goal {
                1.0
            } else {
                0.0
            });
        }
    }
    b.utility("u", &[x, y], u);
    b.build()?.apply_no_forgetting()
}

/// Tables for `x' | x, y, d` and `y' | x, y, d, x'`.
fn transition_cpts(spec: &MazeSpec, cols: usize, rows: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tx = Vec::with_capacity(cols * rows * 5 * cols);
    let mut ty = Vec::with_capacity(cols * rows * 5 * cols * rows);
    for cx in 0..cols {
        for cy in 0..rows {
            for action in ACTIONS {
                let dist = if spec.tile((cx, cy)) == Tile::Wall {
                    BTreeMap::from([((cx, cy), 1.0)])
                } else {
                    transition_table(spec, (cx, cy), action)?
                };
                let mut col = vec![0.0; cols];
                for (&(nx, _), p) in &dist {
                    col[nx] += p;
                }
                tx.extend_from_slice(&col);
                for (nx, &mass) in col.iter().enumerate() {
                    for ny in 0..rows {
                        let p = if mass > 0.0 {
                            dist.get(&(nx, ny)).copied().unwrap_or(0.0) / mass
                        } else if ny == cy {
                            1.0
                        } else {
                            0.0
                        };
                        ty.push(p);
                    }
                }
            }
        }
    }
    Ok((tx, ty))
}

/// Names of the variables of stage `i` as generated by [`build_maze_id`].
pub fn stage_var(id: &InfluenceDiagram, name: &str, i: usize) -> Option<VarId> {
    id.find(&format!("{name}_{i}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open3() -> MazeSpec {
        MazeSpec::parse("...\n...\n..*\n", 1, Variant::Original).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn unobstructed_move() {
        let t = transition_table(&open3(), (1, 1), Action::Move(Direction::North)).unwrap();
        assert!(close(t[&(1, 0)], 0.89));
        assert!(close(t[&(1, 1)], 0.089));
        assert!(close(t[&(2, 1)], 0.01));
        assert!(close(t[&(0, 1)], 0.01));
        assert!(close(t[&(1, 2)], 0.001));
    }

    #[test]
    fn blocked_move_renormalizes() {
        let t = transition_table(&open3(), (1, 0), Action::Move(Direction::North)).unwrap();
        let z = 0.089 + 0.01 + 0.01 + 0.001;
        assert!(close(t[&(1, 0)], 0.089 / z));
        assert!(close(t[&(2, 0)], 0.01 / z));
        assert!(close(t[&(0, 0)], 0.01 / z));
        assert!(close(t[&(1, 1)], 0.001 / z));
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn stay_is_deterministic() {
        let t = transition_table(&open3(), (2, 2), Action::Stay).unwrap();
        assert_eq!(t, BTreeMap::from([((2, 2), 1.0)]));
    }

    #[test]
    fn exact_both_transitions() {
        let mut s = open3();
        s.variant = Variant::ExactBoth;
        let t = transition_table(&s, (1, 1), Action::Move(Direction::East)).unwrap();
        assert!(close(t[&(2, 1)], 0.89) && close(t[&(1, 1)], 0.11));
        let t = transition_table(&s, (2, 1), Action::Move(Direction::East)).unwrap();
        assert_eq!(t, BTreeMap::from([((2, 1), 1.0)]));
    }

    #[test]
    fn sensors() {
        let mut s = open3();
        assert_eq!(
            sensor_table(&s, (0, 0), Direction::North).unwrap(),
            [0.9, 0.1]
        );
        assert_eq!(
            sensor_table(&s, (1, 1), Direction::North).unwrap(),
            [0.05, 0.95]
        );
        s.variant = Variant::ExactSensors;
        assert_eq!(
            sensor_table(&s, (0, 0), Direction::West).unwrap(),
            [1.0, 0.0]
        );
    }

    #[test]
    fn wall_cells_are_rejected() {
        let s = MazeSpec::parse(".#*\n", 1, Variant::Original).unwrap();
        assert!(transition_table(&s, (1, 0), Action::Stay).is_err());
        assert!(sensor_table(&s, (1, 0), Direction::North).is_err());
    }

    #[test]
    fn invalid_layouts() {
        assert!(MazeSpec::parse("..\n..\n", 1, Variant::Original).is_err());
        assert!(MazeSpec::parse("**\n", 1, Variant::Original).is_err());
        assert!(MazeSpec::parse(".*\n.\n", 1, Variant::Original).is_err());
        assert!(MazeSpec::parse(".x*\n", 1, Variant::Original).is_err());
        assert!("sideways".parse::<Variant>().is_err());
        assert_eq!("exact-both".parse::<Variant>().unwrap(), Variant::ExactBoth);
    }

    #[test]
    fn two_stage_structure() {
        let mut s = open3();
        s.stages = 2;
        let id = build_maze_id(&s).unwrap();
        assert_eq!(id.len(), 17);
        let d1 = id.find("d_1").unwrap();
        assert_eq!(id.parents(d1).len(), 9);
        let x2 = id.find("x_2").unwrap();
        let names: Vec<&str> = id.parents(x2).iter().map(|p| id.name(*p)).collect();
        assert_eq!(names, ["x_1", "y_1", "d_1"]);
    }

    #[test]
    fn zero_stages_has_zero_meu() {
        let mut s = open3();
        s.stages = 0;
        let id = build_maze_id(&s).unwrap();
        assert!(id.decision_order().is_empty());
        assert_eq!(crate::enumerate::enumerate_meu(&id).unwrap().0, 0.0);
    }

    #[test]
    fn one_step_from_goal() {
        let s = MazeSpec::parse(".*\n", 1, Variant::ExactBoth).unwrap();
        let (meu, _) = crate::enumerate::enumerate_meu(&build_maze_id(&s).unwrap()).unwrap();
        assert!(close(meu, 0.89));
    }
}
