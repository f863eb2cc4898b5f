//! Stochastic four-rooms navigation.
//!
//! Moves succeed with probability 2/3 (blocked moves leave the agent in
//! place); otherwise the agent lands in a uniformly chosen empty neighbour.
//! Entering the goal pays +1 and ends the episode. The goal starts in the
//! east doorway and jumps to a random cell of the lower-right room at the
//! configured relocation episode.

use std::collections::VecDeque;

use crate::agent::{Environment, Step};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureVec};
use crate::mdp::TabularMdp;
use crate::rng::RngStream;

/// 13x13 layout; `w` is a wall, a space is navigable.
pub const FOUR_ROOMS_MAP: &str = "\
wwwwwwwwwwwww
w     w     w
w     w     w
w           w
w     w     w
w     w     w
ww wwww     w
w     www www
w     w     w
w     w     w
w           w
w     w     w
wwwwwwwwwwwww
";

pub const N_ACTIONS: usize = 4;
/// up, down, left, right
const MOVES: [(isize, isize); N_ACTIONS] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
pub const SLIP_PROBABILITY: f64 = 1.0 / 3.0;
pub const RELOCATION_EPISODE: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    /// Navigable cells as `(row, col)`, row-major. The position in this list
    /// is the state index.
    cells: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    /// Navigable neighbours per state, in action order, with duplicates
    /// removed.
    neighbours: Vec<Vec<usize>>,
    /// Deterministic outcome of each action per state (`self` when blocked).
    moves: Vec<[usize; N_ACTIONS]>,
}

impl GridMap {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0);
        if rows == 0 || cols == 0 {
            return Err(Error::parse("map", 0, "empty map"));
        }
        let mut open = vec![false; rows * cols];
        for (r, line) in lines.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    'w' => {}
                    ' ' => open[r * cols + c] = true,
                    other => {
                        return Err(Error::parse("map", r + 1, format!("unexpected character `{other}`")));
                    }
                }
            }
        }
        // Cells on the outer border are treated as walls.
        for r in 0..rows {
            for c in 0..cols {
                if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                    if open[r * cols + c] {
                        return Err(Error::parse("map", r + 1, "map border must be walls"));
                    }
                }
            }
        }
        let mut cells = Vec::new();
        let mut index = vec![None; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                if open[r * cols + c] {
                    index[r * cols + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        let mut moves = Vec::with_capacity(cells.len());
        let mut neighbours = Vec::with_capacity(cells.len());
        for (s, &(r, c)) in cells.iter().enumerate() {
            let mut out = [s; N_ACTIONS];
            let mut nb = Vec::new();
            for (k, (dr, dc)) in MOVES.iter().enumerate() {
                let (nr, nc) = ((r as isize + dr) as usize, (c as isize + dc) as usize);
                if let Some(t) = index[nr * cols + nc] {
                    out[k] = t;
                    nb.push(t);
                }
            }
            moves.push(out);
            neighbours.push(nb);
        }
        let map = GridMap { rows, cols, cells, index, neighbours, moves };
        if map.cells.is_empty() {
            return Err(Error::parse("map", 0, "map has no navigable cells"));
        }
        if map.reachable_from(0).len() != map.cells.len() {
            return Err(Error::parse("map", 0, "navigable cells are not connected"));
        }
        Ok(map)
    }

    pub fn canonical() -> Self {
        GridMap::parse(FOUR_ROOMS_MAP).expect("embedded map is valid")
    }

    /// Inverse of [`GridMap::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(if self.state_at(r, c).is_some() { ' ' } else { 'w' });
            }
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        self.index[row * self.cols + col]
    }

    pub fn neighbours(&self, state: usize) -> &[usize] {
        &self.neighbours[state]
    }

    pub fn move_target(&self, state: usize, action: usize) -> usize {
        self.moves[state][action]
    }

    fn is_open(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && self.state_at(r as usize, c as usize).is_some()
    }

    /// Cells with walls on two opposite sides and open cells on the other two.
    pub fn hallways(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&s| {
                let (r, c) = (self.cells[s].0 as isize, self.cells[s].1 as isize);
                let vertical = self.is_open(r - 1, c) && self.is_open(r + 1, c);
                let horizontal = self.is_open(r, c - 1) && self.is_open(r, c + 1);
                (vertical && !self.is_open(r, c - 1) && !self.is_open(r, c + 1))
                    || (horizontal && !self.is_open(r - 1, c) && !self.is_open(r + 1, c))
            })
            .collect()
    }

    /// Connected components of the navigable cells once hallways are removed,
    /// each sorted by state index.
    pub fn rooms(&self) -> Vec<Vec<usize>> {
        let halls = self.hallways();
        let mut room_of = vec![usize::MAX; self.cells.len()];
        let mut rooms = Vec::new();
        for start in 0..self.cells.len() {
            if room_of[start] != usize::MAX || halls.contains(&start) {
                continue;
            }
            let id = rooms.len();
            let mut members = vec![start];
            room_of[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(s) = queue.pop_front() {
                for &t in &self.neighbours[s] {
                    if room_of[t] == usize::MAX && !halls.contains(&t) {
                        room_of[t] = id;
                        members.push(t);
                        queue.push_back(t);
                    }
                }
            }
            members.sort_unstable();
            rooms.push(members);
        }
        rooms
    }

    fn reachable_from(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.cells.len()];
        seen[start] = true;
        let mut out = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for &t in &self.neighbours[s] {
                if !seen[t] {
                    seen[t] = true;
                    out.push(t);
                    queue.push_back(t);
                }
            }
        }
        out
    }

    fn centroid(&self, room: &[usize]) -> (f64, f64) {
        let n = room.len() as f64;
        let r = room.iter().map(|&s| self.cells[s].0 as f64).sum::<f64>() / n;
        let c = room.iter().map(|&s| self.cells[s].1 as f64).sum::<f64>() / n;
        (r, c)
    }
}

#[derive(Debug, Clone)]
pub struct FourRooms {
    map: GridMap,
    features: FeatureMap,
    goal: usize,
    initial_goal: usize,
    lower_right: Vec<usize>,
    relocation_episode: Option<usize>,
    slip: f64,
}

impl FourRooms {
    pub fn new(map: GridMap, relocation_episode: Option<usize>) -> Result<Self> {
        let rooms = map.rooms();
        if rooms.len() < 2 {
            return Err(Error::Config("map needs at least two rooms".into()));
        }
        let pick = |score: &dyn Fn((f64, f64)) -> f64| -> usize {
            let mut best = 0;
            for (i, room) in rooms.iter().enumerate() {
                if score(map.centroid(room)) > score(map.centroid(&rooms[best])) {
                    best = i;
                }
            }
            best
        };
        let lower_right = pick(&|(r, c)| r + c);
        let upper_right = pick(&|(r, c)| c - r);
        let east_doorway = map
            .hallways()
            .into_iter()
            .find(|&h| {
                let nb = map.neighbours(h);
                nb.iter().any(|t| rooms[lower_right].contains(t))
                    && nb.iter().any(|t| rooms[upper_right].contains(t))
            })
            .ok_or_else(|| Error::Config("map has no doorway between the right-hand rooms".into()))?;
        let features = FeatureMap::one_hot(map.n_cells());
        Ok(FourRooms {
            lower_right: rooms[lower_right].clone(),
            map,
            features,
            goal: east_doorway,
            initial_goal: east_doorway,
            relocation_episode,
            slip: SLIP_PROBABILITY,
        })
    }

    /// The embedded layout with relocation after [`RELOCATION_EPISODE`] episodes.
    pub fn canonical() -> Self {
        FourRooms::new(GridMap::canonical(), Some(RELOCATION_EPISODE)).expect("embedded map is valid")
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn initial_goal(&self) -> usize {
        self.initial_goal
    }

    pub fn lower_right_room(&self) -> &[usize] {
        &self.lower_right
    }

    pub fn relocation_episode(&self) -> Option<usize> {
        self.relocation_episode
    }

    pub fn set_goal(&mut self, goal: usize) {
        assert!(goal < self.map.n_cells(), "goal must be a navigable cell");
        self.goal = goal;
    }

    pub fn relocate_goal(&mut self, rng: &mut RngStream) {
        self.goal = self.lower_right[rng.index(self.lower_right.len())];
    }

    /// Exact transition model as a tabular MDP whose only terminal state is
    /// the current goal.
    pub fn to_mdp(&self, gamma: f64) -> TabularMdp {
        let n = self.map.n_cells();
        let mut transition = vec![0.0; n * N_ACTIONS * n];
        let mut reward = vec![0.0; n * N_ACTIONS];
        for s in 0..n {
            let nb = self.map.neighbours(s);
            for a in 0..N_ACTIONS {
                let row = &mut transition[(s * N_ACTIONS + a) * n..(s * N_ACTIONS + a + 1) * n];
                row[self.map.move_target(s, a)] += 1.0 - self.slip;
                for &t in nb {
                    row[t] += self.slip / nb.len() as f64;
                }
                if s != self.goal {
                    reward[s * N_ACTIONS + a] = row[self.goal];
                }
            }
        }
        let mut terminal = vec![false; n];
        terminal[self.goal] = true;
        let start = (0..n)
            .map(|s| if s == self.goal { 0.0 } else { 1.0 / (n - 1) as f64 })
            .collect();
        TabularMdp::new(n, N_ACTIONS, transition, reward, gamma, start, terminal)
            .expect("four-rooms model is a valid mdp")
    }
}

impl Environment for FourRooms {
    type State = usize;

    fn name(&self) -> &'static str {
        "fourrooms"
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    fn features(&self, state: &usize) -> FeatureVec {
        self.features.state(*state)
    }

    /// Uniform over every navigable cell except the goal.
    fn reset(&mut self, rng: &mut RngStream) -> usize {
        let k = rng.index(self.map.n_cells() - 1);
        if k >= self.goal {
            k + 1
        } else {
            k
        }
    }

    fn step(&mut self, state: &usize, action: usize, rng: &mut RngStream) -> Result<Step<usize>> {
        let s = *state;
        assert!(s != self.goal, "step called from the goal cell");
        assert!(action < N_ACTIONS, "action {action} out of range");
        let next = if rng.uniform() < self.slip {
            let nb = self.map.neighbours(s);
            nb[rng.index(nb.len())]
        } else {
            self.map.move_target(s, action)
        };
        let done = next == self.goal;
        Ok(Step {
            next,
            reward: if done { 1.0 } else { 0.0 },
            done,
        })
    }

    fn begin_episode(&mut self, episode: usize, rng: &mut RngStream) {
        if Some(episode) == self.relocation_episode {
            self.relocate_goal(rng);
        }
    }
}
