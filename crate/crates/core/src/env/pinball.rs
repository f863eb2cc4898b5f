//! The Pinball domain: a ball pushed through a maze of polygons toward a
//! circular target.
//!
//! Positions live in the unit box, velocities in `[-1, 1]` per component.
//! Each step applies the chosen thrust, integrates `substeps` sub-steps with
//! swept-circle collision detection and elastic reflection, then applies
//! drag. Thrust costs 5, the null action costs 1, and reaching the target
//! pays 10000 and ends the episode.

use crate::agent::{Environment, Step};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureVec};
use crate::rng::RngStream;

pub const N_ACTIONS: usize = 5;
pub const NULL_ACTION: usize = 4;
pub const THRUST_PENALTY: f64 = -5.0;
pub const NULL_PENALTY: f64 = -1.0;
pub const GOAL_REWARD: f64 = 10_000.0;
const MAX_REFLECTIONS: usize = 4;
const CONTACT_EPS: f64 = 1e-12;

/// Maze shipped with the crate.
pub const DEFAULT_MAZE: &str = include_str!("../../mazes/default.cfg");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinballState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl PinballState {
    /// Maps the state into `[0,1]^4`; velocities are shifted from `[-1,1]`.
    /// Reflections off slanted edges can push one velocity component past
    /// unit magnitude, so the shifted values are clamped.
    pub fn normalized(&self) -> [f64; 4] {
        let v = |x: f64| ((x + 1.0) / 2.0).clamp(0.0, 1.0);
        [self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0), v(self.vx), v(self.vy)]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd rule.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ((x1, y1), (x2, y2)) in self.edges() {
            if (y1 > y) != (y2 > y) {
                let cross = x1 + (y - y1) / (y2 - y1) * (x2 - x1);
                if x < cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from a point to the polygon boundary.
    pub fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance((x, y), a, b))
            .fold(f64::INFINITY, f64::min)
    }

    fn is_simple(&self) -> bool {
        let edges: Vec<_> = self.edges().collect();
        let n = edges.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    (o1 * o2 < 0.0) && (o3 * o4 < 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinballConfig {
    pub obstacles: Vec<Polygon>,
    pub target: (f64, f64),
    pub target_radius: f64,
    pub start: (f64, f64),
    pub ball_radius: f64,
    pub drag: f64,
    pub substeps: usize,
    pub thrust: f64,
}

impl PinballConfig {
    /// Parses the maze format: `ball <r>`, `start <x> <y>`,
    /// `target <x> <y> <r>`, `polygon <x1> <y1> ...` (at least 3 vertices),
    /// plus optional `drag`, `substeps` and `thrust` overrides. `#` comments.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::parse(source_name, line, msg);
        let mut obstacles = Vec::new();
        let mut ball = None;
        let mut start = None;
        let mut target = None;
        let mut drag = 0.995;
        let mut substeps = 20;
        let mut thrust = 0.2;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let key = tokens.next().unwrap_or_default();
            let nums: Vec<f64> = tokens
                .map(|t| t.parse::<f64>().map_err(|_| err(line_no, format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            let want = |k: usize| -> Result<()> {
                if nums.len() != k {
                    return Err(err(line_no, format!("`{key}` expects {k} values")));
                }
                Ok(())
            };
            match key {
                "ball" => {
                    want(1)?;
                    ball = Some(nums[0]);
                }
                "start" => {
                    want(2)?;
                    start = Some((nums[0], nums[1]));
                }
                "target" => {
                    want(3)?;
                    target = Some(((nums[0], nums[1]), nums[2]));
                }
                "polygon" => {
                    if nums.len() < 6 || nums.len() % 2 != 0 {
                        return Err(err(line_no, "polygon needs at least 3 (x, y) vertices".into()));
                    }
                    obstacles.push(Polygon {
                        vertices: nums.chunks(2).map(|c| (c[0], c[1])).collect(),
                    });
                }
                "drag" => {
                    want(1)?;
                    drag = nums[0];
                }
                "substeps" => {
                    want(1)?;
                    if nums[0] < 1.0 || nums[0].fract() != 0.0 {
                        return Err(err(line_no, "substeps must be a positive integer".into()));
                    }
                    substeps = nums[0] as usize;
                }
                "thrust" => {
                    want(1)?;
                    thrust = nums[0];
                }
                other => return Err(err(line_no, format!("unknown directive `{other}`"))),
            }
        }
        let missing = |what: &str| err(0, format!("missing `{what}` line"));
        let (target, target_radius) = target.ok_or_else(|| missing("target"))?;
        let cfg = PinballConfig {
            obstacles,
            target,
            target_radius,
            start: start.ok_or_else(|| missing("start"))?,
            ball_radius: ball.ok_or_else(|| missing("ball"))?,
            drag,
            substeps,
            thrust,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn default_maze() -> Self {
        PinballConfig::parse(DEFAULT_MAZE, "default maze").expect("shipped maze is valid")
    }

    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Geometry(m));
        if !(self.drag > 0.0 && self.drag <= 1.0) {
            return fail(format!("drag {} outside (0,1]", self.drag));
        }
        if !(self.ball_radius > 0.0 && self.ball_radius < 0.5) {
            return fail(format!("ball radius {} out of range", self.ball_radius));
        }
        if self.target_radius <= 0.0 {
            return fail("target radius must be positive".into());
        }
        let (sx, sy) = self.start;
        let r = self.ball_radius;
        if !(r..=1.0 - r).contains(&sx) || !(r..=1.0 - r).contains(&sy) {
            return fail("start position must keep the ball inside the unit box".into());
        }
        for (i, poly) in self.obstacles.iter().enumerate() {
            if !poly.is_simple() {
                return fail(format!("polygon {i} is self-intersecting"));
            }
            if poly.contains(sx, sy) || poly.boundary_distance(sx, sy) < r {
                return fail(format!("start overlaps polygon {i}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Contact {
    time: f64,
    normal: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Pinball {
    pub config: PinballConfig,
    features: FeatureMap,
}

impl Pinball {
    pub fn new(config: PinballConfig, fourier_order: u32) -> Result<Self> {
        config.check()?;
        Ok(Pinball {
            config,
            features: FeatureMap::fourier(4, fourier_order),
        })
    }

    pub fn start_state(&self) -> PinballState {
        PinballState {
            x: self.config.start.0,
            y: self.config.start.1,
            vx: 0.0,
            vy: 0.0,
        }
    }

    fn at_target(&self, s: &PinballState) -> bool {
        let (tx, ty) = self.config.target;
        (s.x - tx).hypot(s.y - ty) < self.config.target_radius
    }

    /// Earliest contact along displacement `(dx, dy)` within `limit`.
    fn earliest_contact(&self, p: (f64, f64), d: (f64, f64), limit: f64) -> Option<Contact> {
        let r = self.config.ball_radius;
        let mut best: Option<Contact> = None;
        let mut consider = |time: f64, normal: (f64, f64)| {
            let time = time.max(0.0);
            if time <= limit && best.map_or(true, |b| time < b.time) {
                best = Some(Contact { time, normal });
            }
        };

        // Box walls constrain the ball to [r, 1 - r]^2.
        if d.0 < 0.0 {
            consider((r - p.0) / d.0, (1.0, 0.0));
        } else if d.0 > 0.0 {
            consider((1.0 - r - p.0) / d.0, (-1.0, 0.0));
        }
        if d.1 < 0.0 {
            consider((r - p.1) / d.1, (0.0, 1.0));
        } else if d.1 > 0.0 {
            consider((1.0 - r - p.1) / d.1, (0.0, -1.0));
        }

        for poly in &self.config.obstacles {
            for (a, b) in poly.edges() {
                let (ex, ey) = (b.0 - a.0, b.1 - a.1);
                let len = ex.hypot(ey);
                if len == 0.0 {
                    continue;
                }
                let u = (ex / len, ey / len);
                let mut n = (-u.1, u.0);
                let mut s0 = (p.0 - a.0) * n.0 + (p.1 - a.1) * n.1;
                if s0 < 0.0 {
                    n = (-n.0, -n.1);
                    s0 = -s0;
                }
                let approach = d.0 * n.0 + d.1 * n.1;
                if approach < -CONTACT_EPS {
                    let t = ((s0 - r) / -approach).max(0.0);
                    let c = (p.0 + t * d.0, p.1 + t * d.1);
                    let along = (c.0 - a.0) * u.0 + (c.1 - a.1) * u.1;
                    if (0.0..=len).contains(&along) {
                        consider(t, n);
                    }
                }
            }
            for &q in &poly.vertices {
                let w = (p.0 - q.0, p.1 - q.1);
                let aa = d.0 * d.0 + d.1 * d.1;
                let bb = w.0 * d.0 + w.1 * d.1;
                if aa == 0.0 || bb >= 0.0 {
                    continue;
                }
                let cc = w.0 * w.0 + w.1 * w.1 - r * r;
                let disc = bb * bb - aa * cc;
                if disc < 0.0 {
                    continue;
                }
                let t = if cc <= 0.0 { 0.0 } else { (-bb - disc.sqrt()) / aa };
                let c = (p.0 + t * d.0 - q.0, p.1 + t * d.1 - q.1);
                let norm = c.0.hypot(c.1);
                if norm > 0.0 {
                    consider(t, (c.0 / norm, c.1 / norm));
                }
            }
        }
        best
    }

    /// Advances the ball by one sub-step, reflecting off obstacles.
    fn substep(&self, s: &mut PinballState) -> Result<()> {
        let scale = self.config.ball_radius / self.config.substeps as f64;
        let mut remaining = 1.0;
        let mut reflections = 0;
        while remaining > 0.0 {
            let d = (s.vx * scale, s.vy * scale);
            if d == (0.0, 0.0) {
                break;
            }
            match self.earliest_contact((s.x, s.y), d, remaining) {
                None => {
                    s.x += remaining * d.0;
                    s.y += remaining * d.1;
                    break;
                }
                Some(contact) => {
                    s.x += contact.time * d.0;
                    s.y += contact.time * d.1;
                    remaining -= contact.time;
                    let (nx, ny) = contact.normal;
                    let vn = s.vx * nx + s.vy * ny;
                    s.vx -= 2.0 * vn * nx;
                    s.vy -= 2.0 * vn * ny;
                    reflections += 1;
                    if reflections >= MAX_REFLECTIONS {
                        s.vx = 0.0;
                        s.vy = 0.0;
                        break;
                    }
                }
            }
        }
        let r = self.config.ball_radius;
        s.x = s.x.clamp(r, 1.0 - r);
        s.y = s.y.clamp(r, 1.0 - r);
        for (i, poly) in self.config.obstacles.iter().enumerate() {
            if poly.contains(s.x, s.y) {
                return Err(Error::Geometry(format!(
                    "ball centre ({}, {}) entered polygon {i}",
                    s.x, s.y
                )));
            }
        }
        Ok(())
    }

    /// One environment step. Returns the next state, the reward and whether
    /// the target was reached.
    pub fn advance(&self, state: &PinballState, action: usize) -> Result<(PinballState, f64, bool)> {
        assert!(action < N_ACTIONS, "pinball action {action} out of range");
        let mut s = *state;
        let thrust = self.config.thrust;
        match action {
            0 => s.vx = (s.vx + thrust).clamp(-1.0, 1.0),
            1 => s.vx = (s.vx - thrust).clamp(-1.0, 1.0),
            2 => s.vy = (s.vy + thrust).clamp(-1.0, 1.0),
            3 => s.vy = (s.vy - thrust).clamp(-1.0, 1.0),
            _ => {}
        }
        for _ in 0..self.config.substeps {
            self.substep(&mut s)?;
            if self.at_target(&s) {
                return Ok((s, GOAL_REWARD, true));
            }
        }
        s.vx *= self.config.drag;
        s.vy *= self.config.drag;
        let reward = if action == NULL_ACTION { NULL_PENALTY } else { THRUST_PENALTY };
        Ok((s, reward, false))
    }
}

impl Environment for Pinball {
    type State = PinballState;

    fn name(&self) -> &'static str {
        "pinball"
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    fn features(&self, state: &PinballState) -> FeatureVec {
        self.features.point(&state.normalized())
    }

    fn reset(&mut self, _rng: &mut RngStream) -> PinballState {
        self.start_state()
    }

    fn step(&mut self, state: &PinballState, action: usize, _rng: &mut RngStream) -> Result<Step<PinballState>> {
        let (next, reward, done) = self.advance(state, action)?;
        Ok(Step { next, reward, done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_box() -> Pinball {
        let cfg = PinballConfig::parse("ball 0.02\nstart 0.5 0.5\ntarget 0.95 0.05 0.01\n", "t").unwrap();
        Pinball::new(cfg, 3).unwrap()
    }

    fn wall_box() -> Pinball {
        // Axis-aligned block to the right of the start.
        let text = "ball 0.02\nstart 0.5 0.5\ntarget 0.05 0.95 0.01\npolygon 0.6 0.3 0.8 0.3 0.8 0.7 0.6 0.7\n";
        Pinball::new(PinballConfig::parse(text, "t").unwrap(), 3).unwrap()
    }

    #[test]
    fn rewards() {
        let env = open_box();
        let s = env.start_state();
        assert_eq!(env.advance(&s, 0).unwrap().1, THRUST_PENALTY);
        assert_eq!(env.advance(&s, NULL_ACTION).unwrap().1, NULL_PENALTY);

        let cfg = PinballConfig::parse("ball 0.02\nstart 0.5 0.5\ntarget 0.52 0.5 0.03\n", "t").unwrap();
        let env = Pinball::new(cfg, 3).unwrap();
        let (_, r, done) = env.advance(&env.start_state(), NULL_ACTION).unwrap();
        assert_eq!((r, done), (GOAL_REWARD, true));
    }

    #[test]
    fn thrust_clamps_velocity() {
        let env = open_box();
        let mut s = env.start_state();
        s.vx = 0.9;
        let (next, _, _) = env.advance(&s, 0).unwrap();
        assert!((next.vx - 0.995).abs() < 1e-15);
    }

    #[test]
    fn drag_decays_speed_geometrically() {
        let env = open_box();
        let mut s = PinballState { x: 0.5, y: 0.5, vx: 0.1, vy: 0.05 };
        let v0 = s.speed();
        for _ in 0..10 {
            s = env.advance(&s, NULL_ACTION).unwrap().0;
        }
        assert!((s.speed() - v0 * 0.995f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn head_on_bounce_off_edge() {
        let env = wall_box();
        // Edge at x = 0.6; centre must stop at 0.58.
        let mut s = PinballState { x: 0.55, y: 0.5, vx: 1.0, vy: 0.0 };
        let mut bounced = false;
        for _ in 0..40 {
            env.substep(&mut s).unwrap();
            assert!(s.x <= 0.58 + 1e-12);
            if s.vx < 0.0 {
                bounced = true;
                break;
            }
        }
        assert!(bounced);
        assert!((s.vx + 1.0).abs() < 1e-12 && s.vy == 0.0);
    }

    #[test]
    fn box_wall_bounce() {
        let env = open_box();
        let mut s = PinballState { x: 0.0202, y: 0.5, vx: -0.5, vy: 0.0 };
        env.substep(&mut s).unwrap();
        assert!(s.x >= 0.02);
        assert_eq!(s.vx, 0.5);
    }

    #[test]
    fn speed_never_grows_without_thrust() {
        let env = Pinball::new(PinballConfig::default_maze(), 3).unwrap();
        let mut rng = RngStream::new(2);
        let mut s = PinballState { vx: 0.8, vy: -0.6, ..env.start_state() };
        for _ in 0..2000 {
            let before = s.speed();
            let (next, _, done) = env.advance(&s, NULL_ACTION).unwrap();
            assert!(next.speed() <= before + 1e-12);
            s = next;
            if done {
                break;
            }
            // Occasional random kicks to explore the maze.
            if rng.uniform() < 0.05 {
                s.vx = rng.uniform_range(-1.0, 1.0);
                s.vy = rng.uniform_range(-1.0, 1.0);
            }
        }
    }

    #[test]
    fn random_walk_stays_outside_obstacles() {
        let env = Pinball::new(PinballConfig::default_maze(), 3).unwrap();
        let mut rng = RngStream::new(17);
        let mut s = env.start_state();
        for _ in 0..20_000 {
            let (next, _, done) = env.advance(&s, rng.index(N_ACTIONS)).unwrap();
            assert!((0.0..=1.0).contains(&next.x) && (0.0..=1.0).contains(&next.y));
            for poly in &env.config.obstacles {
                assert!(!poly.contains(next.x, next.y));
            }
            s = if done { env.start_state() } else { next };
        }
    }

    #[test]
    fn config_errors() {
        assert!(PinballConfig::parse("ball 0.02\nstart 0.5 0.5\n", "t").is_err());
        let e = PinballConfig::parse("ball 0.02\nstart 0.5 0.5\ntarget 0.9 0.9 0.05\npolygon 0 0 1 1\n", "m.cfg")
            .unwrap_err();
        assert!(e.to_string().starts_with("m.cfg:4:"), "{e}");
        // Bow-tie polygon.
        let bow = "ball 0.02\nstart 0.1 0.1\ntarget 0.9 0.9 0.05\npolygon 0.4 0.4 0.6 0.6 0.6 0.4 0.4 0.6\n";
        assert!(PinballConfig::parse(bow, "t").is_err());
        let covered = "ball 0.02\nstart 0.5 0.5\ntarget 0.9 0.9 0.05\npolygon 0.4 0.4 0.6 0.4 0.6 0.6 0.4 0.6\n";
        assert!(PinballConfig::parse(covered, "t").is_err());
    }

    #[test]
    fn normalized_state_in_unit_cube() {
        let s = PinballState { x: 0.3, y: 0.7, vx: -1.2, vy: 0.4 };
        let n = s.normalized();
        assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(n[2], 0.0);
    }
}
