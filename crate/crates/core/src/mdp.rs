//! Finite Markov decision processes: representation, validation, sampling
//! and the plain-text interchange format.
//!
//! Text format, one directive per line (`#` starts a comment):
//!
//! ```text
//! mdp <n_states> <n_actions> <gamma>
//! t <s> <a> <s'> <p>
//! r <s> <a> <value>
//! start <s> <p>
//! terminal <s>
//! ```
//!
//! Unspecified transitions have probability 0 and unspecified rewards are 0.
//! A terminal state with no outgoing transitions gets a self-loop. Without any
//! `start` line the start distribution is uniform over non-terminal states.

use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance used by [`TabularMdp::validate`].
pub const PROB_TOL: f64 = 1e-12;
/// Rows within this distance of 1 are renormalized at construction.
pub const NORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `(s, a, s')`.
    pub transition: Vec<f64>,
    /// Row-major `(s, a)`.
    pub reward: Vec<f64>,
    pub discount: f64,
    pub start_dist: Vec<f64>,
    pub terminal: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape { what: &'static str, expected: usize, found: usize },
    ProbabilityRange { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    StartRange { state: usize, value: f64 },
    StartSum { sum: f64 },
    Discount { value: f64 },
    NonFinite { what: &'static str, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { what, expected, found } => {
                write!(f, "{what} has {found} entries, expected {expected}")
            }
            Violation::ProbabilityRange { state, action, next, value } => {
                write!(f, "probability {value} out of [0,1] at ({state},{action},{next})")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row sum {sum} at ({state},{action})")
            }
            Violation::StartRange { state, value } => {
                write!(f, "start probability {value} out of [0,1] at state {state}")
            }
            Violation::StartSum { sum } => write!(f, "start distribution sums to {sum}"),
            Violation::Discount { value } => write!(f, "discount out of range: {value}"),
            Violation::NonFinite { what, index } => write!(f, "non-finite {what} at index {index}"),
        }
    }
}

impl TabularMdp {
    /// Builds an MDP, renormalizing probability rows that are within
    /// [`NORMALIZE_TOL`] of summing to one and rejecting everything else that
    /// [`validate`](Self::validate) would flag.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        start_dist: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let mut mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            start_dist,
            terminal,
        };
        mdp.normalize();
        let violations = mdp.validate();
        if let Some(first) = violations.first() {
            return Err(Error::InvalidMdp(format!(
                "{first} ({} violation(s) in total)",
                violations.len()
            )));
        }
        Ok(mdp)
    }

    fn normalize(&mut self) {
        let n = self.n_states;
        if self.transition.len() == n * self.n_actions * n {
            for row in self.transition.chunks_mut(n.max(1)) {
                let sum: f64 = row.iter().sum();
                if sum != 1.0 && (sum - 1.0).abs() <= NORMALIZE_TOL {
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        let sum: f64 = self.start_dist.iter().sum();
        if sum != 1.0 && (sum - 1.0).abs() <= NORMALIZE_TOL {
            self.start_dist.iter_mut().for_each(|p| *p /= sum);
        }
    }

    /// Lists every broken invariant. An empty list means the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, m) = (self.n_states, self.n_actions);
        let shapes = [
            ("transition", n * m * n, self.transition.len()),
            ("reward", n * m, self.reward.len()),
            ("start_dist", n, self.start_dist.len()),
            ("terminal", n, self.terminal.len()),
        ];
        for (what, expected, found) in shapes {
            if expected != found {
                out.push(Violation::Shape { what, expected, found });
            }
        }
        if !out.is_empty() {
            return out;
        }
        if !(0.0..1.0).contains(&self.discount) {
            out.push(Violation::Discount { value: self.discount });
        }
        for s in 0..n {
            for a in 0..m {
                let row = self.row(s, a);
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                        out.push(Violation::ProbabilityRange { state: s, action: a, next, value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
            }
        }
        for (i, r) in self.reward.iter().enumerate() {
            if !r.is_finite() {
                out.push(Violation::NonFinite { what: "reward", index: i });
            }
        }
        for (s, &p) in self.start_dist.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                out.push(Violation::StartRange { state: s, value: p });
            }
        }
        let sum: f64 = self.start_dist.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::StartSum { sum });
        }
        out
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states;
        let base = (s * self.n_actions + a) * n;
        &self.transition[base..base + n]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Samples one transition. Stepping from a terminal state is a contract
    /// violation and panics.
    pub fn step(&self, s: usize, a: usize, rng: &mut RngStream) -> StepOutcome {
        assert!(s < self.n_states, "state {s} out of range");
        assert!(a < self.n_actions, "action {a} out of range");
        assert!(!self.terminal[s], "step called from terminal state {s}");
        let next_state = rng.categorical(self.row(s, a));
        StepOutcome {
            next_state,
            reward: self.reward(s, a),
            done: self.terminal[next_state],
        }
    }

    pub fn sample_start(&self, rng: &mut RngStream) -> usize {
        rng.categorical(&self.start_dist)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::parse(source_name, line, msg);
        let mut header: Option<(usize, usize, f64)> = None;
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        let mut start = Vec::new();
        let mut terminal = Vec::new();
        let mut saw_start = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let index = |tok: &str, bound: usize, what: &str| -> Result<usize> {
                let v: usize = tok
                    .parse()
                    .map_err(|_| err(line_no, format!("bad {what} index `{tok}`")))?;
                if v >= bound {
                    return Err(err(line_no, format!("{what} index {v} out of range (< {bound})")));
                }
                Ok(v)
            };
            let real = |tok: &str| -> Result<f64> {
                tok.parse::<f64>()
                    .map_err(|_| err(line_no, format!("bad number `{tok}`")))
            };
            let arity = |k: usize| -> Result<()> {
                if tokens.len() != k {
                    return Err(err(line_no, format!("`{}` expects {} fields", tokens[0], k - 1)));
                }
                Ok(())
            };

            if tokens[0] == "mdp" {
                if header.is_some() {
                    return Err(err(line_no, "duplicate `mdp` header".into()));
                }
                arity(4)?;
                let n: usize = tokens[1]
                    .parse()
                    .map_err(|_| err(line_no, "bad state count".into()))?;
                let m: usize = tokens[2]
                    .parse()
                    .map_err(|_| err(line_no, "bad action count".into()))?;
                if n == 0 || m == 0 {
                    return Err(err(line_no, "state and action counts must be positive".into()));
                }
                header = Some((n, m, real(tokens[3])?));
                transition = vec![0.0; n * m * n];
                reward = vec![0.0; n * m];
                start = vec![0.0; n];
                terminal = vec![false; n];
                continue;
            }
            let Some((n, m, _)) = header else {
                return Err(err(line_no, "expected `mdp` header first".into()));
            };
            match tokens[0] {
                "t" => {
                    arity(5)?;
                    let s = index(tokens[1], n, "state")?;
                    let a = index(tokens[2], m, "action")?;
                    let s2 = index(tokens[3], n, "state")?;
                    transition[(s * m + a) * n + s2] += real(tokens[4])?;
                }
                "r" => {
                    arity(4)?;
                    let s = index(tokens[1], n, "state")?;
                    let a = index(tokens[2], m, "action")?;
                    reward[s * m + a] = real(tokens[3])?;
                }
                "start" => {
                    arity(3)?;
                    let s = index(tokens[1], n, "state")?;
                    start[s] += real(tokens[2])?;
                    saw_start = true;
                }
                "terminal" => {
                    arity(2)?;
                    terminal[index(tokens[1], n, "state")?] = true;
                }
                other => return Err(err(line_no, format!("unknown directive `{other}`"))),
            }
        }

        let Some((n, m, gamma)) = header else {
            return Err(err(0, "missing `mdp` header".into()));
        };
        for s in (0..n).filter(|&s| terminal[s]) {
            for a in 0..m {
                let row = &mut transition[(s * m + a) * n..(s * m + a + 1) * n];
                if row.iter().all(|&p| p == 0.0) {
                    row[s] = 1.0;
                }
            }
        }
        if !saw_start {
            let live = terminal.iter().filter(|&&t| !t).count();
            if live == 0 {
                return Err(err(0, "no start line and every state is terminal".into()));
            }
            for s in 0..n {
                start[s] = if terminal[s] { 0.0 } else { 1.0 / live as f64 };
            }
        }
        TabularMdp::new(n, m, transition, reward, gamma, start, terminal)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (n, m) = (self.n_states, self.n_actions);
        let _ = writeln!(out, "mdp {n} {m} {}", self.discount);
        for s in 0..n {
            for a in 0..m {
                for s2 in 0..n {
                    let p = self.prob(s, a, s2);
                    if p != 0.0 {
                        let _ = writeln!(out, "t {s} {a} {s2} {p}");
                    }
                }
            }
        }
        for s in 0..n {
            for a in 0..m {
                let r = self.reward(s, a);
                if r != 0.0 {
                    let _ = writeln!(out, "r {s} {a} {r}");
                }
            }
        }
        for (s, &p) in self.start_dist.iter().enumerate() {
            if p != 0.0 {
                let _ = writeln!(out, "start {s} {p}");
            }
        }
        for (s, &t) in self.terminal.iter().enumerate() {
            if t {
                let _ = writeln!(out, "terminal {s}");
            }
        }
        out
    }

    /// A random dense MDP, used by the verification battery. Rewards are
    /// uniform in `[-1, 1]`; with `with_terminal` the last state is terminal.
    pub fn random(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        with_terminal: bool,
        rng: &mut RngStream,
    ) -> Self {
        let n = n_states;
        let mut transition = Vec::with_capacity(n * n_actions * n);
        for _ in 0..n * n_actions {
            let row: Vec<f64> = (0..n).map(|_| rng.uniform() + 0.05).collect();
            let sum: f64 = row.iter().sum();
            transition.extend(row.into_iter().map(|p| p / sum));
        }
        let reward = (0..n * n_actions).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let mut terminal = vec![false; n];
        if with_terminal && n > 1 {
            terminal[n - 1] = true;
        }
        let mut start: Vec<f64> = (0..n)
            .map(|s| if terminal[s] { 0.0 } else { rng.uniform() + 0.1 })
            .collect();
        let sum: f64 = start.iter().sum();
        start.iter_mut().for_each(|p| *p /= sum);
        TabularMdp::new(n, n_actions, transition, reward, discount, start, terminal)
            .expect("random construction yields a valid mdp")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> TabularMdp {
        // s0 --a0--> s1 (terminal), reward 2
        TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![2.0, 0.0],
            0.9,
            vec![1.0, 0.0],
            vec![false, true],
        )
        .unwrap()
    }

    #[test]
    fn valid_chain_has_no_violations() {
        assert!(chain().validate().is_empty());
    }

    #[test]
    fn bad_row_sum_reported() {
        let mut mdp = chain();
        mdp.transition[0] = 0.5;
        mdp.transition[1] = 0.6;
        let v = mdp.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "row sum 1.1 at (0,0)");
    }

    #[test]
    fn discount_one_rejected() {
        let mut mdp = chain();
        mdp.discount = 1.0;
        let v = mdp.validate();
        assert!(v.iter().any(|v| v.to_string().starts_with("discount out of range")));
    }

    #[test]
    fn near_stochastic_rows_are_normalized() {
        let mdp = TabularMdp::new(
            1,
            1,
            vec![1.0 + 5e-10],
            vec![0.0],
            0.5,
            vec![1.0],
            vec![false],
        )
        .unwrap();
        assert_eq!(mdp.transition[0], 1.0);
        assert!(TabularMdp::new(1, 1, vec![1.0 + 1e-6], vec![0.0], 0.5, vec![1.0], vec![false]).is_err());
    }

    #[test]
    fn deterministic_step() {
        let mdp = chain();
        let mut rng = RngStream::new(0);
        let out = mdp.step(0, 0, &mut rng);
        assert_eq!(out, StepOutcome { next_state: 1, reward: 2.0, done: true });
    }

    #[test]
    #[should_panic(expected = "terminal")]
    fn stepping_from_terminal_panics() {
        chain().step(1, 0, &mut RngStream::new(0));
    }

    #[test]
    fn empirical_transition_frequency() {
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.0, 0.0],
            0.9,
            vec![0.5, 0.5],
            vec![false, false],
        )
        .unwrap();
        let mut rng = RngStream::new(11);
        let draws = 100_000;
        let hits = (0..draws).filter(|_| mdp.step(0, 0, &mut rng).next_state == 1).count();
        assert!((hits as f64 / draws as f64 - 0.5).abs() < 0.01);
        let starts = (0..draws).filter(|_| mdp.sample_start(&mut rng) == 1).count();
        assert!((starts as f64 / draws as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn point_mass_start() {
        let mut mdp = TabularMdp::random(4, 2, 0.9, false, &mut RngStream::new(3));
        mdp.start_dist = vec![0.0, 0.0, 0.0, 1.0];
        let mut rng = RngStream::new(5);
        assert!((0..1000).all(|_| mdp.sample_start(&mut rng) == 3));
    }

    #[test]
    fn text_round_trip() {
        let mdp = TabularMdp::random(4, 3, 0.77, true, &mut RngStream::new(9));
        let text = mdp.to_text();
        let back = TabularMdp::parse(&text, "mem").unwrap();
        assert_eq!(back, mdp);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_defaults_and_errors() {
        let text = "# two states\nmdp 2 1 0.5\nt 0 0 1 1\nterminal 1\n";
        let mdp = TabularMdp::parse(text, "mem").unwrap();
        assert_eq!(mdp.start_dist, vec![1.0, 0.0]);
        assert_eq!(mdp.prob(1, 0, 1), 1.0);

        let bad = TabularMdp::parse("mdp 2 1 0.5\nt 0 0 7 1\n", "f.mdp").unwrap_err();
        assert!(bad.to_string().starts_with("f.mdp:2:"), "{bad}");
        assert!(TabularMdp::parse("t 0 0 0 1\n", "f").is_err());
    }
}
