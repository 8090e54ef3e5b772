//! Built-in tabular environments, addressed by short spec strings.
//!
//! | spec          | states | actions                         | dynamics |
//! |---------------|--------|---------------------------------|----------|
//! | `chain:N`     | N      | 0 = left, 1 = right             | intended move w.p. 0.9, otherwise the opposite move for `left` and staying put for `right`; moving right from state N-1 terminates |
//! | `loop:N`      | N      | 0 = clockwise, 1 = counter-cw   | intended move w.p. 0.9, otherwise the opposite direction; every step terminates w.p. 0.1 |
//! | `gridworld:WxH` | W*H  | 0 = up, 1 = right, 2 = down, 3 = left | intended move w.p. 0.9, otherwise stay; walls block; any action in the bottom-right goal terminates |
//!
//! All episodes start in state 0. Rewards depend on the state only, so the
//! state-ratio return estimate is unbiased without an action correction:
//! `chain` pays `(s+1)/N`, `loop` pays `(1 - cos(2 pi s / N)) / 2`, and
//! `gridworld` pays `(x+y)/(W+H-2)` (1 in the goal).

use std::f64::consts::PI;

use crate::error::{DiceError, Result};
use crate::mdp::{Policy, TabularMdp};

pub const SLIP: f64 = 0.1;
pub const LOOP_TERMINATION: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 0.95;

/// An environment together with its hand-specified target policy.
#[derive(Debug, Clone)]
pub struct BuiltinEnv {
    pub spec: String,
    pub mdp: TabularMdp,
    pub target: Policy,
}

impl BuiltinEnv {
    /// Behaviour policy: target flattened by `var_scale`, then mixed with the
    /// uniform policy at weight `eps`.
    pub fn behaviour(&self, eps: f64, var_scale: f64) -> Result<Policy> {
        self.target.temper(var_scale)?.mix_uniform(eps)
    }
}

/// Desk-scale suite used by the harness defaults and the oracle checks.
pub const SUITE: [&str; 4] = ["chain:5", "chain:13", "loop:8", "gridworld:4x4"];

pub fn parse_env(spec: &str, gamma: f64) -> Result<BuiltinEnv> {
    let (kind, arg) =
        spec.split_once(':').ok_or_else(|| DiceError::input(format!("environment spec '{spec}' has no ':'")))?;
    let parse_n = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| DiceError::input(format!("bad size '{s}' in '{spec}'")))
    };
    let (mdp, target) = match kind {
        "chain" => {
            let n = parse_n(arg)?;
            (chain(n, SLIP, gamma)?, Policy::new(vec![vec![0.1, 0.9]; n])?)
        }
        "loop" => {
            let n = parse_n(arg)?;
            (ring(n, SLIP, LOOP_TERMINATION, gamma)?, Policy::new(vec![vec![0.8, 0.2]; n])?)
        }
        "gridworld" => {
            let (w, h) =
                arg.split_once('x').ok_or_else(|| DiceError::input(format!("gridworld spec '{spec}' needs WxH")))?;
            let (w, h) = (parse_n(w)?, parse_n(h)?);
            (gridworld(w, h, SLIP, gamma)?, Policy::new(vec![vec![0.1, 0.4, 0.4, 0.1]; w * h])?)
        }
        _ => return Err(DiceError::input(format!("unknown environment kind '{kind}'"))),
    };
    Ok(BuiltinEnv { spec: spec.to_string(), mdp, target })
}

fn start_at_zero(n: usize) -> Vec<f64> {
    let mut nu = vec![0.0; n];
    nu[0] = 1.0;
    nu
}

pub fn chain(n: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    let mut termination = vec![vec![0.0; 2]; n];
    for s in 0..n {
        // (action, probability of moving right)
        for (a, p_right) in [(0usize, slip), (1usize, 1.0 - slip)] {
            let p_other = 1.0 - p_right;
            if s + 1 < n {
                transition[s][a][s + 1] += p_right;
            } else {
                termination[s][a] += p_right;
            }
            // the remaining mass: left's intended move (clamped at 0) or
            // right's slip, which stays put
            let other = if a == 0 { s.saturating_sub(1) } else { s };
            transition[s][a][other] += p_other;
        }
    }
    let reward = (0..n).map(|s| vec![(s + 1) as f64 / n as f64; 2]).collect();
    TabularMdp::new(n, 2, transition, termination, reward, start_at_zero(n), gamma)
}

pub fn ring(n: usize, slip: f64, term: f64, gamma: f64) -> Result<TabularMdp> {
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    let keep = 1.0 - term;
    for (s, row) in transition.iter_mut().enumerate() {
        let cw = (s + 1) % n;
        let ccw = (s + n - 1) % n;
        row[0][cw] += keep * (1.0 - slip);
        row[0][ccw] += keep * slip;
        row[1][ccw] += keep * (1.0 - slip);
        row[1][cw] += keep * slip;
    }
    let termination = vec![vec![term; 2]; n];
    let reward = (0..n).map(|s| vec![0.5 * (1.0 - (2.0 * PI * s as f64 / n as f64).cos()); 2]).collect();
    TabularMdp::new(n, 2, transition, termination, reward, start_at_zero(n), gamma)
}

pub fn gridworld(w: usize, h: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    let n = w * h;
    let goal = n - 1;
    let mut transition = vec![vec![vec![0.0; n]; 4]; n];
    let mut termination = vec![vec![0.0; 4]; n];
    for y in 0..h {
        for x in 0..w {
            let s = y * w + x;
            if s == goal {
                termination[s] = vec![1.0; 4];
                continue;
            }
            let moves =
                [(x, y.saturating_sub(1)), ((x + 1).min(w - 1), y), (x, (y + 1).min(h - 1)), (x.saturating_sub(1), y)];
            for (a, &(nx, ny)) in moves.iter().enumerate() {
                transition[s][a][ny * w + nx] += 1.0 - slip;
                transition[s][a][s] += slip;
            }
        }
    }
    let span = (w + h).saturating_sub(2).max(1) as f64;
    let reward = (0..n)
        .map(|s| {
            let r = if s == goal { 1.0 } else { ((s % w) + (s / w)) as f64 / span };
            vec![r; 4]
        })
        .collect();
    TabularMdp::new(n, 4, transition, termination, reward, start_at_zero(n), gamma)
}
