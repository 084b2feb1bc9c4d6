//! Tabular independent Q-learning over a binned grid-cost observation and a
//! 5x5x5 action grid, with optional marginal rewards and hysteresis.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Grid points per action axis.
pub const AXIS_POINTS: usize = 5;
pub const N_ACTIONS: usize = AXIS_POINTS * AXIS_POINTS * AXIS_POINTS;
const BATTERY_GRID: [f64; AXIS_POINTS] = [-1.0, -0.5, 0.0, 0.5, 1.0];
const UNIT_GRID: [f64; AXIS_POINTS] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn nearest(grid: &[f64; AXIS_POINTS], x: f64) -> usize {
    let mut best = 0;
    for (k, g) in grid.iter().enumerate() {
        if (x - g).abs() < (x - grid[best]).abs() {
            best = k;
        }
    }
    best
}

/// Index of the grid cell nearest to `a` (ties to the lower point).
pub fn action_index(a: &[f64; 3]) -> usize {
    nearest(&BATTERY_GRID, a[0]) * AXIS_POINTS * AXIS_POINTS
        + nearest(&UNIT_GRID, a[1]) * AXIS_POINTS
        + nearest(&UNIT_GRID, a[2])
}

pub fn action_value(index: usize) -> [f64; 3] {
    let b = index / (AXIS_POINTS * AXIS_POINTS);
    let h = (index / AXIS_POINTS) % AXIS_POINTS;
    let c = index % AXIS_POINTS;
    [BATTERY_GRID[b], UNIT_GRID[h], UNIT_GRID[c]]
}

/// `n_bins - 1` interior edges splitting `values` into equally populated bins.
pub fn equal_frequency_edges(values: &[f64], n_bins: usize) -> Result<Vec<f64>> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("at least one bin is required".into()));
    }
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "bin edges need a non-empty set of finite values".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok((1..n_bins).map(|k| sorted[(k * n / n_bins).min(n - 1)]).collect())
}

/// Which reward drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardSignal {
    Team,
    /// Team reward minus the reward with this agent on its default action.
    Marginal,
}

/// One agent's experience for a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqlTransition {
    pub bin: usize,
    pub action: usize,
    pub reward: f64,
    pub marginal_reward: f64,
    /// `None` at the end of the day.
    pub next_bin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    /// Interior bin edges; `x` falls into the number of edges `<= x`.
    pub edges: Vec<f64>,
    pub n_actions: usize,
    /// `[bin][action]`.
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
    pub alpha: f64,
    /// Learning rate for non-positive TD errors when hysteretic.
    pub beta: f64,
    pub gamma: f64,
    pub hysteretic: bool,
}

impl QTable {
    pub fn new(edges: Vec<f64>, n_actions: usize, alpha: f64, beta: Option<f64>, gamma: f64) -> Result<Self> {
        if edges.windows(2).any(|w| w[0] > w[1]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("bin edges must be finite and sorted".into()));
        }
        if n_actions == 0 {
            return Err(Error::InvalidArgument("a Q-table needs actions".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("iql alpha must lie in (0, 1], got {alpha}")));
        }
        if let Some(b) = beta {
            if !(b > 0.0 && b <= alpha) {
                return Err(Error::Config(format!("iql beta must lie in (0, alpha], got {b}")));
            }
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("iql gamma must lie in [0, 1), got {gamma}")));
        }
        let cells = (edges.len() + 1) * n_actions;
        Ok(Self {
            edges,
            n_actions,
            values: vec![0.0; cells],
            visits: vec![0; cells],
            alpha,
            beta: beta.unwrap_or(alpha),
            gamma,
            hysteretic: beta.is_some(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin(&self, x: f64) -> usize {
        self.edges.partition_point(|e| *e <= x)
    }

    pub fn q(&self, bin: usize, action: usize) -> f64 {
        self.values[bin * self.n_actions + action]
    }

    fn row(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.n_actions..(bin + 1) * self.n_actions]
    }

    /// Highest-valued action; ties go to the lowest index.
    pub fn greedy(&self, bin: usize) -> usize {
        let row = self.row(bin);
        let mut best = 0;
        for (k, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = k;
            }
        }
        best
    }

    pub fn max_value(&self, bin: usize) -> f64 {
        self.row(bin).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies one TD update to the `(bin, action)` cell and returns `delta`.
    /// With marginal rewards the table holds `Q^diff` and bootstraps from
    /// its own maximum.
    pub fn update(&mut self, t: &IqlTransition, signal: RewardSignal) -> Result<f64> {
        if t.bin >= self.n_bins() || t.action >= self.n_actions || t.next_bin.is_some_and(|b| b >= self.n_bins()) {
            return Err(Error::InvalidArgument(format!(
                "transition cell ({}, {}) outside a {}x{} table",
                t.bin,
                t.action,
                self.n_bins(),
                self.n_actions
            )));
        }
        let r = match signal {
            RewardSignal::Team => t.reward,
            RewardSignal::Marginal => t.marginal_reward,
        };
        let next = t.next_bin.map_or(0.0, |b| self.max_value(b));
        let cell = t.bin * self.n_actions + t.action;
        let delta = r + self.gamma * next - self.values[cell];
        let lr = if self.hysteretic && delta <= 0.0 {
            self.beta
        } else {
            self.alpha
        };
        self.values[cell] += lr * delta;
        self.visits[cell] += 1;
        Ok(delta)
    }
}

pub const QTABLE_MAGIC: &str = "homeflex-qtable 1";
const FILE: &str = "q-table";

/// Plain-text dump:
///
/// ```text
/// homeflex-qtable 1
/// alpha <a> beta <b> gamma <g> hysteretic <true|false>
/// edges <k> <e_1> ... <e_k>
/// actions <m>
/// q <bin> <v_0> ... <v_{m-1}>        (one line per bin)
/// visits <bin> <n_0> ... <n_{m-1}>   (one line per bin)
/// end
/// ```
pub fn write_qtable(t: &QTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{QTABLE_MAGIC}");
    let _ = writeln!(
        out,
        "alpha {} beta {} gamma {} hysteretic {}",
        t.alpha, t.beta, t.gamma, t.hysteretic
    );
    let _ = write!(out, "edges {}", t.edges.len());
    for e in &t.edges {
        let _ = write!(out, " {e}");
    }
    let _ = writeln!(out, "\nactions {}", t.n_actions);
    for b in 0..t.n_bins() {
        let _ = write!(out, "q {b}");
        for v in t.row(b) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for b in 0..t.n_bins() {
        let _ = write!(out, "visits {b}");
        for v in &t.visits[b * t.n_actions..(b + 1) * t.n_actions] {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

const MAX_CELLS: usize = 1 << 22;

pub fn parse_qtable(text: &str) -> Result<QTable> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::parse(FILE, 0, format!("unexpected end of file, expected {what}")))
    };
    fn num<T: std::str::FromStr>(ln: usize, s: Option<&str>, what: &str) -> Result<T> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(FILE, ln, format!("invalid or missing {what}")))
    }
    fn keyword(ln: usize, s: Option<&str>, key: &str) -> Result<()> {
        if s == Some(key) {
            Ok(())
        } else {
            Err(Error::parse(FILE, ln, format!("expected `{key}`")))
        }
    }

    let (ln, magic) = next("header")?;
    if magic != QTABLE_MAGIC {
        return Err(Error::parse(FILE, ln, format!("expected `{QTABLE_MAGIC}`")));
    }
    let (ln, line) = next("learning rates")?;
    let mut f = line.split_whitespace();
    keyword(ln, f.next(), "alpha")?;
    let alpha: f64 = num(ln, f.next(), "alpha")?;
    keyword(ln, f.next(), "beta")?;
    let beta: f64 = num(ln, f.next(), "beta")?;
    keyword(ln, f.next(), "gamma")?;
    let gamma: f64 = num(ln, f.next(), "gamma")?;
    keyword(ln, f.next(), "hysteretic")?;
    let hysteretic: bool = num(ln, f.next(), "hysteretic flag")?;

    let (ln, line) = next("edges")?;
    let mut f = line.split_whitespace();
    keyword(ln, f.next(), "edges")?;
    let k: usize = num(ln, f.next(), "edge count")?;
    let edges: Vec<f64> = f.map(|v| num(ln, Some(v), "edge")).collect::<Result<_>>()?;
    if edges.len() != k {
        return Err(Error::parse(FILE, ln, format!("{} edges listed, header says {k}", edges.len())));
    }
    let (ln, line) = next("action count")?;
    let mut f = line.split_whitespace();
    keyword(ln, f.next(), "actions")?;
    let m: usize = num(ln, f.next(), "action count")?;
    if m == 0 || (k + 1).saturating_mul(m) > MAX_CELLS {
        return Err(Error::parse(FILE, ln, "table size out of range"));
    }
    let mut table = QTable::new(edges, m, alpha, hysteretic.then_some(beta), gamma)
        .map_err(|e| Error::parse(FILE, ln, e.to_string()))?;
    if !hysteretic && beta != alpha {
        return Err(Error::parse(FILE, ln, "beta must equal alpha without hysteresis"));
    }

    for (key, is_q) in [("q", true), ("visits", false)] {
        for b in 0..=k {
            let (ln, line) = next(key)?;
            let mut f = line.split_whitespace();
            keyword(ln, f.next(), key)?;
            let idx: usize = num(ln, f.next(), "bin index")?;
            if idx != b {
                return Err(Error::parse(FILE, ln, format!("expected bin {b}, found {idx}")));
            }
            let cells = &mut (b * m..(b + 1) * m);
            let mut count = 0;
            for v in f {
                let cell = cells
                    .next()
                    .ok_or_else(|| Error::parse(FILE, ln, format!("more than {m} entries")))?;
                if is_q {
                    let x: f64 = num(ln, Some(v), "value")?;
                    if !x.is_finite() {
                        return Err(Error::parse(FILE, ln, "non-finite value"));
                    }
                    table.values[cell] = x;
                } else {
                    table.visits[cell] = num(ln, Some(v), "visit count")?;
                }
                count += 1;
            }
            if count != m {
                return Err(Error::parse(FILE, ln, format!("{count} entries, expected {m}")));
            }
        }
    }
    let (ln, end) = next("end")?;
    if end != "end" {
        return Err(Error::parse(FILE, ln, "expected `end`"));
    }
    Ok(table)
}
