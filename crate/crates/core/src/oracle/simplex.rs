//! Dense two-phase primal simplex for bounded variables.
//!
//! Every row becomes an equality (inequalities get a non-negative slack) and
//! phase 1 starts from one artificial variable per row. Nonbasic variables sit
//! at a finite bound, or at zero when free. Pricing is Dantzig's largest
//! reduced cost; after a run of degenerate pivots the solver switches to
//! Bland's smallest-index rule, which cannot cycle, and stays there until the
//! objective strictly improves again.

use super::lp::{LinearProgram, LpSolution, LpStatus, RowKind};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;
const DEGENERATE_RUN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
enum NonBasic {
    Lower,
    Upper,
    Free,
}

struct Tableau {
    m: usize,
    /// Structural plus slack columns; artificials are implicit.
    n: usize,
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Column index, or `n + r` for the artificial of row `r`.
    basis: Vec<usize>,
    xb: Vec<f64>,
    x: Vec<f64>,
    state: Vec<Option<NonBasic>>,
    reduced: Vec<f64>,
    artificial_upper: f64,
    iterations: usize,
    scratch: Vec<usize>,
}

enum StepResult {
    Optimal,
    Unbounded,
    Progress { degenerate: bool },
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let nv = lp.n_vars();
        let m = lp.constraints.len();
        let n_slack = lp
            .constraints
            .iter()
            .filter(|c| c.kind != RowKind::Eq)
            .count();
        let n = nv + n_slack;
        let mut t = vec![0.0; m * n];
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for v in &lp.variables {
            lower.push(v.lower);
            upper.push(v.upper);
        }
        lower.resize(n, 0.0);
        upper.resize(n, f64::INFINITY);
        let mut cost = lp.objective.clone();
        cost.resize(n, 0.0);

        let mut state = vec![None; n];
        let mut x = vec![0.0; n];
        for j in 0..n {
            let (s, v) = if lower[j].is_finite() {
                (NonBasic::Lower, lower[j])
            } else if upper[j].is_finite() {
                (NonBasic::Upper, upper[j])
            } else {
                (NonBasic::Free, 0.0)
            };
            state[j] = Some(s);
            x[j] = v;
        }

        let mut slack = nv;
        let mut xb = vec![0.0; m];
        for (r, row) in lp.constraints.iter().enumerate() {
            let base = r * n;
            for &(j, a) in &row.coeffs {
                t[base + j] += a;
            }
            match row.kind {
                RowKind::Le => {
                    t[base + slack] = 1.0;
                    slack += 1;
                }
                RowKind::Ge => {
                    t[base + slack] = -1.0;
                    slack += 1;
                }
                RowKind::Eq => {}
            }
            let activity: f64 = t[base..base + n]
                .iter()
                .zip(&x)
                .filter(|(a, _)| **a != 0.0)
                .map(|(a, v)| a * v)
                .sum();
            let residual = row.rhs - activity;
            if residual < 0.0 {
                t[base..base + n].iter_mut().for_each(|a| *a = -*a);
            }
            xb[r] = residual.abs();
        }

        Self {
            m,
            n,
            t,
            lower,
            upper,
            cost,
            basis: (0..m).map(|r| n + r).collect(),
            xb,
            x,
            state,
            reduced: vec![0.0; n],
            artificial_upper: f64::INFINITY,
            iterations: 0,
            scratch: Vec::with_capacity(n),
        }
    }

    fn basic_bounds(&self, r: usize) -> (f64, f64) {
        let b = self.basis[r];
        if b >= self.n {
            (0.0, self.artificial_upper)
        } else {
            (self.lower[b], self.upper[b])
        }
    }

    fn phase_one_costs(&mut self) {
        self.reduced.iter_mut().for_each(|d| *d = 0.0);
        for r in 0..self.m {
            if self.basis[r] >= self.n {
                let row = &self.t[r * self.n..(r + 1) * self.n];
                for (d, a) in self.reduced.iter_mut().zip(row) {
                    *d -= a;
                }
            }
        }
        for j in 0..self.n {
            if self.state[j].is_none() {
                self.reduced[j] = 0.0;
            }
        }
    }

    fn phase_two_costs(&mut self) {
        self.reduced.copy_from_slice(&self.cost);
        for r in 0..self.m {
            let b = self.basis[r];
            if b < self.n && self.cost[b] != 0.0 {
                let cb = self.cost[b];
                let row = &self.t[r * self.n..(r + 1) * self.n];
                for (d, a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for j in 0..self.n {
            if self.state[j].is_none() {
                self.reduced[j] = 0.0;
            }
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n {
            let Some(s) = self.state[j] else { continue };
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced[j];
            let dir = match s {
                NonBasic::Lower if d < -COST_TOL => 1.0,
                NonBasic::Upper if d > COST_TOL => -1.0,
                NonBasic::Free if d < -COST_TOL => 1.0,
                NonBasic::Free if d > COST_TOL => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn step(&mut self, bland: bool) -> StepResult {
        let Some((q, dir)) = self.choose_entering(bland) else {
            return StepResult::Optimal;
        };
        let n = self.n;

        // Ratio test.
        let mut theta = if self.lower[q].is_finite() && self.upper[q].is_finite() {
            self.upper[q] - self.lower[q]
        } else {
            f64::INFINITY
        };
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_alpha = 0.0;
        for r in 0..self.m {
            let alpha = self.t[r * n + q];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let rate = -dir * alpha;
            let (lo, hi) = self.basic_bounds(r);
            let (limit, to_upper) = if rate < 0.0 {
                if !lo.is_finite() {
                    continue;
                }
                (((self.xb[r] - lo) / -rate).max(0.0), false)
            } else {
                if !hi.is_finite() {
                    continue;
                }
                (((hi - self.xb[r]) / rate).max(0.0), true)
            };
            let better = match leave {
                None => limit < theta,
                Some((lr, _)) => {
                    if bland {
                        limit < theta || (limit == theta && self.basis[r] < self.basis[lr])
                    } else {
                        limit < theta - 1e-12
                            || (limit <= theta + 1e-12 && alpha.abs() > leave_alpha)
                    }
                }
            };
            if better {
                theta = limit;
                leave = Some((r, to_upper));
                leave_alpha = alpha.abs();
            }
        }
        if !theta.is_finite() {
            return StepResult::Unbounded;
        }
        self.iterations += 1;
        let degenerate = theta <= 1e-12;

        // Move the entering variable by dir * theta.
        if theta > 0.0 {
            for r in 0..self.m {
                let alpha = self.t[r * n + q];
                if alpha != 0.0 {
                    self.xb[r] -= dir * theta * alpha;
                }
            }
        }
        let entering_value = self.x[q] + dir * theta;

        let Some((r, to_upper)) = leave else {
            // Bound flip.
            self.x[q] = entering_value;
            self.state[q] = Some(if dir > 0.0 {
                NonBasic::Upper
            } else {
                NonBasic::Lower
            });
            return StepResult::Progress { degenerate };
        };

        let leaving = self.basis[r];
        if leaving < n {
            let (lo, hi) = (self.lower[leaving], self.upper[leaving]);
            self.x[leaving] = if to_upper { hi } else { lo };
            self.state[leaving] = Some(if to_upper {
                NonBasic::Upper
            } else {
                NonBasic::Lower
            });
        }
        self.basis[r] = q;
        self.state[q] = None;
        self.xb[r] = entering_value;

        // Pivot on (r, q).
        let pivot = self.t[r * n + q];
        let inv = 1.0 / pivot;
        self.scratch.clear();
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for (j, a) in row.iter_mut().enumerate() {
                if *a != 0.0 {
                    *a *= inv;
                    if a.abs() < 1e-14 {
                        *a = 0.0;
                    } else {
                        self.scratch.push(j);
                    }
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        let update = |other: &mut [f64], scratch: &[usize]| {
            let factor = other[q];
            if factor != 0.0 {
                for &j in scratch {
                    let v = other[j] - factor * prow[j];
                    other[j] = if v.abs() < 1e-14 { 0.0 } else { v };
                }
                other[q] = 0.0;
            }
        };
        for other in before.chunks_exact_mut(n) {
            update(other, &self.scratch);
        }
        for other in after.chunks_exact_mut(n) {
            update(other, &self.scratch);
        }
        let dq = self.reduced[q];
        if dq != 0.0 {
            for &j in &self.scratch {
                self.reduced[j] -= dq * prow[j];
            }
        }
        self.reduced[q] = 0.0;
        StepResult::Progress { degenerate }
    }

    fn run(&mut self, limit: usize) -> Option<LpStatus> {
        let mut degenerate_run = 0;
        loop {
            if self.iterations >= limit {
                return Some(LpStatus::IterationLimit);
            }
            match self.step(degenerate_run >= DEGENERATE_RUN) {
                StepResult::Optimal => return None,
                StepResult::Unbounded => return Some(LpStatus::Unbounded),
                StepResult::Progress { degenerate } => {
                    if degenerate {
                        degenerate_run += 1;
                    } else {
                        degenerate_run = 0;
                    }
                }
            }
        }
    }

    fn infeasibility(&self) -> f64 {
        (0..self.m)
            .filter(|&r| self.basis[r] >= self.n)
            .map(|r| self.xb[r].abs())
            .sum()
    }

    fn primal(&self, nv: usize) -> Vec<f64> {
        let mut x = self.x.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.xb[r];
            }
        }
        x.truncate(nv);
        x
    }
}

/// Solves `lp`; non-optimal outcomes are errors naming the phase.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let nv = lp.n_vars();
    if lp.objective.len() != nv {
        return Err(Error::Shape(format!(
            "{} objective coefficients for {nv} variables",
            lp.objective.len()
        )));
    }
    for v in &lp.variables {
        if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
            return Err(Error::Lp {
                status: LpStatus::Infeasible,
                phase: "bounds",
            });
        }
    }
    let mut tab = Tableau::new(lp);
    let limit = 50 * (tab.m + tab.n) + 1000;

    let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
    tab.phase_one_costs();
    if let Some(status) = tab.run(limit) {
        return Err(Error::Lp {
            status,
            phase: "phase 1",
        });
    }
    if tab.infeasibility() > FEAS_TOL * scale {
        return Err(Error::Lp {
            status: LpStatus::Infeasible,
            phase: "phase 1",
        });
    }

    // Remaining basic artificials are pinned at zero.
    tab.artificial_upper = 0.0;
    for r in 0..tab.m {
        if tab.basis[r] >= tab.n {
            tab.xb[r] = 0.0;
        }
    }
    tab.phase_two_costs();
    if let Some(status) = tab.run(limit) {
        return Err(Error::Lp {
            status,
            phase: "phase 2",
        });
    }
    let x = tab.primal(nv);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.evaluate(&x),
        x,
        iterations: tab.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn textbook_lower_bound_row() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", 0.0, INF, 1.0);
        lp.add_row("r", vec![(x, 1.0)], RowKind::Ge, 3.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn classic_two_variable_maximisation() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", 0.0, INF, -3.0);
        let y = lp.add_var("y", 0.0, INF, -5.0);
        lp.add_row("a", vec![(x, 1.0)], RowKind::Le, 4.0);
        lp.add_row("b", vec![(y, 2.0)], RowKind::Le, 12.0);
        lp.add_row("c", vec![(x, 3.0), (y, 2.0)], RowKind::Le, 18.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |shape| via free z = x - 2, min x s.t. z >= -5, x >= 0 free z.
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", f64::NEG_INFINITY, INF, 1.0);
        let z = lp.add_var("z", -5.0, INF, 0.0);
        lp.add_row("def", vec![(z, 1.0), (x, -1.0)], RowKind::Eq, -2.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.x[0] + 3.0).abs() < 1e-9, "{:?}", s.x);
    }

    #[test]
    fn reports_infeasible_and_unbounded() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_row("r", vec![(x, 1.0)], RowKind::Ge, 2.0);
        assert!(matches!(
            solve_lp(&lp),
            Err(Error::Lp {
                status: LpStatus::Infeasible,
                phase: "phase 1"
            })
        ));
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", 0.0, INF, -1.0);
        let y = lp.add_var("y", 0.0, INF, 0.0);
        lp.add_row("r", vec![(x, 1.0), (y, -1.0)], RowKind::Le, 1.0);
        assert!(matches!(
            solve_lp(&lp),
            Err(Error::Lp {
                status: LpStatus::Unbounded,
                phase: "phase 2"
            })
        ));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under naive Dantzig pricing.
        let mut lp = LinearProgram::default();
        let v: Vec<usize> = [-0.75, 150.0, -0.02, 6.0]
            .iter()
            .enumerate()
            .map(|(k, &c)| lp.add_var(format!("x{k}"), 0.0, INF, c))
            .collect();
        lp.add_row(
            "a",
            vec![(v[0], 0.25), (v[1], -60.0), (v[2], -0.04), (v[3], 9.0)],
            RowKind::Le,
            0.0,
        );
        lp.add_row(
            "b",
            vec![(v[0], 0.5), (v[1], -90.0), (v[2], -0.02), (v[3], 3.0)],
            RowKind::Le,
            0.0,
        );
        lp.add_row("c", vec![(v[2], 1.0)], RowKind::Le, 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective + 0.05).abs() < 1e-9, "{}", s.objective);
    }

    /// Vertex enumeration for `min c^T x, A x <= b, 0 <= x <= u`: every
    /// choice of `n` active constraints among rows and bounds.
    fn vertex_enumeration(c: &[f64], a: &[Vec<f64>], b: &[f64], u: &[f64]) -> f64 {
        let n = c.len();
        let mut planes: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().cloned()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), u[j]));
            planes.push((e, 0.0));
        }
        let k = planes.len();
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut mat: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    let mut r = planes[i].0.clone();
                    r.push(planes[i].1);
                    r
                })
                .collect();
            if let Some(x) = gauss(&mut mat, n) {
                let feasible = x.iter().zip(u).all(|(&v, &ub)| v >= -1e-9 && v <= ub + 1e-9)
                    && a.iter()
                        .zip(b)
                        .all(|(row, &bi)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9);
                if feasible {
                    best = best.min(c.iter().zip(&x).map(|(p, q)| p * q).sum());
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(m: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
            if m[p][col].abs() < 1e-10 {
                return None;
            }
            m.swap(col, p);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    if f != 0.0 {
                        for c in col..=n {
                            m[r][c] -= f * m[col][c];
                        }
                    }
                }
            }
        }
        Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
    }

    #[test]
    fn random_small_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..60 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=6);
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..8.0)).collect();
            let mut lp = LinearProgram::default();
            for j in 0..n {
                lp.add_var(format!("x{j}"), 0.0, u[j], c[j]);
            }
            for (i, row) in a.iter().enumerate() {
                lp.add_row(
                    format!("r{i}"),
                    row.iter().cloned().enumerate().collect(),
                    RowKind::Le,
                    b[i],
                );
            }
            let s = solve_lp(&lp).unwrap();
            let oracle = vertex_enumeration(&c, &a, &b, &u);
            assert!(
                (s.objective - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
                "case {case}: {} vs {oracle}",
                s.objective
            );
            assert!(lp.max_violation(&s.x) < 1e-9);
        }
    }
}
