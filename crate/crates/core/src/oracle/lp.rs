use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `min c^T x + offset` subject to linear rows and variable bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// `c^T x + offset`.
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.objective.push(cost);
        self.variables.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        kind: RowKind,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            kind,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_offset
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xv) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = lhs - row.rhs;
            worst = worst.max(match row.kind {
                RowKind::Eq => gap.abs(),
                RowKind::Le => gap,
                RowKind::Ge => -gap,
            });
        }
        worst
    }

    /// Plain-text standard form for cross-checking with external solvers.
    ///
    /// ```text
    /// homeflex-lp 1
    /// minimize offset <value>
    /// var <index> <name> <lower> <upper> <cost>
    /// row <index> <name> <eq|le|ge> <rhs> <index>:<coef> ...
    /// end
    /// ```
    /// Infinite bounds are written as `-inf` / `inf`.
    pub fn dump(&self) -> String {
        let mut out = String::from("homeflex-lp 1\n");
        let _ = writeln!(out, "minimize offset {}", self.objective_offset);
        for (j, (v, c)) in self.variables.iter().zip(&self.objective).enumerate() {
            let _ = writeln!(out, "var {j} {} {} {} {c}", v.name, v.lower, v.upper);
        }
        for (r, row) in self.constraints.iter().enumerate() {
            let kind = match row.kind {
                RowKind::Eq => "eq",
                RowKind::Le => "le",
                RowKind::Ge => "ge",
            };
            let _ = write!(out, "row {r} {} {kind} {}", row.name, row.rhs);
            for (j, a) in &row.coeffs {
                let _ = write!(out, " {j}:{a}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_lists_every_variable_and_row() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, 4.0, -2.0);
        lp.add_row("r0", vec![(x, 1.0), (y, 1.0)], RowKind::Le, 3.0);
        let text = lp.dump();
        assert!(text.contains("var 0 x 0 inf 1"));
        assert!(text.contains("var 1 y -inf 4 -2"));
        assert!(text.contains("row 0 r0 le 3 0:1 1:1"));
        assert!(text.ends_with("end\n"));
    }

    #[test]
    fn violation_measures_rows_and_bounds() {
        let mut lp = LinearProgram::default();
        let x = lp.add_var("x", 0.0, 1.0, 0.0);
        lp.add_row("r", vec![(x, 2.0)], RowKind::Ge, 1.0);
        assert_eq!(lp.max_violation(&[0.5]), 0.0);
        assert_eq!(lp.max_violation(&[0.25]), 0.5);
        assert_eq!(lp.max_violation(&[1.5]), 0.5);
    }
}
