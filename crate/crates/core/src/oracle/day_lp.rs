use super::lp::{LinearProgram, LpSolution, RowKind};
use crate::environment::{EnvConfig, HomeDecision};
use crate::error::{Error, Result};
use crate::profiles::ScenarioData;

const INF: f64 = f64::INFINITY;

/// Number of partial-consumption variables per home: for every demand step
/// `tD`, one variable per admissible consumption step in
/// `tD..=min(tD + n_flex, T - 1)`.
pub fn flex_pair_count(horizon: usize, flex_window: usize) -> usize {
    (0..horizon)
        .map(|d| (d + flex_window).min(horizon - 1) - d + 1)
        .sum()
}

/// `T + n (8T + W)`: substation import per step, then per home and step the
/// import, export auxiliary, charge, discharge, heating, next battery level,
/// next mass and air temperatures, plus `W` partial consumptions.
pub fn day_lp_variable_count(n_homes: usize, horizon: usize, flex_window: usize) -> usize {
    horizon + n_homes * (8 * horizon + flex_pair_count(horizon, flex_window))
}

/// Column indices of the named decision variables, `[home][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DayLpIndex {
    pub grid: Vec<usize>,
    pub import: Vec<Vec<usize>>,
    pub export: Vec<Vec<usize>>,
    pub charge: Vec<Vec<usize>>,
    pub discharge: Vec<Vec<usize>>,
    pub heating: Vec<Vec<usize>>,
    /// Battery level at the end of each step.
    pub energy: Vec<Vec<usize>>,
    pub t_mass: Vec<Vec<usize>>,
    pub t_air: Vec<Vec<usize>>,
    /// `[home][demand step]` -> `(consumption step, column)`.
    pub flex: Vec<Vec<Vec<(usize, usize)>>>,
}

#[derive(Debug, Clone)]
pub struct DayLp {
    pub day: usize,
    pub program: LinearProgram,
    pub index: DayLpIndex,
}

/// Day-ahead cooperative problem for one day of `s`.
///
/// Charge/discharge exclusivity is not imposed; see [`decode_day`].
pub fn build_day_lp(s: &ScenarioData, day: usize, config: EnvConfig) -> Result<DayLp> {
    if day >= s.n_days {
        return Err(Error::InvalidArgument(format!(
            "day {day} out of range (scenario has {} days)",
            s.n_days
        )));
    }
    let horizon = s.horizon;
    let n = s.n_homes;
    let g = &s.grid;
    let t0 = s.global_step(day, 0);
    let mut lp = LinearProgram::default();
    let per_home = || vec![Vec::with_capacity(horizon); n];
    let mut ix = DayLpIndex {
        grid: Vec::with_capacity(horizon),
        import: per_home(),
        export: per_home(),
        charge: per_home(),
        discharge: per_home(),
        heating: per_home(),
        energy: per_home(),
        t_mass: per_home(),
        t_air: per_home(),
        flex: vec![Vec::with_capacity(horizon); n],
    };

    for step in 0..horizon {
        let t = t0 + step;
        ix.grid.push(lp.add_var(format!("g[{step}]"), -INF, INF, g.cost_coeff[t]));
        lp.objective_offset += g.cost_coeff[t] * g.grid_loss;
    }
    for i in 0..n {
        let bat = &s.battery[i];
        let th = &s.thermal[i];
        let h = s.home(i);
        let cap = th.heat_cap.unwrap_or(INF);
        for step in 0..horizon {
            let t = t0 + step;
            let mu = h.mu(t);
            let out_cap = if config.gate_discharge_by_availability {
                mu * bat.max_discharge
            } else {
                bat.max_discharge
            };
            let name = |v: &str| format!("{v}[{i}][{step}]");
            ix.import[i].push(lp.add_var(name("p"), -INF, INF, 0.0));
            ix.export[i].push(lp.add_var(name("e"), 0.0, INF, g.export_charge));
            ix.charge[i].push(lp.add_var(name("b_in"), 0.0, mu * bat.max_charge, g.storage_cost));
            ix.discharge[i].push(lp.add_var(name("b_out"), 0.0, out_cap, g.storage_cost));
            ix.heating[i].push(lp.add_var(name("h"), 0.0, cap, 0.0));
            let (e_lo, e_hi) = if step + 1 == horizon {
                (bat.initial, bat.initial)
            } else {
                (h.mu(t + 1) * bat.min_level, bat.capacity)
            };
            ix.energy[i].push(lp.add_var(name("E"), e_lo, e_hi, 0.0));
            ix.t_mass[i].push(lp.add_var(name("T_m"), -INF, INF, 0.0));
            ix.t_air[i].push(lp.add_var(name("T_air"), h.temp_low[t], h.temp_high[t], 0.0));
        }
        for demand in 0..horizon {
            let last = s.flex_deadline(demand);
            let cols = (demand..=last)
                .map(|c| (c, lp.add_var(format!("c_hat[{i}][{c}][{demand}]"), 0.0, INF, 0.0)))
                .collect();
            ix.flex[i].push(cols);
        }
    }

    for step in 0..horizon {
        let mut row = vec![(ix.grid[step], 1.0)];
        row.extend((0..n).map(|i| (ix.import[i][step], -1.0)));
        lp.add_row(format!("grid[{step}]"), row, RowKind::Eq, 0.0);
    }
    for i in 0..n {
        let bat = &s.battery[i];
        let th = &s.thermal[i];
        let k = &th.kappa;
        let h = s.home(i);
        let mut served: Vec<Vec<usize>> = vec![Vec::new(); horizon];
        for cols in &ix.flex[i] {
            for &(c, col) in cols {
                served[c].push(col);
            }
        }
        for step in 0..horizon {
            let t = t0 + step;
            let mut row = vec![
                (ix.import[i][step], 1.0),
                (ix.heating[i][step], -1.0),
                (ix.charge[i][step], -1.0 / bat.eta_ch),
                (ix.discharge[i][step], bat.eta_dis),
            ];
            row.extend(served[step].iter().map(|&col| (col, -1.0)));
            lp.add_row(
                format!("balance[{i}][{step}]"),
                row,
                RowKind::Eq,
                h.load_fixed[t] - h.pv[t],
            );
            lp.add_row(
                format!("export[{i}][{step}]"),
                vec![(ix.export[i][step], 1.0), (ix.import[i][step], 1.0)],
                RowKind::Ge,
                0.0,
            );

            let mut row = vec![
                (ix.energy[i][step], 1.0),
                (ix.charge[i][step], -1.0),
                (ix.discharge[i][step], 1.0),
            ];
            let mut rhs = -h.ev_trip[t];
            if step == 0 {
                rhs += bat.initial;
            } else {
                row.push((ix.energy[i][step - 1], -1.0));
            }
            lp.add_row(format!("battery[{i}][{step}]"), row, RowKind::Eq, rhs);

            let exo = |r: usize| {
                k[r][0] + k[r][2] * s.homes.external_temp[t] + k[r][3] * s.homes.solar_heat[t]
            };
            for (r, cols, label) in [(0, &ix.t_mass, "mass"), (1, &ix.t_air, "air")] {
                let mut row = vec![(cols[i][step], 1.0), (ix.heating[i][step], -k[r][4])];
                let mut rhs = exo(r);
                if step == 0 {
                    rhs += k[r][1] * th.initial_mass;
                } else {
                    row.push((ix.t_mass[i][step - 1], -k[r][1]));
                }
                lp.add_row(format!("{label}[{i}][{step}]"), row, RowKind::Eq, rhs);
            }
        }
        for (demand, cols) in ix.flex[i].iter().enumerate() {
            lp.add_row(
                format!("demand[{i}][{demand}]"),
                cols.iter().map(|&(_, col)| (col, 1.0)).collect(),
                RowKind::Eq,
                h.load_flex[t0 + demand],
            );
        }
    }
    Ok(DayLp {
        day,
        program: lp,
        index: ix,
    })
}

/// Optimal plan decoded into per-step physical decisions, `[step][home]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaySchedule {
    pub day: usize,
    pub decisions: Vec<Vec<HomeDecision>>,
    /// LP objective of the solution before exclusivity netting.
    pub objective: f64,
}

/// Reads decisions out of an LP solution. Simultaneous charging and
/// discharging is netted: both are reduced by their minimum, which keeps the
/// battery trajectory and can only lower the cost.
pub fn decode_day(lp: &DayLp, sol: &LpSolution, s: &ScenarioData) -> DaySchedule {
    let ix = &lp.index;
    let x = &sol.x;
    let t0 = s.global_step(lp.day, 0);
    let decisions = (0..s.horizon)
        .map(|step| {
            (0..s.n_homes)
                .map(|i| {
                    let b_in = x[ix.charge[i][step]].max(0.0);
                    let b_out = x[ix.discharge[i][step]].max(0.0);
                    let common = b_in.min(b_out);
                    let flex: f64 = ix.flex[i]
                        .iter()
                        .flatten()
                        .filter(|(c, _)| *c == step)
                        .map(|&(_, col)| x[col].max(0.0))
                        .sum();
                    HomeDecision {
                        charge: b_in - common,
                        discharge: b_out - common,
                        heating: x[ix.heating[i][step]].max(0.0),
                        consumption: s.home(i).load_fixed[t0 + step] + flex,
                    }
                })
                .collect()
        })
        .collect();
    DaySchedule {
        day: lp.day,
        decisions,
        objective: sol.objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_lp;
    use crate::oracle::test_support::tiny_scenario;

    #[test]
    fn variable_count_matches_closed_form() {
        for (n, horizon, window) in [(1, 2, 0), (2, 4, 1), (3, 24, 4), (2, 6, 10)] {
            let mut s = tiny_scenario(n, horizon);
            s.homes.flex_window = window;
            let lp = build_day_lp(&s, 0, EnvConfig::default()).unwrap();
            assert_eq!(lp.program.n_vars(), day_lp_variable_count(n, horizon, window));
        }
        // Hand count: T = 4, window 1 -> pairs 2 + 2 + 2 + 1.
        assert_eq!(flex_pair_count(4, 1), 7);
        assert_eq!(day_lp_variable_count(2, 4, 1), 4 + 2 * (32 + 7));
    }

    #[test]
    fn empty_problem_costs_nothing() {
        let s = tiny_scenario(1, 2);
        let lp = build_day_lp(&s, 0, EnvConfig::default()).unwrap();
        let sol = solve_lp(&lp.program).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        let plan = decode_day(&lp, &sol, &s);
        for d in plan.decisions.iter().flatten() {
            assert!(d.charge.abs() < 1e-12 && d.discharge.abs() < 1e-12);
            assert!(d.heating.abs() < 1e-12 && d.consumption.abs() < 1e-12);
        }
    }

    #[test]
    fn flexible_load_moves_to_the_cheap_step() {
        let mut s = tiny_scenario(1, 3);
        s.grid.cost_coeff = vec![1.0, 1.0, 0.1];
        s.grid.wholesale_price = s.grid.cost_coeff.clone();
        s.grid.storage_cost = 1.0;
        s.homes.flex_window = 2;
        s.homes.homes[0].load_flex = vec![2.0, 0.0, 0.0];
        let lp = build_day_lp(&s, 0, EnvConfig::default()).unwrap();
        let sol = solve_lp(&lp.program).unwrap();

        // Enumerate consumption splits over a 0.1 kWh grid. The battery can
        // only add storage cost here (flat start/end level, C_s = 1), so it
        // stays idle in the optimum.
        let mut best = f64::INFINITY;
        for a in 0..=20 {
            for b in 0..=(20 - a) {
                let c = [a as f64 * 0.1, b as f64 * 0.1, (20 - a - b) as f64 * 0.1];
                let cost: f64 = c.iter().zip(&s.grid.cost_coeff).map(|(x, p)| x * p).sum();
                best = best.min(cost);
            }
        }
        assert!((sol.objective - best).abs() < 1e-9, "{} vs {best}", sol.objective);
        let plan = decode_day(&lp, &sol, &s);
        assert!((plan.decisions[2][0].consumption - 2.0).abs() < 1e-9);
    }

    #[test]
    fn solution_respects_every_row() {
        let s = crate::profiles::generate_profiles(11, 2, 1, &Default::default()).unwrap();
        let lp = build_day_lp(&s, 0, EnvConfig::default()).unwrap();
        let sol = solve_lp(&lp.program).unwrap();
        assert!(lp.program.max_violation(&sol.x) < 1e-7);
        assert!((lp.program.evaluate(&sol.x) - sol.objective).abs() < 1e-9);
    }
}
