//! The multi-home Dec-POMDP: per-home physical state, translation of bounded
//! agent actions into feasible decisions, dynamics and the shared reward.

mod battery;
mod ranges;
mod trace;

pub use battery::{invert_battery, translate_battery, BatteryEnvelope, BatteryRange};
pub use ranges::{
    consume_earliest_deadline_first, consumption_feasible_range, heating_feasible_range,
    FlexLoad, HeatRange,
};
pub use trace::{observation_hash, TraceWriter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{GridSignals, ScenarioData};

/// Length of the price window seen by the actor-critic agents.
pub const OBS_WINDOW: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Also forbid discharging while the EV is away.
    pub gate_discharge_by_availability: bool,
}

/// One agent's bounded action triple.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HomeAction {
    /// `[-1, 1]`
    pub battery: f64,
    /// `[0, 1]`
    pub heating: f64,
    /// `[0, 1]`
    pub consumption: f64,
}

impl HomeAction {
    /// No battery action, minimal heating, all demand consumed immediately.
    pub const DEFAULT: HomeAction = HomeAction {
        battery: 0.0,
        heating: 0.0,
        consumption: 1.0,
    };

    pub const fn new(battery: f64, heating: f64, consumption: f64) -> Self {
        Self {
            battery,
            heating,
            consumption,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.battery, self.heating, self.consumption]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn clipped(self) -> Self {
        Self::new(
            self.battery.clamp(-1.0, 1.0),
            self.heating.clamp(0.0, 1.0),
            self.consumption.clamp(0.0, 1.0),
        )
    }

    pub fn in_bounds(&self) -> bool {
        (-1.0..=1.0).contains(&self.battery)
            && (0.0..=1.0).contains(&self.heating)
            && (0.0..=1.0).contains(&self.consumption)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAction(pub Vec<HomeAction>);

impl JointAction {
    pub fn uniform(n: usize, a: HomeAction) -> Self {
        Self(vec![a; n])
    }
}

/// Running totals of the objective terms, currency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Wholesale-price part of the grid cost.
    pub grid_energy: f64,
    /// Carbon part of the grid cost.
    pub carbon: f64,
    pub distribution: f64,
    pub storage: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.grid_energy + self.carbon + self.distribution + self.storage
    }

    pub fn add(&mut self, other: &CostBreakdown) {
        self.grid_energy += other.grid_energy;
        self.carbon += other.carbon;
        self.distribution += other.distribution;
        self.storage += other.storage;
    }

    pub fn scaled(&self, k: f64) -> CostBreakdown {
        CostBreakdown {
            grid_energy: self.grid_energy * k,
            carbon: self.carbon * k,
            distribution: self.distribution * k,
            storage: self.storage * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub day: usize,
    /// Within-day step index; equals the horizon once the day is over.
    pub step: usize,
    pub energy: Vec<f64>,
    pub t_mass: Vec<f64>,
    pub t_air: Vec<f64>,
    /// Outstanding flexible demand per home, sorted by deadline. Includes the
    /// demand arriving at the current step.
    pub flex_queue: Vec<Vec<FlexLoad>>,
    pub costs: CostBreakdown,
}

impl EnvState {
    pub fn queued(&self, home: usize) -> f64 {
        self.flex_queue[home].iter().map(|l| l.amount).sum()
    }
}

/// Physical decisions of one home for one step, kWh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HomeDecision {
    pub charge: f64,
    pub discharge: f64,
    pub heating: f64,
    pub consumption: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeFlows {
    pub decision: HomeDecision,
    /// Net home import `p`.
    pub import: f64,
    pub charge_loss: f64,
    pub discharge_loss: f64,
    pub over_warm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub homes: Vec<HomeFlows>,
    /// Substation import `g`.
    pub grid_import: f64,
    pub reward: f64,
    pub costs: CostBreakdown,
    pub done: bool,
}

/// Feasible ranges for one home at the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeRanges {
    pub battery: BatteryRange,
    pub heat: HeatRange,
    pub consumption: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Current grid cost coefficient only.
    Iql,
    /// Grid cost coefficients for the next [`OBS_WINDOW`] steps.
    Facmac,
}

/// `r = -(C_g (g + eps_g) + C_d sum max(-p, 0) + C_s sum (b_in + b_out))`.
pub fn step_reward(
    imports: &[f64],
    grid_import: f64,
    charge: &[f64],
    discharge: &[f64],
    grid: &GridSignals,
    t: usize,
) -> f64 {
    -step_costs(imports, grid_import, charge, discharge, grid, t).total()
}

pub fn step_costs(
    imports: &[f64],
    grid_import: f64,
    charge: &[f64],
    discharge: &[f64],
    grid: &GridSignals,
    t: usize,
) -> CostBreakdown {
    let drawn = grid_import + grid.grid_loss;
    let exports: f64 = imports.iter().map(|p| (-p).max(0.0)).sum();
    let throughput: f64 = charge.iter().chain(discharge).sum();
    CostBreakdown {
        grid_energy: grid.wholesale_price[t] * drawn,
        carbon: grid.carbon_intensity[t] * grid.social_cost_carbon * drawn,
        distribution: grid.export_charge * exports,
        storage: grid.storage_cost * throughput,
    }
}

/// Environment over one scenario. Holds precomputed battery envelopes for
/// every (day, home); episodes are single days.
pub struct Environment<'a> {
    scenario: &'a ScenarioData,
    config: EnvConfig,
    envelopes: Vec<Vec<BatteryEnvelope>>,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a ScenarioData, config: EnvConfig) -> Result<Self> {
        let envelopes = (0..scenario.n_days)
            .map(|day| {
                (0..scenario.n_homes)
                    .map(|i| {
                        BatteryEnvelope::compute(
                            scenario,
                            i,
                            day,
                            config.gate_discharge_by_availability,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scenario,
            config,
            envelopes,
        })
    }

    pub fn scenario(&self) -> &'a ScenarioData {
        self.scenario
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn n_homes(&self) -> usize {
        self.scenario.n_homes
    }

    pub fn horizon(&self) -> usize {
        self.scenario.horizon
    }

    pub fn envelope(&self, day: usize, home: usize) -> &BatteryEnvelope {
        &self.envelopes[day][home]
    }

    pub fn reset(&self, day: usize) -> EnvState {
        let s = self.scenario;
        let mut state = EnvState {
            day,
            step: 0,
            energy: s.battery.iter().map(|b| b.initial).collect(),
            t_mass: s.thermal.iter().map(|th| th.initial_mass).collect(),
            t_air: s.thermal.iter().map(|th| th.initial_air).collect(),
            flex_queue: vec![Vec::new(); s.n_homes],
            costs: CostBreakdown::default(),
        };
        self.enqueue_arrivals(&mut state);
        state
    }

    fn enqueue_arrivals(&self, state: &mut EnvState) {
        if state.step >= self.scenario.horizon {
            return;
        }
        let t = self.scenario.global_step(state.day, state.step);
        let deadline = self.scenario.flex_deadline(state.step);
        for (i, queue) in state.flex_queue.iter_mut().enumerate() {
            let amount = self.scenario.home(i).load_flex[t];
            if amount > 0.0 {
                queue.push(FlexLoad { amount, deadline });
            }
        }
    }

    pub fn ranges(&self, state: &EnvState, home: usize) -> HomeRanges {
        let s = self.scenario;
        let t = s.global_step(state.day, state.step);
        let series = s.home(home);
        let battery = self.envelopes[state.day][home].range(
            &s.battery[home],
            state.energy[home],
            state.step,
            series.ev_available[t],
            series.ev_trip[t],
        );
        let heat = heating_feasible_range(
            state.t_mass[home],
            s.homes.external_temp[t],
            s.homes.solar_heat[t],
            series.temp_low[t],
            series.temp_high[t],
            &s.thermal[home],
        );
        let consumption =
            consumption_feasible_range(&state.flex_queue[home], series.load_fixed[t], state.step);
        HomeRanges {
            battery,
            heat,
            consumption,
        }
    }

    fn check_action(&self, state: &EnvState, action: &JointAction) -> Result<()> {
        if state.step >= self.scenario.horizon {
            return Err(Error::InvalidArgument(format!(
                "day {} is already over",
                state.day
            )));
        }
        if action.0.len() != self.scenario.n_homes {
            return Err(Error::Shape(format!(
                "joint action for {} homes, scenario has {}",
                action.0.len(),
                self.scenario.n_homes
            )));
        }
        if let Some(i) = action.0.iter().position(|a| !a.in_bounds()) {
            return Err(Error::InvalidArgument(format!(
                "action of home {i} out of bounds: {:?}",
                action.0[i]
            )));
        }
        Ok(())
    }

    /// Maps each home's action triple onto its feasible ranges.
    pub fn translate_actions(
        &self,
        state: &EnvState,
        action: &JointAction,
    ) -> Result<Vec<(HomeDecision, HomeRanges)>> {
        self.check_action(state, action)?;
        Ok(action
            .0
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let r = self.ranges(state, i);
                (translate_home(&r, a), r)
            })
            .collect())
    }

    /// Advances one step in place.
    pub fn step(&self, state: &mut EnvState, action: &JointAction) -> Result<StepOutcome> {
        let decisions = self.translate_actions(state, action)?;
        Ok(self.apply(state, &decisions))
    }

    /// Advances one step with explicit physical decisions (assumed feasible).
    pub fn apply_decisions(
        &self,
        state: &mut EnvState,
        decisions: &[HomeDecision],
    ) -> Result<StepOutcome> {
        self.check_action(state, &JointAction::uniform(decisions.len(), HomeAction::DEFAULT))?;
        let with_ranges: Vec<(HomeDecision, HomeRanges)> = decisions
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, self.ranges(state, i)))
            .collect();
        Ok(self.apply(state, &with_ranges))
    }

    fn apply(&self, state: &mut EnvState, decisions: &[(HomeDecision, HomeRanges)]) -> StepOutcome {
        let s = self.scenario;
        let t = s.global_step(state.day, state.step);
        let mut homes = Vec::with_capacity(s.n_homes);
        for (i, (d, r)) in decisions.iter().enumerate() {
            let bat = &s.battery[i];
            let series = s.home(i);
            let import = d.consumption + d.heating + d.charge / bat.eta_ch
                - bat.eta_dis * d.discharge
                - series.pv[t];
            state.energy[i] += d.charge - d.discharge - series.ev_trip[t];
            let (tm, ta) = s.thermal[i].advance(
                state.t_mass[i],
                s.homes.external_temp[t],
                s.homes.solar_heat[t],
                d.heating,
            );
            state.t_mass[i] = tm;
            state.t_air[i] = ta;
            let flexible = (d.consumption - series.load_fixed[t]).max(0.0);
            consume_earliest_deadline_first(&mut state.flex_queue[i], flexible, state.step);
            homes.push(HomeFlows {
                decision: *d,
                import,
                charge_loss: d.charge * (1.0 / bat.eta_ch - 1.0),
                discharge_loss: d.discharge * (1.0 - bat.eta_dis),
                over_warm: r.heat.over_warm,
            });
        }
        let imports: Vec<f64> = homes.iter().map(|h| h.import).collect();
        let charge: Vec<f64> = homes.iter().map(|h| h.decision.charge).collect();
        let discharge: Vec<f64> = homes.iter().map(|h| h.decision.discharge).collect();
        let grid_import: f64 = imports.iter().sum();
        let costs = step_costs(&imports, grid_import, &charge, &discharge, &s.grid, t);
        let reward = -costs.total();
        state.costs.add(&costs);
        state.step += 1;
        self.enqueue_arrivals(state);
        StepOutcome {
            homes,
            grid_import,
            reward,
            costs,
            done: state.step == s.horizon,
        }
    }

    /// Observation of `agent`. Agents observe the same public price signal.
    pub fn observe(&self, state: &EnvState, _agent: usize, mode: ObservationMode) -> Vec<f64> {
        match mode {
            ObservationMode::Iql => vec![self.current_cost(state)],
            ObservationMode::Facmac => self.price_window(state),
        }
    }

    fn current_cost(&self, state: &EnvState) -> f64 {
        let step = state.step.min(self.scenario.horizon - 1);
        self.scenario.grid.cost_coeff[self.scenario.global_step(state.day, step)]
    }

    /// `C_g` for the next [`OBS_WINDOW`] steps, padded past the end of the day
    /// by repeating the last in-day value.
    pub fn price_window(&self, state: &EnvState) -> Vec<f64> {
        let s = self.scenario;
        let base = s.global_step(state.day, 0);
        let last = s.horizon - 1;
        (0..OBS_WINDOW)
            .map(|k| s.grid.cost_coeff[base + (state.step + k).min(last)])
            .collect()
    }

    /// Home-level features: normalised battery level, air temperature within
    /// its comfort band, queued flexible energy over daily demand.
    pub fn local_features(&self, state: &EnvState, home: usize) -> [f64; 3] {
        let s = self.scenario;
        let step = state.step.min(s.horizon - 1);
        let t = s.global_step(state.day, step);
        let series = s.home(home);
        let bat = &s.battery[home];
        let band = series.temp_high[t] - series.temp_low[t];
        let air = if band > 0.0 {
            (state.t_air[home] - series.temp_low[t]) / band
        } else {
            0.0
        };
        let span = s.global_step(state.day, 0)..s.global_step(state.day + 1, 0);
        let daily: f64 = span
            .map(|t| series.load_fixed[t] + series.load_flex[t])
            .sum();
        let queued = if daily > 0.0 { state.queued(home) / daily } else { 0.0 };
        [state.energy[home] / bat.capacity, air, queued]
    }

    pub fn global_state(&self, state: &EnvState) -> Vec<f64> {
        let n = self.scenario.n_homes;
        let mut out = self.price_window(state);
        out.reserve(3 * n + 1);
        let feats: Vec<[f64; 3]> = (0..n).map(|i| self.local_features(state, i)).collect();
        for k in 0..3 {
            out.extend(feats.iter().map(|f| f[k]));
        }
        out.push(state.step as f64 / self.scenario.horizon as f64);
        out
    }

    pub fn global_state_len(n_homes: usize) -> usize {
        OBS_WINDOW + 3 * n_homes + 1
    }
}

pub fn translate_home(r: &HomeRanges, a: &HomeAction) -> HomeDecision {
    let (charge, discharge) = translate_battery(&r.battery, a.battery);
    let (c_low, c_high) = r.consumption;
    HomeDecision {
        charge,
        discharge,
        heating: (1.0 - a.heating) * r.heat.low + a.heating * r.heat.high,
        consumption: (1.0 - a.consumption) * c_low + a.consumption * c_high,
    }
}

fn unit_interp(low: f64, high: f64, value: f64) -> f64 {
    let span = high - low;
    if span > 1e-12 {
        ((value - low) / span).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Action that reproduces `d` at ranges `r`; degenerate ranges map to 0.
pub fn invert_home(r: &HomeRanges, d: &HomeDecision) -> HomeAction {
    HomeAction {
        battery: invert_battery(&r.battery, d.charge, d.discharge),
        heating: unit_interp(r.heat.low, r.heat.high, d.heating),
        consumption: unit_interp(r.consumption.0, r.consumption.1, d.consumption),
    }
}
