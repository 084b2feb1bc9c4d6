//! Scenario data model: exogenous grid signals, per-home input profiles and
//! physical parameters for every home in the neighbourhood.
//!
//! All series are indexed by global step `t = day * horizon + step`. A day is
//! one episode; homes start every day from their initial battery level and
//! initial thermal state.

mod csv_io;
mod generate;
mod validate;

pub use csv_io::{load_scenario_csv, parse_scenario_files, write_scenario_csv, ScenarioFiles};
pub use generate::{generate_profiles, EvTemplate, PriceTemplate, ProfileTemplate, RcBuilding};
pub use validate::validate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Computes the grid cost coefficient `price[t] + intensity[t] * scc`.
pub fn grid_cost_coefficient(price: &[f64], intensity: &[f64], scc: f64) -> Result<Vec<f64>> {
    if price.len() != intensity.len() {
        return Err(Error::LengthMismatch {
            what: "carbon intensity".into(),
            expected: price.len(),
            got: intensity.len(),
        });
    }
    if !scc.is_finite() || scc < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "social cost of carbon must be finite and non-negative, got {scc}"
        )));
    }
    price
        .iter()
        .zip(intensity)
        .map(|(&p, &ci)| {
            if p.is_finite() && ci.is_finite() {
                Ok(p + ci * scc)
            } else {
                Err(Error::InvalidArgument("non-finite price or intensity".into()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSignals {
    /// Wholesale price, currency/kWh.
    pub wholesale_price: Vec<f64>,
    /// Carbon intensity, tCO2/kWh.
    pub carbon_intensity: Vec<f64>,
    /// Social cost of carbon, currency/tCO2.
    pub social_cost_carbon: f64,
    /// `C_g[t]`, currency/kWh.
    pub cost_coeff: Vec<f64>,
    /// Distribution charge on exports, currency/kWh.
    pub export_charge: f64,
    /// Battery throughput degradation cost, currency/kWh.
    pub storage_cost: f64,
    /// Constant grid loss term added to the substation import, kWh.
    pub grid_loss: f64,
}

impl GridSignals {
    pub fn new(
        wholesale_price: Vec<f64>,
        carbon_intensity: Vec<f64>,
        social_cost_carbon: f64,
        export_charge: f64,
        storage_cost: f64,
        grid_loss: f64,
    ) -> Result<Self> {
        let cost_coeff =
            grid_cost_coefficient(&wholesale_price, &carbon_intensity, social_cost_carbon)?;
        Ok(Self {
            wholesale_price,
            carbon_intensity,
            social_cost_carbon,
            cost_coeff,
            export_charge,
            storage_cost,
            grid_loss,
        })
    }
}

/// Input series of a single home.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeSeries {
    /// EV at home (`mu`).
    pub ev_available: Vec<bool>,
    /// Energy drawn from the EV battery by trips, kWh.
    pub ev_trip: Vec<f64>,
    pub load_fixed: Vec<f64>,
    pub load_flex: Vec<f64>,
    pub pv: Vec<f64>,
    /// Comfort bounds on the air temperature reached at the end of each step, °C.
    pub temp_low: Vec<f64>,
    pub temp_high: Vec<f64>,
}

impl HomeSeries {
    pub fn mu(&self, t: usize) -> f64 {
        if self.ev_available[t] {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeProfiles {
    pub homes: Vec<HomeSeries>,
    /// Outdoor temperature, °C.
    pub external_temp: Vec<f64>,
    /// Solar heat flow, kW.
    pub solar_heat: Vec<f64>,
    /// Number of steps a flexible load may be delayed.
    pub flex_window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub capacity: f64,
    pub min_level: f64,
    pub initial: f64,
    pub max_charge: f64,
    pub max_discharge: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity: 39.0,
            min_level: 3.9,
            initial: 19.5,
            max_charge: 6.6,
            max_discharge: 6.6,
            eta_ch: 0.95,
            eta_dis: 0.95,
        }
    }
}

/// Linear two-node thermal recursion
/// `[T_m', T_air'] = kappa * [1, T_m, T_e, phi, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub kappa: [[f64; 5]; 2],
    /// Maximum heating energy per step; `None` is unbounded.
    pub heat_cap: Option<f64>,
    pub initial_mass: f64,
    pub initial_air: f64,
}

impl ThermalParams {
    /// Air temperature at the end of the step with zero heating.
    pub fn free_air(&self, t_mass: f64, t_ext: f64, solar: f64) -> f64 {
        let k = &self.kappa[1];
        k[0] + k[1] * t_mass + k[2] * t_ext + k[3] * solar
    }

    pub fn advance(&self, t_mass: f64, t_ext: f64, solar: f64, heat: f64) -> (f64, f64) {
        let x = [1.0, t_mass, t_ext, solar, heat];
        let row = |r: &[f64; 5]| r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        (row(&self.kappa[0]), row(&self.kappa[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub grid: GridSignals,
    pub homes: HomeProfiles,
    pub battery: Vec<BatteryParams>,
    pub thermal: Vec<ThermalParams>,
    pub n_homes: usize,
    pub horizon: usize,
    pub n_days: usize,
    pub seed: u64,
}

impl ScenarioData {
    pub fn n_steps(&self) -> usize {
        self.horizon * self.n_days
    }

    pub fn global_step(&self, day: usize, step: usize) -> usize {
        day * self.horizon + step
    }

    pub fn home(&self, i: usize) -> &HomeSeries {
        &self.homes.homes[i]
    }

    /// Last step index (within the day) by which a load demanded at `step` must be met.
    pub fn flex_deadline(&self, step: usize) -> usize {
        (step + self.homes.flex_window).min(self.horizon - 1)
    }

    /// Copy containing only the given days, in order.
    pub fn select_days(&self, days: &[usize]) -> Result<ScenarioData> {
        for &d in days {
            if d >= self.n_days {
                return Err(Error::InvalidArgument(format!(
                    "day {d} out of range (scenario has {} days)",
                    self.n_days
                )));
            }
        }
        let h = self.horizon;
        let pick = |v: &Vec<f64>| -> Vec<f64> {
            days.iter().flat_map(|&d| v[d * h..(d + 1) * h].iter().copied()).collect()
        };
        let pick_b = |v: &Vec<bool>| -> Vec<bool> {
            days.iter().flat_map(|&d| v[d * h..(d + 1) * h].iter().copied()).collect()
        };
        let grid = GridSignals {
            wholesale_price: pick(&self.grid.wholesale_price),
            carbon_intensity: pick(&self.grid.carbon_intensity),
            cost_coeff: pick(&self.grid.cost_coeff),
            ..self.grid.clone()
        };
        let homes = HomeProfiles {
            homes: self
                .homes
                .homes
                .iter()
                .map(|s| HomeSeries {
                    ev_available: pick_b(&s.ev_available),
                    ev_trip: pick(&s.ev_trip),
                    load_fixed: pick(&s.load_fixed),
                    load_flex: pick(&s.load_flex),
                    pv: pick(&s.pv),
                    temp_low: pick(&s.temp_low),
                    temp_high: pick(&s.temp_high),
                })
                .collect(),
            external_temp: pick(&self.homes.external_temp),
            solar_heat: pick(&self.homes.solar_heat),
            flex_window: self.homes.flex_window,
        };
        Ok(ScenarioData {
            grid,
            homes,
            battery: self.battery.clone(),
            thermal: self.thermal.clone(),
            n_homes: self.n_homes,
            horizon: self.horizon,
            n_days: days.len(),
            seed: self.seed,
        })
    }
}
