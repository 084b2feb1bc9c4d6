use crate::error::{Error, Result};
use crate::profiles::{BatteryParams, ScenarioData};

const TOL: f64 = 1e-9;

/// Feasible per-step battery decisions at a given energy level, kWh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatteryRange {
    /// Charge needed to stay on a trajectory that serves all later trips.
    pub charge_forced: f64,
    pub charge_max: f64,
    /// Discharge needed to still be able to return to the initial level.
    pub discharge_forced: f64,
    pub discharge_max: f64,
}

/// Lowest (`reserve`) and highest (`ceiling`) battery energy at the start of
/// each step of a day from which every later trip, the availability-gated
/// minimum level and the end-of-day return to the initial level can still be
/// met. Both have `horizon + 1` entries; the last equals the initial level.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryEnvelope {
    pub reserve: Vec<f64>,
    pub ceiling: Vec<f64>,
    gate_discharge: bool,
}

impl BatteryEnvelope {
    /// Backward recursion over one day of availability and trip data.
    ///
    /// The error's `day` field is 0; [`BatteryEnvelope::compute`] fills it in.
    pub fn from_series(
        bat: &BatteryParams,
        available: &[bool],
        trip: &[f64],
        gate_discharge: bool,
    ) -> Result<Self> {
        let horizon = available.len();
        let mut reserve = vec![0.0; horizon + 1];
        let mut ceiling = vec![0.0; horizon + 1];
        reserve[horizon] = bat.initial;
        ceiling[horizon] = bat.initial;
        for step in (0..horizon).rev() {
            let mu = if available[step] { 1.0 } else { 0.0 };
            let needed = (reserve[step + 1] + trip[step] - mu * bat.max_charge)
                .max(mu * bat.min_level)
                .max(0.0);
            if needed > bat.capacity + TOL {
                return Err(Error::InfeasibleScenario {
                    home: 0,
                    day: 0,
                    step,
                    message: format!(
                        "trips need {needed:.3} kWh at the start of the step, capacity is {}",
                        bat.capacity
                    ),
                });
            }
            reserve[step] = needed.min(bat.capacity);
            let out_cap = if gate_discharge { mu * bat.max_discharge } else { bat.max_discharge };
            ceiling[step] = (ceiling[step + 1] + trip[step] + out_cap).min(bat.capacity);
        }
        if reserve[0] > bat.initial + TOL {
            return Err(Error::InfeasibleScenario {
                home: 0,
                day: 0,
                step: 0,
                message: format!(
                    "initial level {} is below the {:.3} kWh needed for the day's trips",
                    bat.initial, reserve[0]
                ),
            });
        }
        Ok(Self {
            reserve,
            ceiling,
            gate_discharge,
        })
    }

    pub fn compute(s: &ScenarioData, home: usize, day: usize, gate_discharge: bool) -> Result<Self> {
        let span = day * s.horizon..(day + 1) * s.horizon;
        let h = s.home(home);
        Self::from_series(
            &s.battery[home],
            &h.ev_available[span.clone()],
            &h.ev_trip[span],
            gate_discharge,
        )
        .map_err(|e| match e {
            Error::InfeasibleScenario { step, message, .. } => Error::InfeasibleScenario {
                home,
                day,
                step,
                message,
            },
            other => other,
        })
    }

    /// Feasible decisions at energy `energy` for within-day step `step`.
    pub fn range(
        &self,
        bat: &BatteryParams,
        energy: f64,
        step: usize,
        available: bool,
        trip: f64,
    ) -> BatteryRange {
        let mu = if available { 1.0 } else { 0.0 };
        let after_trip = energy - trip;
        let next_low = self.reserve[step + 1];
        let next_high = self.ceiling[step + 1];
        let charge_max = (mu * bat.max_charge).min(next_high - after_trip).max(0.0);
        let charge_forced = (next_low - after_trip).clamp(0.0, charge_max);
        let out_cap = if self.gate_discharge { mu * bat.max_discharge } else { bat.max_discharge };
        let discharge_max = out_cap.min(after_trip - next_low).max(0.0);
        let discharge_forced = (after_trip - next_high).clamp(0.0, discharge_max);
        BatteryRange {
            charge_forced,
            charge_max,
            discharge_forced,
            discharge_max,
        }
    }
}

/// Battery action in `[-1, 1]` to `(b_in, b_out)`.
///
/// Positive actions interpolate charging between the forced and maximum
/// amounts, negative ones discharging. When the other direction is forced the
/// action is treated as zero, which applies only the forced amount.
pub fn translate_battery(range: &BatteryRange, action: f64) -> (f64, f64) {
    if action >= 0.0 {
        if range.discharge_forced > 0.0 {
            (0.0, range.discharge_forced)
        } else {
            let b_in = range.charge_forced + action * (range.charge_max - range.charge_forced);
            (b_in, 0.0)
        }
    } else if range.charge_forced > 0.0 {
        (range.charge_forced, 0.0)
    } else {
        let b_out =
            range.discharge_forced - action * (range.discharge_max - range.discharge_forced);
        (0.0, b_out)
    }
}

/// Inverse of [`translate_battery`]: the action reproducing `(b_in, b_out)`.
/// Degenerate ranges map to 0.
pub fn invert_battery(range: &BatteryRange, b_in: f64, b_out: f64) -> f64 {
    let net = b_in - b_out;
    if net > 0.0 {
        let span = range.charge_max - range.charge_forced;
        if span > 1e-12 {
            ((net - range.charge_forced) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    } else if net < 0.0 && range.charge_forced == 0.0 {
        let span = range.discharge_max - range.discharge_forced;
        if span > 1e-12 {
            -((-net - range.discharge_forced) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    } else {
        0.0
    }
}
