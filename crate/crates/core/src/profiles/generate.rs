//! Seedable synthetic input profiles.
//!
//! The shapes are stand-ins for measured data: a morning/evening household
//! demand double peak, a daytime PV bell, commuter EV trips with overnight
//! availability, a time-of-use price spread and a cold-season temperature
//! cycle. Magnitudes are plausible for a UK winter, nothing more.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    BatteryParams, GridSignals, HomeProfiles, HomeSeries, ScenarioData, ThermalParams,
};
use crate::environment::BatteryEnvelope;
use crate::error::{Error, Result};

/// Two-node RC building: a mass node with capacitance and a quasi-steady air
/// node. Conductances in kW/K, capacitance in kWh/K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcBuilding {
    pub mass_capacity: f64,
    pub air_mass_conductance: f64,
    pub air_ext_conductance: f64,
    pub mass_ext_conductance: f64,
    pub step_hours: f64,
}

impl Default for RcBuilding {
    fn default() -> Self {
        Self {
            mass_capacity: 10.0,
            air_mass_conductance: 0.6,
            air_ext_conductance: 0.06,
            mass_ext_conductance: 0.05,
            step_hours: 1.0,
        }
    }
}

impl RcBuilding {
    /// Crank-Nicolson discretisation of the mass node with the air node
    /// eliminated algebraically, giving both rows as affine maps of
    /// `[1, T_m, T_e, phi, h]`.
    pub fn kappa(&self) -> [[f64; 5]; 2] {
        let h_am = self.air_mass_conductance;
        let h_ae = self.air_ext_conductance;
        let h_me = self.mass_ext_conductance;
        let dt = self.step_hours;
        let s = h_am + h_ae;
        // dT_m/dt = -k T_m + k T_e + g P, P = heating power + solar gains
        let k = (h_am * h_ae / s + h_me) / self.mass_capacity;
        let g = h_am / (s * self.mass_capacity);
        let denom = 1.0 + 0.5 * k * dt;
        let a = (1.0 - 0.5 * k * dt) / denom;
        let b_ext = dt * k / denom;
        let b_pow = dt * g / denom;
        let w = h_am / s;
        let air_pow = w * b_pow + 1.0 / s;
        [
            [0.0, a, b_ext, b_pow, b_pow / dt],
            [0.0, w * a, w * b_ext + h_ae / s, air_pow, air_pow / dt],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceTemplate {
    pub off_peak: f64,
    pub day: f64,
    pub peak: f64,
    /// Off-peak window `[start, end)` in steps.
    pub off_peak_hours: (usize, usize),
    pub peak_hours: (usize, usize),
    pub noise_sd: f64,
    pub intensity_base: f64,
    pub intensity_peak_extra: f64,
}

impl Default for PriceTemplate {
    fn default() -> Self {
        Self {
            off_peak: 0.08,
            day: 0.16,
            peak: 0.32,
            off_peak_hours: (0, 7),
            peak_hours: (16, 20),
            noise_sd: 0.01,
            intensity_base: 0.00018,
            intensity_peak_extra: 0.00006,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvTemplate {
    pub trip_probability: f64,
    pub trip_energy: (f64, f64),
    pub depart_hours: (usize, usize),
    pub return_hours: (usize, usize),
}

impl Default for EvTemplate {
    fn default() -> Self {
        Self {
            trip_probability: 0.85,
            trip_energy: (4.0, 14.0),
            depart_hours: (7, 9),
            return_hours: (16, 19),
        }
    }
}

/// Shape configuration for [`generate_profiles`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileTemplate {
    pub horizon: usize,
    pub flex_window: usize,
    /// Fraction of household demand that is flexible.
    pub flexible_share: f64,
    pub daily_load: (f64, f64),
    pub pv_probability: f64,
    pub pv_peak: (f64, f64),
    pub price: PriceTemplate,
    pub ev: EvTemplate,
    pub social_cost_carbon: f64,
    pub export_charge: f64,
    pub storage_cost: f64,
    pub grid_loss: f64,
    pub battery: BatteryParams,
    pub building: RcBuilding,
    pub heat_cap: Option<f64>,
    pub comfort_day: (f64, f64),
    pub comfort_night: (f64, f64),
    /// Steps with day-time comfort bounds, `[start, end)`.
    pub day_hours: (usize, usize),
    pub initial_temp: f64,
    pub ext_temp_mean: f64,
    pub ext_temp_amplitude: f64,
    pub ext_temp_day_sd: f64,
    pub solar_heat: f64,
}

impl Default for ProfileTemplate {
    fn default() -> Self {
        Self {
            horizon: 24,
            flex_window: 4,
            flexible_share: 0.3,
            daily_load: (7.0, 12.0),
            pv_probability: 0.6,
            pv_peak: (0.5, 2.0),
            price: PriceTemplate::default(),
            ev: EvTemplate::default(),
            social_cost_carbon: 70.0,
            export_charge: 0.01,
            storage_cost: 0.005,
            grid_loss: 0.0,
            battery: BatteryParams::default(),
            building: RcBuilding::default(),
            heat_cap: None,
            comfort_day: (19.0, 22.0),
            comfort_night: (16.0, 22.0),
            day_hours: (7, 23),
            initial_temp: 19.0,
            ext_temp_mean: 4.0,
            ext_temp_amplitude: 3.0,
            ext_temp_day_sd: 2.0,
            solar_heat: 0.0,
        }
    }
}

impl ProfileTemplate {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("profile template: {m}")));
        if self.horizon < 2 {
            return bad("horizon must be at least 2 steps");
        }
        if !(0.0..=1.0).contains(&self.flexible_share) {
            return bad("flexible_share must lie in [0, 1]");
        }
        if self.daily_load.0 < 0.0 || self.daily_load.1 < self.daily_load.0 {
            return bad("daily_load must be an ordered non-negative range");
        }
        if self.pv_peak.0 < 0.0 || self.pv_peak.1 < self.pv_peak.0 {
            return bad("pv_peak must be an ordered non-negative range");
        }
        if self.ev.trip_energy.0 < 0.0 || self.ev.trip_energy.1 < self.ev.trip_energy.0 {
            return bad("trip_energy must be an ordered non-negative range");
        }
        let (d0, d1) = self.ev.depart_hours;
        let (r0, r1) = self.ev.return_hours;
        if d0 > d1 || r0 > r1 || d1 >= r0 || r1 > self.horizon {
            return bad("EV departure must precede return within the horizon");
        }
        if self.social_cost_carbon < 0.0 || self.export_charge < 0.0 || self.storage_cost < 0.0 {
            return bad("cost parameters must be non-negative");
        }
        if self.comfort_day.0 > self.comfort_day.1 || self.comfort_night.0 > self.comfort_night.1
        {
            return bad("comfort bounds must be ordered");
        }
        Ok(())
    }
}

fn gaussian_bump(x: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((x - centre) / width).powi(2)).exp()
}

/// Normalised daily household load shape with a morning and an evening peak.
fn load_shape(horizon: usize) -> Vec<f64> {
    let scale = 24.0 / horizon as f64;
    let raw: Vec<f64> = (0..horizon)
        .map(|s| {
            let hour = (s as f64 + 0.5) * scale;
            0.35 + 0.8 * gaussian_bump(hour, 7.5, 1.0) + 1.3 * gaussian_bump(hour, 19.0, 1.6)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn pv_shape(horizon: usize) -> Vec<f64> {
    let scale = 24.0 / horizon as f64;
    (0..horizon)
        .map(|s| {
            let hour = (s as f64 + 0.5) * scale;
            if (8.0..16.0).contains(&hour) {
                (std::f64::consts::PI * (hour - 8.0) / 8.0).sin().max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn uniform_step(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    rng.random_range(range.0..=range.1)
}

/// Deterministic synthetic scenario for `(seed, template)`.
pub fn generate_profiles(
    seed: u64,
    n_homes: usize,
    n_days: usize,
    template: &ProfileTemplate,
) -> Result<ScenarioData> {
    if n_homes == 0 || n_days == 0 {
        return Err(Error::InvalidArgument(
            "n_homes and n_days must be at least 1".into(),
        ));
    }
    template.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = template.horizon;
    let n = horizon * n_days;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let pt = &template.price;
    let mut price = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    let mut t_ext = Vec::with_capacity(n);
    for _day in 0..n_days {
        let day_offset = template.ext_temp_day_sd * unit.sample(&mut rng);
        for s in 0..horizon {
            let base = if (pt.off_peak_hours.0..pt.off_peak_hours.1).contains(&s) {
                pt.off_peak
            } else if (pt.peak_hours.0..pt.peak_hours.1).contains(&s) {
                pt.peak
            } else {
                pt.day
            };
            let noisy = base + pt.noise_sd * unit.sample(&mut rng);
            price.push(noisy.max(0.2 * base));
            let peakiness = gaussian_bump(s as f64, 18.0, 2.5);
            let ci = pt.intensity_base
                + pt.intensity_peak_extra * peakiness
                + 0.1 * pt.intensity_base * unit.sample(&mut rng);
            intensity.push(ci.max(0.0));
            let hour = (s as f64 + 0.5) * 24.0 / horizon as f64;
            let diurnal =
                -(2.0 * std::f64::consts::PI * (hour - 5.0) / 24.0 + std::f64::consts::FRAC_PI_2)
                    .sin();
            t_ext.push(
                template.ext_temp_mean - template.ext_temp_amplitude * diurnal + day_offset,
            );
        }
    }
    let grid = GridSignals::new(
        price,
        intensity,
        template.social_cost_carbon,
        template.export_charge,
        template.storage_cost,
        template.grid_loss,
    )?;

    let lshape = load_shape(horizon);
    let pshape = pv_shape(horizon);
    let ev = &template.ev;
    let mut homes = Vec::with_capacity(n_homes);
    let battery = vec![template.battery; n_homes];
    for home in 0..n_homes {
        let daily_load = uniform(&mut rng, template.daily_load);
        let has_pv = rng.random_bool(template.pv_probability.clamp(0.0, 1.0));
        let pv_peak = uniform(&mut rng, template.pv_peak);
        let mut series = HomeSeries {
            ev_available: Vec::with_capacity(n),
            ev_trip: Vec::with_capacity(n),
            load_fixed: Vec::with_capacity(n),
            load_flex: Vec::with_capacity(n),
            pv: Vec::with_capacity(n),
            temp_low: Vec::with_capacity(n),
            temp_high: Vec::with_capacity(n),
        };
        for _ in 0..n_days {
            let day_scale = (1.0 + 0.1 * unit.sample(&mut rng)).max(0.5);
            let cloud = rng.random_range(0.3..1.0);
            for s in 0..horizon {
                let noise = (1.0 + 0.1 * unit.sample(&mut rng)).max(0.2);
                let load = daily_load * day_scale * lshape[s] * noise;
                series.load_fixed.push(load * (1.0 - template.flexible_share));
                series.load_flex.push(load * template.flexible_share);
                series.pv.push(if has_pv { pv_peak * cloud * pshape[s] } else { 0.0 });
                let (lo, hi) = if (template.day_hours.0..template.day_hours.1).contains(&s) {
                    template.comfort_day
                } else {
                    template.comfort_night
                };
                series.temp_low.push(lo);
                series.temp_high.push(hi);
            }
            let mut avail = vec![true; horizon];
            let mut trip = vec![0.0; horizon];
            if rng.random_bool(ev.trip_probability.clamp(0.0, 1.0)) {
                let depart = uniform_step(&mut rng, ev.depart_hours);
                let back = uniform_step(&mut rng, ev.return_hours).max(depart + 1);
                let energy = uniform(&mut rng, ev.trip_energy);
                let away = (back - depart) as f64;
                for s in depart..back {
                    avail[s] = false;
                    trip[s] = energy / away;
                }
            }
            // Trips that cannot be served from any feasible charging plan are
            // shortened until they can.
            let bat = &battery[home];
            let mut scale = 1.0;
            loop {
                let scaled: Vec<f64> = trip.iter().map(|v| v * scale).collect();
                let ok = BatteryEnvelope::from_series(bat, &avail, &scaled, false).is_ok();
                if ok || scale < 1e-3 {
                    trip = if ok { scaled } else { vec![0.0; horizon] };
                    break;
                }
                scale *= 0.8;
            }
            series.ev_available.extend(avail);
            series.ev_trip.extend(trip);
        }
        homes.push(series);
    }

    let solar_heat = vec![template.solar_heat; n];
    let thermal = vec![
        ThermalParams {
            kappa: template.building.kappa(),
            heat_cap: template.heat_cap,
            initial_mass: template.initial_temp,
            initial_air: template.initial_temp,
        };
        n_homes
    ];

    Ok(ScenarioData {
        grid,
        homes: HomeProfiles {
            homes,
            external_temp: t_ext,
            solar_heat,
            flex_window: template.flex_window,
        },
        battery,
        thermal,
        n_homes,
        horizon,
        n_days,
        seed,
    })
}
