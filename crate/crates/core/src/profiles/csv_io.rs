//! Scenario directory format.
//!
//! ```text
//! meta.json     scalars: n_homes, horizon, n_days, seed, flex_window, costs, battery params
//! grid.csv      t,price,intensity,c_g
//! weather.csv   t,t_ext,solar
//! thermal.csv   home,k00..k04,k10..k14,heat_cap,t_m0,t_air0   (kappa row-major)
//! home_<i>.csv  t,mu,d_ev,d_fixed,d_flex,pv,t_low,t_high
//! ```
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so a write/load cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate, BatteryParams, GridSignals, HomeProfiles, HomeSeries, ScenarioData, ThermalParams,
};
use crate::error::{Error, Result};

const FORMAT: &str = "homeflex-scenario";
const VERSION: u32 = 1;

const GRID_HEADER: &[&str] = &["t", "price", "intensity", "c_g"];
const WEATHER_HEADER: &[&str] = &["t", "t_ext", "solar"];
const HOME_HEADER: &[&str] = &["t", "mu", "d_ev", "d_fixed", "d_flex", "pv", "t_low", "t_high"];
const THERMAL_HEADER: &[&str] = &[
    "home", "k00", "k01", "k02", "k03", "k04", "k10", "k11", "k12", "k13", "k14", "heat_cap",
    "t_m0", "t_air0",
];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format: String,
    version: u32,
    n_homes: usize,
    horizon: usize,
    n_days: usize,
    seed: u64,
    flex_window: usize,
    social_cost_carbon: f64,
    export_charge: f64,
    storage_cost: f64,
    grid_loss: f64,
    battery: Vec<BatteryParams>,
}

/// Raw contents of a scenario directory.
#[derive(Debug, Clone, Default)]
pub struct ScenarioFiles {
    pub meta: String,
    pub grid: String,
    pub weather: String,
    pub thermal: String,
    pub homes: Vec<String>,
}

impl ScenarioFiles {
    pub fn from_scenario(s: &ScenarioData) -> Self {
        let meta = Meta {
            format: FORMAT.into(),
            version: VERSION,
            n_homes: s.n_homes,
            horizon: s.horizon,
            n_days: s.n_days,
            seed: s.seed,
            flex_window: s.homes.flex_window,
            social_cost_carbon: s.grid.social_cost_carbon,
            export_charge: s.grid.export_charge,
            storage_cost: s.grid.storage_cost,
            grid_loss: s.grid.grid_loss,
            battery: s.battery.clone(),
        };
        let mut meta = serde_json::to_string_pretty(&meta).expect("meta serialises");
        meta.push('\n');

        let mut grid = GRID_HEADER.join(",");
        grid.push('\n');
        for t in 0..s.n_steps() {
            let _ = writeln!(
                grid,
                "{t},{},{},{}",
                s.grid.wholesale_price[t], s.grid.carbon_intensity[t], s.grid.cost_coeff[t]
            );
        }

        let mut weather = WEATHER_HEADER.join(",");
        weather.push('\n');
        for t in 0..s.n_steps() {
            let _ = writeln!(
                weather,
                "{t},{},{}",
                s.homes.external_temp[t], s.homes.solar_heat[t]
            );
        }

        let mut thermal = THERMAL_HEADER.join(",");
        thermal.push('\n');
        for (i, th) in s.thermal.iter().enumerate() {
            let _ = write!(thermal, "{i}");
            for v in th.kappa.iter().flatten() {
                let _ = write!(thermal, ",{v}");
            }
            let cap = th.heat_cap.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(thermal, ",{cap},{},{}", th.initial_mass, th.initial_air);
        }

        let homes = s
            .homes
            .homes
            .iter()
            .map(|h| {
                let mut out = HOME_HEADER.join(",");
                out.push('\n');
                for t in 0..s.n_steps() {
                    let _ = writeln!(
                        out,
                        "{t},{},{},{},{},{},{},{}",
                        u8::from(h.ev_available[t]),
                        h.ev_trip[t],
                        h.load_fixed[t],
                        h.load_flex[t],
                        h.pv[t],
                        h.temp_low[t],
                        h.temp_high[t]
                    );
                }
                out
            })
            .collect();

        Self {
            meta,
            grid,
            weather,
            thermal,
            homes,
        }
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_scenario_csv(s: &ScenarioData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ScenarioFiles::from_scenario(s);
    write(dir, "meta.json", &files.meta)?;
    write(dir, "grid.csv", &files.grid)?;
    write(dir, "weather.csv", &files.weather)?;
    write(dir, "thermal.csv", &files.thermal)?;
    for (i, h) in files.homes.iter().enumerate() {
        write(dir, &format!("home_{i}.csv"), h)?;
    }
    Ok(())
}

/// Reads and validates a scenario directory.
pub fn load_scenario_csv(dir: &Path) -> Result<ScenarioData> {
    let meta = read(dir, "meta.json")?;
    let n_homes = parse_meta(&meta)?.n_homes;
    let files = ScenarioFiles {
        meta,
        grid: read(dir, "grid.csv")?,
        weather: read(dir, "weather.csv")?,
        thermal: read(dir, "thermal.csv")?,
        homes: (0..n_homes)
            .map(|i| read(dir, &format!("home_{i}.csv")))
            .collect::<Result<_>>()?,
    };
    parse_scenario_files(&files)
}

fn parse_meta(text: &str) -> Result<Meta> {
    let meta: Meta = serde_json::from_str(text)
        .map_err(|e| Error::parse("meta.json", e.line(), e.to_string()))?;
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::parse(
            "meta.json",
            1,
            format!("unsupported format {} v{}", meta.format, meta.version),
        ));
    }
    // Bound allocation sizes before anything is sized from these fields.
    let steps = meta.horizon.checked_mul(meta.n_days);
    if steps.is_none_or(|s| s > 10_000_000) || meta.n_homes > 100_000 {
        return Err(Error::parse("meta.json", 1, "scenario dimensions too large"));
    }
    if meta.battery.len() != meta.n_homes {
        return Err(Error::parse(
            "meta.json",
            1,
            format!("{} battery entries for {} homes", meta.battery.len(), meta.n_homes),
        ));
    }
    Ok(meta)
}

/// Parses a CSV table with an exact header into rows of raw fields.
fn table(file: &str, text: &str, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let got = rdr
        .headers()
        .map_err(|e| Error::parse(file, 1, e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            file,
            1,
            format!("expected header {:?}", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(file, line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::parse(
                file,
                line,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn num(file: &str, line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| Error::parse(file, line, format!("{field}: not a number: {raw:?}")))
}

fn index(file: &str, line: usize, field: &str, raw: &str, expected: usize) -> Result<()> {
    match raw.parse::<usize>() {
        Ok(v) if v == expected => Ok(()),
        _ => Err(Error::parse(
            file,
            line,
            format!("{field}: expected {expected}, got {raw:?}"),
        )),
    }
}

fn expect_rows(file: &str, rows: &[Vec<String>], n: usize) -> Result<()> {
    if rows.len() != n {
        return Err(Error::parse(
            file,
            rows.len() + 1,
            format!("expected {n} data rows, got {}", rows.len()),
        ));
    }
    Ok(())
}

/// Parses in-memory scenario files; the result is validated.
pub fn parse_scenario_files(files: &ScenarioFiles) -> Result<ScenarioData> {
    let meta = parse_meta(&files.meta)?;
    let n = meta.horizon * meta.n_days;

    let rows = table("grid.csv", &files.grid, GRID_HEADER)?;
    expect_rows("grid.csv", &rows, n)?;
    let (mut price, mut intensity, mut cost_coeff) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (t, r) in rows.iter().enumerate() {
        let line = t + 2;
        index("grid.csv", line, "t", &r[0], t)?;
        price.push(num("grid.csv", line, "price", &r[1])?);
        intensity.push(num("grid.csv", line, "intensity", &r[2])?);
        cost_coeff.push(num("grid.csv", line, "c_g", &r[3])?);
    }

    let rows = table("weather.csv", &files.weather, WEATHER_HEADER)?;
    expect_rows("weather.csv", &rows, n)?;
    let (mut t_ext, mut solar) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (t, r) in rows.iter().enumerate() {
        let line = t + 2;
        index("weather.csv", line, "t", &r[0], t)?;
        t_ext.push(num("weather.csv", line, "t_ext", &r[1])?);
        solar.push(num("weather.csv", line, "solar", &r[2])?);
    }

    let rows = table("thermal.csv", &files.thermal, THERMAL_HEADER)?;
    expect_rows("thermal.csv", &rows, meta.n_homes)?;
    let mut thermal = Vec::with_capacity(meta.n_homes);
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        index("thermal.csv", line, "home", &r[0], i)?;
        let mut kappa = [[0.0; 5]; 2];
        for k in 0..10 {
            kappa[k / 5][k % 5] = num("thermal.csv", line, THERMAL_HEADER[k + 1], &r[k + 1])?;
        }
        let heat_cap = if r[11].is_empty() {
            None
        } else {
            Some(num("thermal.csv", line, "heat_cap", &r[11])?)
        };
        thermal.push(ThermalParams {
            kappa,
            heat_cap,
            initial_mass: num("thermal.csv", line, "t_m0", &r[12])?,
            initial_air: num("thermal.csv", line, "t_air0", &r[13])?,
        });
    }

    if files.homes.len() != meta.n_homes {
        return Err(Error::parse(
            "meta.json",
            1,
            format!("{} home files for {} homes", files.homes.len(), meta.n_homes),
        ));
    }
    let mut homes = Vec::with_capacity(meta.n_homes);
    for (i, text) in files.homes.iter().enumerate() {
        let file = format!("home_{i}.csv");
        let rows = table(&file, text, HOME_HEADER)?;
        expect_rows(&file, &rows, n)?;
        let mut h = HomeSeries {
            ev_available: Vec::with_capacity(n),
            ev_trip: Vec::with_capacity(n),
            load_fixed: Vec::with_capacity(n),
            load_flex: Vec::with_capacity(n),
            pv: Vec::with_capacity(n),
            temp_low: Vec::with_capacity(n),
            temp_high: Vec::with_capacity(n),
        };
        for (t, r) in rows.iter().enumerate() {
            let line = t + 2;
            index(&file, line, "t", &r[0], t)?;
            h.ev_available.push(match r[1].as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse(&file, line, format!("mu must be 0 or 1, got {other:?}")))
                }
            });
            h.ev_trip.push(num(&file, line, "d_ev", &r[2])?);
            h.load_fixed.push(num(&file, line, "d_fixed", &r[3])?);
            h.load_flex.push(num(&file, line, "d_flex", &r[4])?);
            h.pv.push(num(&file, line, "pv", &r[5])?);
            h.temp_low.push(num(&file, line, "t_low", &r[6])?);
            h.temp_high.push(num(&file, line, "t_high", &r[7])?);
        }
        homes.push(h);
    }

    let scenario = ScenarioData {
        grid: GridSignals {
            wholesale_price: price,
            carbon_intensity: intensity,
            social_cost_carbon: meta.social_cost_carbon,
            cost_coeff,
            export_charge: meta.export_charge,
            storage_cost: meta.storage_cost,
            grid_loss: meta.grid_loss,
        },
        homes: HomeProfiles {
            homes,
            external_temp: t_ext,
            solar_heat: solar,
            flex_window: meta.flex_window,
        },
        battery: meta.battery,
        thermal,
        n_homes: meta.n_homes,
        horizon: meta.horizon,
        n_days: meta.n_days,
        seed: meta.seed,
    };
    let violations = validate(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Validation(violations))
    }
}
