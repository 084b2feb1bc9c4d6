use super::ScenarioData;
use crate::environment::BatteryEnvelope;
use crate::error::{Error, Violation};

/// Checks every scenario invariant and returns the full list of violations
/// (empty when the scenario is valid).
pub fn validate(s: &ScenarioData) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.horizon == 0 {
        out.push(Violation::new("horizon", "must be at least 1"));
    }
    if s.n_days == 0 {
        out.push(Violation::new("n_days", "must be at least 1"));
    }
    if s.n_homes == 0 {
        out.push(Violation::new("n_homes", "must be at least 1"));
    }
    for (what, len) in [
        ("homes", s.homes.homes.len()),
        ("battery", s.battery.len()),
        ("thermal", s.thermal.len()),
    ] {
        if len != s.n_homes {
            out.push(Violation::new(
                what,
                format!("expected {} entries, got {len}", s.n_homes),
            ));
        }
    }
    let n = s.n_steps();
    let mut lengths_ok = out.is_empty();
    let mut check_len = |out: &mut Vec<Violation>, home: Option<usize>, field: &str, len: usize| {
        if len != n {
            let mut v = Violation::new(field, format!("series length {len}, expected {n}"));
            v.home = home;
            out.push(v);
            lengths_ok = false;
        }
    };
    check_len(&mut out, None, "price", s.grid.wholesale_price.len());
    check_len(&mut out, None, "intensity", s.grid.carbon_intensity.len());
    check_len(&mut out, None, "c_g", s.grid.cost_coeff.len());
    check_len(&mut out, None, "t_ext", s.homes.external_temp.len());
    check_len(&mut out, None, "solar", s.homes.solar_heat.len());
    for (i, h) in s.homes.homes.iter().enumerate() {
        check_len(&mut out, Some(i), "mu", h.ev_available.len());
        check_len(&mut out, Some(i), "d_ev", h.ev_trip.len());
        check_len(&mut out, Some(i), "d_fixed", h.load_fixed.len());
        check_len(&mut out, Some(i), "d_flex", h.load_flex.len());
        check_len(&mut out, Some(i), "pv", h.pv.len());
        check_len(&mut out, Some(i), "t_low", h.temp_low.len());
        check_len(&mut out, Some(i), "t_high", h.temp_high.len());
    }

    let g = &s.grid;
    for (field, v) in [
        ("scc", g.social_cost_carbon),
        ("c_d", g.export_charge),
        ("c_s", g.storage_cost),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            out.push(Violation::new(field, format!("must be finite and non-negative, got {v}")));
        }
    }
    if !g.grid_loss.is_finite() {
        out.push(Violation::new("eps_g", "must be finite"));
    }

    for (i, b) in s.battery.iter().enumerate() {
        let mut bad = |field: &str, msg: &str| {
            out.push(Violation::new(field, msg.to_string()).at_home(i));
        };
        let all_finite = [
            b.capacity,
            b.min_level,
            b.initial,
            b.max_charge,
            b.max_discharge,
            b.eta_ch,
            b.eta_dis,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            bad("battery", "non-finite parameter");
            continue;
        }
        if !(0.0 <= b.min_level && b.min_level <= b.initial && b.initial <= b.capacity) {
            bad("battery", "requires 0 <= E_min <= E_0 <= E_max");
        }
        if !(b.eta_ch > 0.0 && b.eta_ch <= 1.0) {
            bad("eta_ch", "must lie in (0, 1]");
        }
        if !(b.eta_dis > 0.0 && b.eta_dis <= 1.0) {
            bad("eta_dis", "must lie in (0, 1]");
        }
        if !(b.max_charge > 0.0) {
            bad("b_in_max", "must be positive");
        }
        if !(b.max_discharge > 0.0) {
            bad("b_out_max", "must be positive");
        }
    }

    for (i, th) in s.thermal.iter().enumerate() {
        if th.kappa.iter().flatten().any(|v| !v.is_finite()) {
            out.push(Violation::new("kappa", "non-finite coefficient").at_home(i));
            continue;
        }
        if !(th.kappa[1][4] > 0.0) {
            out.push(Violation::new("kappa", "heating must raise the air temperature").at_home(i));
        }
        // The [T_m, T_air] submatrix is [[k01, 0], [k11, 0]] with eigenvalues {k01, 0}.
        if th.kappa[0][1].abs() >= 1.0 {
            out.push(
                Violation::new("kappa", "free-floating recursion has no bounded fixed point")
                    .at_home(i),
            );
        }
        if let Some(cap) = th.heat_cap {
            if !(cap.is_finite() && cap >= 0.0) {
                out.push(Violation::new("heat_cap", "must be finite and non-negative").at_home(i));
            }
        }
        if !(th.initial_mass.is_finite() && th.initial_air.is_finite()) {
            out.push(Violation::new("initial_temp", "must be finite").at_home(i));
        }
    }

    if !lengths_ok {
        return out;
    }

    for t in 0..n {
        let (p, ci, cg) = (g.wholesale_price[t], g.carbon_intensity[t], g.cost_coeff[t]);
        if !(p.is_finite() && ci.is_finite() && cg.is_finite()) {
            out.push(Violation::new("grid", "non-finite value").at_step(t));
            continue;
        }
        if ci < 0.0 {
            out.push(Violation::new("intensity", "negative carbon intensity").at_step(t));
        }
        let expected = p + ci * g.social_cost_carbon;
        if (cg - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
            out.push(
                Violation::new("c_g", format!("{cg} != price + intensity * scc = {expected}"))
                    .at_step(t),
            );
        }
        if !s.homes.external_temp[t].is_finite() || !s.homes.solar_heat[t].is_finite() {
            out.push(Violation::new("weather", "non-finite value").at_step(t));
        }
        if s.homes.solar_heat[t] < 0.0 {
            out.push(Violation::new("solar", "negative solar heat flow").at_step(t));
        }
    }

    for (i, h) in s.homes.homes.iter().enumerate() {
        for t in 0..n {
            let mut bad = |field: &str, msg: &str| {
                out.push(Violation::new(field, msg.to_string()).at_home(i).at_step(t));
            };
            for (field, v) in [
                ("d_ev", h.ev_trip[t]),
                ("d_fixed", h.load_fixed[t]),
                ("d_flex", h.load_flex[t]),
                ("pv", h.pv[t]),
            ] {
                if !v.is_finite() {
                    bad(field, "non-finite value");
                } else if v < 0.0 {
                    bad(field, "negative value");
                }
            }
            if h.ev_trip[t] > 0.0 && h.ev_available[t] {
                bad("d_ev", "trip during availability");
            }
            let (lo, hi) = (h.temp_low[t], h.temp_high[t]);
            if !(lo.is_finite() && hi.is_finite()) {
                bad("t_bounds", "non-finite temperature bound");
            } else if lo > hi {
                bad("t_bounds", "T_low > T_high");
            }
        }
    }

    // Trip feasibility only makes sense once the per-step data is sane.
    if out.is_empty() {
        for i in 0..s.n_homes {
            for day in 0..s.n_days {
                if let Err(Error::InfeasibleScenario { step, message, .. }) =
                    BatteryEnvelope::compute(s, i, day, false)
                {
                    out.push(
                        Violation::new("d_ev", message)
                            .at_home(i)
                            .at_step(s.global_step(day, step)),
                    );
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{generate_profiles, ProfileTemplate};

    fn scenario() -> ScenarioData {
        generate_profiles(9, 2, 2, &ProfileTemplate::default()).unwrap()
    }

    #[test]
    fn generated_scenarios_are_valid() {
        for seed in 0..20 {
            let s = generate_profiles(seed, 3, 3, &ProfileTemplate::default()).unwrap();
            assert!(validate(&s).is_empty());
        }
    }

    #[test]
    fn trip_during_availability_is_reported() {
        let mut s = scenario();
        let t = s.homes.homes[1].ev_available.iter().position(|&a| a).unwrap();
        s.homes.homes[1].ev_trip[t] = 1.0;
        let v = validate(&s);
        assert!(v
            .iter()
            .any(|v| v.message == "trip during availability" && v.home == Some(1) && v.step == Some(t)));
    }

    #[test]
    fn unordered_temperature_bounds_are_reported() {
        let mut s = scenario();
        s.homes.homes[0].temp_low[30] = 25.0;
        s.homes.homes[0].temp_high[30] = 20.0;
        let v = validate(&s);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].home, v[0].step), (Some(0), Some(30)));
        assert_eq!(v[0].field, "t_bounds");
    }

    #[test]
    fn every_violation_is_listed() {
        let mut s = scenario();
        s.homes.homes[0].pv[3] = -1.0;
        s.homes.homes[1].load_flex[4] = f64::NAN;
        s.grid.export_charge = -0.1;
        s.battery[1].initial = 100.0;
        let v = validate(&s);
        assert_eq!(v.len(), 4, "{v:?}");
    }

    #[test]
    fn unservable_trip_is_reported() {
        let mut s = scenario();
        let h = &mut s.homes.homes[0];
        for t in 24..48 {
            h.ev_available[t] = t < 30;
            h.ev_trip[t] = if t < 30 { 0.0 } else { 10.0 };
        }
        let v = validate(&s);
        assert!(!v.is_empty());
        assert!(v.iter().all(|v| v.home == Some(0) && v.field == "d_ev"));
    }
}
