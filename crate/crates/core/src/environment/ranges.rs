use crate::profiles::ThermalParams;

/// Feasible heating energy for one step, kWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatRange {
    pub low: f64,
    pub high: f64,
    /// Air would end above the upper comfort bound even without heating.
    pub over_warm: bool,
    /// The heating needed to reach the lower bound exceeds the heater cap.
    pub over_cap: bool,
}

/// Inverts the air row of the thermal recursion to find the heating that
/// keeps the next air temperature within `[t_low, t_high]`.
pub fn heating_feasible_range(
    t_mass: f64,
    t_ext: f64,
    solar: f64,
    t_low: f64,
    t_high: f64,
    thermal: &ThermalParams,
) -> HeatRange {
    let free = thermal.free_air(t_mass, t_ext, solar);
    let gain = thermal.kappa[1][4];
    let cap = thermal.heat_cap.unwrap_or(f64::INFINITY);
    let low = ((t_low - free) / gain).max(0.0);
    let high_raw = (t_high - free) / gain;
    let high = low.max(cap.min(high_raw));
    HeatRange {
        low,
        high,
        over_warm: high_raw < 0.0,
        over_cap: low > cap,
    }
}

/// Outstanding flexible demand: `amount` kWh to be consumed no later than
/// within-day step `deadline`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexLoad {
    pub amount: f64,
    pub deadline: usize,
}

/// `(c_low, c_high)`: fixed demand plus what is due now, up to fixed demand
/// plus everything queued.
pub fn consumption_feasible_range(queue: &[FlexLoad], fixed: f64, step: usize) -> (f64, f64) {
    let due: f64 = queue.iter().filter(|l| l.deadline <= step).map(|l| l.amount).sum();
    let all: f64 = queue.iter().map(|l| l.amount).sum();
    (fixed + due, fixed + all)
}

/// Consumes `flexible` kWh from the queue earliest deadline first. Entries
/// due at `step` are always cleared; the queue must be sorted by deadline.
pub fn consume_earliest_deadline_first(queue: &mut Vec<FlexLoad>, mut flexible: f64, step: usize) {
    for load in queue.iter_mut() {
        if flexible <= 0.0 {
            break;
        }
        let used = load.amount.min(flexible);
        load.amount -= used;
        flexible -= used;
    }
    queue.retain(|l| l.deadline > step && l.amount > 1e-12);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::RcBuilding;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_air() -> ThermalParams {
        ThermalParams {
            kappa: [[0.0, 0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]],
            heat_cap: None,
            initial_mass: 20.0,
            initial_air: 20.0,
        }
    }

    #[test]
    fn identity_dynamics_range_is_the_bounds() {
        let r = heating_feasible_range(3.0, 5.0, 0.0, 18.0, 21.0, &identity_air());
        assert_eq!((r.low, r.high), (18.0, 21.0));
        assert!(!r.over_warm);
    }

    #[test]
    fn over_warm_state_is_flagged() {
        let th = ThermalParams {
            kappa: RcBuilding::default().kappa(),
            ..identity_air()
        };
        let r = heating_feasible_range(26.0, 24.0, 0.0, 18.0, 21.0, &th);
        assert_eq!((r.low, r.high), (0.0, 0.0));
        assert!(r.over_warm);
    }

    #[test]
    fn default_building_range_matches_bisection() {
        let th = ThermalParams {
            kappa: RcBuilding::default().kappa(),
            heat_cap: None,
            initial_mass: 18.0,
            initial_air: 18.0,
        };
        let (tm, te, lo, hi) = (18.0, 5.0, 18.0, 21.0);
        // Forward map is monotone in h; bisect for the heat that lands on each bound.
        let air = |h: f64| th.advance(tm, te, 0.0, h).1;
        let bisect = |target: f64| {
            let (mut a, mut b) = (0.0, 100.0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if air(m) < target {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let r = heating_feasible_range(tm, te, 0.0, lo, hi, &th);
        assert!((r.low - bisect(lo)).abs() < 1e-9, "{} vs {}", r.low, bisect(lo));
        assert!((r.high - bisect(hi)).abs() < 1e-9);
        assert!(r.low > 0.0);
    }

    #[test]
    fn heater_cap_limits_the_top_of_the_range() {
        let th = ThermalParams {
            heat_cap: Some(19.0),
            ..identity_air()
        };
        let r = heating_feasible_range(0.0, 0.0, 0.0, 18.0, 21.0, &th);
        assert_eq!((r.low, r.high), (18.0, 19.0));
        let th = ThermalParams {
            heat_cap: Some(10.0),
            ..identity_air()
        };
        let r = heating_feasible_range(0.0, 0.0, 0.0, 18.0, 21.0, &th);
        assert_eq!((r.low, r.high), (18.0, 18.0));
        assert!(r.over_cap);
    }

    #[test]
    fn consumption_range_examples() {
        assert_eq!(consumption_feasible_range(&[], 1.5, 0), (1.5, 1.5));
        let q = [
            FlexLoad {
                amount: 2.0,
                deadline: 4,
            },
            FlexLoad {
                amount: 3.0,
                deadline: 6,
            },
        ];
        assert_eq!(consumption_feasible_range(&q, 1.0, 4), (3.0, 6.0));
    }

    #[test]
    fn any_choice_in_range_keeps_every_deadline_reachable() {
        // Random arrival streams and random consumption choices within the
        // range; EDF must never leave overdue demand and must clear everything.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let horizon = rng.random_range(2..10);
            let window = rng.random_range(0..4);
            let mut queue: Vec<FlexLoad> = Vec::new();
            let mut demanded = 0.0;
            let mut consumed = 0.0;
            for step in 0..horizon {
                if rng.random_bool(0.6) {
                    let amount = rng.random_range(0.0..3.0);
                    demanded += amount;
                    queue.push(FlexLoad {
                        amount,
                        deadline: (step + window).min(horizon - 1),
                    });
                }
                let (lo, hi) = consumption_feasible_range(&queue, 0.0, step);
                assert!(lo <= hi + 1e-12);
                let a: f64 = rng.random_range(0.0..=1.0);
                let c = (1.0 - a) * lo + a * hi;
                consumed += c;
                consume_earliest_deadline_first(&mut queue, c, step);
                assert!(queue.iter().all(|l| l.deadline > step));
            }
            assert!(queue.is_empty());
            assert!((demanded - consumed).abs() < 1e-9);
        }
    }
}
