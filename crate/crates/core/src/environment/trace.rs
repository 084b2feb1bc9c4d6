use std::io::Write;

use super::{HomeAction, StepOutcome};
use crate::profiles::ScenarioData;

/// FNV-1a over the bit patterns of an observation vector.
pub fn observation_hash(obs: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in obs {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Episode trace: one CSV row per (step, home).
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub const HEADER: &'static str = "t,day,step,home,obs_hash,a_bat,a_heat,a_cons,b_in,b_out,h,c,p,grid_cost,export_cost,storage_cost,reward";

    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{}", Self::HEADER)?;
        Ok(Self { out })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        scenario: &ScenarioData,
        day: usize,
        step: usize,
        observation: &[f64],
        actions: &[HomeAction],
        outcome: &StepOutcome,
    ) -> std::io::Result<()> {
        let t = scenario.global_step(day, step);
        let g = &scenario.grid;
        let hash = observation_hash(observation);
        for (i, (a, f)) in actions.iter().zip(&outcome.homes).enumerate() {
            let d = &f.decision;
            writeln!(
                self.out,
                "{t},{day},{step},{i},{hash:016x},{},{},{},{},{},{},{},{},{},{},{},{}",
                a.battery,
                a.heating,
                a.consumption,
                d.charge,
                d.discharge,
                d.heating,
                d.consumption,
                f.import,
                g.cost_coeff[t] * f.import,
                g.export_charge * (-f.import).max(0.0),
                g.storage_cost * (d.charge + d.discharge),
                outcome.reward
            )?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvConfig, Environment, JointAction, ObservationMode};
    use crate::profiles::{generate_profiles, ProfileTemplate};

    #[test]
    fn one_row_per_step_and_home() {
        let s = generate_profiles(4, 2, 1, &ProfileTemplate::default()).unwrap();
        let env = Environment::new(&s, EnvConfig::default()).unwrap();
        let mut st = env.reset(0);
        let mut w = TraceWriter::new(Vec::new()).unwrap();
        let a = JointAction::uniform(2, HomeAction::DEFAULT);
        while st.step < s.horizon {
            let step = st.step;
            let obs = env.observe(&st, 0, ObservationMode::Facmac);
            let out = env.step(&mut st, &a).unwrap();
            w.record(&s, 0, step, &obs, &a.0, &out).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 1 + 24 * 2);
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == 17));
    }

    #[test]
    fn hash_distinguishes_signed_zero() {
        assert_ne!(observation_hash(&[0.0]), observation_hash(&[-0.0]));
        assert_eq!(observation_hash(&[1.0, 2.0]), observation_hash(&[1.0, 2.0]));
    }
}
