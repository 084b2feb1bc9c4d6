//! Training-time scaling over the number of homes, and the
//! hysteresis/convolution ablation.

use serde::{Deserialize, Serialize};

use super::{percentile, run_seed, ExperimentConfig};
use crate::error::{Error, Result};
use crate::marl::{train, Method};

/// Least-squares polynomial without intercept, `y = sum_k c_k x^k`,
/// `k = 1..=order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// `[c_1, ..., c_order]`.
    pub coefficients: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("singular fit; need distinct positive sizes".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

pub fn fit_through_origin(x: &[f64], y: &[f64], order: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "fit data".into(),
            expected: x.len(),
            got: y.len(),
        });
    }
    if order == 0 || x.len() < order {
        return Err(Error::InvalidArgument(format!(
            "order {order} fit needs at least {order} points"
        )));
    }
    let pow = |v: f64, k: usize| v.powi(k as i32 + 1);
    let a: Vec<Vec<f64>> = (0..order)
        .map(|i| (0..order).map(|j| x.iter().map(|&v| pow(v, i) * pow(v, j)).sum()).collect())
        .collect();
    let b: Vec<f64> = (0..order)
        .map(|i| x.iter().zip(y).map(|(&v, &t)| pow(v, i) * t).sum())
        .collect();
    let c = solve(a, b)?;
    let rss = x
        .iter()
        .zip(y)
        .map(|(&v, &t)| {
            let fit: f64 = c.iter().enumerate().map(|(k, ck)| ck * pow(v, k)).sum();
            (t - fit).powi(2)
        })
        .sum();
    Ok(PolyFit { coefficients: c, rss })
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_exponent(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "log-log fit needs at least two positive points".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs distinct sizes".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub linear: PolyFit,
    pub quadratic: PolyFit,
    /// 2 when the quadratic term at least halves the residual, else 1.
    pub preferred_order: usize,
    /// Log-log slope: a continuous growth order.
    pub exponent: f64,
}

pub fn fit_growth(x: &[f64], y: &[f64]) -> Result<GrowthFit> {
    if x.len() < 3 {
        return Err(Error::InvalidArgument("growth fits need at least 3 sizes".into()));
    }
    let linear = fit_through_origin(x, y, 1)?;
    let quadratic = fit_through_origin(x, y, 2)?;
    let scale: f64 = y.iter().map(|v| v * v).sum();
    let preferred_order = if linear.rss > 1e-12 * scale && quadratic.rss < 0.5 * linear.rss {
        2
    } else {
        1
    };
    Ok(GrowthFit {
        exponent: loglog_exponent(x, y)?,
        linear,
        quadratic,
        preferred_order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub n_homes: usize,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub method: Method,
    /// Mean training seconds per size, in `sizes` order.
    pub mean_seconds: Vec<f64>,
    pub fit: GrowthFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub sizes: Vec<usize>,
    pub episodes: usize,
    pub rows: Vec<TimingRow>,
    pub fits: Vec<MethodFit>,
}

/// Training wall-clock per method and size with a fixed episode count.
/// Scenario generation, reference costs and evaluation are not timed.
pub fn scaling_benchmark(
    base: &ExperimentConfig,
    methods: &[Method],
    sizes: &[usize],
    episodes: usize,
    seeds: &[u64],
) -> Result<ScalingReport> {
    if sizes.len() < 3 {
        return Err(Error::Config("the scaling benchmark needs at least 3 sizes".into()));
    }
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::Config("the scaling benchmark needs methods and seeds".into()));
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &method in methods {
        let mut means = Vec::with_capacity(sizes.len());
        for &n in sizes {
            let cfg = ExperimentConfig {
                method,
                n_homes: n,
                n_train_episodes: episodes,
                eval_every: 0,
                seeds: seeds.to_vec(),
                ..base.clone()
            };
            cfg.check()?;
            let mut total = 0.0;
            for &seed in seeds {
                let (train_s, eval_s) = cfg.scenarios(seed)?;
                let out = train(method, &train_s, &eval_s, &cfg.train_config(), seed)?;
                total += out.train_seconds;
                rows.push(TimingRow {
                    method,
                    n_homes: n,
                    seed,
                    seconds: out.train_seconds,
                });
            }
            means.push(total / seeds.len() as f64);
        }
        let x: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
        fits.push(MethodFit {
            method,
            fit: fit_growth(&x, &means)?,
            mean_seconds: means,
        });
    }
    Ok(ScalingReport {
        sizes: sizes.to_vec(),
        episodes,
        rows,
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub hysteresis: bool,
    pub conv: bool,
    pub savings: Vec<f64>,
    pub p25_savings: f64,
    /// `p25_savings` minus that of the variant with both toggles off.
    pub p25_delta: f64,
}

/// FACMAC with hysteresis (rate `beta` for negative TD errors) and the
/// convolutional layer toggled independently, over `base.seeds`.
pub fn ablation(base: &ExperimentConfig, beta: f64) -> Result<Vec<AblationVariant>> {
    let mut out: Vec<AblationVariant> = Vec::with_capacity(4);
    for (hysteresis, conv) in [(false, false), (true, false), (false, true), (true, true)] {
        let mut cfg = base.clone();
        cfg.method = Method::Facmac;
        cfg.facmac.hysteresis_beta = hysteresis.then_some(beta);
        cfg.facmac.use_conv = conv;
        cfg.check()?;
        let savings = cfg
            .seeds
            .iter()
            .map(|&seed| run_seed(&cfg, seed).map(|r| r.record.savings))
            .collect::<Result<Vec<_>>>()?;
        let p25 = percentile(&savings, 0.25)?;
        let plain = out.first().map_or(p25, |v| v.p25_savings);
        out.push(AblationVariant {
            hysteresis,
            conv,
            savings,
            p25_savings: p25,
            p25_delta: p25 - plain,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIZES: [f64; 4] = [3.0, 5.0, 10.0, 20.0];

    #[test]
    fn planted_quadratic_prefers_second_order() {
        let y: Vec<f64> = SIZES.iter().map(|n| n * n).collect();
        let g = fit_growth(&SIZES, &y).unwrap();
        assert_eq!(g.preferred_order, 2);
        assert!(g.quadratic.coefficients[0].abs() < 1e-9);
        assert!((g.quadratic.coefficients[1] - 1.0).abs() < 1e-9);
        assert!((g.exponent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn planted_linear_prefers_first_order() {
        let y: Vec<f64> = SIZES.iter().map(|n| 5.0 * n).collect();
        let g = fit_growth(&SIZES, &y).unwrap();
        assert_eq!(g.preferred_order, 1);
        assert!((g.linear.coefficients[0] - 5.0).abs() < 1e-12);
        assert!(g.linear.rss < 1e-18);
        assert!((g.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_matches_closed_form() {
        // Through-origin linear fit: c = sum(xy) / sum(x^2).
        let x = [1.0, 2.0, 4.0];
        let y = [1.5, 3.0, 7.0];
        let f = fit_through_origin(&x, &y, 1).unwrap();
        let c = (1.5 + 6.0 + 28.0) / 21.0;
        assert!((f.coefficients[0] - c).abs() < 1e-12);
        let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - c * a).powi(2)).sum();
        assert!((f.rss - rss).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(fit_growth(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_through_origin(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], 2).is_err());
        assert!(loglog_exponent(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(scaling_benchmark(&ExperimentConfig::default(), &[Method::Iql], &[1, 2], 1, &[0]).is_err());
    }
}
