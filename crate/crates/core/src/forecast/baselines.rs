use serde::{Deserialize, Serialize};

use crate::dataset::SeriesTensor;
use crate::error::{Error, Result};
use crate::numerics::{solve, Matrix};

const RIDGE: f64 = 1e-8;

/// Every column predicts its training-window mean at every horizon.
pub fn mean_baseline(train: &SeriesTensor, horizon: usize) -> Result<SeriesTensor> {
    if train.steps() == 0 {
        return Err(Error::Argument("mean baseline needs a non-empty training window".into()));
    }
    let means: Vec<f64> = (0..train.width())
        .map(|c| train.column(c).iter().sum::<f64>() / train.steps() as f64)
        .collect();
    SeriesTensor::new(
        horizon,
        train.series(),
        train.dims(),
        (0..horizon).flat_map(|_| means.iter().copied()).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArConfig {
    pub lags: usize,
    #[serde(default = "default_intercept")]
    pub intercept: bool,
}

fn default_intercept() -> bool {
    true
}

impl Default for ArConfig {
    fn default() -> Self {
        Self { lags: 5, intercept: true }
    }
}

/// Per-column autoregression: `coefficients[c][l]` multiplies lag `l + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

/// Least squares of `x_t` on `(x_{t-1}, …, x_{t-R}, 1)`, independently for every
/// `(series, dim)` column, via ridge-stabilized normal equations.
pub fn ar_fit(train: &SeriesTensor, cfg: ArConfig) -> Result<ArModel> {
    let r = cfg.lags;
    if r < 1 {
        return Err(Error::Argument("AR needs at least one lag".into()));
    }
    if train.steps() <= r + 1 {
        return Err(Error::Argument(format!(
            "AR with {r} lags needs more than {} training steps, got {}",
            r + 1,
            train.steps()
        )));
    }
    let k = r + usize::from(cfg.intercept);
    let mut coefficients = Vec::with_capacity(train.width());
    let mut intercepts = Vec::with_capacity(train.width());
    for c in 0..train.width() {
        let v = train.column(c);
        let mut gram = Matrix::zeros(k, k);
        let mut rhs = vec![0.0; k];
        let mut features = vec![1.0; k];
        for t in r..v.len() {
            for l in 0..r {
                features[l] = v[t - 1 - l];
            }
            for a in 0..k {
                rhs[a] += features[a] * v[t];
                for b in 0..k {
                    gram.set(a, b, gram.get(a, b) + features[a] * features[b]);
                }
            }
        }
        for a in 0..k {
            gram.set(a, a, gram.get(a, a) + RIDGE);
        }
        let beta = solve(&gram, &rhs)?;
        coefficients.push(beta[..r].to_vec());
        intercepts.push(if cfg.intercept { beta[r] } else { 0.0 });
    }
    Ok(ArModel { coefficients, intercepts })
}

impl ArModel {
    /// Recursive closed-loop forecast continuing the end of `train`.
    pub fn predict(&self, train: &SeriesTensor, horizon: usize) -> Result<SeriesTensor> {
        if self.coefficients.len() != train.width() {
            return Err(Error::Argument(format!(
                "AR model has {} columns, data has {}",
                self.coefficients.len(),
                train.width()
            )));
        }
        let w = train.width();
        let mut values = vec![0.0; horizon * w];
        for c in 0..w {
            let coef = &self.coefficients[c];
            if train.steps() < coef.len() {
                return Err(Error::Argument("history shorter than the AR order".into()));
            }
            let mut history = train.column(c);
            for h in 0..horizon {
                let n = history.len();
                let next = self.intercepts[c] + coef.iter().enumerate().map(|(l, b)| b * history[n - 1 - l]).sum::<f64>();
                values[h * w + c] = next;
                history.push(next);
            }
        }
        SeriesTensor::new(horizon, train.series(), train.dims(), values)
    }
}

pub fn ar_fit_predict(train: &SeriesTensor, cfg: ArConfig, horizon: usize) -> Result<SeriesTensor> {
    ar_fit(train, cfg)?.predict(train, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn column(values: &[f64]) -> SeriesTensor {
        SeriesTensor::new(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn mean_cases() {
        assert_eq!(mean_baseline(&column(&[3.0; 4]), 2).unwrap().values(), &[3.0, 3.0]);
        assert_eq!(mean_baseline(&column(&[0.0, 1.0]), 1).unwrap().values(), &[0.5]);
        let mut rng = RngState::new(2);
        let x = SeriesTensor::new(9, 2, 2, (0..36).map(|_| rng.normal(0.0, 3.0)).collect()).unwrap();
        let pred = mean_baseline(&x, 3).unwrap();
        for c in 0..4 {
            let oracle = x.column(c).iter().sum::<f64>() / 9.0;
            for h in 0..3 {
                assert!((pred.step(h)[c] - oracle).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn doubling_sequence() {
        let train = column(&[1.0, 2.0, 4.0, 8.0]);
        let fit = ar_fit(&train, ArConfig { lags: 1, intercept: true }).unwrap();
        assert!((fit.coefficients[0][0] - 2.0).abs() < 1e-6);
        assert!(fit.intercepts[0].abs() < 1e-6);
        let pred = fit.predict(&train, 2).unwrap();
        assert!((pred.values()[0] - 16.0).abs() < 1e-5);
        assert!((pred.values()[1] - 32.0).abs() < 1e-5);
    }

    #[test]
    fn constant_series_stays_constant() {
        for lags in [1, 2, 5] {
            let pred = ar_fit_predict(&column(&[0.7; 12]), ArConfig { lags, intercept: true }, 4).unwrap();
            assert!(pred.values().iter().all(|p| (p - 0.7).abs() < 1e-6));
        }
    }

    #[test]
    fn recovers_noiseless_ar2() {
        let (a1, a2, c) = (0.6, -0.3, 0.2);
        let mut v = vec![0.9, -0.4];
        for t in 2..60 {
            v.push(a1 * v[t - 1] + a2 * v[t - 2] + c);
        }
        let train = column(&v[..50]);
        let fit = ar_fit(&train, ArConfig { lags: 2, intercept: true }).unwrap();
        assert!((fit.coefficients[0][0] - a1).abs() < 1e-6);
        assert!((fit.coefficients[0][1] - a2).abs() < 1e-6);
        assert!((fit.intercepts[0] - c).abs() < 1e-6);
        let pred = fit.predict(&train, 10).unwrap();
        for h in 0..10 {
            assert!((pred.values()[h] - v[50 + h]).abs() < 1e-5);
        }
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(ar_fit(&column(&[1.0, 2.0, 3.0]), ArConfig { lags: 2, intercept: true }).is_err());
        assert!(ar_fit(&column(&[1.0, 2.0, 3.0]), ArConfig { lags: 0, intercept: true }).is_err());
    }

    #[test]
    fn columns_are_independent() {
        let x = SeriesTensor::new(6, 2, 1, vec![1.0, 5.0, 2.0, 5.0, 4.0, 5.0, 8.0, 5.0, 16.0, 5.0, 32.0, 5.0]).unwrap();
        let pred = ar_fit_predict(&x, ArConfig { lags: 1, intercept: true }, 1).unwrap();
        assert!((pred.values()[0] - 64.0).abs() < 1e-4);
        assert!((pred.values()[1] - 5.0).abs() < 1e-6);
    }
}
