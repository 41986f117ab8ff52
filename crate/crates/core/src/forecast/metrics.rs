use serde::{Deserialize, Serialize};

use crate::dataset::SeriesTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonScores {
    /// RMSE over all `n·m` entries at each horizon `1..=H`.
    pub per_horizon: Vec<f64>,
    /// Mean of the per-horizon RMSEs.
    pub overall: f64,
}

pub fn rmse(pred: &SeriesTensor, truth: &SeriesTensor) -> Result<HorizonScores> {
    if pred.steps() != truth.steps() || pred.series() != truth.series() || pred.dims() != truth.dims() {
        return Err(Error::shape(
            "rmse",
            (pred.steps(), pred.width()),
            (truth.steps(), truth.width()),
        ));
    }
    if pred.steps() == 0 {
        return Err(Error::Argument("rmse needs at least one horizon".into()));
    }
    let per_horizon: Vec<f64> = (0..pred.steps())
        .map(|t| {
            let sq: f64 = pred.step(t).iter().zip(truth.step(t)).map(|(p, q)| (p - q) * (p - q)).sum();
            (sq / pred.width() as f64).sqrt()
        })
        .collect();
    let overall = per_horizon.iter().sum::<f64>() / per_horizon.len() as f64;
    Ok(HorizonScores { per_horizon, overall })
}

/// Area under the ROC curve of `scores` against binary `labels` (Mann–Whitney form, ties
/// count one half).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Argument("scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Argument("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tied groups, then the rank-sum statistic.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mean_rank = (start + end + 1) as f64 / 2.0;
        rank_sum += mean_rank * order[start..end].iter().filter(|&&k| labels[k]).count() as f64;
        start = end;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(steps: usize, n: usize, values: Vec<f64>) -> SeriesTensor {
        SeriesTensor::new(steps, n, 1, values).unwrap()
    }

    #[test]
    fn hand_cases() {
        let truth = tensor(2, 2, vec![1.0, 0.0, 3.0, 4.0]);
        let r = rmse(&truth, &truth).unwrap();
        assert_eq!(r.per_horizon, vec![0.0, 0.0]);
        assert_eq!(rmse(&tensor(1, 1, vec![0.0]), &tensor(1, 1, vec![1.0])).unwrap().overall, 1.0);
        let r = rmse(&tensor(1, 2, vec![0.0, 0.0]), &tensor(1, 2, vec![1.0, 0.0])).unwrap();
        assert!((r.overall - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10);
        assert!(rmse(&tensor(1, 2, vec![0.0, 0.0]), &tensor(2, 1, vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn overall_is_mean_of_horizons() {
        let pred = tensor(2, 1, vec![0.0, 0.0]);
        let truth = tensor(2, 1, vec![1.0, 3.0]);
        let r = rmse(&pred, &truth).unwrap();
        assert_eq!(r.per_horizon, vec![1.0, 3.0]);
        assert_eq!(r.overall, 2.0);
    }

    #[test]
    fn shifting_one_entry_touches_one_horizon() {
        let truth = tensor(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let base = rmse(&truth, &truth).unwrap();
        let mut pred = truth.clone();
        pred.values_mut()[3] += 0.5;
        let r = rmse(&pred, &truth).unwrap();
        assert_eq!(r.per_horizon[0], base.per_horizon[0]);
        assert_eq!(r.per_horizon[2], base.per_horizon[2]);
        assert!((r.per_horizon[1] - (0.25f64 / 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn auc_against_pair_counting() {
        let scores = [0.9, 0.1, 0.4, 0.4, 0.8, 0.3, 0.4];
        let labels = [true, false, true, false, true, false, false];
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    total += 1.0;
                    wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&scores, &labels).unwrap() - wins / total).abs() < 1e-15);
        assert_eq!(auc(&[1.0, 0.0], &[true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.0, 0.0], &[true, false]).unwrap(), 0.5);
        assert!(auc(&[1.0], &[true]).is_err());
    }
}
