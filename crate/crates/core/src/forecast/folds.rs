use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train on `train_start..train_end`, test on `train_end..test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_start: usize,
    pub train_end: usize,
    pub test_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub length: usize,
    pub train_window: usize,
    pub horizon: usize,
    pub stride: usize,
    pub folds: Vec<Fold>,
}

/// Rolling-origin layout: `F` windows of `T'` steps, each followed by an `H`-step test block,
/// starting at `0, s, 2s, …` with `s = ⌊(L − T' − H) / (F − 1)⌋`.
///
/// Layouts whose stride would be zero (several identical folds) are rejected; the error
/// carries the largest fold count that fits, `L − T' − H + 1`.
pub fn plan_folds(length: usize, train_window: usize, horizon: usize, folds: usize) -> Result<FoldPlan> {
    if train_window == 0 || horizon == 0 || folds == 0 {
        return Err(Error::Argument("train window, horizon and fold count must be positive".into()));
    }
    let span = train_window + horizon;
    if length < span {
        return Err(Error::Planning {
            reason: format!("series of length {length} cannot hold a {train_window}+{horizon} window"),
            max_folds: 0,
        });
    }
    let slack = length - span;
    let stride = if folds == 1 { 0 } else { slack / (folds - 1) };
    if folds > 1 && stride == 0 {
        return Err(Error::Planning {
            reason: format!("{folds} folds of {train_window}+{horizon} steps do not fit in {length} steps"),
            max_folds: slack + 1,
        });
    }
    let folds = (0..folds)
        .map(|f| {
            let train_start = f * stride;
            Fold {
                train_start,
                train_end: train_start + train_window,
                test_end: train_start + span,
            }
        })
        .collect();
    Ok(FoldPlan {
        length,
        train_window,
        horizon,
        stride,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn starts(plan: &FoldPlan) -> Vec<usize> {
        plan.folds.iter().map(|f| f.train_start).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(starts(&plan_folds(100, 60, 5, 2).unwrap()), vec![0, 35]);
        let single = plan_folds(100, 60, 5, 1).unwrap();
        assert_eq!((starts(&single), single.stride), (vec![0], 0));
        let flu = plan_folds(520, 104, 5, 50).unwrap();
        assert_eq!(flu.stride, 8);
        assert_eq!(flu.folds.last().unwrap().test_end, 501);
    }

    #[test]
    fn infeasible_layouts_report_capacity() {
        match plan_folds(64, 60, 5, 1) {
            Err(Error::Planning { max_folds, .. }) => assert_eq!(max_folds, 0),
            other => panic!("{other:?}"),
        }
        match plan_folds(70, 60, 5, 10) {
            Err(Error::Planning { max_folds, .. }) => {
                assert_eq!(max_folds, 6);
                assert!(plan_folds(70, 60, 5, 6).is_ok());
            }
            other => panic!("{other:?}"),
        }
        assert!(plan_folds(70, 60, 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_respect_invariants(length in 2usize..400, tw in 1usize..120, h in 1usize..10, f in 1usize..60) {
            if let Ok(plan) = plan_folds(length, tw, h, f) {
                prop_assert_eq!(plan.folds.len(), f);
                let mut previous = None;
                for fold in &plan.folds {
                    prop_assert_eq!(fold.train_end - fold.train_start, tw);
                    prop_assert_eq!(fold.test_end - fold.train_end, h);
                    prop_assert!(fold.test_end <= length);
                    if let Some(p) = previous {
                        prop_assert!(fold.train_start > p);
                    }
                    previous = Some(fold.train_start);
                }
            }
        }
    }
}
