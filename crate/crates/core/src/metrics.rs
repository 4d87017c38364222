//! Regression scores and constant baselines.

use std::fmt::Write as _;

use crate::error::{Error, Result};

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("metrics need at least one sample".into()));
    }
    if y.len() != yhat.len() {
        return Err(Error::Dimension(format!(
            "{} labels but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean squared error `(1/m) Σ (yᵢ − ŷᵢ)²`.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / y.len() as f64)
}

/// Coefficient of determination `1 − Σ(yᵢ−ŷᵢ)² / Σ(yᵢ−ȳ)²`.
///
/// `Ok(None)` when the labels have zero variance and the score is undefined.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_lengths(y, yhat)?;
    let ybar = mean(y);
    let ss_tot: f64 = y.iter().map(|a| (a - ybar) * (a - ybar)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

/// Predicts one value for every input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPredictor {
    pub value: f64,
}

impl ConstantPredictor {
    /// Mean of the training labels.
    pub fn fit_mean(labels: &[f64]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("mean baseline needs training labels".into()));
        }
        Ok(Self {
            value: mean(labels),
        })
    }

    pub fn constant(value: f64) -> Self {
        Self { value }
    }

    pub fn predict(&self, n: usize) -> Vec<f64> {
        vec![self.value; n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub r2: Option<f64>,
    pub mse: f64,
    pub rmse: f64,
    pub prediction_mean: f64,
    pub prediction_std: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        let mse = mse(y, yhat)?;
        let pm = mean(yhat);
        let var = yhat.iter().map(|p| (p - pm) * (p - pm)).sum::<f64>() / yhat.len() as f64;
        Ok(Self {
            r2: r2(y, yhat)?,
            mse,
            rmse: mse.sqrt(),
            prediction_mean: pm,
            prediction_std: var.sqrt(),
            n: y.len(),
        })
    }

    /// Flat `key = value` block; keys are prefixed when `prefix` is
    /// non-empty (e.g. `val_r2`).
    pub fn to_kv(&self, prefix: &str) -> String {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}_{k}")
            }
        };
        let mut s = String::new();
        let _ = writeln!(s, "{} = {}", key("n"), self.n);
        let _ = writeln!(s, "{} = {}", key("r2"), fmt_score(self.r2));
        let _ = writeln!(s, "{} = {}", key("mse"), self.mse);
        let _ = writeln!(s, "{} = {}", key("rmse"), self.rmse);
        let _ = writeln!(s, "{} = {}", key("prediction_mean"), self.prediction_mean);
        let _ = writeln!(s, "{} = {}", key("prediction_std"), self.prediction_std);
        s
    }
}

pub fn fmt_score(score: Option<f64>) -> String {
    score.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        let y = [0.3, 1.0, -2.0];
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[6.0; 10], &[4.0; 10]).unwrap(), 4.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(matches!(mse(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn r2_examples() {
        let y = [0.0, 1.0, 3.0, 4.0];
        assert_eq!(r2(&y, &y).unwrap(), Some(1.0));
        assert_eq!(r2(&y, &[2.0; 4]).unwrap(), Some(0.0));
        // SS_res = 4 + 1, SS_tot = 0.25 + 0.25.
        assert_eq!(r2(&[0.0, 1.0], &[2.0, 2.0]).unwrap(), Some(-9.0));
        assert_eq!(r2(&[5.0; 3], &[1.0, 2.0, 3.0]).unwrap(), None);
    }

    #[test]
    fn mean_dummy_on_own_labels_is_exactly_zero() {
        let y = [0.0, 1.0, 3.0, 4.0, 4.0, 1.0, 0.0];
        let d = ConstantPredictor::fit_mean(&y).unwrap();
        assert_eq!(r2(&y, &d.predict(y.len())).unwrap(), Some(0.0));
        assert!(ConstantPredictor::fit_mean(&[]).is_err());
    }

    #[test]
    fn constant_two_on_balanced_labels() {
        let y = [0.0, 1.0, 3.0, 4.0];
        let d = ConstantPredictor::constant(2.0);
        assert_eq!(r2(&y, &d.predict(4)).unwrap(), Some(0.0));
    }

    #[test]
    fn report_fields() {
        let rep = EvalReport::compute(&[6.0, 6.0], &[3.9, 4.1]).unwrap();
        assert_eq!(rep.n, 2);
        assert_eq!(rep.r2, None);
        assert!((rep.mse - 4.01).abs() < 1e-12);
        assert_eq!(rep.rmse, rep.mse.sqrt());
        assert!((rep.prediction_mean - 4.0).abs() < 1e-12);
        assert!((rep.prediction_std - 0.1).abs() < 1e-12);
        let kv = rep.to_kv("ood");
        assert!(kv.contains("ood_r2 = undefined"));
        assert!(kv.contains("ood_n = 2"));
    }

    proptest! {
        #[test]
        fn r2_is_one_minus_mse_ratio(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50)
        ) {
            let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ybar = mean(&y);
            prop_assume!(y.iter().any(|v| (v - ybar).abs() > 1e-6));
            let score = r2(&y, &yhat).unwrap().unwrap();
            let ratio = mse(&y, &yhat).unwrap() / mse(&y, &vec![ybar; y.len()]).unwrap();
            prop_assert!((score - (1.0 - ratio)).abs() < 1e-12);
            prop_assert!(score <= 1.0);
            prop_assert!(mse(&y, &yhat).unwrap() >= 0.0);
        }

        #[test]
        fn metrics_ignore_joint_order(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30),
            rot in 0usize..30,
        ) {
            let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (y2, yhat2): (Vec<f64>, Vec<f64>) = rotated.into_iter().unzip();
            prop_assert!((mse(&y, &yhat).unwrap() - mse(&y2, &yhat2).unwrap()).abs() < 1e-12);
            match (r2(&y, &yhat).unwrap(), r2(&y2, &yhat2).unwrap()) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }
    }
}
