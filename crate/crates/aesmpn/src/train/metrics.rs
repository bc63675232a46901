//! Regression error metrics: MAPE, MAE, MSE, MSLE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(targets: &[f64], preds: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Contract("metrics over empty vectors".into()));
    }
    if targets.len() != preds.len() {
        return Err(Error::Contract(format!(
            "metric length mismatch: {} targets vs {} predictions",
            targets.len(),
            preds.len()
        )));
    }
    Ok(())
}

/// Mean absolute percentage error, in percent. Targets must be nonzero.
pub fn mape(targets: &[f64], preds: &[f64]) -> Result<f64> {
    check_lengths(targets, preds)?;
    let mut acc = 0.0;
    for (&y, &p) in targets.iter().zip(preds) {
        if y == 0.0 {
            return Err(Error::Contract("MAPE undefined for zero target".into()));
        }
        acc += ((y - p) / y).abs();
    }
    Ok(100.0 * acc / targets.len() as f64)
}

pub fn mae(targets: &[f64], preds: &[f64]) -> Result<f64> {
    check_lengths(targets, preds)?;
    let acc: f64 = targets.iter().zip(preds).map(|(&y, &p)| (y - p).abs()).sum();
    Ok(acc / targets.len() as f64)
}

pub fn mse(targets: &[f64], preds: &[f64]) -> Result<f64> {
    check_lengths(targets, preds)?;
    let acc: f64 = targets.iter().zip(preds).map(|(&y, &p)| (y - p) * (y - p)).sum();
    Ok(acc / targets.len() as f64)
}

/// Mean squared log error over `log(1 + x)`; requires values above -1.
pub fn msle(targets: &[f64], preds: &[f64]) -> Result<f64> {
    check_lengths(targets, preds)?;
    let mut acc = 0.0;
    for (&y, &p) in targets.iter().zip(preds) {
        if y <= -1.0 || p <= -1.0 {
            return Err(Error::Contract(format!(
                "MSLE domain violation: log1p of {} or {}",
                y, p
            )));
        }
        let d = y.ln_1p() - p.ln_1p();
        acc += d * d;
    }
    Ok(acc / targets.len() as f64)
}

/// All four metrics for one named dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub mape_pct: f64,
    pub mae: f64,
    pub mse: f64,
    pub msle: f64,
}

impl MetricsReport {
    pub fn compute(split: &str, targets: &[f64], preds: &[f64]) -> Result<Self> {
        Ok(MetricsReport {
            split: split.to_string(),
            mape_pct: mape(targets, preds)?,
            mae: mae(targets, preds)?,
            mse: mse(targets, preds)?,
            msle: msle(targets, preds)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[100.0], &[110.0]).unwrap(), 10.0);
        assert_eq!(mape(&[3.0, 7.0], &[3.0, 7.0]).unwrap(), 0.0);
        assert_eq!(mape(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 75.0);
    }

    #[test]
    fn mape_rejects_zero_target() {
        assert!(mape(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn mae_mse_msle_examples() {
        assert_eq!(mae(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(mse(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(msle(&[5.0], &[5.0]).unwrap(), 0.0);

        assert_eq!(mae(&[0.0], &[3.0]).unwrap(), 3.0);
        assert_eq!(mse(&[0.0], &[3.0]).unwrap(), 9.0);
        let expect = 4.0f64.ln() * 4.0f64.ln();
        assert!((msle(&[0.0], &[3.0]).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.9218120556728056).abs() < 1e-12);
    }

    #[test]
    fn single_element_mse_is_mae_squared() {
        let y = [2.5];
        let p = [4.0];
        let a = mae(&y, &p).unwrap();
        let s = mse(&y, &p).unwrap();
        assert_eq!(s, a * a);
    }

    #[test]
    fn msle_domain_violation() {
        assert!(msle(&[-2.0], &[0.0]).is_err());
        assert!(msle(&[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(mape(&[1.0, 2.0], &[1.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn report_has_all_four_metrics() {
        let r = MetricsReport::compute("val", &[1.0, 2.0], &[1.5, 1.5]).unwrap();
        assert_eq!(r.split, "val");
        assert!(r.mape_pct > 0.0 && r.mae > 0.0 && r.mse > 0.0 && r.msle > 0.0);
    }
}
