use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub cc: f64,
    pub mape: f64,
}

/// Pearson correlation, `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let n = y_true.len() as f64;
    (y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean absolute percentage error; `None` if any true value is zero.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Option<f64> {
    if y_true.contains(&0.0) {
        return None;
    }
    let n = y_true.len() as f64;
    Some(100.0 * y_true.iter().zip(y_pred).map(|(t, p)| ((t - p) / t).abs()).sum::<f64>() / n)
}

/// RMSE, Pearson CC and MAPE (percent).
pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::param(format!(
            "metric inputs need equal nonzero lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let cc = pearson(y_true, y_pred)
        .ok_or_else(|| Error::data("correlation undefined: a series has zero variance"))?;
    let mape = mape(y_true, y_pred).ok_or_else(|| Error::data("MAPE undefined: zero true value"))?;
    Ok(Metrics { rmse: rmse(y_true, y_pred), cc, mape })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [0.8, 1.2, 2.0];
        assert_eq!(metrics(&y, &y).unwrap(), Metrics { rmse: 0.0, cc: 1.0, mape: 0.0 });
    }

    #[test]
    fn two_point_arithmetic() {
        let m = metrics(&[1.0, 2.0], &[1.1, 1.8]).unwrap();
        assert!((m.rmse - (0.05f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((m.rmse - 0.1581).abs() < 1e-4);
        assert!((m.mape - 10.0).abs() < 1e-12);
    }

    #[test]
    fn anticorrelation() {
        let y = [0.5, 1.0, 1.7, 2.2];
        let pred: Vec<f64> = y.iter().map(|v| 3.0 - v).collect();
        assert!((metrics(&y, &pred).unwrap().cc + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(metrics(&[1.0, 1.0], &[0.5, 0.7]), Err(Error::Data(_))));
        assert!(matches!(metrics(&[0.0, 1.0], &[0.5, 0.7]), Err(Error::Data(_))));
        assert!(matches!(metrics(&[1.0], &[]), Err(Error::Param(_))));
    }

    proptest! {
        #[test]
        fn permutation_and_affine_invariance(
            pairs in proptest::collection::vec((0.1f64..3.0, -1.0f64..4.0), 3..20),
            rot in 0usize..20,
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(pearson(&y, &p).is_some());
            let base = metrics(&y, &p).unwrap();
            let r = rot % y.len();
            let (mut y2, mut p2) = (y.clone(), p.clone());
            y2.rotate_left(r);
            p2.rotate_left(r);
            let rotated = metrics(&y2, &p2).unwrap();
            prop_assert!((base.rmse - rotated.rmse).abs() < 1e-12);
            prop_assert!((base.mape - rotated.mape).abs() < 1e-9);
            let affine: Vec<f64> = p.iter().map(|v| scale * v + shift).collect();
            prop_assert!((metrics(&y, &affine).unwrap().cc - base.cc).abs() < 1e-9);
        }
    }
}
