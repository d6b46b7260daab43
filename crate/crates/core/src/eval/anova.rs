//! Two-way ANOVA without replication (randomized block design) and the
//! F-distribution tail it needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_model: f64,
    pub p_model: f64,
    pub df_model: usize,
    pub df_error: usize,
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const TOL: f64 = 1e-10;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(F > f)` of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Models are rows (treatment), subjects are columns (blocks).
pub fn two_way_anova(table: &[Vec<f64>]) -> Result<AnovaResult> {
    let a = table.len();
    let b = table.first().map_or(0, Vec::len);
    if a < 2 || b < 2 {
        return Err(Error::param(format!("ANOVA needs at least a 2x2 table, got {a}x{b}")));
    }
    if table.iter().any(|r| r.len() != b) || table.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::data("ANOVA table must be rectangular with finite cells"));
    }
    let n = (a * b) as f64;
    let grand = table.iter().flatten().sum::<f64>() / n;
    let row_means: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>() / b as f64).collect();
    let col_means: Vec<f64> = (0..b)
        .map(|j| table.iter().map(|r| r[j]).sum::<f64>() / a as f64)
        .collect();
    let ss_rows = b as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            ss_err += (v - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let df_model = a - 1;
    let df_error = (a - 1) * (b - 1);
    let ms_rows = ss_rows / df_model as f64;
    let ms_err = ss_err / df_error as f64;
    // relative scale below which sums of squares are rounding noise
    let scale = table.iter().flatten().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let negligible = |ss: f64| ss <= 1e-24 * scale;
    let f_model = match (negligible(ss_rows), negligible(ss_err)) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        _ => ms_rows / ms_err,
    };
    Ok(AnovaResult {
        f_model,
        p_model: f_survival(f_model, df_model as f64, df_error as f64),
        df_model,
        df_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn incomplete_beta_matches_reference() {
        // reference values from scipy.special.betainc
        let cases = [
            (0.5, 0.5, 0.3, 0.369_010_119_565_545_36),
            (2.0, 3.0, 0.4, 0.524_799_999_999_999_9),
            (10.0, 20.0, 0.25, 0.166_304_949_597_879_45),
            (3.0, 1.5, 0.99, 0.995_677_312_5),
            (50.0, 60.0, 0.45, 0.464_235_291_430_604_44),
        ];
        for (a, b, x, want) in cases {
            let got = incomplete_beta(a, b, x);
            assert!((got - want).abs() < 1e-9, "I_{x}({a},{b}) = {got}, want {want}");
        }
    }

    #[test]
    fn f_tail_matches_reference() {
        assert!((f_survival(3.5, 2.0, 10.0) - 0.070_429_627_772_374_27).abs() < 1e-9);
        assert!((f_survival(1.0, 4.0, 12.0) - 0.444_946_289_062_499_9).abs() < 1e-9);
    }

    #[test]
    fn equal_cells_give_null_result() {
        let r = two_way_anova(&[vec![2.0; 4], vec![2.0; 4], vec![2.0; 4]]).unwrap();
        assert_eq!((r.f_model, r.p_model), (0.0, 1.0));
    }

    #[test]
    fn shifted_row_is_significant() {
        let base = vec![1.0, 1.3, 0.8, 1.1, 0.9];
        let noisy = vec![1.02, 1.27, 0.83, 1.08, 0.91];
        let shifted: Vec<f64> = base.iter().map(|v| v + 5.0).collect();
        let r = two_way_anova(&[base, noisy, shifted]).unwrap();
        assert!(r.p_model < 0.01, "{r:?}");
    }

    #[test]
    fn small_tables_rejected() {
        assert!(matches!(two_way_anova(&[vec![1.0, 2.0]]), Err(Error::Param(_))));
        assert!(matches!(two_way_anova(&[vec![1.0, 2.0], vec![1.0]]), Err(Error::Data(_))));
    }
}
