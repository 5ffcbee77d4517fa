//! Chow test for structural difference between two linear relations.
//!
//! Used to ask whether two vulnerability scatter plots (say, duplicated
//! vs unduplicated examples) follow the same line.

use crate::error::{Error, Result};

use super::special::f_tail;

/// Residual sum of squares of the least-squares line through `points`.
fn ols_rss(points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len() as f64;
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid_argument("non-finite point"));
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let scale: f64 = points.iter().map(|p| p.0 * p.0).sum();
    if sxx <= 1e-12 * scale.max(1e-300) {
        return Err(Error::invalid_argument(
            "degenerate regressor: x has (near-)zero variance",
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok(points
        .iter()
        .map(|&(x, y)| (y - intercept - slope * x).powi(2))
        .sum())
}

/// Chow test: do two point sets follow the same regression line?
///
/// Fits least-squares lines to each group and to the pooled data, then
/// `F = [(S_p - S_1 - S_2)/2] / [(S_1 + S_2)/(n_1 + n_2 - 4)]` with the
/// `S` residual sums of squares. Returns `(F, p)` where the p-value is
/// the F(2, n_1+n_2-4) upper tail.
///
/// If both groups fit their lines exactly the statistic is degenerate:
/// the result is `(0, 1)` when the pooled fit is exact too, and
/// `(inf, 0)` when it is not.
pub fn chow_test(points_a: &[(f64, f64)], points_b: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points_a.len() < 3 || points_b.len() < 3 {
        return Err(Error::insufficient_data(format!(
            "chow test needs >= 3 points per group, got {} and {}",
            points_a.len(),
            points_b.len()
        )));
    }
    let s1 = ols_rss(points_a)?;
    let s2 = ols_rss(points_b)?;
    let pooled: Vec<(f64, f64)> = points_a.iter().chain(points_b).copied().collect();
    let sp = ols_rss(&pooled)?;
    let d2 = (points_a.len() + points_b.len() - 4) as f64;
    // Exact fits make both numerator and denominator vanish; resolve the
    // 0/0 by the limit convention documented above. The threshold is
    // relative to the response scale so that exact lines built from
    // non-tiny values still register as exact.
    let y_scale: f64 = pooled.iter().map(|p| p.1 * p.1).sum::<f64>().max(1.0);
    let eps = 1e-12 * y_scale;
    let num = ((sp - s1 - s2) / 2.0).max(0.0);
    if s1 + s2 <= eps {
        return if num <= eps {
            Ok((0.0, 1.0))
        } else {
            Ok((f64::INFINITY, 0.0))
        };
    }
    let f = num / ((s1 + s2) / d2);
    Ok((f, f_tail(f, 2.0, d2)))
}
