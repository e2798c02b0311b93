//! Reporting statistics: Wilson score intervals for hit counts and weighted
//! least-squares slope fits with a residual-based confidence interval.

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for `hits` successes in `n` trials.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if hits == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if hits == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Weighted least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval for the slope, from the
    /// weighted residual variance and a t quantile with `points - 2` dof.
    pub ci_half_width: f64,
    pub points_used: usize,
    pub residual_rms: f64,
}

/// 97.5% t quantiles for small degrees of freedom.
fn t_975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    if dof == 0 {
        f64::INFINITY
    } else if dof <= TABLE.len() {
        TABLE[dof - 1]
    } else {
        Z_95
    }
}

/// Fits `y ~ intercept + slope x` with weights `w = 1/se^2`. Needs at least
/// three points so the residual variance is defined.
pub fn slope_fit(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::validation(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.2 > 0.0) || !p.1.is_finite()) {
        return Err(Error::validation("slope fit weights must be positive"));
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let xbar: f64 = points.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let ybar: f64 = points.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::validation("slope fit needs distinct abscissae"));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = points.len() - 2;
    let rss: f64 = points
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let s2 = rss / dof as f64;
    let se = (s2 / sxx).sqrt();
    let rms = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        ci_half_width: t_975(dof) * se,
        points_used: points.len(),
        residual_rms: rms,
    })
}
