//! Two-regime exponential fit of a descending rank distribution:
//! `value ~ exp(λ·rank)` fitted separately above `hi` and in `(lo, hi]`.

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_HI: f64 = 1000.0;
pub const DEFAULT_LO: f64 = 10.0;
const MIN_POINTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeFitError {
    #[error("thresholds must satisfy hi > lo > 0 (hi = {hi}, lo = {lo})")]
    InvalidThresholds { hi: f64, lo: f64 },
    #[error("values must be positive, finite and sorted in descending order (offending position {0})")]
    InvalidInput(usize),
    #[error("regime {regime} has {found} points, at least {MIN_POINTS} required")]
    InsufficientPoints { regime: u8, found: usize },
}

/// Least-squares line through `(rank, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn fit_log_linear(points: &[(f64, f64)]) -> Option<LogLinearFit> {
    let n = points.len();
    if n < 2 || points.iter().any(|&(_, v)| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, v) in points {
        let dx = x - mean_x;
        let dy = v.ln() - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let scale = points.iter().map(|p| p.1.ln().powi(2)).sum::<f64>();
    let r2 = if syy > f64::EPSILON * scale { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Some(LogLinearFit {
        slope,
        intercept: mean_y - slope * mean_x,
        r2,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeFit {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r2_1: f64,
    pub r2_2: f64,
    pub n1: usize,
    pub n2: usize,
}

/// `ratios` sorted descending; rank is the 1-based position in that list.
pub fn fit_rank_regimes(ratios: &[f64], hi: f64, lo: f64) -> Result<RegimeFit, RegimeFitError> {
    if !(hi > lo && lo > 0.0 && hi.is_finite()) {
        return Err(RegimeFitError::InvalidThresholds { hi, lo });
    }
    for (i, &v) in ratios.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() || (i > 0 && v > ratios[i - 1]) {
            return Err(RegimeFitError::InvalidInput(i));
        }
    }
    let ranked = ratios.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v));
    let upper: Vec<_> = ranked.clone().filter(|&(_, v)| v > hi).collect();
    let middle: Vec<_> = ranked.filter(|&(_, v)| v > lo && v <= hi).collect();
    if upper.len() < MIN_POINTS {
        return Err(RegimeFitError::InsufficientPoints {
            regime: 1,
            found: upper.len(),
        });
    }
    if middle.len() < MIN_POINTS {
        return Err(RegimeFitError::InsufficientPoints {
            regime: 2,
            found: middle.len(),
        });
    }
    let f1 = fit_log_linear(&upper).expect("validated points");
    let f2 = fit_log_linear(&middle).expect("validated points");
    Ok(RegimeFit {
        lambda1: f1.slope,
        lambda2: f2.slope,
        r2_1: f1.r2,
        r2_2: f2.r2,
        n1: f1.n,
        n2: f2.n,
    })
}
