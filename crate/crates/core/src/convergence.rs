//! Log-log slope of the estimator against the number of unknowns.

use thiserror::Error;

use crate::driver::{Action, IterationRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} REFINE rows, found {found}")]
    TooFewRefinements { needed: usize, found: usize },
    #[error("DOF range {min}..{max} spans less than one decade")]
    NarrowRange { min: usize, max: usize },
    #[error("fewer than two distinct DOF levels in the final decade")]
    TooFewLevels,
    #[error("non-positive estimator value at DOF {dof}")]
    NonPositive { dof: usize },
}

pub const MIN_REFINE_ROWS: usize = 5;

/// Least-squares slope of `log10(total)` against `log10(dof)`, using the last
/// row at each DOF level and only levels within the final decade of DOF.
pub fn fit_slope(log: &[IterationRecord]) -> Result<f64, FitError> {
    let refines = log.iter().filter(|r| r.action == Action::Refine).count();
    if refines < MIN_REFINE_ROWS {
        return Err(FitError::TooFewRefinements { needed: MIN_REFINE_ROWS, found: refines });
    }
    let mut levels: Vec<(usize, f64)> = Vec::new();
    for row in log {
        match levels.last_mut() {
            Some(last) if last.0 == row.dof => last.1 = row.total,
            _ => levels.push((row.dof, row.total)),
        }
    }
    let min = levels.iter().map(|l| l.0).min().unwrap_or(0);
    let max = levels.iter().map(|l| l.0).max().unwrap_or(0);
    if min == 0 || (max as f64) < 10.0 * min as f64 {
        return Err(FitError::NarrowRange { min, max });
    }
    let lower = max as f64 / 10.0;
    let mut points = Vec::new();
    for &(dof, total) in &levels {
        if dof as f64 >= lower {
            if !(total > 0.0) {
                return Err(FitError::NonPositive { dof });
            }
            points.push(((dof as f64).log10(), total.log10()));
        }
    }
    if points.len() < 2 {
        return Err(FitError::TooFewLevels);
    }
    Ok(least_squares_slope(&points))
}

pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
