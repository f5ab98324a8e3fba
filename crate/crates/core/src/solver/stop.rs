//! Stopping rules evaluated on the loss history after each iteration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "message", rename_all = "snake_case")]
pub enum StopReason {
    /// Loss fell below the absolute tolerance.
    Tol,
    MaxIter,
    /// Least-squares slope over the recent window below the threshold.
    Converged,
    Diverged(String),
}

/// Least-squares slope of `y` against `0, 1, 2, ...`.
pub fn trend_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// First satisfied criterion among tolerance, trend and iteration budget.
pub fn check_stop(history: &[f64], max_iter: usize, tol: f64, convergence: f64, window: usize) -> Option<StopReason> {
    let last = *history.last()?;
    if last < tol {
        return Some(StopReason::Tol);
    }
    if window >= 2 && history.len() >= window && trend_slope(&history[history.len() - window..]).abs() < convergence {
        return Some(StopReason::Converged);
    }
    if history.len() >= max_iter {
        return Some(StopReason::MaxIter);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let y: Vec<f64> = (0..10).map(|i| 3.0 - 0.5 * i as f64).collect();
        assert!((trend_slope(&y) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn flat_history_converges() {
        let h = vec![0.5; 20];
        assert_eq!(check_stop(&h, 4000, 1e-4, 1e-8, 20), Some(StopReason::Converged));
        assert_eq!(check_stop(&h[..19], 4000, 1e-4, 1e-8, 20), None);
    }

    #[test]
    fn tolerance_first() {
        assert_eq!(check_stop(&[1.0, 1e-5], 4000, 1e-4, 1e-8, 20), Some(StopReason::Tol));
    }

    #[test]
    fn iteration_budget() {
        let h: Vec<f64> = (0..5).map(|i| 1.0 - 0.1 * i as f64).collect();
        assert_eq!(check_stop(&h, 5, 1e-4, 1e-8, 20), Some(StopReason::MaxIter));
        assert_eq!(check_stop(&h[..4], 5, 1e-4, 1e-8, 20), None);
    }
}
