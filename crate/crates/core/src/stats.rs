//! Agreement and precision statistics.

use serde::Serialize;

use crate::error::{bail, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn need(n: usize, what: &str) -> Result<()> {
    if n < 2 {
        bail!(Stat, "{what} needs at least 2 values, got {n}");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Bias `mean(a - b)` and limits of agreement `bias -/+ 1.96 sd(a - b)`.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    if a.len() != b.len() {
        bail!(Stat, "paired samples differ in length ({} vs {})", a.len(), b.len());
    }
    need(a.len(), "Bland-Altman")?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let bias = mean(&d);
    let half = 1.96 * sample_std(&d);
    Ok(BlandAltman { bias, loa_low: bias - half, loa_high: bias + half })
}

/// Coefficient of variation `sd / mean`.
pub fn cov(v: &[f64]) -> Result<f64> {
    need(v.len(), "CoV")?;
    let m = mean(v);
    if m == 0.0 {
        bail!(Stat, "CoV undefined for zero mean");
    }
    Ok(sample_std(v) / m)
}

/// Quantile with linear interpolation between order statistics at
/// position `q * (n - 1)`.
pub fn quantile(v: &[f64], q: f64) -> Result<f64> {
    if v.is_empty() || !(0.0..=1.0).contains(&q) {
        bail!(Stat, "quantile needs values and q in [0, 1]");
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (pos - lo as f64) * (s[hi] - s[lo]))
}

pub fn iqr(v: &[f64]) -> Result<f64> {
    need(v.len(), "IQR")?;
    Ok(quantile(v, 0.75)? - quantile(v, 0.25)?)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        bail!(Stat, "paired samples differ in length ({} vs {})", a.len(), b.len());
    }
    need(a.len(), "Pearson correlation")?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        bail!(Stat, "correlation undefined for constant input");
    }
    Ok(sab / (saa * sbb).sqrt())
}
