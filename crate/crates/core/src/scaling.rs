//! Power-law fits in log-log space, jackknife errors, and exponent reports
//! against the quanta and Domino predictions.

use serde::{Deserialize, Serialize};

use crate::domino::{scaling_exponents, ScalingPrediction};
use crate::error::{Error, Result};
use crate::geometry::DimPoint;
use crate::trajectory::Trajectory;

/// Closed interval on the abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const ALL: Window = Window {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    /// Default window for loss against steps.
    pub const STEPS: Window = Window { lo: 1e3, hi: 1e4 };

    /// Default window for loss against dimension; larger dimensions sit near
    /// the critical point of the `n_task = 1000` sweep.
    pub const DIMS: Window = Window { lo: 0.0, hi: 250.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invalid("window", format!("[{lo}, {hi}] is not an interval")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Negated log-log slope: `y ≈ prefactor · x^(−exponent)`.
    pub exponent: f64,
    pub prefactor: f64,
    /// Smallest and largest abscissa actually used.
    pub fit_window: (f64, f64),
    /// RMSE of the fit in log space.
    pub residual: f64,
    /// Leave-one-out standard error; absent with fewer than 4 points.
    pub jackknife_std: Option<f64>,
    pub n_points: usize,
}

fn select(xs: &[f64], ys: &[f64], window: Window) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        if !window.contains(x) {
            continue;
        }
        if !(x > 0.0 && x.is_finite()) || !(y > 0.0 && y.is_finite()) {
            return Err(Error::Domain(format!(
                "power-law fit needs positive finite data, got ({x}, {y})"
            )));
        }
        lx.push(x.ln());
        ly.push(y.ln());
    }
    Ok((lx, ly))
}

/// OLS on log data: `(slope, intercept, rmse)`.
fn ols(lx: &[f64], ly: &[f64]) -> Result<(f64, f64, f64)> {
    if lx.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: lx.len(),
        });
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&x, &y) in lx.iter().zip(ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(ly)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok((slope, intercept, (sse / n).sqrt()))
}

fn jackknife_log(lx: &[f64], ly: &[f64]) -> Result<f64> {
    let n = lx.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let mut slopes = Vec::with_capacity(n);
    let mut bx = Vec::with_capacity(n - 1);
    let mut by = Vec::with_capacity(n - 1);
    for skip in 0..n {
        bx.clear();
        by.clear();
        for k in (0..n).filter(|&k| k != skip) {
            bx.push(lx[k]);
            by.push(ly[k]);
        }
        slopes.push(ols(&bx, &by)?.0);
    }
    let mean = slopes.iter().sum::<f64>() / n as f64;
    let ss: f64 = slopes.iter().map(|s| (s - mean) * (s - mean)).sum();
    Ok(((n - 1) as f64 / n as f64 * ss).sqrt())
}

pub fn fit_powerlaw(xs: &[f64], ys: &[f64], window: Window) -> Result<PowerLawFit> {
    let (lx, ly) = select(xs, ys, window)?;
    let (slope, intercept, residual) = ols(&lx, &ly)?;
    let jackknife_std = if lx.len() >= 4 {
        Some(jackknife_log(&lx, &ly)?)
    } else {
        None
    };
    let used = || xs.iter().copied().filter(|&x| window.contains(x));
    let lo = used().fold(f64::INFINITY, f64::min);
    let hi = used().fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit {
        exponent: -slope,
        prefactor: intercept.exp(),
        fit_window: (lo, hi),
        residual,
        jackknife_std,
        n_points: lx.len(),
    })
}

/// Jackknife standard error of the fitted exponent. Needs at least 4 points
/// in the window so that every leave-one-out refit has 3.
pub fn jackknife(xs: &[f64], ys: &[f64], window: Window) -> Result<f64> {
    let (lx, ly) = select(xs, ys, window)?;
    jackknife_log(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Steps,
    Dims,
}

#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    /// Total loss against recorded step.
    Trajectory(&'a Trajectory),
    /// Final loss against `n_dim`.
    Sweep(&'a [DimPoint]),
    /// Raw `(x, loss)` pairs.
    Points(&'a [(f64, f64)]),
}

impl Source<'_> {
    pub fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Source::Trajectory(t) => t.steps.iter().copied().zip(t.total_loss.iter().copied()).collect(),
            Source::Sweep(s) => s.iter().map(|p| (p.n_dim as f64, p.final_loss)).collect(),
            Source::Points(p) => p.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub axis: Axis,
    pub fit: PowerLawFit,
    pub alpha: Option<f64>,
    pub prediction: Option<ScalingPrediction>,
}

impl ExponentReport {
    /// Predicted exponents on this axis as `(quanta, domino)`.
    pub fn references(&self) -> Option<(f64, f64)> {
        let p = self.prediction?;
        Some(match self.axis {
            Axis::Steps => (p.quanta.alpha_s, p.domino.alpha_s),
            Axis::Dims => (p.quanta.alpha_n, p.domino.alpha_n),
        })
    }

    /// Whether the fit lies strictly closer to the Domino prediction.
    pub fn closer_to_domino(&self) -> Option<bool> {
        let (q, d) = self.references()?;
        Some((self.fit.exponent - d).abs() < (self.fit.exponent - q).abs())
    }
}

pub fn exponent_report(
    source: Source<'_>,
    axis: Axis,
    window: Window,
    alpha: Option<f64>,
) -> Result<ExponentReport> {
    if let (Source::Sweep(_), Axis::Steps) = (source, axis) {
        return Err(Error::invalid("axis", "a dimension sweep has no step axis"));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = source.points().into_iter().unzip();
    let fit = fit_powerlaw(&xs, &ys, window)?;
    Ok(ExponentReport {
        axis,
        fit,
        alpha,
        prediction: alpha.map(scaling_exponents),
    })
}
