//! Dormand–Prince 5(4) with adaptive steps, exact landing on requested times,
//! and optional clamping of components at zero.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Right-hand side `f(t, y, frozen, dy)`. Frozen components must get
/// `dy = 0`.
pub(crate) trait Rhs {
    fn eval(&self, t: f64, y: &[f64], frozen: &[bool], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    pub dt_max: f64,
}

/// Resumable integrator state.
#[derive(Debug, Clone)]
pub(crate) struct Solver {
    pub t: f64,
    pub y: Vec<f64>,
    pub frozen: Vec<bool>,
    h: f64,
    tol: Tolerances,
    clamp: bool,
    /// Times the integrator must land on exactly (e.g. schedule switches).
    breaks: Vec<f64>,
}

struct Work {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

impl Solver {
    pub fn new(y0: Vec<f64>, tol: Tolerances, clamp: bool, breaks: Vec<f64>) -> Self {
        let n = y0.len();
        Self {
            t: 0.0,
            y: y0,
            frozen: vec![false; n],
            h: tol.dt_max.min(1e-3),
            tol,
            clamp,
            breaks,
        }
    }

    /// One trial step of size `h` from the current state. Returns the new
    /// state and the scaled error norm.
    fn trial<F: Rhs + ?Sized>(&self, f: &F, h: f64, w: &mut Work) -> Result<(Vec<f64>, f64)> {
        let n = self.y.len();
        let (t, y) = (self.t, &self.y);
        let fz = &self.frozen;
        let stage = |w: &mut Work, coef: &[(usize, f64)]| {
            for j in 0..n {
                let mut acc = y[j];
                for &(s, a) in coef {
                    acc += h * a * w.k[s][j];
                }
                w.tmp[j] = acc;
            }
        };
        f.eval(t, y, fz, &mut w.k[0])?;
        stage(w, &[(0, A21)]);
        let tmp = w.tmp.clone();
        f.eval(t + C2 * h, &tmp, fz, &mut w.k[1])?;
        stage(w, &[(0, A31), (1, A32)]);
        let tmp = w.tmp.clone();
        f.eval(t + C3 * h, &tmp, fz, &mut w.k[2])?;
        stage(w, &[(0, A41), (1, A42), (2, A43)]);
        let tmp = w.tmp.clone();
        f.eval(t + C4 * h, &tmp, fz, &mut w.k[3])?;
        stage(w, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        let tmp = w.tmp.clone();
        f.eval(t + C5 * h, &tmp, fz, &mut w.k[4])?;
        stage(w, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        let tmp = w.tmp.clone();
        f.eval(t + h, &tmp, fz, &mut w.k[5])?;
        stage(w, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        let y_new = w.tmp.clone();
        f.eval(t + h, &y_new, fz, &mut w.k[6])?;

        let mut sq = 0.0;
        for j in 0..n {
            let e = h
                * (E1 * w.k[0][j]
                    + E3 * w.k[2][j]
                    + E4 * w.k[3][j]
                    + E5 * w.k[4][j]
                    + E6 * w.k[5][j]
                    + E7 * w.k[6][j]);
            let sc = self.tol.atol + self.tol.rtol * y[j].abs().max(y_new[j].abs());
            sq += (e / sc) * (e / sc);
        }
        let err = (sq / n.max(1) as f64).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            return Ok((y_new, f64::INFINITY));
        }
        Ok((y_new, err))
    }

    fn crosses_zero(&self, y_new: &[f64]) -> bool {
        self.clamp
            && y_new
                .iter()
                .zip(&self.frozen)
                .any(|(&v, &fz)| !fz && v < 0.0)
    }

    /// Advances exactly to `t_target`.
    pub fn advance_to<F: Rhs + ?Sized>(&mut self, f: &F, t_target: f64) -> Result<()> {
        let mut w = Work::new(self.y.len());
        while self.t < t_target {
            if self.frozen.iter().all(|&z| z) {
                self.t = t_target;
                return Ok(());
            }
            let next_break = self
                .breaks
                .iter()
                .copied()
                .find(|&b| b > self.t)
                .unwrap_or(f64::INFINITY);
            let stop = t_target.min(next_break);
            let remaining = stop - self.t;
            let proposal = self.h.min(self.tol.dt_max);
            let clipped = proposal >= remaining;
            let mut h = if clipped { remaining } else { proposal };

            let (y_new, err) = self.trial(f, h, &mut w)?;
            if err > 1.0 {
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).max(0.2)
                } else {
                    0.1
                };
                self.h = h * factor;
                if self.h < 1e-14 * self.t.abs().max(1.0) {
                    return Err(Error::Stiffness {
                        time: self.t,
                        step_size: self.h,
                    });
                }
                continue;
            }

            let growth = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            if self.crosses_zero(&y_new) {
                let (h_hit, y_hit, crossing) = self.bisect_zero(f, h, &y_new, &mut w)?;
                self.t += h_hit;
                self.y = y_hit;
                for j in crossing {
                    self.y[j] = 0.0;
                    self.frozen[j] = true;
                }
                h = h_hit.max(f64::MIN_POSITIVE);
                self.h = proposal.min(h * 5.0).max(1e-12 * self.t.abs().max(1.0));
            } else {
                self.t = if clipped { stop } else { self.t + h };
                self.y = y_new;
                // a step shortened to land on `stop` says little about the
                // admissible size; keep the earlier proposal
                self.h = if clipped { proposal.max(h * growth) } else { h * growth };
            }
        }
        Ok(())
    }

    /// Finds the step at which the first unfrozen component reaches zero.
    fn bisect_zero<F: Rhs + ?Sized>(
        &self,
        f: &F,
        h: f64,
        y_full: &[f64],
        w: &mut Work,
    ) -> Result<(f64, Vec<f64>, Vec<usize>)> {
        let (mut lo, mut hi) = (0.0, h);
        let mut y_lo = self.y.clone();
        let mut y_hi = y_full.to_vec();
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (y_mid, _) = self.trial(f, mid, w)?;
            if self.crosses_zero(&y_mid) {
                hi = mid;
                y_hi = y_mid;
            } else {
                lo = mid;
                y_lo = y_mid;
            }
        }
        let crossing: Vec<usize> = (0..y_hi.len())
            .filter(|&j| !self.frozen[j] && y_hi[j] < 0.0)
            .collect();
        if lo == 0.0 {
            // the crossing component was already at zero; freeze it in place
            return Ok((0.0, y_lo, crossing));
        }
        Ok((lo, y_lo, crossing))
    }
}
