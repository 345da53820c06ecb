//! Dormand-Prince 5(4) embedded Runge-Kutta integrator with adaptive step
//! control and first-same-as-last reuse of the final stage.

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
// Fifth-order weights (also the last stage row).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Approximate extent of the stability region along the negative real axis.
const STABILITY_RADIUS: f64 = 3.3;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Steps are capped at this fraction of the stability limit implied by
    /// the running estimate of the dominant Jacobian eigenvalue. Without the
    /// cap the controller settles at the stability boundary on stiff decay,
    /// where the state keeps jittering at the size of the tolerances.
    pub stability_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 10.0,
            stability_fraction: 0.5,
        }
    }
}

/// Integrator state for `y' = f(t, y)`.
pub struct Dopri5<F> {
    f: F,
    tol: Tolerances,
    t: f64,
    y: Vec<f64>,
    h: f64,
    k: [Vec<f64>; 7],
    fsal_valid: bool,
    h_stable: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Dopri5<F> {
    pub fn new(f: F, t0: f64, y0: Vec<f64>, tol: Tolerances) -> Self {
        let dim = y0.len();
        Self {
            f,
            tol,
            t: t0,
            y: y0,
            h: tol.h_init,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            fsal_valid: false,
            h_stable: f64::INFINITY,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Mutable access to the state, e.g. for projecting onto a constraint set.
    /// Invalidates the cached derivative.
    pub fn y_mut(&mut self) -> &mut [f64] {
        self.fsal_valid = false;
        &mut self.y
    }

    /// Derivative at the current state.
    pub fn derivative(&mut self) -> &[f64] {
        if !self.fsal_valid {
            (self.f)(self.t, &self.y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        &self.k[0]
    }

    /// Performs one accepted step that does not pass `t_limit`, retrying with
    /// smaller steps as needed. Returns the step size taken.
    pub fn step(&mut self, t_limit: f64) -> Result<f64> {
        let dim = self.y.len();
        self.derivative();
        let mut ytmp = vec![0.0; dim];
        let mut ynew = vec![0.0; dim];
        loop {
            let remaining = t_limit - self.t;
            let mut h = self.h.min(self.tol.h_max).min(self.h_stable);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h < self.tol.h_min && !last {
                return Err(Error::StepUnderflow { time: self.t, step: h });
            }
            let t = self.t;
            let y = &self.y;
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;

            for i in 0..dim {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            (self.f)(t + C2 * h, &ytmp, k2);
            for i in 0..dim {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            (self.f)(t + C3 * h, &ytmp, k3);
            for i in 0..dim {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            (self.f)(t + C4 * h, &ytmp, k4);
            for i in 0..dim {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            (self.f)(t + C5 * h, &ytmp, k5);
            for i in 0..dim {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            (self.f)(t + h, &ytmp, k6);
            for i in 0..dim {
                ynew[i] = y[i]
                    + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            (self.f)(t + h, &ynew, k7);

            let mut err = 0.0;
            for i in 0..dim {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                self.rejected += 1;
                self.h = h * 0.1;
                continue;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                // k6 and k7 are the field at two nearby points at t + h, so
                // their difference quotient estimates the dominant eigenvalue.
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..dim {
                    num += (k7[i] - k6[i]) * (k7[i] - k6[i]);
                    den += (ynew[i] - ytmp[i]) * (ynew[i] - ytmp[i]);
                }
                if den > 0.0 && num > 0.0 {
                    self.h_stable = self.tol.stability_fraction * STABILITY_RADIUS / (num / den).sqrt();
                }
                self.t = if last { t_limit } else { t + h };
                std::mem::swap(&mut self.y, &mut ynew);
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                self.fsal_valid = true;
                self.accepted += 1;
                // A step shortened to hit t_limit says nothing about the
                // natural step size, so keep the previous proposal then.
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(h);
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
        }
    }
}
