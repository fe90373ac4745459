//! Adaptive Dormand-Prince 5(4) for complex state vectors.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dopri5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Stepper state; the step size and the FSAL derivative carry over between calls.
pub struct Dopri5 {
    pub opts: Dopri5Options,
    pub stats: Dopri5Stats,
    h: f64,
    k: [Vec<Complex64>; 7],
    y_stage: Vec<Complex64>,
    y_new: Vec<Complex64>,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(n: usize, opts: Dopri5Options) -> Self {
        let z = || vec![Complex64::default(); n];
        Self {
            opts,
            stats: Dopri5Stats::default(),
            h: 0.0,
            k: [z(), z(), z(), z(), z(), z(), z()],
            y_stage: z(),
            y_new: z(),
            fsal_valid: false,
        }
    }

    /// Call after modifying `y` outside the stepper.
    pub fn invalidate(&mut self) {
        self.fsal_valid = false;
    }

    fn error_norm(&self, y: &[Complex64], h: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..y.len() {
            let err = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * h;
            let sc = self.opts.atol + self.opts.rtol * y[i].norm().max(self.y_new[i].norm());
            acc += (err.norm() / sc).powi(2);
        }
        (acc / y.len() as f64).sqrt()
    }

    fn initial_step(
        &mut self,
        sys: &mut impl OdeSystem,
        t: f64,
        y: &[Complex64],
        span: f64,
    ) -> f64 {
        let sc = |v: &Complex64| self.opts.atol + self.opts.rtol * v.norm();
        let n = y.len() as f64;
        let d0 = (y.iter().map(|v| (v.norm() / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (y
            .iter()
            .zip(&self.k[0])
            .map(|(v, f)| (f.norm() / sc(v)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6 * span
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(span).min(self.opts.h_max);
        for i in 0..y.len() {
            self.y_stage[i] = y[i] + self.k[0][i] * h0;
        }
        sys.rhs(t + h0, &self.y_stage, &mut self.k[1]);
        self.stats.evaluations += 1;
        let d2 = (y
            .iter()
            .enumerate()
            .map(|(i, v)| ((self.k[1][i] - self.k[0][i]).norm() / sc(v)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.opts.h_max)
    }

    /// Advances `(t, y)` to exactly `t_end`.
    pub fn integrate_to(
        &mut self,
        sys: &mut impl OdeSystem,
        t: &mut f64,
        y: &mut [Complex64],
        t_end: f64,
    ) -> Result<()> {
        let n = y.len();
        if t_end < *t {
            return Err(Error::Domain(format!(
                "cannot integrate backwards from {} to {t_end}",
                *t
            )));
        }
        if t_end == *t {
            return Ok(());
        }
        if !self.fsal_valid {
            sys.rhs(*t, y, &mut self.k[0]);
            self.stats.evaluations += 1;
            self.fsal_valid = true;
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(sys, *t, y, t_end - *t);
        }
        let mut reject_streak = false;
        while *t < t_end {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::Stiffness { t: *t, h: self.h });
            }
            let remaining = t_end - *t;
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= 16.0 * f64::EPSILON * t.abs().max(remaining) {
                return Err(Error::Stiffness { t: *t, h });
            }
            let t0 = *t;
            macro_rules! stage {
                ($dst:expr, $tc:expr, $($ki:expr => $a:expr),+) => {{
                    for i in 0..n {
                        self.y_stage[i] = y[i] + ($(self.k[$ki][i] * $a +)+ Complex64::default()) * h;
                    }
                    sys.rhs(t0 + $tc * h, &self.y_stage, &mut self.k[$dst]);
                }};
            }
            stage!(1, C2, 0 => A21);
            stage!(2, C3, 0 => A31, 1 => A32);
            stage!(3, C4, 0 => A41, 1 => A42, 2 => A43);
            stage!(4, C5, 0 => A51, 1 => A52, 2 => A53, 3 => A54);
            stage!(5, 1.0, 0 => A61, 1 => A62, 2 => A63, 3 => A64, 4 => A65);
            for i in 0..n {
                self.y_new[i] = y[i]
                    + (self.k[0][i] * A71
                        + self.k[2][i] * A73
                        + self.k[3][i] * A74
                        + self.k[4][i] * A75
                        + self.k[5][i] * A76)
                        * h;
            }
            let t_new = if last { t_end } else { t0 + h };
            sys.rhs(t_new, &self.y_new, &mut self.k[6]);
            self.stats.evaluations += 6;
            let err = self.error_norm(y, h);
            if err <= 1.0 {
                self.stats.accepted += 1;
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                *t = t_new;
                let mut fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if reject_streak {
                    fac = fac.min(1.0);
                }
                reject_streak = false;
                // keep the natural step when the last step was shortened to hit t_end
                if !last || h >= self.h {
                    self.h = h * fac;
                }
            } else {
                self.stats.rejected += 1;
                reject_streak = true;
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator {
        omega: f64,
        decay: f64,
    }

    impl OdeSystem for Oscillator {
        fn rhs(&mut self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
            dy[0] = y[0] * Complex64::new(-self.decay, -self.omega);
        }
    }

    #[test]
    fn damped_rotation_matches_exact_solution() {
        let mut sys = Oscillator {
            omega: 2.0e11,
            decay: 1.0e10,
        };
        let mut stepper = Dopri5::new(1, Dopri5Options::default());
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut t = 0.0;
        for k in 1..=20 {
            let te = k as f64 * 5e-11;
            stepper.integrate_to(&mut sys, &mut t, &mut y, te).unwrap();
            assert_eq!(t, te);
            let exact = Complex64::new(-1.0e10 * te, -2.0e11 * te).exp();
            assert!(
                (y[0] - exact).norm() < 1e-7,
                "t = {te}: {} vs {exact}",
                y[0]
            );
        }
        assert!(stepper.stats.rejected < stepper.stats.accepted);
    }

    #[test]
    fn time_dependent_forcing() {
        struct Ramp;
        impl OdeSystem for Ramp {
            fn rhs(&mut self, t: f64, _y: &[Complex64], dy: &mut [Complex64]) {
                dy[0] = Complex64::new(3.0 * t * t, 0.0);
            }
        }
        let mut s = Dopri5::new(1, Dopri5Options::default());
        let mut y = [Complex64::default()];
        let mut t = 0.0;
        s.integrate_to(&mut Ramp, &mut t, &mut y, 2.0).unwrap();
        assert!((y[0].re - 8.0).abs() < 1e-10);
    }

    #[test]
    fn step_limit_reports_stiffness() {
        let mut sys = Oscillator {
            omega: 1e12,
            decay: 0.0,
        };
        let opts = Dopri5Options {
            max_steps: 10,
            ..Default::default()
        };
        let mut s = Dopri5::new(1, opts);
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut t = 0.0;
        assert!(matches!(
            s.integrate_to(&mut sys, &mut t, &mut y, 1e-9),
            Err(Error::Stiffness { .. })
        ));
    }

    #[test]
    fn backwards_request_rejected() {
        let mut sys = Oscillator {
            omega: 1.0,
            decay: 0.0,
        };
        let mut s = Dopri5::new(1, Dopri5Options::default());
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut t = 1.0;
        assert!(s.integrate_to(&mut sys, &mut t, &mut y, 0.5).is_err());
    }
}
