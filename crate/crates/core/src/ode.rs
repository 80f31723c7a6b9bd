//! Dormand–Prince 5(4) integrator with step-size control and the standard
//! fourth-order continuous extension for output on a fixed time grid.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Dopri5 {
            rtol: tol,
            atol: tol,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
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
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Work {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    dense: [Vec<f64>; 5],
    out: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Work {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            dense: std::array::from_fn(|_| vec![0.0; n]),
            out: vec![0.0; n],
        }
    }
}

impl Dopri5 {
    fn scaled_norm(&self, v: &[f64], y: &[f64], y2: Option<&[f64]>) -> f64 {
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mag = match y2 {
                Some(y2) => y[i].abs().max(y2[i].abs()),
                None => y[i].abs(),
            };
            let sc = self.atol + self.rtol * mag;
            let r = v[i] / sc;
            acc += r * r;
        }
        (acc / n.max(1) as f64).sqrt()
    }

    fn initial_step<S: OdeSystem>(&self, sys: &S, t: f64, y: &[f64], f0: &[f64], span: f64) -> f64 {
        let n = y.len();
        let d0 = self.scaled_norm(y, y, None);
        let d1 = self.scaled_norm(f0, y, None);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
        let mut f1 = vec![0.0; n];
        sys.rhs(t + h0, &y1, &mut f1);
        let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
        let d2 = self.scaled_norm(&diff, y, None) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrate from `t_out[0]` and report the solution at every entry of
    /// `t_out` (strictly increasing) through `observe(index, t, y)`.
    pub fn integrate<S, F>(&self, sys: &S, y0: &[f64], t_out: &[f64], mut observe: F) -> Result<IntegrationStats>
    where
        S: OdeSystem,
        F: FnMut(usize, f64, &[f64]),
    {
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: y0.len(),
            });
        }
        if t_out.is_empty() {
            return Ok(IntegrationStats::default());
        }
        if t_out.windows(2).any(|w| w[1] <= w[0]) || !t_out.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("output times must be finite and strictly increasing"));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::invalid("integration tolerances must be positive"));
        }

        let mut stats = IntegrationStats::default();
        let mut t = t_out[0];
        let t_end = *t_out.last().unwrap();
        let mut y = y0.to_vec();
        observe(0, t, &y);
        if t_out.len() == 1 {
            return Ok(stats);
        }
        let mut w = Work::new(n);
        sys.rhs(t, &y, &mut w.k[0]);
        stats.evaluations += 1;
        let mut h = self.initial_step(sys, t, &y, &w.k[0], t_end - t);
        stats.evaluations += 1;
        let mut next = 1;
        let mut last_rejected = false;

        while next < t_out.len() {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::IntegrationFailure {
                    t_reached: t,
                    reason: format!("step budget of {} exhausted", self.max_steps),
                });
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    t_reached: t,
                    reason: "step size underflow".into(),
                });
            }
            let mut finishing = false;
            if t + h >= t_end || t + 1.01 * h >= t_end {
                h = t_end - t;
                finishing = true;
            }

            let err = self.attempt(sys, t, h, &y, &mut w);
            stats.evaluations += 6;
            if !err.is_finite() {
                stats.rejected += 1;
                h *= 0.2;
                last_rejected = true;
                continue;
            }
            if err <= 1.0 {
                stats.accepted += 1;
                let t_new = if finishing { t_end } else { t + h };
                self.build_dense(h, &y, &mut w);
                while next < t_out.len() && t_out[next] <= t_new {
                    if t_out[next] == t_new {
                        observe(next, t_new, &w.ynew);
                    } else {
                        let theta = (t_out[next] - t) / h;
                        let th1 = 1.0 - theta;
                        for i in 0..n {
                            w.out[i] = w.dense[0][i]
                                + theta * (w.dense[1][i] + th1 * (w.dense[2][i] + theta * (w.dense[3][i] + th1 * w.dense[4][i])));
                        }
                        observe(next, t_out[next], &w.out);
                    }
                    next += 1;
                }
                t = t_new;
                std::mem::swap(&mut y, &mut w.ynew);
                w.k.swap(0, 6);
                let mut factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
                if last_rejected {
                    factor = factor.min(1.0);
                }
                h *= factor;
                last_rejected = false;
            } else {
                stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).max(0.2);
                last_rejected = true;
            }
        }
        Ok(stats)
    }

    /// One trial step of size `h`; leaves the fifth-order solution in
    /// `w.ynew`, `f(t+h, ynew)` in `w.k[6]` and returns the scaled error.
    fn attempt<S: OdeSystem>(&self, sys: &S, t: f64, h: f64, y: &[f64], w: &mut Work) -> f64 {
        let n = y.len();
        let Work { k, ytmp, ynew, .. } = w;
        let [k1, k2, k3, k4, k5, k6, k7] = k;

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, ytmp, k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t + h, ynew, k7);
        for i in 0..n {
            ytmp[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        self.scaled_norm(ytmp, y, Some(ynew))
    }

    fn build_dense(&self, h: f64, y: &[f64], w: &mut Work) {
        let n = y.len();
        let [k1, _, k3, k4, k5, k6, k7] = &w.k;
        let [r1, r2, r3, r4, r5] = &mut w.dense;
        for i in 0..n {
            let dy = w.ynew[i] - y[i];
            let bspl = h * k1[i] - dy;
            r1[i] = y[i];
            r2[i] = dy;
            r3[i] = bspl;
            r4[i] = dy - h * k7[i] - bspl;
            r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
    }
}
