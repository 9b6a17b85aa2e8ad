//! Dormand-Prince 5(4) along a straight line in complex time.
//!
//! A segment `t = origin + s u`, `|u| = 1`, turns `dz/dt = F(z)` into the arc-length ODE
//! `dz/ds = u F(z)`. The state is complex but the error norm runs over the `2n` real and
//! imaginary parts separately, so the step control is that of the real `2n` system.

use num_traits::Zero;

use crate::models::HolomorphicField;
use crate::scalar::{is_finite_c, Real, C};

use super::Tolerances;

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

// Continuous extension of order 4 (Hairer, Norsett & Wanner, DOPRI5 `contd5`).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats<T> {
    pub accepted: usize,
    pub rejected: usize,
    /// Smallest accepted step; infinite when no step was taken.
    pub min_step: T,
}

impl<T: Real> Default for StepStats<T> {
    fn default() -> Self {
        Self {
            accepted: 0,
            rejected: 0,
            min_step: T::infinity(),
        }
    }
}

impl<T: Real> StepStats<T> {
    pub fn merge(&mut self, other: &StepStats<T>) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.min_step = self.min_step.min(other.min_step);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Singularity,
    StepBudget,
}

/// States at every requested arc length that was reached before the failure.
#[derive(Debug, Clone)]
pub struct LineFailure<T> {
    pub states: Vec<Vec<C<T>>>,
    pub furthest: T,
    pub kind: FailureKind,
}

pub struct LineSolution<T> {
    pub states: Vec<Vec<C<T>>>,
    pub stats: StepStats<T>,
}

struct Workspace<T> {
    k: [Vec<C<T>>; 7],
    tmp: Vec<C<T>>,
    ynew: Vec<C<T>>,
}

fn eval<T: Real, F: HolomorphicField<T> + ?Sized>(field: &F, dir: C<T>, z: &[C<T>], out: &mut [C<T>]) {
    field.eval_into(z, out);
    for v in out.iter_mut() {
        *v = *v * dir;
    }
}

fn error_scale<T: Real>(tol: &Tolerances<T>, a: T, b: T) -> T {
    tol.atol + tol.rtol * a.abs().max(b.abs())
}

/// Integrates from `z0` at `s = 0` and returns the states at the nondecreasing arc lengths
/// `outputs` (all `>= 0`).
pub fn integrate_line<T, F>(
    field: &F,
    z0: &[C<T>],
    dir: C<T>,
    outputs: &[T],
    tol: &Tolerances<T>,
) -> Result<LineSolution<T>, LineFailure<T>>
where
    T: Real,
    F: HolomorphicField<T> + ?Sized,
{
    let n = z0.len();
    let mut stats = StepStats::default();
    let mut states: Vec<Vec<C<T>>> = Vec::with_capacity(outputs.len());
    let Some(&end) = outputs.last() else {
        return Ok(LineSolution { states, stats });
    };
    let mut next = 0;
    while next < outputs.len() && outputs[next] <= T::zero() {
        states.push(z0.to_vec());
        next += 1;
    }
    if next == outputs.len() {
        return Ok(LineSolution { states, stats });
    }

    let lit = T::lit;
    let zero = C::<T>::zero();
    let mut ws = Workspace {
        k: std::array::from_fn(|_| vec![zero; n]),
        tmp: vec![zero; n],
        ynew: vec![zero; n],
    };
    let mut y = z0.to_vec();
    eval(field, dir, &y, &mut ws.k[0]);
    let mut s = T::zero();
    let mut h = initial_step(field, dir, &y, &ws.k[0], tol).min(end);
    let mut last_rejected = false;
    let mut steps = 0usize;

    let fail = |states: Vec<Vec<C<T>>>, s: T, kind| {
        Err(LineFailure {
            states,
            furthest: s,
            kind,
        })
    };

    while s < end {
        if steps >= tol.max_steps {
            return fail(states, s, FailureKind::StepBudget);
        }
        steps += 1;
        let h_floor = tol.h_min.max(T::epsilon() * lit(16.0) * s.abs());
        if !(h >= h_floor) {
            return fail(states, s, FailureKind::Singularity);
        }
        let last = s + h >= end;
        if last {
            h = end - s;
        }
        let hh = C::new(h, T::zero());

        let stages: [&[(f64, usize)]; 5] = [
            &[(A21, 0)],
            &[(A31, 0), (A32, 1)],
            &[(A41, 0), (A42, 1), (A43, 2)],
            &[(A51, 0), (A52, 1), (A53, 2), (A54, 3)],
            &[(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)],
        ];
        for (idx, coefs) in stages.iter().enumerate() {
            for i in 0..n {
                let incr = coefs.iter().fold(zero, |acc, &(a, j)| acc + ws.k[j][i] * lit(a));
                ws.tmp[i] = y[i] + hh * incr;
            }
            eval(field, dir, &ws.tmp, &mut ws.k[idx + 1]);
        }
        for i in 0..n {
            ws.ynew[i] = y[i]
                + hh * (ws.k[0][i] * lit(A71)
                    + ws.k[2][i] * lit(A73)
                    + ws.k[3][i] * lit(A74)
                    + ws.k[4][i] * lit(A75)
                    + ws.k[5][i] * lit(A76));
        }
        eval(field, dir, &ws.ynew, &mut ws.k[6]);

        let finite = ws.ynew.iter().all(|&v| is_finite_c(v))
            && ws.k.iter().all(|k| k.iter().all(|&v| is_finite_c(v)));
        let err = if finite {
            let mut acc = T::zero();
            for i in 0..n {
                let e = hh
                    * (ws.k[0][i] * lit(E1)
                        + ws.k[2][i] * lit(E3)
                        + ws.k[3][i] * lit(E4)
                        + ws.k[4][i] * lit(E5)
                        + ws.k[5][i] * lit(E6)
                        + ws.k[6][i] * lit(E7));
                let sr = error_scale(tol, y[i].re, ws.ynew[i].re);
                let si = error_scale(tol, y[i].im, ws.ynew[i].im);
                acc = acc + (e.re / sr).powi(2) + (e.im / si).powi(2);
            }
            (acc / T::from_usize_lossy(2 * n.max(1))).sqrt()
        } else {
            T::infinity()
        };

        if err <= T::one() && !field.is_singular(&ws.ynew) {
            let s_new = if last { end } else { s + h };
            while next < outputs.len() && outputs[next] <= s_new {
                let o = outputs[next];
                if o >= s_new {
                    states.push(ws.ynew.clone());
                } else {
                    let theta = (o - s) / h;
                    states.push(dense_output(&y, &ws, h, theta));
                }
                next += 1;
            }
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(h);
            s = s_new;
            y.copy_from_slice(&ws.ynew);
            let (first, rest) = ws.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            let mut fac = if err > T::zero() {
                lit(SAFETY) * err.powf(lit(-0.2))
            } else {
                lit(FAC_MAX)
            };
            fac = fac.max(lit(FAC_MIN)).min(if last_rejected { T::one() } else { lit(FAC_MAX) });
            h = h * fac;
            last_rejected = false;
        } else if finite && err <= T::one() {
            // accepted by the error test but landed on the singular locus
            return fail(states, s, FailureKind::Singularity);
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (lit(SAFETY) * err.powf(lit(-0.2))).max(lit(FAC_MIN)).min(T::one())
            } else {
                lit(0.25)
            };
            h = h * fac;
            last_rejected = true;
        }
    }
    Ok(LineSolution { states, stats })
}

fn dense_output<T: Real>(y: &[C<T>], ws: &Workspace<T>, h: T, theta: T) -> Vec<C<T>> {
    let lit = T::lit;
    let hh = C::new(h, T::zero());
    let t1 = T::one() - theta;
    (0..y.len())
        .map(|i| {
            let k = |j: usize| ws.k[j][i];
            let ydiff = ws.ynew[i] - y[i];
            let bspl = hh * k(0) - ydiff;
            let r4 = ydiff - hh * k(6) - bspl;
            let r5 = hh
                * (k(0) * lit(D1) + k(2) * lit(D3) + k(3) * lit(D4) + k(4) * lit(D5) + k(5) * lit(D6)
                    + k(6) * lit(D7));
            y[i] + (ydiff + (bspl + (r4 + r5 * t1) * theta) * t1) * theta
        })
        .collect()
}

fn initial_step<T, F>(field: &F, dir: C<T>, y: &[C<T>], f0: &[C<T>], tol: &Tolerances<T>) -> T
where
    T: Real,
    F: HolomorphicField<T> + ?Sized,
{
    let n = y.len();
    let rms = |v: &[C<T>]| {
        let mut acc = T::zero();
        for i in 0..n {
            let sr = tol.atol + tol.rtol * y[i].re.abs();
            let si = tol.atol + tol.rtol * y[i].im.abs();
            acc = acc + (v[i].re / sr).powi(2) + (v[i].im / si).powi(2);
        }
        (acc / T::from_usize_lossy(2 * n.max(1))).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let lit = T::lit;
    let h0 = if d0 < lit(1e-5) || d1 < lit(1e-5) {
        lit(1e-6)
    } else {
        lit(0.01) * d0 / d1
    };
    let y1: Vec<C<T>> = y.iter().zip(f0).map(|(&a, &b)| a + b * h0).collect();
    let mut f1 = vec![C::zero(); n];
    eval(field, dir, &y1, &mut f1);
    let diff: Vec<C<T>> = f1.iter().zip(f0).map(|(&a, &b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if !d2.is_finite() {
        h0
    } else if d1.max(d2) <= lit(1e-15) {
        (h0 * lit(1e-3)).max(lit(1e-6))
    } else {
        (lit(0.01) / d1.max(d2)).powf(lit(0.2))
    };
    (lit(100.0) * h0).min(h1).max(tol.h_min * lit(10.0))
}
