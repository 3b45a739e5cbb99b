//! Adaptive Dormand–Prince 5(4) integrator with cubic Hermite dense output.

use thiserror::Error;

/// Autonomous or time-dependent right-hand side `dx/dt = f(t, x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (**self).eval(t, x, dx)
    }
}

/// Time-reversed field `-f`, for integrating backwards with increasing `t`.
pub struct Reversed<F>(pub F);

impl<F: VectorField> VectorField for Reversed<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        self.0.eval(-t, x, dx);
        dx.iter_mut().for_each(|v| *v = -*v);
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("end time must be positive, got {0}")]
    BadInterval(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

impl OdeOptions {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

/// Returned by an observer after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Accepted integrator steps with the field value at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub dx: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("trajectory has at least the initial sample")
    }

    pub fn last(&self) -> &[f64] {
        self.x.last().expect("trajectory has at least the initial sample")
    }

    /// Cubic Hermite interpolation, clamped to the sampled interval.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        if self.t.len() == 1 {
            return self.x[0].clone();
        }
        let t = t.clamp(self.t[0], self.t_end());
        let j = self.t.partition_point(|&s| s <= t).saturating_sub(1).min(self.t.len() - 2);
        hermite(self.t[j], &self.x[j], &self.dx[j], self.t[j + 1], &self.x[j + 1], &self.dx[j + 1], t)
    }
}

fn hermite(t0: f64, x0: &[f64], d0: &[f64], t1: f64, x1: &[f64], d1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..x0.len())
        .map(|i| h00 * x0[i] + h10 * h * d0[i] + h01 * x1[i] + h11 * h * d1[i])
        .collect()
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `field` from `x0` over `[0, t_end]`.
pub fn integrate<F: VectorField>(field: &F, x0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<Trajectory, OdeError> {
    integrate_observed(field, x0, t_end, opts, |_, _| Control::Continue)
}

/// Like [`integrate`], calling `observer(t, x)` after every accepted step
/// (and once at `t = 0`); integration ends early when it returns [`Control::Stop`].
pub fn integrate_observed<F, O>(
    field: &F,
    x0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<Trajectory, OdeError>
where
    F: VectorField,
    O: FnMut(f64, &[f64]) -> Control,
{
    if !(t_end > 0.0) {
        return Err(OdeError::BadInterval(t_end));
    }
    let n = x0.len();
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    field.eval(t, &x, &mut k[0]);
    if x.iter().chain(&k[0]).any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t });
    }

    let mut traj = Trajectory { t: vec![t], x: vec![x.clone()], dx: vec![k[0].clone()] };
    if observer(t, &x) == Control::Stop {
        return Ok(traj);
    }

    let mut h = initial_step(field, &x, &k[0], opts).min(t_end).min(opts.h_max);
    let mut stage = vec![0.0; n];
    let mut x5 = vec![0.0; n];
    let mut steps = 0usize;
    let mut prev_err = 1e-4f64;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = x[i] + h * acc;
            }
            field.eval(t + C[s] * h, &stage, &mut k[s]);
        }
        // Stage 7 was evaluated at the 5th-order solution (FSAL).
        let mut err = 0.0;
        for i in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..7 {
                hi += B5[s] * k[s][i];
                lo += B4[s] * k[s][i];
            }
            x5[i] = x[i] + h * hi;
            let sc = opts.atol + opts.rtol * x[i].abs().max(x5[i].abs());
            let e = h * (hi - lo) / sc;
            err += e * e;
        }
        let err = (err / n.max(1) as f64).sqrt();

        if !err.is_finite() {
            h *= 0.25;
            if h < opts.h_min {
                return Err(OdeError::NonFinite { t });
            }
            continue;
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut x, &mut x5);
            let fsal = k[6].clone();
            k[0].copy_from_slice(&fsal);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
            traj.t.push(t);
            traj.x.push(x.clone());
            traj.dx.push(fsal);
            steps += 1;
            if observer(t, &x) == Control::Stop {
                break;
            }
            // PI step-size controller.
            let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.7 / 5.0) * prev_err.powf(0.4 / 5.0) };
            h = (h * fac.clamp(0.2, 5.0)).min(opts.h_max);
            prev_err = err.max(1e-4);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            steps += 1;
        }
        if h < opts.h_min && t < t_end {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
    }
    Ok(traj)
}

fn initial_step<F: VectorField>(field: &F, x0: &[f64], f0: &[f64], opts: &OdeOptions) -> f64 {
    let n = x0.len().max(1) as f64;
    let sc = |v: f64| opts.atol + opts.rtol * v.abs();
    let d0 = (x0.iter().map(|&v| (v / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (x0.iter().zip(f0).map(|(&v, &d)| (d / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1: Vec<f64> = x0.iter().zip(f0).map(|(&v, &d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; x0.len()];
    field.eval(h0, &x1, &mut f1);
    let d2 = (x0
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(&v, (&a, &b))| ((b - a) / sc(v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Zero;
    impl VectorField for Zero {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _: f64, _: &[f64], dx: &mut [f64]) {
            dx.fill(0.0);
        }
    }

    struct Decay;
    impl VectorField for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
    }

    struct Blowup;
    impl VectorField for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = x[0] * x[0];
        }
    }

    #[test]
    fn zero_field_is_constant() {
        let tr = integrate(&Zero, &[0.3, -1.0], 2.0, &OdeOptions::default()).unwrap();
        assert_eq!(tr.t[0], 0.0);
        assert!(tr.x.iter().all(|x| x == &[0.3, -1.0]));
        assert_eq!(tr.t_end(), 2.0);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let tr = integrate(&Decay, &[1.0], 3.0, &OdeOptions::default()).unwrap();
        assert!((tr.last()[0] - (-3.0f64).exp()).abs() < 1e-9);
        assert!(tr.t.windows(2).all(|w| w[1] > w[0]));
        let mid = tr.interpolate(1.234)[0];
        assert!((mid - (-1.234f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn blowup_reports_time() {
        match integrate(&Blowup, &[1.0], 2.0, &OdeOptions::default()) {
            Err(OdeError::StepSizeUnderflow { t, .. }) | Err(OdeError::NonFinite { t }) => {
                assert!((t - 1.0).abs() < 1e-3, "blow-up near t=1, got {t}")
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn observer_stops_early() {
        let tr = integrate_observed(&Decay, &[1.0], 10.0, &OdeOptions::default(), |_, x| {
            if x[0] < 0.5 { Control::Stop } else { Control::Continue }
        })
        .unwrap();
        assert!(tr.t_end() < 10.0);
        assert!(tr.last()[0] < 0.5);
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        assert_eq!(integrate(&Decay, &[1.0], 0.0, &OdeOptions::default()), Err(OdeError::BadInterval(0.0)));
    }
}
