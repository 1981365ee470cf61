//! Adaptive explicit Runge-Kutta stepper (Dormand-Prince 5(4), embedded
//! error estimate, FSAL). Backward integration is supported by passing
//! t1 < t0.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RkOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
}

impl Default for RkOptions {
    fn default() -> Self {
        RkOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_step: f64::INFINITY,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [
    1.0 / 5.0,
    3.0 / 10.0,
    4.0 / 5.0,
    8.0 / 9.0,
    1.0,
    1.0,
];
// 5th-order weights equal the last row of A (FSAL); 4th-order weights below.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate dy/dt = f(t, y) from t0 to t1. `on_step` is called after each
/// accepted step with (t, y, dy/dt) and may abort the integration by
/// returning an error.
pub fn integrate<F, S>(
    mut f: F,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: &RkOptions,
    mut on_step: S,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    S: FnMut(f64, &[f64], &[f64]) -> Result<()>,
{
    let dim = y0.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.to_vec());
    }
    let dir = span.signum();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    f(t, &y, &mut k[0])?;
    on_step(t, &y, &k[0])?;

    let mut h = (span.abs() / 100.0).min(opts.max_step).min(0.1).max(1e-10) * dir;
    let mut y_trial = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut err_vec = vec![0.0; dim];

    let t_end_reached = |t: f64| (t - t1) * dir >= 0.0;

    while !t_end_reached(t) {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() < 1e-15 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow { t });
        }

        for stage in 0..6 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    acc += A[stage][j] * kj[i];
                }
                y_trial[i] = y[i] + h * acc;
            }
            f(t + C[stage] * h, &y_trial, &mut k[stage + 1])?;
        }
        // 5th-order solution is the last stage input (FSAL).
        y5.copy_from_slice(&y_trial);
        for i in 0..dim {
            let mut acc4 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc4 += B4[j] * kj[i];
            }
            err_vec[i] = y5[i] - (y[i] + h * acc4);
        }

        let mut err_norm: f64 = 0.0;
        for i in 0..dim {
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
            err_norm = err_norm.max((err_vec[i] / scale).abs());
        }

        if err_norm <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y5);
            k.swap(0, 6);
            on_step(t, &y, &k[0])?;
        }

        let factor = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * factor).clamp(-opts.max_step, opts.max_step);
        if h == 0.0 {
            h = 1e-14 * dir;
        }
    }

    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let opts = RkOptions::default();
        let y = integrate(
            |_t, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            &[1.0],
            0.0,
            3.0,
            &opts,
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn backward_integration_returns_to_start() {
        let opts = RkOptions::default();
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0] + 0.1 * t;
            Ok(())
        };
        let fwd = integrate(rhs, &[1.0, 0.0], 0.0, 5.0, &opts, |_, _, _| Ok(())).unwrap();
        let back = integrate(rhs, &fwd, 5.0, 0.0, &opts, |_, _, _| Ok(())).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-9);
        assert!(back[1].abs() < 1e-9);
    }
}
