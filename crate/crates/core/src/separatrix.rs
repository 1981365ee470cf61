//! Homoclinic (separatrix) orbits of the penduli and the n-parameter
//! family (p0(tau + sigma), q0(tau + sigma)).
//!
//! The origin of the orbit parameter is normalized at the apex, the point
//! of maximal |p| along the loop. Pure-cosine potentials use the closed
//! form; anything else is continued numerically from the unstable
//! eigendirection of the saddle.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{circle_dist, wrap_angle, PenduliSpec, Potential};
use crate::rk::{self, RkOptions};

const PI: f64 = std::f64::consts::PI;

/// Saddle decay rates lambda_i = sqrt(-V_i''(0)) and lambda_+ = min_i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleData {
    pub lambda: Vec<f64>,
    pub lambda_plus: f64,
}

impl SaddleData {
    pub fn from_penduli(spec: &PenduliSpec) -> Result<Self> {
        let mut lambda = Vec::with_capacity(spec.n());
        for (i, v) in spec.potentials.iter().enumerate() {
            let vpp = v.d2(0.0);
            if vpp >= 0.0 {
                return Err(Error::SaddleCondition {
                    index: i,
                    reason: format!("V''(0) = {vpp:.3e} >= 0"),
                });
            }
            lambda.push((-vpp).sqrt());
        }
        let lambda_plus = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(SaddleData {
            lambda,
            lambda_plus,
        })
    }
}

#[derive(Debug, Clone)]
enum OrbitRepr {
    /// p0(s) = p_dir * (lambda/pi) sech(lambda s),
    /// q0(s) = q_dir * (2/pi) atan(exp(lambda s)) (unwrapped).
    ClosedForm { p_dir: f64, q_dir: f64 },
    /// Dense Hermite table on the natural-time grid plus exponential tail
    /// models beyond both edges. q is stored unwrapped.
    Table {
        s: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
        dp: Vec<f64>,
        dq: Vec<f64>,
        /// unwrapped limit of q as s -> +inf (0 is the limit at -inf)
        q_limit: f64,
    },
}

/// Separatrix of one pendulum.
#[derive(Debug, Clone)]
pub struct PendulumSeparatrix {
    pub lambda: f64,
    pub sign: f64,
    /// +1 takes the p > 0 loop, -1 the mirror loop.
    pub branch: f64,
    pub potential: Potential,
    /// apex point (p*, q* mod 1), the maximal-|p| point, sitting at s = 0
    pub apex_p: f64,
    pub apex_q: f64,
    /// fitted decay amplitude: max over samples of ||.||_inf * e^{lambda|s|}
    pub decay_amplitude: f64,
    repr: OrbitRepr,
}

impl PendulumSeparatrix {
    /// (p0(s), unwrapped q0(s)).
    pub fn point_unwrapped(&self, s: f64) -> (f64, f64) {
        match &self.repr {
            OrbitRepr::ClosedForm { p_dir, q_dir } => {
                let z = self.lambda * s;
                if z > 500.0 {
                    (0.0, *q_dir)
                } else if z < -500.0 {
                    (0.0, 0.0)
                } else {
                    (
                        p_dir * (self.lambda / PI) / z.cosh(),
                        q_dir * (2.0 / PI) * z.exp().atan(),
                    )
                }
            }
            OrbitRepr::Table {
                s: grid,
                p,
                q,
                dp,
                dq,
                q_limit,
            } => {
                let first = grid[0];
                let last = *grid.last().unwrap();
                if s < first {
                    let decay = (-self.lambda * (first - s)).exp();
                    (p[0] * decay, q[0] * decay)
                } else if s > last {
                    let m = grid.len() - 1;
                    let decay = (-self.lambda * (s - last)).exp();
                    (p[m] * decay, q_limit - (q_limit - q[m]) * decay)
                } else {
                    let idx = match grid.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
                        Ok(i) => return (p[i], q[i]),
                        Err(i) => i - 1,
                    };
                    let h = grid[idx + 1] - grid[idx];
                    let u = (s - grid[idx]) / h;
                    (
                        hermite(u, h, p[idx], p[idx + 1], dp[idx], dp[idx + 1]),
                        hermite(u, h, q[idx], q[idx + 1], dq[idx], dq[idx + 1]),
                    )
                }
            }
        }
    }

    /// (p0(s), q0(s) mod 1).
    pub fn point(&self, s: f64) -> (f64, f64) {
        let (p, q) = self.point_unwrapped(s);
        (p, wrap_angle(q))
    }

    /// Orbit velocity (dp0/ds, dq0/ds) from the pendulum equations.
    pub fn velocity(&self, s: f64) -> (f64, f64) {
        let (p, q) = self.point(s);
        (-self.sign * self.potential.d1(q), self.sign * p)
    }

    /// max(|p0(s)|, dist(q0(s), 0)).
    pub fn deviation(&self, s: f64) -> f64 {
        let (p, q) = self.point(s);
        p.abs().max(circle_dist(q))
    }
}

fn hermite(u: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    y0 * (2.0 * u3 - 3.0 * u2 + 1.0)
        + y1 * (-2.0 * u3 + 3.0 * u2)
        + h * (d0 * (u3 - 2.0 * u2 + u) + d1 * (u3 - u2))
}

/// The full n-pendulum homoclinic family.
#[derive(Debug, Clone)]
pub struct SeparatrixOrbit {
    pub penduli: Vec<PendulumSeparatrix>,
    pub saddle: SaddleData,
}

/// Continuation start distance from the saddle.
const DELTA: f64 = 1e-8;
/// Return-detection radius. The continued orbit carries an O(1e-10) energy
/// defect from the start offset and the integration tolerance, so its
/// closest approach to the saddle is ~1e-5; demanding a return to the start
/// distance DELTA would never trigger. The exponential tail model takes over
/// beyond this radius.
const RETURN_DELTA: f64 = 1e-4;
/// Table resolution in units of 1/lambda.
const TABLE_STEP: f64 = 0.02;

/// Construct the separatrix family, taking the p > 0 branch of each loop.
pub fn build_separatrix(spec: &PenduliSpec) -> Result<SeparatrixOrbit> {
    build_separatrix_with_branches(spec, &vec![1.0; spec.n()])
}

pub fn build_separatrix_with_branches(
    spec: &PenduliSpec,
    branches: &[f64],
) -> Result<SeparatrixOrbit> {
    if branches.len() != spec.n() {
        return Err(Error::DimensionMismatch {
            what: "branch selection",
            expected: spec.n(),
            got: branches.len(),
        });
    }
    let saddle = SaddleData::from_penduli(spec)?;
    let mut penduli = Vec::with_capacity(spec.n());
    for i in 0..spec.n() {
        penduli.push(build_pendulum(
            &spec.potentials[i],
            spec.signs[i],
            branches[i],
            saddle.lambda[i],
            i,
        )?);
    }
    Ok(SeparatrixOrbit { penduli, saddle })
}

fn build_pendulum(
    potential: &Potential,
    sign: f64,
    branch: f64,
    lambda: f64,
    index: usize,
) -> Result<PendulumSeparatrix> {
    let mut orbit = if let Some(_amplitude) = potential.is_pure_cosine() {
        // p > 0 branch: q increases for sign +1 and decreases for sign -1.
        let p_dir = branch;
        let q_dir = sign * branch;
        PendulumSeparatrix {
            lambda,
            sign,
            branch,
            potential: potential.clone(),
            apex_p: branch * lambda / PI,
            apex_q: wrap_angle(q_dir * 0.5),
            decay_amplitude: 0.0,
            repr: OrbitRepr::ClosedForm { p_dir, q_dir },
        }
    } else {
        continue_numerically(potential, sign, branch, lambda, index)?
    };
    orbit.decay_amplitude = fit_decay_amplitude(&orbit);
    Ok(orbit)
}

/// Numeric continuation: start at distance DELTA from the saddle along the
/// unstable eigendirection, integrate until return to the saddle
/// neighborhood, and shift time so the apex sits at s = 0.
fn continue_numerically(
    potential: &Potential,
    sign: f64,
    branch: f64,
    lambda: f64,
    index: usize,
) -> Result<PendulumSeparatrix> {
    // Unstable eigenvector of the linearization at the origin is
    // (q, p) ~ (1, sign * lambda); the branch picks the orientation with
    // branch * p > 0.
    let norm = (1.0 + lambda * lambda).sqrt();
    let q_dir = sign * branch;
    let q0 = q_dir * DELTA / norm;
    let p0 = q_dir * sign * lambda * DELTA / norm;

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        dy[0] = -sign * potential.d1(y[1]); // dp/ds
        dy[1] = sign * y[0]; // dq/ds
        Ok(())
    };

    let opts = RkOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        max_step: TABLE_STEP / lambda,
    };

    let budget = 1000.0 / lambda;
    let mut ts: Vec<f64> = Vec::new();
    let mut ps: Vec<f64> = Vec::new();
    let mut qs: Vec<f64> = Vec::new();
    let mut dps: Vec<f64> = Vec::new();
    let mut dqs: Vec<f64> = Vec::new();
    let mut left_neighborhood = false;
    let mut returned_at: Option<f64> = None;

    let result = rk::integrate(
        rhs,
        &[p0, q0],
        0.0,
        budget,
        &opts,
        |t, y, dy| {
            let dev = y[0].abs().max(circle_dist(y[1]));
            ts.push(t);
            ps.push(y[0]);
            qs.push(y[1]);
            dps.push(dy[0]);
            dqs.push(dy[1]);
            if dev > 100.0 * RETURN_DELTA {
                left_neighborhood = true;
            } else if left_neighborhood && dev <= RETURN_DELTA {
                returned_at = Some(t);
                return Err(Error::Invalid("return detected".into()));
            }
            Ok(())
        },
    );
    match (result, returned_at) {
        (_, Some(_)) => {}
        (Err(e), None) => return Err(e),
        (Ok(_), None) => {
            return Err(Error::NoHomoclinicReturn {
                index,
                budget,
            })
        }
    }

    // Apex: the maximal-|p| node, refined by bisection on d|p|/ds = 0.
    let mut apex_idx = 0;
    for (k, p) in ps.iter().enumerate() {
        if p.abs() > ps[apex_idx].abs() {
            apex_idx = k;
        }
    }
    let apex_t = refine_apex(potential, sign, ts[apex_idx], ps[apex_idx], qs[apex_idx])?;

    let s: Vec<f64> = ts.iter().map(|t| t - apex_t).collect();
    let apex_state = rk::integrate(
        rhs,
        &[ps[apex_idx], qs[apex_idx]],
        ts[apex_idx],
        apex_t,
        &opts,
        |_, _, _| Ok(()),
    )?;

    let q_limit = q_dir * 1.0;
    Ok(PendulumSeparatrix {
        lambda,
        sign,
        branch,
        potential: potential.clone(),
        apex_p: apex_state[0],
        apex_q: wrap_angle(apex_state[1]),
        decay_amplitude: 0.0,
        repr: OrbitRepr::Table {
            s,
            p: ps,
            q: qs,
            dp: dps,
            dq: dqs,
            q_limit,
        },
    })
}

/// Solve dp/ds = -sign V'(q(s)) = 0 near the apex node by integrating the
/// pendulum a short way and bisecting on V'(q).
fn refine_apex(potential: &Potential, sign: f64, t_node: f64, p: f64, q: f64) -> Result<f64> {
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        dy[0] = -sign * potential.d1(y[1]);
        dy[1] = sign * y[0];
        Ok(())
    };
    let opts = RkOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_step: f64::INFINITY,
    };
    let g = |dt: f64| -> Result<f64> {
        let y = rk::integrate(rhs, &[p, q], 0.0, dt, &opts, |_, _, _| Ok(()))?;
        Ok(potential.d1(y[1]))
    };
    // Bracket the zero of V'(q(t)) around the node.
    let mut a = -0.5;
    let mut b = 0.5;
    let mut ga = g(a)?;
    let gb = g(b)?;
    if ga * gb > 0.0 {
        return Ok(t_node); // already at a flat spot; keep the node
    }
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        let gm = g(m)?;
        if ga * gm <= 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
    }
    Ok(t_node + 0.5 * (a + b))
}

fn fit_decay_amplitude(orbit: &PendulumSeparatrix) -> f64 {
    let span = 40.0 / orbit.lambda;
    let samples = 2001;
    let mut c: f64 = 0.0;
    for k in 0..samples {
        let s = -span + 2.0 * span * k as f64 / (samples - 1) as f64;
        let dev = orbit.deviation(s);
        // Below this level the deviation is dominated by angle-wrapping
        // rounding noise, which the exponential weight would amplify to O(1).
        if dev < 1e-9 {
            continue;
        }
        let weight = (orbit.lambda * s.abs()).exp();
        c = c.max(dev * weight);
    }
    c
}

impl SeparatrixOrbit {
    pub fn n(&self) -> usize {
        self.penduli.len()
    }

    /// Componentwise family evaluation (p0_i(tau_i + sigma), q0_i(tau_i + sigma)).
    pub fn family_point(&self, tau: &[f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let mut p = Vec::with_capacity(self.n());
        let mut q = Vec::with_capacity(self.n());
        for (i, orbit) in self.penduli.iter().enumerate() {
            let (pi, qi) = orbit.point(tau[i] + sigma);
            p.push(pi);
            q.push(qi);
        }
        (p, q)
    }

    /// Certified upper bound on the distance of every pendulum separatrix
    /// to the saddle for arguments beyond |sigma|, of the form
    /// 2 C e^{-lambda_+ |sigma|}.
    pub fn tail_bound(&self, sigma: f64) -> f64 {
        let c = self
            .penduli
            .iter()
            .map(|o| o.decay_amplitude)
            .fold(0.0, f64::max);
        2.0 * c * (-self.saddle.lambda_plus * sigma.abs()).exp()
    }

    /// Export the orbit on a uniform grid as CSV (s, p_1..p_n, q_1..q_n).
    pub fn write_csv<W: Write>(&self, out: &mut W, half_width: f64, samples: usize) -> std::io::Result<()> {
        write!(out, "s")?;
        for i in 0..self.n() {
            write!(out, ",p_{i}")?;
        }
        for i in 0..self.n() {
            write!(out, ",q_{i}")?;
        }
        writeln!(out)?;
        for k in 0..samples {
            let s = -half_width + 2.0 * half_width * k as f64 / (samples - 1).max(1) as f64;
            write!(out, "{s:.12e}")?;
            let (p, q) = self.family_point(&vec![0.0; self.n()], s);
            for v in &p {
                write!(out, ",{v:.12e}")?;
            }
            for v in &q {
                write!(out, ",{v:.12e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
