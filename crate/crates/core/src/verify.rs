//! Direct-integration checks of the first-order predictions: locating the
//! stable/unstable invariant graphs over the pendulum energy chart, measuring
//! the graph splitting, and measuring the action jump along a homoclinic
//! excursion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melnikov::{
    find_critical_tau_scan, grad_angle_potential, melnikov_vector, NewtonOptions, PhasePoint,
};
use crate::model::{AugmentedState, SystemConfig};
use crate::rk::{self, RkOptions};
use crate::separatrix::SeparatrixOrbit;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: Option<f64>,
    /// Shadowing-time multiplier: graphs are resolved by flowing for
    /// transit_factor * log(1/eps) / lambda_plus.
    pub transit_factor: f64,
    /// Convergence tolerance of the graph shooting iteration.
    pub shoot_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_step: None,
            transit_factor: 3.0,
            shoot_tol: 1e-10,
        }
    }
}

impl IntegratorConfig {
    fn rk_options(&self) -> RkOptions {
        RkOptions {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_step: self.max_step.unwrap_or(f64::INFINITY),
        }
    }

    pub fn transit_time(&self, eps: f64, lambda_plus: f64) -> f64 {
        self.transit_factor * (1.0 / eps.abs().max(1e-300)).ln() / lambda_plus
    }
}

fn flatten(state: &AugmentedState) -> Vec<f64> {
    let mut y = Vec::with_capacity(
        2 * state.p.len() + state.action.len() + state.angle.len() + state.clock.len(),
    );
    y.extend_from_slice(&state.p);
    y.extend_from_slice(&state.q);
    y.extend_from_slice(&state.action);
    y.extend_from_slice(&state.angle);
    y.extend_from_slice(&state.clock);
    y
}

fn unflatten(cfg: &SystemConfig, y: &[f64]) -> AugmentedState {
    let n = cfg.n();
    let d = cfg.d();
    let m = cfg.clock.dim();
    AugmentedState {
        p: y[0..n].to_vec(),
        q: y[n..2 * n].to_vec(),
        action: y[2 * n..2 * n + d].to_vec(),
        angle: y[2 * n + d..2 * n + 2 * d].to_vec(),
        clock: y[2 * n + 2 * d..2 * n + 2 * d + m].to_vec(),
    }
}

/// Flow the perturbed system from t=0 to t=t1 (either sign). Angles are kept
/// unwrapped during integration and reduced only in the returned state.
pub fn integrate(
    cfg: &SystemConfig,
    state: &AugmentedState,
    t1: f64,
    eps: f64,
    icfg: &IntegratorConfig,
) -> Result<AugmentedState> {
    let y0 = flatten(state);
    let y1 = rk::integrate(
        |_t, y: &[f64], dy: &mut [f64]| {
            let s = unflatten(cfg, y);
            let field = cfg.perturbed_field(&s, eps)?;
            let mut k = 0;
            for block in [&field.p, &field.q, &field.action, &field.angle, &field.clock] {
                dy[k..k + block.len()].copy_from_slice(block);
                k += block.len();
            }
            Ok(())
        },
        &y0,
        0.0,
        t1,
        &icfg.rk_options(),
        |_: f64, _: &[f64], _: &[f64]| Ok(()),
    )?;
    let raw = unflatten(cfg, &y1);
    Ok(AugmentedState::new(
        raw.p, raw.q, raw.action, raw.angle, raw.clock,
    ))
}

/// Map energy-chart coordinates (P, tau) at slow phase (I, phi, eta) to a
/// full state: from the separatrix point of each pendulum, move along the
/// energy gradient until the pendulum energy equals the requested value.
pub fn chart_to_state(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    energies: &[f64],
    tau: &[f64],
    phase: &PhasePoint,
) -> Result<AugmentedState> {
    let n = cfg.n();
    if energies.len() != n || tau.len() != n {
        return Err(Error::DimensionMismatch {
            what: "chart coordinates",
            expected: n,
            got: energies.len().max(tau.len()),
        });
    }
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let sep = &orb.penduli[i];
        let (p0, q0) = sep.point(tau[i]);
        let sign = cfg.penduli.signs[i];
        let gp = sign * p0;
        let gq = sign * sep.potential.d1(q0);
        let norm = (gp * gp + gq * gq).sqrt();
        if norm < 1e-12 {
            return Err(Error::ChartDegenerate {
                index: i,
                grad_norm: norm,
            });
        }
        let (up, uq) = (gp / norm, gq / norm);
        // Newton on g(t) = P_i(p0 + t up, q0 + t uq) - target; g'(0) = |grad|.
        let mut t = energies[i] / norm;
        // The chart is a graph over a tube around the separatrix; a first
        // step of order one means the gradient has decayed below the target
        // energy scale and the fibre no longer reaches it transversally.
        if t.abs() > 0.1 {
            return Err(Error::ChartDegenerate {
                index: i,
                grad_norm: norm,
            });
        }
        for _ in 0..60 {
            let pp = p0 + t * up;
            let qq = q0 + t * uq;
            let g = cfg.pendulum_energy(i, pp, qq)? - energies[i];
            if g.abs() <= 1e-13 * (1.0 + energies[i].abs()) {
                break;
            }
            let dg = sign * (pp * up + sep.potential.d1(qq) * uq);
            if dg.abs() < 1e-14 {
                return Err(Error::ChartDegenerate {
                    index: i,
                    grad_norm: dg.abs(),
                });
            }
            t -= g / dg;
        }
        let pp = p0 + t * up;
        let qq = q0 + t * uq;
        let g = cfg.pendulum_energy(i, pp, qq)? - energies[i];
        if g.abs() > 1e-10 * (1.0 + energies[i].abs()) {
            return Err(Error::ChartDegenerate {
                index: i,
                grad_norm: norm,
            });
        }
        p.push(pp);
        q.push(qq);
    }
    Ok(AugmentedState::new(
        p,
        q,
        phase.action.clone(),
        phase.angle.clone(),
        phase.clock.clone(),
    ))
}

/// Inverse chart: pendulum energies and the orthogonal projection of each
/// (p_i, q_i) onto the separatrix time parameter.
pub fn state_to_chart(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    state: &AugmentedState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let energies = cfg.pendulum_energies(state);
    let mut tau = Vec::with_capacity(cfg.n());
    for i in 0..cfg.n() {
        let sep = &orb.penduli[i];
        let span = 20.0 / sep.lambda;
        // coarse scan for the closest separatrix point, then Newton on the
        // orthogonality condition (x - sep(s)) . sep'(s) = 0
        let mut best = (f64::INFINITY, 0.0);
        let steps = 400;
        for k in 0..=steps {
            let s = -span + 2.0 * span * k as f64 / steps as f64;
            let (p0, q0) = sep.point(s);
            let dp = state.p[i] - p0;
            let dq = crate::model::circle_diff(state.q[i] - q0);
            let d2 = dp * dp + dq * dq;
            if d2 < best.0 {
                best = (d2, s);
            }
        }
        let mut s = best.1;
        for _ in 0..50 {
            let (p0, q0) = sep.point(s);
            let (vp, vq) = sep.velocity(s);
            let dp = state.p[i] - p0;
            let dq = crate::model::circle_diff(state.q[i] - q0);
            let g = dp * vp + dq * vq;
            // g'(s) ~ -(vp^2 + vq^2) to leading order near the orbit
            let dg = -(vp * vp + vq * vq);
            if dg.abs() < 1e-14 {
                break;
            }
            let step = g / dg;
            s -= step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        tau.push(s);
    }
    Ok((energies, tau))
}

/// A point of an invariant graph: the pendulum energies P = Psi(tau, I, phi,
/// eta; eps) at which the chart point lies on the stable (or unstable)
/// manifold of the perturbed cylinder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphPoint {
    pub energies: Vec<f64>,
    pub tau: Vec<f64>,
    pub eps: f64,
    pub transit_time: f64,
    pub residual: f64,
}

/// Per-pendulum side classification of a shot orbit: on its pass by the
/// saddle, the orbit either rotates over it (the unwrapped q_i crosses the
/// next cell edge in the travel direction) or librates back into the eye
/// (p_i reverses against its initial sign). Which event fires first tells
/// the side of the invariant graph the shot started on; orbits too close to
/// the graph fire neither within the horizon and are returned as class 0.
fn classify_exits(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    x0: &AugmentedState,
    t1: f64,
    eps: f64,
    icfg: &IntegratorConfig,
) -> Result<Vec<i8>> {
    let n = cfg.n();
    let mut class = vec![0i8; n];
    let mut p_sign = vec![0.0; n];
    let mut edge = vec![0.0; n];
    let mut travel = vec![0.0; n];
    let mut p_margin = vec![0.0; n];
    for i in 0..n {
        p_sign[i] = if x0.p[i] >= 0.0 { 1.0 } else { -1.0 };
        travel[i] = cfg.penduli.signs[i] * p_sign[i] * t1.signum();
        edge[i] = if travel[i] > 0.0 {
            x0.q[i].floor() + 1.0
        } else {
            x0.q[i].ceil() - 1.0
        };
        p_margin[i] = 0.05 * orb.penduli[i].apex_p.abs();
    }
    let y0 = flatten(x0);
    let result = rk::integrate(
        |_t, y: &[f64], dy: &mut [f64]| {
            let s = unflatten(cfg, y);
            let field = cfg.perturbed_field(&s, eps)?;
            let mut k = 0;
            for block in [&field.p, &field.q, &field.action, &field.angle, &field.clock] {
                dy[k..k + block.len()].copy_from_slice(block);
                k += block.len();
            }
            Ok(())
        },
        &y0,
        0.0,
        t1,
        &icfg.rk_options(),
        |t: f64, y: &[f64], _dy: &[f64]| {
            let mut all_done = true;
            for i in 0..n {
                if class[i] != 0 {
                    continue;
                }
                if (y[n + i] - edge[i]) * travel[i] > 0.05 {
                    class[i] = 1; // rotation: passed over the saddle
                } else if y[i] * p_sign[i] < -p_margin[i] {
                    class[i] = -1; // libration: turned back into the eye
                } else {
                    all_done = false;
                }
            }
            if all_done {
                Err(Error::TubeExit {
                    index: 0,
                    exit_time: t,
                    value: 0.0,
                })
            } else {
                Ok(())
            }
        },
    );
    match result {
        Ok(_) | Err(Error::TubeExit { .. }) => Ok(class),
        Err(e) => Err(e),
    }
}

/// The graph value is found by bisection on the exit side of each pendulum:
/// the locus separating the two exits is exactly the stable (or unstable)
/// manifold. Robust against the spurious finite-horizon roots a Newton
/// shooting iteration falls into when seeded more than about
/// exp(-lambda T) away from the graph.
fn graph_value(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    eps: f64,
    direction: f64,
    icfg: &IntegratorConfig,
) -> Result<GraphPoint> {
    let n = cfg.n();
    let t1 = direction * icfg.transit_time(eps, orb.saddle.lambda_plus);

    // Unperturbed manifolds coincide with the separatrix: the graph value is
    // the zero of the energy chart, exactly.
    if eps == 0.0 {
        return Ok(GraphPoint {
            energies: vec![0.0; n],
            tau: tau.to_vec(),
            eps,
            transit_time: t1,
            residual: 0.0,
        });
    }

    let classify = |energies: &[f64]| -> Result<Vec<i8>> {
        let x = chart_to_state(cfg, orb, energies, tau, phase)?;
        classify_exits(cfg, orb, &x, t1, eps, icfg)
    };

    // establish a bracket with opposite exit sides in every component
    let mut width = 0.02f64;
    let (mut lo, mut hi);
    let (mut class_lo, mut class_hi);
    loop {
        lo = vec![-width; n];
        hi = vec![width; n];
        class_lo = classify(&lo)?;
        class_hi = classify(&hi)?;
        if (0..n).all(|i| class_lo[i] != 0 && class_hi[i] != 0 && class_lo[i] != class_hi[i]) {
            break;
        }
        width *= 4.0;
        if width > 0.5 {
            return Err(Error::NewtonDiverged {
                iterations: 0,
                residual: width,
            });
        }
    }

    for _ in 0..60 {
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let class_mid = classify(&mid)?;
        let mut all_tight = true;
        for i in 0..n {
            if class_mid[i] == 0 {
                // no exit within the horizon: mid is within e^(-lambda T)
                // of the graph in this component
                lo[i] = mid[i];
                hi[i] = mid[i];
            } else if class_mid[i] == class_hi[i] {
                hi[i] = mid[i];
            } else {
                lo[i] = mid[i];
            }
            if hi[i] - lo[i] > 1e-13 {
                all_tight = false;
            }
        }
        if all_tight {
            break;
        }
    }
    let energies: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();

    // report the finite-horizon defect of the located value
    let rest = AugmentedState::saddle_rest(
        n,
        phase.action.clone(),
        phase.angle.clone(),
        phase.clock.clone(),
    );
    let rest_end = integrate(cfg, &rest, t1, eps, icfg)?;
    let base = DVector::from_vec(cfg.pendulum_energies(&rest_end));
    let x = chart_to_state(cfg, orb, &energies, tau, phase)?;
    let end = integrate(cfg, &x, t1, eps, icfg)?;
    let residual = (DVector::from_vec(cfg.pendulum_energies(&end)) - base).norm();

    Ok(GraphPoint {
        energies,
        tau: tau.to_vec(),
        eps,
        transit_time: t1,
        residual,
    })
}

/// Energy-graph value of the stable manifold (forward shadowing).
pub fn stable_graph_value(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    eps: f64,
    icfg: &IntegratorConfig,
) -> Result<GraphPoint> {
    graph_value(cfg, orb, tau, phase, eps, 1.0, icfg)
}

/// Energy-graph value of the unstable manifold (backward shadowing).
pub fn unstable_graph_value(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    eps: f64,
    icfg: &IntegratorConfig,
) -> Result<GraphPoint> {
    graph_value(cfg, orb, tau, phase, eps, -1.0, icfg)
}

/// Least-squares fit of log|residual| against log eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub stderr: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn order_fit(eps: &[f64], residual: &[f64]) -> Result<OrderFit> {
    if eps.len() != residual.len() || eps.len() < 3 {
        return Err(Error::Invalid(
            "order fit needs at least three matched samples".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(residual)
        .map(|(e, r)| (e.ln(), r.abs().max(1e-300).ln()))
        .collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Invalid("degenerate abscissae in order fit".into()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let ss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - slope * p.0 - intercept;
            r * r
        })
        .sum();
    let stderr = if pts.len() > 2 {
        (ss / (m - 2.0) / (sxx - sx * sx / m)).sqrt()
    } else {
        0.0
    };
    Ok(OrderFit {
        slope,
        stderr,
        points: pts,
    })
}

/// Measured graph splitting Psi^u - Psi^s against the first-order prediction
/// eps * M^v over a list of eps values, with the order of the residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingReport {
    pub tau: Vec<f64>,
    pub eps: Vec<f64>,
    /// measured splitting per eps, one entry per pendulum
    pub measured: Vec<Vec<f64>>,
    /// eps * M^v per eps
    pub predicted: Vec<Vec<f64>>,
    /// max-norm of measured - predicted per eps
    pub residual: Vec<f64>,
    pub fit: OrderFit,
}

pub fn measure_splitting(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    eps_list: &[f64],
    icfg: &IntegratorConfig,
) -> Result<SplittingReport> {
    let mv = melnikov_vector(cfg, orb, tau, phase, 1e-12)?.value;
    let mut measured = Vec::with_capacity(eps_list.len());
    let mut predicted = Vec::with_capacity(eps_list.len());
    let mut residual = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let unstable = unstable_graph_value(cfg, orb, tau, phase, eps, icfg)?;
        let stable = stable_graph_value(cfg, orb, tau, phase, eps, icfg)?;
        let split: Vec<f64> = unstable
            .energies
            .iter()
            .zip(&stable.energies)
            .map(|(u, s)| u - s)
            .collect();
        let pred: Vec<f64> = mv.iter().map(|v| eps * v).collect();
        let res = split
            .iter()
            .zip(&pred)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        measured.push(split);
        predicted.push(pred);
        residual.push(res);
    }
    let fit = order_fit(eps_list, &residual)?;
    Ok(SplittingReport {
        tau: tau.to_vec(),
        eps: eps_list.to_vec(),
        measured,
        predicted,
        residual,
        fit,
    })
}

/// Measured action change across a homoclinic excursion against the
/// first-order prediction from the reduced-potential angle gradient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpReport {
    pub eps: f64,
    pub tau_star: Vec<f64>,
    /// tau at which the homoclinic point was located
    pub tau_homoclinic: Vec<f64>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    pub relative_error: f64,
}

/// Locate a homoclinic point near the critical point tau* by solving
/// Psi^u(tau) = Psi^s(tau), then measure the action change of its orbit
/// relative to the cylinder orbit over [-T, T].
pub fn action_jump(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    phase: &PhasePoint,
    eps: f64,
    tau_seed: Option<&[f64]>,
    icfg: &IntegratorConfig,
    newton: &NewtonOptions,
) -> Result<JumpReport> {
    let n = cfg.n();
    let crit = match tau_seed {
        Some(seed) => crate::melnikov::find_critical_tau(cfg, orb, seed, phase, newton)?,
        None => find_critical_tau_scan(cfg, orb, phase, newton)?,
    };

    // Root of Psi^u - Psi^s in tau, seeded at tau*. The seed is within
    // O(eps) of the root, so a short damped Newton suffices.
    let gap = |tau: &[f64]| -> Result<DVector<f64>> {
        let u = unstable_graph_value(cfg, orb, tau, phase, eps, icfg)?;
        let s = stable_graph_value(cfg, orb, tau, phase, eps, icfg)?;
        Ok(DVector::from_iterator(
            n,
            u.energies.iter().zip(&s.energies).map(|(a, b)| a - b),
        ))
    };
    let mut tau = crit.tau_star.clone();
    let mut g = gap(&tau)?;
    let fd = 1e-5;
    for iter in 0..25 {
        if g.norm() <= 10.0 * icfg.shoot_tol {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut probe = tau.clone();
            probe[col] += fd;
            let gp = gap(&probe)?;
            for row in 0..n {
                jac[(row, col)] = (gp[row] - g[row]) / fd;
            }
        }
        let step = jac.lu().solve(&(-&g)).ok_or(Error::NewtonDiverged {
            iterations: iter,
            residual: g.norm(),
        })?;
        for (t, s) in tau.iter_mut().zip(step.iter()) {
            *t += s;
        }
        g = gap(&tau)?;
    }
    if g.norm() > 100.0 * icfg.shoot_tol {
        return Err(Error::NewtonDiverged {
            iterations: 25,
            residual: g.norm(),
        });
    }

    // The homoclinic representative. Its forward and backward asymptotic
    // cylinder orbits are recovered by flowing for half the horizon,
    // projecting onto the cylinder, and flowing the projection back to
    // t = 0. The representative carries a transverse error comparable to
    // exp(-lambda * horizon) from the finite-horizon graph values; over a
    // flight of length T that error is amplified by exp(lambda * T), while
    // the projection tail decays like exp(-lambda * T). Half the horizon
    // balances the two, keeping both well below the first-order jump.
    let psi = stable_graph_value(cfg, orb, &tau, phase, eps, icfg)?;
    let x_hat = chart_to_state(cfg, orb, &psi.energies, &tau, phase)?;
    let t_span = 0.5 * icfg.transit_time(eps, orb.saddle.lambda_plus);
    let project = |s: &AugmentedState| {
        AugmentedState::saddle_rest(n, s.action.clone(), s.angle.clone(), s.clock.clone())
    };
    let fwd = integrate(cfg, &x_hat, t_span, eps, icfg)?;
    let a_plus = integrate(cfg, &project(&fwd), -t_span, eps, icfg)?;
    let bwd = integrate(cfg, &x_hat, -t_span, eps, icfg)?;
    let a_minus = integrate(cfg, &project(&bwd), t_span, eps, icfg)?;
    let measured: Vec<f64> = (0..cfg.d())
        .map(|j| a_plus.action[j] - a_minus.action[j])
        .collect();

    // First-order prediction from the angle gradient of the potential at the
    // critical point over the backward-asymptote coordinates: the jump
    // formula is parameterized by the incoming cylinder orbit, whose action
    // and angle differ from the homoclinic point's by O(eps).
    let phase_minus = PhasePoint::new(
        a_minus.action.clone(),
        a_minus.angle.clone(),
        a_minus.clock.clone(),
    );
    let crit_minus =
        crate::melnikov::find_critical_tau(cfg, orb, &crit.tau_star, &phase_minus, newton)?;
    let dphi = grad_angle_potential(cfg, orb, &crit_minus.tau_star, &phase_minus, newton.quad_tol)?;
    let predicted: Vec<f64> = dphi.iter().map(|v| eps * v).collect();

    let scale = predicted
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let relative_error = measured
        .iter()
        .zip(&predicted)
        .map(|(m, p)| (m - p).abs())
        .fold(0.0, f64::max)
        / scale;

    Ok(JumpReport {
        eps,
        tau_star: crit.tau_star,
        tau_homoclinic: tau,
        measured,
        predicted,
        relative_error,
    })
}
