//! Melnikov vector, Melnikov potential, critical points (H3), the reduced
//! potential (H4), partial potentials and the additivity gap.
//!
//! Sign bookkeeping. The potential is
//!   M~(tau, I, phi, eta) = -int [h(separatrix) - h(rest)] dsigma,
//! and the vector is its tau-gradient,
//!   M^v_i = d M~ / d tau_i = int [(X^1 P_i)(separatrix) - (X^1 P_i)(rest)] dsigma,
//! which is exactly the first-order coefficient of the measured splitting
//! Psi^u - Psi^s = eps M^v + O(eps^2). The verify module tests this
//! orientation against direct integration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Var;
use crate::model::{AugmentedState, SystemConfig};
use crate::quad::{self, MelnikovValue};
use crate::separatrix::SeparatrixOrbit;

/// Slow coordinates (I, phi, eta0) at which a Melnikov quantity is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub action: Vec<f64>,
    pub angle: Vec<f64>,
    pub clock: Vec<f64>,
}

impl PhasePoint {
    pub fn new(action: Vec<f64>, angle: Vec<f64>, clock: Vec<f64>) -> Self {
        PhasePoint {
            action,
            angle,
            clock,
        }
    }

    /// Advance the slow coordinates by sigma along the unperturbed flow.
    pub fn advanced(&self, cfg: &SystemConfig, sigma: f64) -> PhasePoint {
        let omega = cfg.rotator.omega(&self.action);
        PhasePoint {
            action: self.action.clone(),
            angle: self
                .angle
                .iter()
                .zip(&omega)
                .map(|(a, w)| a + w * sigma)
                .collect(),
            clock: cfg.clock.advance(&self.clock, sigma),
        }
    }
}

/// Separatrix family point over the advanced slow coordinates.
fn separatrix_state(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    sigma: f64,
    phase: &PhasePoint,
) -> AugmentedState {
    let (p, q) = orb.family_point(tau, sigma);
    let moved = phase.advanced(cfg, sigma);
    AugmentedState::new(p, q, moved.action, moved.angle, moved.clock)
}

/// Saddle rest point over the advanced slow coordinates.
fn rest_state(cfg: &SystemConfig, sigma: f64, phase: &PhasePoint) -> AugmentedState {
    let moved = phase.advanced(cfg, sigma);
    AugmentedState::saddle_rest(cfg.n(), moved.action, moved.angle, moved.clock)
}

/// Integrand of the i-th Melnikov vector component:
/// (X^1 P_i)(separatrix point) - (X^1 P_i)(rest point).
pub fn melnikov_integrand_vector(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    i: usize,
    tau: &[f64],
    sigma: f64,
    phase: &PhasePoint,
) -> Result<f64> {
    cfg.penduli.check_index(i)?;
    let on_sep = cfg.perturbation_on_energy(i, &separatrix_state(cfg, orb, tau, sigma, phase))?;
    let at_rest = cfg.perturbation_on_energy(i, &rest_state(cfg, sigma, phase))?;
    Ok(on_sep - at_rest)
}

/// Truncation window: |sigma| beyond which the exponential tail of the
/// integrand contributes less than tol/2, shifted to cover the tau offsets.
fn window_for(cfg: &SystemConfig, orb: &SeparatrixOrbit, tau: &[f64], tol: f64) -> (f64, f64) {
    let lambda = orb.saddle.lambda_plus;
    let lip = cfg.lipschitz_scale();
    let c = orb.tail_bound(0.0) / 2.0;
    // two-sided tail mass of lip * 2C e^{-lambda s}: 4 lip C e^{-lambda S}/lambda
    let target = (tol / 2.0).max(1e-300);
    let s = ((8.0 * lip * c / (lambda * target)).ln() / lambda).max(5.0 / lambda);
    let tau_span = tau.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let window = s + tau_span;
    let tail = 4.0 * lip * c * (-lambda * s).exp() / lambda;
    (window, tail)
}

/// The n-dimensional Melnikov vector M^v(tau, I, phi, eta0).
pub fn melnikov_vector(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    tol: f64,
) -> Result<MelnikovValue<Vec<f64>>> {
    let (window, tail) = window_for(cfg, orb, tau, tol);
    let mut value = Vec::with_capacity(cfg.n());
    let mut quad_error: f64 = 0.0;
    let per_component_tol = tol / (2.0 * cfg.n() as f64);
    for i in 0..cfg.n() {
        let r = quad::adaptive(
            |sigma| {
                melnikov_integrand_vector(cfg, orb, i, tau, sigma, phase)
                    .expect("index checked above")
            },
            -window,
            window,
            per_component_tol,
        )?;
        value.push(r.value);
        quad_error = quad_error.max(r.error);
    }
    Ok(MelnikovValue {
        value,
        quad_error,
        tail_bound: tail,
        window,
    })
}

/// The Melnikov potential M~(tau, I, phi, eta0); Hamiltonian perturbations only.
pub fn melnikov_potential(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    tol: f64,
) -> Result<MelnikovValue<f64>> {
    let h = cfg.perturbation.hamiltonian()?;
    let (window, tail) = window_for(cfg, orb, tau, tol);
    let r = quad::adaptive(
        |sigma| {
            let sep = separatrix_state(cfg, orb, tau, sigma, phase);
            let rest = rest_state(cfg, sigma, phase);
            -(h.eval(&sep) - h.eval(&rest))
        },
        -window,
        window,
        tol / 2.0,
    )?;
    Ok(MelnikovValue {
        value: r.value,
        quad_error: r.error,
        tail_bound: tail,
        window,
    })
}

/// dM~/dtau by quadrature of the differentiated integrand (independent of
/// the melnikov_vector route).
pub fn grad_tau_potential(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    tol: f64,
) -> Result<Vec<f64>> {
    let h = cfg.perturbation.hamiltonian()?;
    let (window, _) = window_for(cfg, orb, tau, tol);
    let mut grad = Vec::with_capacity(cfg.n());
    for i in 0..cfg.n() {
        let r = quad::adaptive(
            |sigma| {
                let sep = separatrix_state(cfg, orb, tau, sigma, phase);
                let (dp, dq) = orb.penduli[i].velocity(tau[i] + sigma);
                -(h.partial(Var::P { index: i }, &sep) * dp
                    + h.partial(Var::Q { index: i }, &sep) * dq)
            },
            -window,
            window,
            tol / 2.0,
        )?;
        grad.push(r.value);
    }
    Ok(grad)
}

/// dM~/dphi by quadrature (used for the action-jump prediction and the
/// envelope cross-check of the reduced potential).
pub fn grad_angle_potential(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    tol: f64,
) -> Result<Vec<f64>> {
    let h = cfg.perturbation.hamiltonian()?;
    let (window, _) = window_for(cfg, orb, tau, tol);
    let mut grad = Vec::with_capacity(cfg.d());
    for j in 0..cfg.d() {
        let r = quad::adaptive(
            |sigma| {
                let sep = separatrix_state(cfg, orb, tau, sigma, phase);
                let rest = rest_state(cfg, sigma, phase);
                let var = Var::Angle { index: j };
                -(h.partial(var, &sep) - h.partial(var, &rest))
            },
            -window,
            window,
            tol / 2.0,
        )?;
        grad.push(r.value);
    }
    Ok(grad)
}

/// A located zero of the Melnikov vector with its H3 certificate data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub tau_star: Vec<f64>,
    pub residual_norm: f64,
    pub jacobian: Vec<Vec<f64>>,
    pub rank: usize,
    pub condition: f64,
    pub phase: PhasePoint,
    /// Newton residual norms per iteration, for convergence diagnostics.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance_scale: f64,
    pub fd_step: f64,
    pub quad_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 50,
            tolerance_scale: 1.0,
            fd_step: 1e-5,
            quad_tol: 1e-12,
        }
    }
}

fn melnikov_vector_values(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    quad_tol: f64,
) -> Result<DVector<f64>> {
    let v = melnikov_vector(cfg, orb, tau, phase, quad_tol)?;
    Ok(DVector::from_vec(v.value))
}

fn fd_jacobian(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    opts: &NewtonOptions,
) -> Result<DMatrix<f64>> {
    let n = cfg.n();
    let mut jac = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut plus = tau.to_vec();
        let mut minus = tau.to_vec();
        plus[col] += opts.fd_step;
        minus[col] -= opts.fd_step;
        let fp = melnikov_vector_values(cfg, orb, &plus, phase, opts.quad_tol)?;
        let fm = melnikov_vector_values(cfg, orb, &minus, phase, opts.quad_tol)?;
        for row in 0..n {
            jac[(row, col)] = (fp[row] - fm[row]) / (2.0 * opts.fd_step);
        }
    }
    Ok(jac)
}

/// Damped Newton on F(tau) = M^v(tau, .) from the given guess.
pub fn find_critical_tau(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau_guess: &[f64],
    phase: &PhasePoint,
    opts: &NewtonOptions,
) -> Result<CriticalPoint> {
    let n = cfg.n();
    let tol = 1e-10 * opts.tolerance_scale;
    let mut tau = tau_guess.to_vec();
    let mut f = melnikov_vector_values(cfg, orb, &tau, phase, opts.quad_tol)?;
    let mut history = vec![f.norm()];

    for _iter in 0..opts.max_iterations {
        if f.norm() <= tol {
            break;
        }
        let jac = fd_jacobian(cfg, orb, &tau, phase, opts)?;
        let lu = jac.clone().lu();
        let step = lu.solve(&(-&f)).ok_or(Error::DegenerateRoot {
            rank: 0,
            full: n,
        })?;
        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = tau
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + damping * s)
                .collect();
            let f_trial = melnikov_vector_values(cfg, orb, &trial, phase, opts.quad_tol)?;
            if f_trial.norm() < f.norm() {
                tau = trial;
                f = f_trial;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        history.push(f.norm());
        if !accepted {
            return Err(Error::NewtonDiverged {
                iterations: history.len(),
                residual: f.norm(),
            });
        }
    }
    if f.norm() > tol {
        return Err(Error::NewtonDiverged {
            iterations: opts.max_iterations,
            residual: f.norm(),
        });
    }

    let jac = fd_jacobian(cfg, orb, &tau, phase, opts)?;
    let svd = jac.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let sigma_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-8 * sigma_max)
        .count();
    let condition = if sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    Ok(CriticalPoint {
        tau_star: tau,
        residual_norm: f.norm(),
        jacobian: (0..n)
            .map(|r| (0..n).map(|c| jac[(r, c)]).collect())
            .collect(),
        rank,
        condition,
        phase: phase.clone(),
        residual_history: history,
    })
}

/// Coarse grid scan over one effective tau period followed by Newton.
pub fn find_critical_tau_scan(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    phase: &PhasePoint,
    opts: &NewtonOptions,
) -> Result<CriticalPoint> {
    let n = cfg.n();
    let span = effective_tau_period(cfg, phase);
    let points_per_dim: usize = if n == 1 { 16 } else { 8 };
    let total = points_per_dim.pow(n as u32);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for flat in 0..total {
        let mut idx = flat;
        let mut tau = Vec::with_capacity(n);
        for _ in 0..n {
            tau.push(span * (idx % points_per_dim) as f64 / points_per_dim as f64);
            idx /= points_per_dim;
        }
        let f = melnikov_vector_values(cfg, orb, &tau, phase, opts.quad_tol.max(1e-9))?;
        let norm = f.norm();
        if best.as_ref().map_or(true, |(b, _)| norm < *b) {
            best = Some((norm, tau));
        }
    }
    let (_, seed) = best.expect("grid nonempty");
    find_critical_tau(cfg, orb, &seed, phase, opts)
}

/// One effective period of the Melnikov potential along tau: the longest
/// of the rotator periods 1/|omega_j| and the unit clock/time period.
pub fn effective_tau_period(cfg: &SystemConfig, phase: &PhasePoint) -> f64 {
    let omega = cfg.rotator.omega(&phase.action);
    let mut span = 1.0f64;
    for w in omega {
        if w.abs() > 1e-9 {
            span = span.max(1.0 / w.abs());
        }
    }
    span
}

/// A sample of the reduced potential M~*(I, theta) with derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedSample {
    pub action: Vec<f64>,
    pub theta: Vec<f64>,
    pub value: f64,
    pub dtheta: Vec<f64>,
    pub daction: Vec<f64>,
    pub tau_star: Vec<f64>,
    /// max |dtheta - envelope derivative|; large values indicate branch loss
    pub envelope_gap: f64,
}

const REDUCED_FD_STEP: f64 = 1e-4;
const BRANCH_JUMP_LIMIT: f64 = 0.1;

/// M~*(I, theta) = M~(tau*(I, theta, 0), I, theta, 0) and its derivatives.
/// The theta- and I-derivatives re-solve tau* at every probe point; the
/// envelope shortcut is computed as a cross-check only.
pub fn reduced_potential(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    action: &[f64],
    theta: &[f64],
    warm_tau: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<ReducedSample> {
    let phase = PhasePoint::new(action.to_vec(), theta.to_vec(), cfg.clock.initial.clone());
    let center = match warm_tau {
        Some(tau) => find_critical_tau(cfg, orb, tau, &phase, opts)?,
        None => find_critical_tau_scan(cfg, orb, &phase, opts)?,
    };
    let quad_tol = opts.quad_tol;
    let value = melnikov_potential(cfg, orb, &center.tau_star, &phase, quad_tol)?.value;

    let solve_at = |action_probe: &[f64], angle_probe: &[f64]| -> Result<(f64, Vec<f64>)> {
        let probe_phase = PhasePoint::new(
            action_probe.to_vec(),
            angle_probe.to_vec(),
            cfg.clock.initial.clone(),
        );
        let crit = find_critical_tau(cfg, orb, &center.tau_star, &probe_phase, opts)?;
        let jump = crit
            .tau_star
            .iter()
            .zip(&center.tau_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if jump > BRANCH_JUMP_LIMIT {
            return Err(Error::BranchLoss { jump });
        }
        let v = melnikov_potential(cfg, orb, &crit.tau_star, &probe_phase, quad_tol)?.value;
        Ok((v, crit.tau_star))
    };

    let d = cfg.d();
    let mut dtheta = Vec::with_capacity(d);
    for j in 0..d {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[j] += REDUCED_FD_STEP;
        minus[j] -= REDUCED_FD_STEP;
        let (vp, _) = solve_at(action, &plus)?;
        let (vm, _) = solve_at(action, &minus)?;
        dtheta.push((vp - vm) / (2.0 * REDUCED_FD_STEP));
    }
    let mut daction = Vec::with_capacity(d);
    for j in 0..d {
        let mut plus = action.to_vec();
        let mut minus = action.to_vec();
        plus[j] += REDUCED_FD_STEP;
        minus[j] -= REDUCED_FD_STEP;
        let (vp, _) = solve_at(&plus, theta)?;
        let (vm, _) = solve_at(&minus, theta)?;
        daction.push((vp - vm) / (2.0 * REDUCED_FD_STEP));
    }

    // Envelope check: at a critical point d theta M~* = d phi M~ | tau*.
    let envelope = grad_angle_potential(cfg, orb, &center.tau_star, &phase, quad_tol)?;
    let envelope_gap = dtheta
        .iter()
        .zip(&envelope)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = 1.0 + dtheta.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if envelope_gap > 1e-4 * scale.max(1.0) * 10.0 {
        return Err(Error::BranchLoss { jump: envelope_gap });
    }

    Ok(ReducedSample {
        action: action.to_vec(),
        theta: theta.to_vec(),
        value,
        dtheta,
        daction,
        tau_star: center.tau_star,
        envelope_gap,
    })
}

/// Single-pendulum Melnikov potential M~_i with the other penduli at rest.
pub fn partial_potential(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    i: usize,
    varsigma: f64,
    phase: &PhasePoint,
    tol: f64,
) -> Result<MelnikovValue<f64>> {
    cfg.penduli.check_index(i)?;
    let h = cfg.perturbation.hamiltonian()?;
    let (window, tail) = window_for(cfg, orb, &[varsigma], tol);
    let n = cfg.n();
    let r = quad::adaptive(
        |sigma| {
            let moved = phase.advanced(cfg, sigma);
            let mut p = vec![0.0; n];
            let mut q = vec![0.0; n];
            let (pi, qi) = orb.penduli[i].point(varsigma + sigma);
            p[i] = pi;
            q[i] = qi;
            let sep = AugmentedState::new(p, q, moved.action.clone(), moved.angle.clone(), moved.clock.clone());
            let rest = AugmentedState::saddle_rest(n, moved.action, moved.angle, moved.clock);
            -(h.eval(&sep) - h.eval(&rest))
        },
        -window,
        window,
        tol / 2.0,
    )?;
    Ok(MelnikovValue {
        value: r.value,
        quad_error: r.error,
        tail_bound: tail,
        window,
    })
}

/// |M~(tau, .) - sum_i M~_i(tau_i, .)|, the additivity defect of the
/// full potential against the single-pendulum ones.
pub fn additivity_gap(
    cfg: &SystemConfig,
    orb: &SeparatrixOrbit,
    tau: &[f64],
    phase: &PhasePoint,
    tol: f64,
) -> Result<f64> {
    let full = melnikov_potential(cfg, orb, tau, phase, tol)?.value;
    let mut sum = 0.0;
    for (i, t) in tau.iter().enumerate() {
        sum += partial_potential(cfg, orb, i, *t, phase, tol)?.value;
    }
    Ok((full - sum).abs())
}
