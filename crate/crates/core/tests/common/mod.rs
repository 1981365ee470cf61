//! Shared fixtures and independent closed-form oracles for the integration
//! test suites.
//!
//! The oracle formulas below are derived by hand from the defining integrals
//! of the Melnikov potential on the cosine-pendulum instance, using
//! cos(2*pi*q0(s)) - 1 = -2 sech^2(s) and
//! Integral sech^2(s) cos(a s) ds = pi a / sinh(pi a / 2),
//! and are frozen here as plain arithmetic: nothing in this module calls the
//! quadrature code it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use melnikov_core::*;

/// 2 * pi^2 * w / sinh(pi^2 * w), the Fourier weight of sech^2 at frequency
/// 2*pi*w; continuous value 2 at w = 0.
pub fn s_factor(w: f64) -> f64 {
    let a = PI * PI * w;
    if a.abs() < 1e-12 {
        2.0
    } else {
        2.0 * a / a.sinh()
    }
}

pub fn cos_factor(var: Var) -> Factor {
    Factor::Cos {
        var,
        harmonic: 1.0,
        phase: 0.0,
    }
}

fn product_term(factors: Vec<Factor>) -> Term {
    Term { coef: 1.0, factors }
}

/// The cosine-pendulum instance used throughout: one pendulum with
/// V(q) = (cos(2 pi q) - 1)/(4 pi^2) (saddle rate 1), kinetic rotator
/// h0 = I^2/2, affine clock, and coupling
/// h = cos(2 pi q) (cos(2 pi phi) + cos(2 pi t)).
pub fn reference_instance() -> SystemConfig {
    reference_instance_with_clock(ClockDriver::affine_time())
}

pub fn reference_instance_with_clock(clock: ClockDriver) -> SystemConfig {
    let amp = 1.0 / (4.0 * PI * PI);
    let h = Expr {
        terms: vec![
            product_term(vec![
                cos_factor(Var::Q { index: 0 }),
                cos_factor(Var::Angle { index: 0 }),
            ]),
            product_term(vec![
                cos_factor(Var::Q { index: 0 }),
                cos_factor(Var::Clock { index: 0 }),
            ]),
        ],
    };
    SystemConfig {
        penduli: PenduliSpec::new(vec![Potential::cosine(amp)], vec![1.0]).unwrap(),
        rotator: RotatorSpec::new(vec![1.0], vec![0.0]).unwrap(),
        perturbation: Perturbation::Hamiltonian { h },
        clock,
        domain: DomainSpec::unbounded(1),
        bound: 13.0,
        lipschitz: Some(30.0),
    }
}

/// Same pendulum and rotator, with the given perturbation.
pub fn instance_with_perturbation(perturbation: Perturbation) -> SystemConfig {
    let mut cfg = reference_instance();
    cfg.perturbation = perturbation;
    cfg
}

/// Dissipative variant: X^1 = -p_1 d/dp_1 (not Hamiltonian).
pub fn dissipative_instance() -> SystemConfig {
    instance_with_perturbation(Perturbation::General {
        p_components: vec![Expr {
            terms: vec![Term {
                coef: -1.0,
                factors: vec![Factor::Pow {
                    var: Var::P { index: 0 },
                    exponent: 1,
                }],
            }],
        }],
        q_components: vec![],
        action_components: vec![],
        angle_components: vec![],
    })
}

/// Two identical cosine penduli; `coupled` selects
/// h = cos(2 pi q1) cos(2 pi q2) cos(2 pi t) (multiplicative) versus
/// h = (cos(2 pi q1) + cos(2 pi q2)) cos(2 pi t) (additive).
pub fn two_pendulum_instance(coupled: bool) -> SystemConfig {
    let amp = 1.0 / (4.0 * PI * PI);
    let q1 = cos_factor(Var::Q { index: 0 });
    let q2 = cos_factor(Var::Q { index: 1 });
    let t = cos_factor(Var::Clock { index: 0 });
    let h = if coupled {
        Expr {
            terms: vec![product_term(vec![q1, q2, t])],
        }
    } else {
        Expr {
            terms: vec![
                product_term(vec![q1, t.clone()]),
                product_term(vec![q2, t]),
            ],
        }
    };
    SystemConfig {
        penduli: PenduliSpec::new(
            vec![Potential::cosine(amp), Potential::cosine(amp)],
            vec![1.0, 1.0],
        )
        .unwrap(),
        rotator: RotatorSpec::new(vec![1.0], vec![0.0]).unwrap(),
        perturbation: Perturbation::Hamiltonian { h },
        clock: ClockDriver::affine_time(),
        domain: DomainSpec::unbounded(1),
        bound: 13.0,
        lipschitz: Some(30.0),
    }
}

/// Closed form of the potential on the reference instance:
/// M~(tau, I, phi, t) = 2 [ cos(2 pi (phi - tau I)) S(I)
///                        + cos(2 pi (t - tau))   S(1) ].
pub fn closed_potential(tau: f64, action: f64, phi: f64, t: f64) -> f64 {
    2.0 * ((2.0 * PI * (phi - tau * action)).cos() * s_factor(action)
        + (2.0 * PI * (t - tau)).cos() * s_factor(1.0))
}

/// d M~ / d tau of the closed form.
pub fn closed_vector(tau: f64, action: f64, phi: f64, t: f64) -> f64 {
    2.0 * (2.0 * PI * action * (2.0 * PI * (phi - tau * action)).sin() * s_factor(action)
        + 2.0 * PI * (2.0 * PI * (t - tau)).sin() * s_factor(1.0))
}

/// d M~ / d phi of the closed form.
pub fn closed_grad_phi(tau: f64, action: f64, phi: f64, _t: f64) -> f64 {
    -4.0 * PI * (2.0 * PI * (phi - tau * action)).sin() * s_factor(action)
}

/// Single-pendulum closed form for the additive two-pendulum instance:
/// M~_i(varsigma) = 2 cos(2 pi (t - varsigma)) S(1).
pub fn closed_partial_additive(varsigma: f64, t: f64) -> f64 {
    2.0 * (2.0 * PI * (t - varsigma)).cos() * s_factor(1.0)
}

pub fn phase(action: f64, phi: f64, t: f64) -> PhasePoint {
    PhasePoint::new(vec![action], vec![phi], vec![t])
}
