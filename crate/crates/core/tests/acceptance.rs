//! Acceptance gate: one criterion per line, A1 through A10, each printed as
//! PASS or FAIL with the measured figure of merit. The suite runs every
//! criterion even after a failure and panics at the end if any failed.

mod common;

use std::f64::consts::PI;

use common::*;
use melnikov_core::*;

/// Deterministic pseudo-random stream in [0, 1) (splitmix64).
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn setup() -> (SystemConfig, SeparatrixOrbit) {
    let cfg = reference_instance();
    let orb = build_separatrix(&cfg.penduli).unwrap();
    (cfg, orb)
}

type Outcome = std::result::Result<String, String>;

/// A1: the energy-bracket integral equals the tau-gradient of the potential
/// integral on a 5 x 5 x 3 grid of (tau, phi, I).
fn a1_gradient_identity() -> Outcome {
    let (cfg, orb) = setup();
    let mut worst: f64 = 0.0;
    for a in 0..5 {
        let tau = [-1.0 + 0.5 * a as f64];
        for b in 0..5 {
            let phi = 0.1 + 0.17 * b as f64;
            for c in 0..3 {
                let action = 0.15 + 0.1 * c as f64;
                let ph = phase(action, phi, 0.0);
                let mv = melnikov_vector(&cfg, &orb, &tau, &ph, 1e-11)
                    .map_err(|e| format!("vector: {e}"))?;
                let gt = grad_tau_potential(&cfg, &orb, &tau, &ph, 1e-11)
                    .map_err(|e| format!("gradient: {e}"))?;
                let pot = melnikov_potential(&cfg, &orb, &tau, &ph, 1e-11)
                    .map_err(|e| format!("potential: {e}"))?;
                let tol = 2e-8 * (1.0 + pot.value.abs());
                let diff = (mv.value[0] - gt[0]).abs() / tol;
                worst = worst.max(diff);
            }
        }
    }
    if worst <= 1.0 {
        Ok(format!("max |vector - d/dtau potential| = {worst:.2e} of budget"))
    } else {
        Err(format!("gradient identity off by {worst:.2e} x budget"))
    }
}

/// A2: quadrature potential matches the hand-derived sech^2 closed form to
/// 1e-8 relative at 20 random (tau, I, phi, t).
fn a2_closed_form() -> Outcome {
    let (cfg, orb) = setup();
    let mut rng = Rng(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let tau = 4.0 * rng.next() - 2.0;
        let action = 0.1 + 0.3 * rng.next();
        let phi = rng.next();
        let t = rng.next();
        let ph = phase(action, phi, t);
        let got = melnikov_potential(&cfg, &orb, &[tau], &ph, 1e-11)
            .map_err(|e| format!("{e}"))?
            .value;
        let want = closed_potential(tau, action, phi, t);
        let rel = (got - want).abs() / (1.0 + want.abs());
        worst = worst.max(rel);
    }
    if worst <= 1e-8 {
        Ok(format!("max relative error vs closed form = {worst:.2e}"))
    } else {
        Err(format!("closed form mismatch {worst:.2e} > 1e-8"))
    }
}

/// A3: potential is invariant under the synchronized shift
/// (tau, phi, t) -> (tau + c, phi + c omega, t + c) on a (phi, t) grid.
fn a3_shift_invariance() -> Outcome {
    let (cfg, orb) = setup();
    let action = 0.2;
    let omega = action; // omega(I) = I on the reference rotator
    let mut worst: f64 = 0.0;
    for b in 0..4 {
        let phi = 0.05 + 0.24 * b as f64;
        for k in 0..4 {
            let t = 0.1 + 0.22 * k as f64;
            for &c in &[0.3, 1.7] {
                let base = melnikov_potential(
                    &cfg,
                    &orb,
                    &[0.15],
                    &phase(action, phi, t),
                    1e-11,
                )
                .map_err(|e| format!("{e}"))?
                .value;
                let shifted = melnikov_potential(
                    &cfg,
                    &orb,
                    &[0.15 + c],
                    &phase(action, phi + c * omega, t + c),
                    1e-11,
                )
                .map_err(|e| format!("{e}"))?
                .value;
                worst = worst.max((base - shifted).abs());
            }
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max shift residual = {worst:.2e}"))
    } else {
        Err(format!("shift residual {worst:.2e} > 1e-8"))
    }
}

/// A4: the graph splitting is first order with an order-2 remainder:
/// fitted residual slope >= 1.7 (Hamiltonian) and >= 1.5 (dissipative).
fn a4_splitting_order() -> Outcome {
    let icfg = IntegratorConfig::default();
    let eps = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let ph = phase(0.2, 0.3, 0.0);

    let (cfg, orb) = setup();
    let ham = measure_splitting(&cfg, &orb, &[0.15], &ph, &eps, &icfg)
        .map_err(|e| format!("hamiltonian: {e}"))?;

    let dcfg = dissipative_instance();
    let dorb = build_separatrix(&dcfg.penduli).unwrap();
    let dis = measure_splitting(&dcfg, &dorb, &[0.15], &ph, &eps, &icfg)
        .map_err(|e| format!("dissipative: {e}"))?;

    let msg = format!(
        "residual slopes: hamiltonian {:.3}, dissipative {:.3}",
        ham.fit.slope, dis.fit.slope
    );
    if ham.fit.slope >= 1.7 && dis.fit.slope >= 1.5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// A5: first-order action jump across the homoclinic channel: relative error
/// <= 0.05 at eps = 1e-3, and sweep residual slope >= 1.7.
fn a5_action_jump() -> Outcome {
    let (cfg, orb) = setup();
    let icfg = IntegratorConfig::default();
    let newton = NewtonOptions::default();
    let ph = phase(0.2, 0.25, 0.0);
    let seed = [1.24];

    let eps_list = [4e-3, 2e-3, 1e-3, 5e-4];
    let mut resid = Vec::new();
    let mut at_target: Option<JumpReport> = None;
    for &eps in &eps_list {
        let rep = action_jump(&cfg, &orb, &ph, eps, Some(&seed), &icfg, &newton)
            .map_err(|e| format!("eps={eps}: {e}"))?;
        resid.push((rep.measured[0] - rep.predicted[0]).abs());
        if eps == 1e-3 {
            at_target = Some(rep);
        }
    }
    let rep = at_target.expect("eps=1e-3 in sweep");
    let fit = order_fit(&eps_list, &resid).map_err(|e| format!("{e}"))?;

    let msg = format!(
        "eps=1e-3: measured {:.4e}, first-order prediction {:.4e}, rel err {:.3}; sweep slope {:.3}",
        rep.measured[0], rep.predicted[0], rep.relative_error, fit.slope
    );
    if rep.relative_error <= 0.05 && fit.slope >= 1.7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// A6: two-pendulum additivity. The coupled instance's additivity gap decays
/// monotonically in the transition-time separation and is negligible at
/// separation 15 / lambda; the additive instance is exact.
fn a6_additivity() -> Outcome {
    let tol = 1e-11;
    let cfg = two_pendulum_instance(true);
    let orb = build_separatrix(&cfg.penduli).unwrap();
    let lambda = orb.saddle.lambda_plus;
    let ph = phase(0.2, 0.3, 0.0);

    let mut gaps = Vec::new();
    for &dt in &[2.0, 4.0, 6.0, 8.0, 10.0] {
        let g = additivity_gap(&cfg, &orb, &[0.0, dt / lambda], &ph, tol)
            .map_err(|e| format!("{e}"))?
            .abs();
        gaps.push(g);
    }
    // monotone within a 2x noise allowance
    let monotone = gaps.windows(2).all(|w| w[1] <= 2.0 * w[0]);

    let far = additivity_gap(&cfg, &orb, &[0.0, 15.0 / lambda], &ph, tol)
        .map_err(|e| format!("{e}"))?
        .abs();
    let scale = partial_potential(&cfg, &orb, 0, 0.0, &ph, tol)
        .map_err(|e| format!("{e}"))?
        .value
        .abs()
        .max(1.0);
    let far_ok = far <= 1e-5 * scale;

    let acfg = two_pendulum_instance(false);
    let aorb = build_separatrix(&acfg.penduli).unwrap();
    let additive = additivity_gap(&acfg, &aorb, &[0.0, 3.0], &ph, tol)
        .map_err(|e| format!("{e}"))?
        .abs();
    let additive_ok = additive <= 10.0 * tol;

    let msg = format!(
        "coupled gaps {:?} (far {far:.2e}, scale {scale:.2e}); additive gap {additive:.2e}",
        gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>()
    );
    if monotone && far_ok && additive_ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// A7: the grid-seeded Newton certificate: full rank (n = 1), condition
/// below 1e6, and superlinear residual decay.
fn a7_critical_certificate() -> Outcome {
    let (cfg, orb) = setup();
    let crit = find_critical_tau_scan(&cfg, &orb, &phase(0.2, 0.25, 0.0), &NewtonOptions::default())
        .map_err(|e| format!("{e}"))?;
    let h = &crit.residual_history;
    // Quadratic convergence: successive contraction factors shrink until the
    // residual saturates at the quadrature noise floor.
    let mut quadratic = h.len() >= 2;
    let floor = 1e-9;
    for w in h.windows(3) {
        if w[2] <= floor {
            break;
        }
        let r1 = w[1] / w[0];
        let r2 = w[2] / w[1];
        if r2 > 0.5 * r1 && r2 > 0.1 {
            quadratic = false;
        }
    }
    let msg = format!(
        "tau* = {:.6}, rank {}, condition {:.2e}, residuals {:?}",
        crit.tau_star[0],
        crit.rank,
        crit.condition,
        h.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>()
    );
    if crit.rank == 1 && crit.condition < 1e6 && quadratic {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// A8: trivial perturbations. h = 0 and pendulum-independent h give zero
/// potential, vector, splitting, and jump; eps = 0 gives zero graphs.
fn a8_trivial_suite() -> Outcome {
    let icfg = IntegratorConfig::default();
    let ph = phase(0.2, 0.3, 0.0);
    let tau = [0.15];

    let slow_h = Expr {
        terms: vec![
            Term {
                coef: 1.0,
                factors: vec![cos_factor(Var::Angle { index: 0 })],
            },
            Term {
                coef: 0.7,
                factors: vec![cos_factor(Var::Clock { index: 0 })],
            },
        ],
    };
    for (name, cfg) in [
        (
            "h=0",
            instance_with_perturbation(Perturbation::Hamiltonian {
                h: Expr { terms: vec![] },
            }),
        ),
        (
            "slow h",
            instance_with_perturbation(Perturbation::Hamiltonian { h: slow_h }),
        ),
    ] {
        let orb = build_separatrix(&cfg.penduli).unwrap();
        let pot = melnikov_potential(&cfg, &orb, &tau, &ph, 1e-11)
            .map_err(|e| format!("{name} potential: {e}"))?
            .value;
        let vec0 = melnikov_vector(&cfg, &orb, &tau, &ph, 1e-11)
            .map_err(|e| format!("{name} vector: {e}"))?
            .value[0];
        if pot.abs() > 1e-11 || vec0.abs() > 1e-11 {
            return Err(format!("{name}: potential {pot:.2e}, vector {vec0:.2e}"));
        }
        let u = unstable_graph_value(&cfg, &orb, &tau, &ph, 1e-3, &icfg)
            .map_err(|e| format!("{name} unstable graph: {e}"))?;
        let s = stable_graph_value(&cfg, &orb, &tau, &ph, 1e-3, &icfg)
            .map_err(|e| format!("{name} stable graph: {e}"))?;
        let split = (u.energies[0] - s.energies[0]).abs();
        if split > 1e-9 {
            return Err(format!("{name}: splitting {split:.2e} not zero"));
        }
    }

    // eps = 0: both graphs are identically zero.
    let (cfg, orb) = setup();
    let z = stable_graph_value(&cfg, &orb, &tau, &ph, 0.0, &icfg)
        .map_err(|e| format!("eps=0: {e}"))?;
    if z.energies[0] != 0.0 {
        return Err(format!("eps=0 graph value {} != 0", z.energies[0]));
    }
    Ok("zero perturbations give zero potential, vector, splitting; eps=0 gives zero graphs".into())
}

/// A9: quadrature honesty: doubling the truncation window moves each
/// reported component by less than its reported tail bound.
fn a9_quadrature_honesty() -> Outcome {
    let (cfg, orb) = setup();
    let mut rng = Rng(0x17a11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let tau = [6.0 * rng.next() - 3.0];
        let action = 0.1 + 0.3 * rng.next();
        let ph = phase(action, rng.next(), rng.next());
        let tol = 1e-10;
        let r = melnikov_vector(&cfg, &orb, &tau, &ph, tol).map_err(|e| format!("{e}"))?;
        let w = r.window;
        let wide = quad::adaptive(
            |s| melnikov_integrand_vector(&cfg, &orb, 0, &tau, s, &ph).unwrap(),
            -2.0 * w,
            2.0 * w,
            tol / 2.0,
        )
        .map_err(|e| format!("{e}"))?;
        let shift = (wide.value - r.value[0]).abs();
        let budget = r.tail_bound + r.quad_error + wide.error;
        worst = worst.max(shift / budget.max(1e-300));
    }
    if worst <= 1.0 {
        Ok(format!(
            "max window-doubling shift = {worst:.2e} of reported tail bound"
        ))
    } else {
        Err(format!("window doubling exceeded tail bound by {worst:.2e}x"))
    }
}

/// A10: a 2-frequency quasiperiodic clock whose perturbation only reads the
/// first clock coordinate reproduces the affine-time vector to 1e-10.
fn a10_clock_generality() -> Outcome {
    let (cfg, orb) = setup();
    let qcfg = reference_instance_with_clock(
        ClockDriver::new(
            ClockKind::Quasiperiodic {
                frequencies: vec![1.0, std::f64::consts::SQRT_2],
            },
            vec![0.0, 0.0],
        )
        .unwrap(),
    );

    let mut worst: f64 = 0.0;
    for b in 0..3 {
        let tau = [-0.5 + 0.45 * b as f64];
        let pa = phase(0.2, 0.3, 0.1);
        let pq = PhasePoint::new(vec![0.2], vec![0.3], vec![0.1, 0.77]);
        let va = melnikov_vector(&cfg, &orb, &tau, &pa, 1e-12)
            .map_err(|e| format!("affine: {e}"))?
            .value[0];
        let vq = melnikov_vector(&qcfg, &orb, &tau, &pq, 1e-12)
            .map_err(|e| format!("quasiperiodic: {e}"))?
            .value[0];
        worst = worst.max((va - vq).abs());
    }
    if worst <= 1e-10 {
        Ok(format!("max |affine - quasiperiodic| = {worst:.2e}"))
    } else {
        Err(format!("clock drivers disagree by {worst:.2e} > 1e-10"))
    }
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("A1 gradient identity", a1_gradient_identity),
        ("A2 closed-form oracle", a2_closed_form),
        ("A3 shift invariance", a3_shift_invariance),
        ("A4 splitting order", a4_splitting_order),
        ("A5 action jump", a5_action_jump),
        ("A6 additivity", a6_additivity),
        ("A7 critical-point certificate", a7_critical_certificate),
        ("A8 trivial suite", a8_trivial_suite),
        ("A9 quadrature honesty", a9_quadrature_honesty),
        ("A10 clock-driver generality", a10_clock_generality),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("{name}: PASS ({detail})"),
            Err(detail) => {
                println!("{name}: FAIL ({detail})");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
