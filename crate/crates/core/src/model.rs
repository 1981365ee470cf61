//! The coupled penduli-rotator system, its perturbation and the clock
//! driver generating the time dependence.
//!
//! Angles live on the circle of period 1; all angle arithmetic is mod 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Reduce an angle to [0, 1).
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the circle of period 1 from `x` to 0.
pub fn circle_dist(x: f64) -> f64 {
    let r = wrap_angle(x);
    r.min(1.0 - r)
}

/// Signed representative of `x` on the circle of period 1, in [-0.5, 0.5).
pub fn circle_diff(x: f64) -> f64 {
    let r = wrap_angle(x);
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// A pendulum potential: sum of `amplitude * (cos(2*pi*harmonic*q) - 1)`
/// terms. The `-1` per term pins V(0) = 0, so the saddle sits on the zero
/// energy level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    pub terms: Vec<PotentialTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialTerm {
    pub amplitude: f64,
    pub harmonic: u32,
}

impl Potential {
    /// The classical `A (cos(2 pi q) - 1)` potential.
    pub fn cosine(amplitude: f64) -> Self {
        Potential {
            terms: vec![PotentialTerm {
                amplitude,
                harmonic: 1,
            }],
        }
    }

    /// True when this is a single fundamental-harmonic cosine, for which the
    /// separatrix has a closed form.
    pub fn is_pure_cosine(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [PotentialTerm {
                amplitude,
                harmonic: 1,
            }] if *amplitude > 0.0 => Some(*amplitude),
            _ => None,
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * ((TWO_PI * t.harmonic as f64 * q).cos() - 1.0))
            .sum()
    }

    pub fn d1(&self, q: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = TWO_PI * t.harmonic as f64;
                -t.amplitude * w * (w * q).sin()
            })
            .sum()
    }

    pub fn d2(&self, q: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = TWO_PI * t.harmonic as f64;
                -t.amplitude * w * w * (w * q).cos()
            })
            .sum()
    }
}

/// The n penduli: potentials and the +/- signs of the pendulum energies
/// P_i = signs[i] * (p_i^2/2 + V_i(q_i)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenduliSpec {
    pub potentials: Vec<Potential>,
    pub signs: Vec<f64>,
}

impl PenduliSpec {
    pub fn new(potentials: Vec<Potential>, signs: Vec<f64>) -> Result<Self> {
        if potentials.len() != signs.len() {
            return Err(Error::DimensionMismatch {
                what: "penduli signs",
                expected: potentials.len(),
                got: signs.len(),
            });
        }
        for (i, s) in signs.iter().enumerate() {
            if *s != 1.0 && *s != -1.0 {
                return Err(Error::Invalid(format!(
                    "pendulum sign {i} must be +1 or -1, got {s}"
                )));
            }
        }
        let spec = PenduliSpec { potentials, signs };
        spec.check_saddle()?;
        spec.check_periodicity()?;
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.potentials.len()
    }

    /// Hypothesis H2: V_i'(0) = 0 and V_i''(0) < 0.
    fn check_saddle(&self) -> Result<()> {
        for (i, v) in self.potentials.iter().enumerate() {
            if v.d1(0.0).abs() > 1e-12 {
                return Err(Error::SaddleCondition {
                    index: i,
                    reason: format!("V'(0) = {:.3e} != 0", v.d1(0.0)),
                });
            }
            if v.d2(0.0) >= 0.0 {
                return Err(Error::SaddleCondition {
                    index: i,
                    reason: format!("V''(0) = {:.3e} >= 0", v.d2(0.0)),
                });
            }
        }
        Ok(())
    }

    fn check_periodicity(&self) -> Result<()> {
        for (i, v) in self.potentials.iter().enumerate() {
            for k in 0..32 {
                let q = k as f64 / 32.0;
                let defect = (v.value(q + 1.0) - v.value(q)).abs();
                if defect > 1e-12 {
                    return Err(Error::NotPeriodic { index: i, defect });
                }
            }
        }
        Ok(())
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            })
        }
    }
}

/// The integrable rotator h0(I) = sum_j (quadratic[j] I_j^2 / 2 + linear[j] I_j).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotatorSpec {
    pub quadratic: Vec<f64>,
    pub linear: Vec<f64>,
}

impl RotatorSpec {
    pub fn new(quadratic: Vec<f64>, linear: Vec<f64>) -> Result<Self> {
        if quadratic.len() != linear.len() {
            return Err(Error::DimensionMismatch {
                what: "rotator linear coefficients",
                expected: quadratic.len(),
                got: linear.len(),
            });
        }
        Ok(RotatorSpec { quadratic, linear })
    }

    /// Standard kinetic rotator h0 = sum I_j^2 / 2.
    pub fn kinetic(d: usize) -> Self {
        RotatorSpec {
            quadratic: vec![1.0; d],
            linear: vec![0.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.quadratic.len()
    }

    pub fn h0(&self, action: &[f64]) -> f64 {
        action
            .iter()
            .zip(self.quadratic.iter().zip(&self.linear))
            .map(|(i, (a, b))| a * i * i / 2.0 + b * i)
            .sum()
    }

    /// Frequency map omega(I) = dh0/dI.
    pub fn omega(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.quadratic.iter().zip(&self.linear))
            .map(|(i, (a, b))| a * i + b)
            .collect()
    }

    pub fn hessian_diag(&self) -> &[f64] {
        &self.quadratic
    }
}

/// Clock driver generating the time dependence of the perturbation.
///
/// Every built-in kind has a linear generator, so the flow property
/// advance(advance(eta, a), b) = advance(eta, a + b) holds exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClockKind {
    /// m = 1, state is plain time: advance(eta, s) = eta + s.
    AffineTime,
    /// m = 1 angle advancing with the given frequency, reduced mod 1.
    Periodic { frequency: f64 },
    /// m angles advancing with the given frequencies, reduced mod 1.
    Quasiperiodic { frequencies: Vec<f64> },
    /// Affine flow on R^m with constant rates (no reduction).
    Custom { rates: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockDriver {
    #[serde(flatten)]
    pub kind: ClockKind,
    pub initial: Vec<f64>,
}

impl ClockDriver {
    pub fn affine_time() -> Self {
        ClockDriver {
            kind: ClockKind::AffineTime,
            initial: vec![0.0],
        }
    }

    pub fn new(kind: ClockKind, initial: Vec<f64>) -> Result<Self> {
        let driver = ClockDriver { kind, initial };
        let m = driver.dim();
        if driver.initial.len() != m {
            return Err(Error::DimensionMismatch {
                what: "clock initial state",
                expected: m,
                got: driver.initial.len(),
            });
        }
        Ok(driver)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ClockKind::AffineTime | ClockKind::Periodic { .. } => 1,
            ClockKind::Quasiperiodic { frequencies } => frequencies.len(),
            ClockKind::Custom { rates } => rates.len(),
        }
    }

    /// Generator of the clock flow (constant vector field).
    pub fn generator(&self) -> Vec<f64> {
        match &self.kind {
            ClockKind::AffineTime => vec![1.0],
            ClockKind::Periodic { frequency } => vec![*frequency],
            ClockKind::Quasiperiodic { frequencies } => frequencies.clone(),
            ClockKind::Custom { rates } => rates.clone(),
        }
    }

    /// chi^sigma(eta): exact flow of the clock.
    pub fn advance(&self, eta: &[f64], sigma: f64) -> Vec<f64> {
        let gen = self.generator();
        let raw: Vec<f64> = eta.iter().zip(&gen).map(|(e, g)| e + g * sigma).collect();
        self.reduce(raw)
    }

    /// Reduce angle-like clock coordinates mod 1.
    pub fn reduce(&self, eta: Vec<f64>) -> Vec<f64> {
        match &self.kind {
            ClockKind::Periodic { .. } | ClockKind::Quasiperiodic { .. } => {
                eta.into_iter().map(wrap_angle).collect()
            }
            _ => eta,
        }
    }
}

/// Perturbation of the unperturbed product system, stored as its eps = 0
/// slice. The same field is used at all eps in verification runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// X^1 = J grad h for a scalar Hamiltonian h(p, q, I, phi, eta).
    Hamiltonian { h: Expr },
    /// Componentwise vector field; missing components are zero.
    General {
        #[serde(default)]
        p_components: Vec<Expr>,
        #[serde(default)]
        q_components: Vec<Expr>,
        #[serde(default)]
        action_components: Vec<Expr>,
        #[serde(default)]
        angle_components: Vec<Expr>,
    },
}

impl Perturbation {
    pub fn is_hamiltonian(&self) -> bool {
        matches!(self, Perturbation::Hamiltonian { .. })
    }

    pub fn hamiltonian(&self) -> Result<&Expr> {
        match self {
            Perturbation::Hamiltonian { h } => Ok(h),
            Perturbation::General { .. } => Err(Error::NotHamiltonian),
        }
    }

    fn component(list: &[Expr], idx: usize, state: &AugmentedState) -> f64 {
        list.get(idx).map_or(0.0, |e| e.eval(state))
    }

    /// (X^1)^{p_i}
    pub fn p_component(&self, i: usize, state: &AugmentedState) -> f64 {
        match self {
            Perturbation::Hamiltonian { h } => -h.partial(Var::Q { index: i }, state),
            Perturbation::General { p_components, .. } => {
                Self::component(p_components, i, state)
            }
        }
    }

    /// (X^1)^{q_i}
    pub fn q_component(&self, i: usize, state: &AugmentedState) -> f64 {
        match self {
            Perturbation::Hamiltonian { h } => h.partial(Var::P { index: i }, state),
            Perturbation::General { q_components, .. } => {
                Self::component(q_components, i, state)
            }
        }
    }

    /// (X^1)^{I_j}
    pub fn action_component(&self, j: usize, state: &AugmentedState) -> f64 {
        match self {
            Perturbation::Hamiltonian { h } => -h.partial(Var::Angle { index: j }, state),
            Perturbation::General {
                action_components, ..
            } => Self::component(action_components, j, state),
        }
    }

    /// (X^1)^{phi_j}
    pub fn angle_component(&self, j: usize, state: &AugmentedState) -> f64 {
        match self {
            Perturbation::Hamiltonian { h } => h.partial(Var::Action { index: j }, state),
            Perturbation::General {
                angle_components, ..
            } => Self::component(angle_components, j, state),
        }
    }
}

/// Domain D: |P_i| <= energy_bound, I inside the configured ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub energy_bound: f64,
    pub action_center: Vec<f64>,
    pub action_radius: f64,
}

impl DomainSpec {
    pub fn unbounded(d: usize) -> Self {
        DomainSpec {
            energy_bound: f64::INFINITY,
            action_center: vec![0.0; d],
            action_radius: f64::INFINITY,
        }
    }
}

/// A point of the augmented phase space (p, q, I, phi, eta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub action: Vec<f64>,
    pub angle: Vec<f64>,
    pub clock: Vec<f64>,
}

impl AugmentedState {
    pub fn new(p: Vec<f64>, q: Vec<f64>, action: Vec<f64>, angle: Vec<f64>, clock: Vec<f64>) -> Self {
        let mut s = AugmentedState {
            p,
            q,
            action,
            angle,
            clock,
        };
        s.reduce_angles();
        s
    }

    /// Rest state of all penduli (p = q = 0) over the given rotator point.
    pub fn saddle_rest(n: usize, action: Vec<f64>, angle: Vec<f64>, clock: Vec<f64>) -> Self {
        AugmentedState::new(vec![0.0; n], vec![0.0; n], action, angle, clock)
    }

    pub fn reduce_angles(&mut self) {
        for q in &mut self.q {
            *q = wrap_angle(*q);
        }
        for a in &mut self.angle {
            *a = wrap_angle(*a);
        }
    }

    pub fn coord(&self, var: Var) -> f64 {
        match var {
            Var::P { index } => self.p[index],
            Var::Q { index } => self.q[index],
            Var::Action { index } => self.action[index],
            Var::Angle { index } => self.angle[index],
            Var::Clock { index } => self.clock[index],
        }
    }

    pub fn coord_mut(&mut self, var: Var) -> &mut f64 {
        match var {
            Var::P { index } => &mut self.p[index],
            Var::Q { index } => &mut self.q[index],
            Var::Action { index } => &mut self.action[index],
            Var::Angle { index } => &mut self.angle[index],
            Var::Clock { index } => &mut self.clock[index],
        }
    }
}

/// Tangent vector at an augmented state, in the same coordinate blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub action: Vec<f64>,
    pub angle: Vec<f64>,
    pub clock: Vec<f64>,
}

/// Full system description: penduli, rotator, perturbation, clock, domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub penduli: PenduliSpec,
    pub rotator: RotatorSpec,
    pub perturbation: Perturbation,
    pub clock: ClockDriver,
    pub domain: DomainSpec,
    /// Declared uniform C0 bound on the perturbation field over the domain.
    pub bound: f64,
    /// Lipschitz scale of (X^1 P_i) used in quadrature window selection;
    /// estimated by probing when absent.
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

impl SystemConfig {
    pub fn n(&self) -> usize {
        self.penduli.n()
    }

    pub fn d(&self) -> usize {
        self.rotator.d()
    }

    /// P_i(p_i, q_i) = signs[i] * (p_i^2/2 + V_i(q_i)).
    pub fn pendulum_energy(&self, i: usize, p_i: f64, q_i: f64) -> Result<f64> {
        self.penduli.check_index(i)?;
        Ok(self.penduli.signs[i] * (p_i * p_i / 2.0 + self.penduli.potentials[i].value(q_i)))
    }

    pub fn pendulum_energies(&self, state: &AugmentedState) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                self.penduli.signs[i]
                    * (state.p[i] * state.p[i] / 2.0
                        + self.penduli.potentials[i].value(state.q[i]))
            })
            .collect()
    }

    /// X^0 = J grad H_0 extended with the clock generator.
    pub fn unperturbed_field(&self, state: &AugmentedState) -> Tangent {
        let n = self.n();
        let mut dp = Vec::with_capacity(n);
        let mut dq = Vec::with_capacity(n);
        for i in 0..n {
            let s = self.penduli.signs[i];
            dp.push(-s * self.penduli.potentials[i].d1(state.q[i]));
            dq.push(s * state.p[i]);
        }
        Tangent {
            p: dp,
            q: dq,
            action: vec![0.0; self.d()],
            angle: self.rotator.omega(&state.action),
            clock: self.clock.generator(),
        }
    }

    /// X^0 + eps X^1.
    pub fn perturbed_field(&self, state: &AugmentedState, eps: f64) -> Result<Tangent> {
        self.check_domain(state)?;
        let mut field = self.unperturbed_field(state);
        if eps != 0.0 {
            for i in 0..self.n() {
                field.p[i] += eps * self.perturbation.p_component(i, state);
                field.q[i] += eps * self.perturbation.q_component(i, state);
            }
            for j in 0..self.d() {
                field.action[j] += eps * self.perturbation.action_component(j, state);
                field.angle[j] += eps * self.perturbation.angle_component(j, state);
            }
        }
        Ok(field)
    }

    /// Directional derivative (X^1 P_i) at the eps = 0 slice; equals the
    /// Poisson bracket [P_i, h] for Hamiltonian perturbations.
    pub fn perturbation_on_energy(&self, i: usize, state: &AugmentedState) -> Result<f64> {
        self.penduli.check_index(i)?;
        let s = self.penduli.signs[i];
        let dp_p = s * state.p[i];
        let dq_p = s * self.penduli.potentials[i].d1(state.q[i]);
        Ok(self.perturbation.p_component(i, state) * dp_p
            + self.perturbation.q_component(i, state) * dq_p)
    }

    /// (X^1 I_j) at the eps = 0 slice (= -dh/dphi_j in the Hamiltonian case).
    pub fn perturbation_on_action(&self, j: usize, state: &AugmentedState) -> f64 {
        self.perturbation.action_component(j, state)
    }

    pub fn check_domain(&self, state: &AugmentedState) -> Result<()> {
        if self.domain.energy_bound.is_finite() {
            for (i, e) in self.pendulum_energies(state).iter().enumerate() {
                if e.abs() > self.domain.energy_bound {
                    return Err(Error::DomainViolation {
                        reason: format!(
                            "|P_{i}| = {:.3e} > {:.3e}",
                            e.abs(),
                            self.domain.energy_bound
                        ),
                    });
                }
            }
        }
        if self.domain.action_radius.is_finite() {
            let r2: f64 = state
                .action
                .iter()
                .zip(&self.domain.action_center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            if r2.sqrt() > self.domain.action_radius {
                return Err(Error::DomainViolation {
                    reason: format!(
                        "|I - center| = {:.3e} > {:.3e}",
                        r2.sqrt(),
                        self.domain.action_radius
                    ),
                });
            }
        }
        Ok(())
    }

    /// Lipschitz scale of the Melnikov integrands: configured value, or a
    /// crude analytic bound on the field components and their slopes.
    pub fn lipschitz_scale(&self) -> f64 {
        if let Some(l) = self.lipschitz {
            return l;
        }
        let scale = 1.0 + self.domain.action_radius.min(10.0);
        let field_bound = match &self.perturbation {
            Perturbation::Hamiltonian { h } => h.crude_bound(scale) * TWO_PI * 4.0,
            Perturbation::General {
                p_components,
                q_components,
                ..
            } => p_components
                .iter()
                .chain(q_components)
                .map(|e| e.crude_bound(scale) * TWO_PI * 4.0)
                .fold(0.0, f64::max),
        };
        (field_bound * (1.0 + scale)).max(1.0)
    }
}
