//! Small closed family of scalar expressions on the augmented phase space,
//! with analytic first derivatives.
//!
//! Every built-in potential, Hamiltonian perturbation and general vector
//! field component is a sum of terms, each term a coefficient times a
//! product of factors. Angle-like variables (q, phi, periodic clock
//! coordinates) enter through trigonometric factors with frequency
//! `2*pi*harmonic`; momentum/action variables through integer powers;
//! affine clock coordinates additionally through bounded envelopes.

use serde::{Deserialize, Serialize};

use crate::model::AugmentedState;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Coordinate of the augmented phase space addressed by a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "var", rename_all = "snake_case")]
pub enum Var {
    P { index: usize },
    Q { index: usize },
    Action { index: usize },
    Angle { index: usize },
    Clock { index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    /// cos(2*pi*harmonic*x + phase)
    Cos {
        #[serde(flatten)]
        var: Var,
        harmonic: f64,
        #[serde(default)]
        phase: f64,
    },
    /// sin(2*pi*harmonic*x + phase)
    Sin {
        #[serde(flatten)]
        var: Var,
        harmonic: f64,
        #[serde(default)]
        phase: f64,
    },
    /// x^exponent, exponent >= 1
    Pow {
        #[serde(flatten)]
        var: Var,
        exponent: u32,
    },
    /// sech(rate*x); intended for affine clock coordinates
    Sech {
        #[serde(flatten)]
        var: Var,
        rate: f64,
    },
    /// exp(-rate*x^2); intended for affine clock coordinates
    Gauss {
        #[serde(flatten)]
        var: Var,
        rate: f64,
    },
}

impl Factor {
    pub fn var(&self) -> Var {
        match *self {
            Factor::Cos { var, .. }
            | Factor::Sin { var, .. }
            | Factor::Pow { var, .. }
            | Factor::Sech { var, .. }
            | Factor::Gauss { var, .. } => var,
        }
    }

    fn value(&self, x: f64) -> f64 {
        match *self {
            Factor::Cos { harmonic, phase, .. } => (TWO_PI * harmonic * x + phase).cos(),
            Factor::Sin { harmonic, phase, .. } => (TWO_PI * harmonic * x + phase).sin(),
            Factor::Pow { exponent, .. } => x.powi(exponent as i32),
            Factor::Sech { rate, .. } => 1.0 / (rate * x).cosh(),
            Factor::Gauss { rate, .. } => (-rate * x * x).exp(),
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        match *self {
            Factor::Cos { harmonic, phase, .. } => {
                -TWO_PI * harmonic * (TWO_PI * harmonic * x + phase).sin()
            }
            Factor::Sin { harmonic, phase, .. } => {
                TWO_PI * harmonic * (TWO_PI * harmonic * x + phase).cos()
            }
            Factor::Pow { exponent, .. } => {
                if exponent == 0 {
                    0.0
                } else {
                    exponent as f64 * x.powi(exponent as i32 - 1)
                }
            }
            Factor::Sech { rate, .. } => {
                let c = (rate * x).cosh();
                -rate * (rate * x).tanh() / c
            }
            Factor::Gauss { rate, .. } => -2.0 * rate * x * (-rate * x * x).exp(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

/// Sum of product terms; the whole expression family is closed under the
/// partial derivatives needed by the vector-field assembly.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Expr {
            terms: vec![Term {
                coef: c,
                factors: Vec::new(),
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef == 0.0)
    }

    /// True when no factor touches the given variable.
    pub fn independent_of(&self, pred: impl Fn(Var) -> bool) -> bool {
        self.terms
            .iter()
            .all(|t| t.factors.iter().all(|f| !pred(f.var())))
    }

    pub fn eval(&self, state: &AugmentedState) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coef
                    * t.factors
                        .iter()
                        .map(|f| f.value(state.coord(f.var())))
                        .product::<f64>()
            })
            .sum()
    }

    /// Analytic partial derivative with respect to one coordinate.
    pub fn partial(&self, var: Var, state: &AugmentedState) -> f64 {
        let mut total = 0.0;
        for term in &self.terms {
            let mut term_sum = 0.0;
            for (k, fk) in term.factors.iter().enumerate() {
                if fk.var() != var {
                    continue;
                }
                let mut prod = fk.deriv(state.coord(var));
                for (j, fj) in term.factors.iter().enumerate() {
                    if j != k {
                        prod *= fj.value(state.coord(fj.var()));
                    }
                }
                term_sum += prod;
            }
            total += term.coef * term_sum;
        }
        total
    }

    /// Largest possible |value| assuming every trig/envelope factor is <= 1
    /// in magnitude and power factors are bounded by `scale^exponent`.
    pub fn crude_bound(&self, scale: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coef.abs()
                    * t.factors
                        .iter()
                        .map(|f| match *f {
                            Factor::Pow { exponent, .. } => scale.powi(exponent as i32),
                            _ => 1.0,
                        })
                        .product::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AugmentedState;

    fn probe_state() -> AugmentedState {
        AugmentedState {
            p: vec![0.37],
            q: vec![0.21],
            action: vec![0.8],
            angle: vec![0.45],
            clock: vec![1.3],
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let e = Expr {
            terms: vec![
                Term {
                    coef: 1.4,
                    factors: vec![
                        Factor::Cos {
                            var: Var::Q { index: 0 },
                            harmonic: 1.0,
                            phase: 0.0,
                        },
                        Factor::Pow {
                            var: Var::P { index: 0 },
                            exponent: 2,
                        },
                    ],
                },
                Term {
                    coef: -0.6,
                    factors: vec![
                        Factor::Sin {
                            var: Var::Angle { index: 0 },
                            harmonic: 2.0,
                            phase: 0.3,
                        },
                        Factor::Sech {
                            var: Var::Clock { index: 0 },
                            rate: 0.5,
                        },
                        Factor::Pow {
                            var: Var::Action { index: 0 },
                            exponent: 3,
                        },
                    ],
                },
                Term {
                    coef: 0.9,
                    factors: vec![Factor::Gauss {
                        var: Var::Clock { index: 0 },
                        rate: 0.2,
                    }],
                },
            ],
        };
        let base = probe_state();
        let vars = [
            Var::P { index: 0 },
            Var::Q { index: 0 },
            Var::Action { index: 0 },
            Var::Angle { index: 0 },
            Var::Clock { index: 0 },
        ];
        let h = 1e-6;
        for var in vars {
            let mut plus = base.clone();
            let mut minus = base.clone();
            *plus.coord_mut(var) += h;
            *minus.coord_mut(var) -= h;
            let fd = (e.eval(&plus) - e.eval(&minus)) / (2.0 * h);
            let exact = e.partial(var, &base);
            assert!(
                (fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                "var {var:?}: fd {fd} vs exact {exact}"
            );
        }
    }

    #[test]
    fn zero_expression_is_independent_of_everything() {
        let e = Expr::zero();
        assert!(e.is_zero());
        assert!(e.independent_of(|_| true));
        assert_eq!(e.eval(&probe_state()), 0.0);
    }
}
