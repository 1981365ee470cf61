use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pendulum index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("hypothesis H2 violated for pendulum {index}: {reason}")]
    SaddleCondition { index: usize, reason: String },

    #[error("potential {index} is not periodic: |V(q+1) - V(q)| = {defect:.3e}")]
    NotPeriodic { index: usize, defect: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} for {what}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("state left the configured domain: {reason}")]
    DomainViolation { reason: String },

    #[error("no homoclinic return detected for pendulum {index} within time budget {budget}")]
    NoHomoclinicReturn { index: usize, budget: f64 },

    #[error("Melnikov potential requested for a non-Hamiltonian perturbation")]
    NotHamiltonian,

    #[error("quadrature tolerance {requested:.3e} unreachable; best achieved {achieved:.3e}")]
    ToleranceUnreachable { requested: f64, achieved: f64 },

    #[error("Newton iteration failed to converge after {iterations} steps (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("Jacobian at the located root is singular (rank {rank} < {full}); H3 fails here")]
    DegenerateRoot { rank: usize, full: usize },

    #[error("critical-point branch lost: tau jumped by {jump:.3e} between adjacent probes")]
    BranchLoss { jump: f64 },

    #[error("chart degeneracy: |grad P_{index}| = {grad_norm:.3e} too close to the saddle")]
    ChartDegenerate { index: usize, grad_norm: f64 },

    #[error("energy target {target:.3e} outside the chart tube (half-width {tube:.3e})")]
    OutsideTube { target: f64, tube: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("orbit exited the tube at t = {exit_time:.6} (|P_{index}| = {value:.3e})")]
    TubeExit {
        index: usize,
        exit_time: f64,
        value: f64,
    },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
