use nalgebra::DMatrix;

/// Linear system `x' = A x + B u` advanced with the trapezoidal rule, the
/// input held constant over each step.
///
/// Each column of the state matrix is an independent copy of the system
/// (one per phase). After a topology change the caller may request a
/// critical-damping step: two backward-Euler half steps, which suppress the
/// numerical oscillation the trapezoidal rule leaves on stiff modes.
#[derive(Debug, Clone)]
pub struct LinearStateSpace {
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
    be_half: DMatrix<f64>,
    be_gamma: DMatrix<f64>,
    dt: f64,
}

impl LinearStateSpace {
    /// Returns `None` if `I - dt/2 A` is singular.
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> Option<Self> {
        let n = a.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let lhs = (&eye - a * (0.5 * dt)).try_inverse()?;
        let phi = &lhs * (&eye + a * (0.5 * dt));
        let gamma = &lhs * b * dt;
        // backward Euler with step dt/2 shares the same left-hand matrix
        let be_gamma = &lhs * b * (0.5 * dt);
        Some(Self {
            phi,
            gamma,
            be_half: lhs,
            be_gamma,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, x: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.phi * x + &self.gamma * u
    }

    pub fn step_damped(&self, x: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        let half = &self.be_half * x + &self.be_gamma * u;
        &self.be_half * half + &self.be_gamma * u
    }
}
