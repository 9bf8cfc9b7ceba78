//! Clarke and Park transforms.
//!
//! Convention used throughout the crate:
//!
//! * amplitude-invariant Clarke: a balanced set `A cos(phi - k 2pi/3)` maps to
//!   `alpha + j beta = A e^{j phi}`;
//! * Park rotation by `theta`: `d + j q = (alpha + j beta) e^{-j theta}`, so the
//!   q axis leads the d axis by 90 degrees. A signal leading the transform
//!   angle by 90 degrees lands on `q = +A`.

use std::f64::consts::FRAC_PI_3;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;
const INV_SQRT3: f64 = 0.577_350_269_189_625_8;

/// Instantaneous a/b/c values of a voltage or current.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThreePhase {
    pub const ZERO: ThreePhase = ThreePhase {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Balanced positive-sequence set `amp * cos(angle - k 2pi/3)`.
    pub fn balanced(amp: f64, angle: f64) -> Self {
        Self {
            a: amp * angle.cos(),
            b: amp * (angle - 2.0 * FRAC_PI_3).cos(),
            c: amp * (angle + 2.0 * FRAC_PI_3).cos(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.a * k, self.b * k, self.c * k)
    }

    pub fn dot(&self, other: &ThreePhase) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs())
    }
}

/// Stationary-frame components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

impl AlphaBeta {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn magnitude(&self) -> f64 {
        self.alpha.hypot(self.beta)
    }

    pub fn angle(&self) -> f64 {
        self.beta.atan2(self.alpha)
    }

    pub fn rotate(&self, theta: f64) -> Dq {
        let (s, c) = theta.sin_cos();
        Dq {
            d: self.alpha * c + self.beta * s,
            q: -self.alpha * s + self.beta * c,
            theta_used: theta,
        }
    }
}

/// Rotating-frame value tagged with the angle that produced it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dq {
    pub d: f64,
    pub q: f64,
    pub theta_used: f64,
}

impl Dq {
    pub fn new(d: f64, q: f64, theta_used: f64) -> Self {
        Self { d, q, theta_used }
    }

    pub fn magnitude(&self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn to_alpha_beta(&self) -> AlphaBeta {
        let (s, c) = self.theta_used.sin_cos();
        AlphaBeta {
            alpha: self.d * c - self.q * s,
            beta: self.d * s + self.q * c,
        }
    }

    /// Re-express the same physical vector in a frame at angle `theta`.
    pub fn reframe(&self, theta: f64) -> Dq {
        self.to_alpha_beta().rotate(theta)
    }
}

pub fn abc_to_alpha_beta(x: &ThreePhase) -> AlphaBeta {
    AlphaBeta {
        alpha: (2.0 * x.a - x.b - x.c) / 3.0,
        beta: (x.b - x.c) * INV_SQRT3,
    }
}

pub fn alpha_beta_to_abc(x: &AlphaBeta) -> ThreePhase {
    ThreePhase {
        a: x.alpha,
        b: -0.5 * x.alpha + SQRT3_2 * x.beta,
        c: -0.5 * x.alpha - SQRT3_2 * x.beta,
    }
}

/// Amplitude-invariant Clarke followed by Park rotation by `theta`.
pub fn abc_to_dq(x: &ThreePhase, theta: f64) -> Result<Dq> {
    if !x.is_finite() {
        return Err(SimError::SignalIntegrity("three-phase sample"));
    }
    if !theta.is_finite() {
        return Err(SimError::SignalIntegrity("transform angle"));
    }
    Ok(abc_to_alpha_beta(x).rotate(theta))
}

/// Inverse of [`abc_to_dq`] at the same angle. Produces no zero sequence.
pub fn dq_to_abc(x: &Dq, theta: f64) -> Result<ThreePhase> {
    if !(x.d.is_finite() && x.q.is_finite()) {
        return Err(SimError::SignalIntegrity("dq quantity"));
    }
    if !theta.is_finite() {
        return Err(SimError::SignalIntegrity("transform angle"));
    }
    let ab = Dq {
        theta_used: theta,
        ..*x
    }
    .to_alpha_beta();
    Ok(alpha_beta_to_abc(&ab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn aligned_balanced_set() {
        for &th in &[0.0, 0.4, -2.9, 3.0] {
            let dq = abc_to_dq(&ThreePhase::balanced(1.0, th), th).unwrap();
            assert_abs_diff_eq!(dq.d, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dq.q, 0.0, epsilon = 1e-12);
            assert_eq!(dq.theta_used, th);
        }
    }

    #[test]
    fn zero_sample() {
        let dq = abc_to_dq(&ThreePhase::ZERO, 1.3).unwrap();
        assert_eq!((dq.d, dq.q), (0.0, 0.0));
        assert_eq!(dq_to_abc(&Dq::default(), 0.7).unwrap(), ThreePhase::ZERO);
    }

    #[test]
    fn transform_lagging_by_quarter_turn_gives_positive_q() {
        // closed form: d + jq = A e^{j(phi - theta)}
        let phi = 0.9;
        let theta = phi - FRAC_PI_2;
        let dq = abc_to_dq(&ThreePhase::balanced(1.0, phi), theta).unwrap();
        let (s, c) = (phi - theta).sin_cos();
        assert_abs_diff_eq!(dq.d, c, epsilon = 1e-12);
        assert_abs_diff_eq!(dq.q, s, epsilon = 1e-12);
        assert_abs_diff_eq!(dq.q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn phase_a_anchor() {
        let abc = dq_to_abc(&Dq::new(1.0, 0.0, 0.0), 0.0).unwrap();
        assert_abs_diff_eq!(abc.a, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(abc.b, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let bad = ThreePhase::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(
            abc_to_dq(&bad, 0.0),
            Err(SimError::SignalIntegrity(_))
        ));
        assert!(abc_to_dq(&ThreePhase::ZERO, f64::INFINITY).is_err());
        assert!(dq_to_abc(&Dq::new(f64::NAN, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn reframe_preserves_vector() {
        let v = Dq::new(0.8, -0.3, 0.2);
        let w = v.reframe(1.1);
        let (a, b) = (v.to_alpha_beta(), w.to_alpha_beta());
        assert_abs_diff_eq!(a.alpha, b.alpha, epsilon = 1e-14);
        assert_abs_diff_eq!(a.beta, b.beta, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn round_trip(amp in 0.0f64..10.0, phi in -PI..PI, theta in -10.0f64..10.0) {
            let x = ThreePhase::balanced(amp, phi);
            let back = dq_to_abc(&abc_to_dq(&x, theta).unwrap(), theta).unwrap();
            prop_assert!((back.a - x.a).abs() < 1e-10);
            prop_assert!((back.b - x.b).abs() < 1e-10);
            prop_assert!((back.c - x.c).abs() < 1e-10);
        }

        #[test]
        fn magnitude_is_angle_invariant(amp in 0.0f64..10.0, phi in -PI..PI, t1 in -7.0f64..7.0, t2 in -7.0f64..7.0) {
            let x = ThreePhase::balanced(amp, phi);
            let m1 = abc_to_dq(&x, t1).unwrap().magnitude();
            let m2 = abc_to_dq(&x, t2).unwrap().magnitude();
            prop_assert!((m1 - m2).abs() < 1e-10);
            prop_assert!((m1 - amp).abs() < 1e-10);
        }
    }
}
