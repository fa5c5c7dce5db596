//! Pendulum with H = p^2/2 + (K^2/2) cos(theta): a time-reversal invariant
//! equation with both reversible (libration) and irreversible (rotation)
//! solutions, classified analytically and by direct integration.

use crate::odecore::{self, OdeError, ReversalInvolution, StateVector, System};

#[derive(Debug, Clone, Copy)]
pub struct PendulumParams {
    /// Potential strength; the separatrix energy is K^2/2.
    pub k: f64,
}

impl PendulumParams {
    pub fn new(k: f64) -> Self {
        assert!(k > 0.0, "K must be positive");
        Self { k }
    }

    pub fn separatrix_energy(&self) -> f64 {
        0.5 * self.k * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    /// Angle in radians, unbounded.
    pub theta: f64,
    pub p_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticClass {
    Reversible,
    Irreversible,
    Separatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericClass {
    Reversible,
    Irreversible,
    Undetermined,
}

/// Relative half-width of the energy band classified as Separatrix.
pub const SEPARATRIX_BAND: f64 = 1e-9;
/// Phase-space distance below which the trajectory counts as closed.
pub const CLOSURE_DELTA: f64 = 1e-6;
/// Angle excursion beyond 2 pi that counts as rotation.
pub const ROTATION_MARGIN: f64 = 0.5;

/// The potential has its maximum at theta = 0 (sign +cos), so the stable
/// equilibrium sits at theta = pi.
pub fn energy(s: &PendulumState, p: &PendulumParams) -> f64 {
    0.5 * s.p_theta * s.p_theta + 0.5 * p.k * p.k * s.theta.cos()
}

pub fn classify_analytic(s: &PendulumState, p: &PendulumParams) -> AnalyticClass {
    let e = energy(s, p);
    let e_sep = p.separatrix_energy();
    if (e - e_sep).abs() <= SEPARATRIX_BAND * p.k * p.k {
        AnalyticClass::Separatrix
    } else if e < e_sep {
        AnalyticClass::Reversible
    } else {
        AnalyticClass::Irreversible
    }
}

/// The pendulum as an odecore system; state is [theta, p_theta].
pub struct PendulumSystem {
    pub params: PendulumParams,
}

impl System for PendulumSystem {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = 0.5 * self.params.k * self.params.k * y[0].sin();
    }
}

/// The state-level involution for t -> -t: theta -> theta, p -> -p.
pub fn reversal_involution() -> ReversalInvolution {
    ReversalInvolution::new(vec![1.0, -1.0])
}

/// Classifies by integration: Reversible once the trajectory returns within
/// `CLOSURE_DELTA` of the initial phase point, Irreversible once the angle
/// excursion exceeds one full turn plus margin, Undetermined otherwise
/// (periods diverge near the separatrix, so any finite horizon leaves a band
/// undecided).
pub fn classify_numeric(
    s: &PendulumState,
    p: &PendulumParams,
    t_max: f64,
    tol: f64,
) -> Result<NumericClass, OdeError> {
    assert!(t_max > 0.0, "t_max must be positive");
    let sys = PendulumSystem { params: *p };
    let x0 = StateVector::new(0.0, vec![s.theta, s.p_theta]);

    // Fixed point: derivative already negligible.
    let mut dy = [0.0; 2];
    sys.eval(0.0, &x0.x, &mut dy);
    if dy[0].abs() < 1e-14 && dy[1].abs() < 1e-14 {
        return Ok(NumericClass::Reversible);
    }

    // Integrate in windows so closure can stop the scan early.
    const WINDOW: f64 = 25.0;
    let mut start = x0.clone();
    let mut elapsed = 0.0;
    while elapsed < t_max {
        let t_end = start.t + WINDOW.min(t_max - elapsed);
        let traj = odecore::integrate(&sys, &start, t_end, tol)?.trajectory;

        // Rotation: angle ran away monotonically past a full turn.
        let theta_end = traj.last().x[0];
        if (theta_end - s.theta).abs() > 2.0 * std::f64::consts::PI + ROTATION_MARGIN {
            return Ok(NumericClass::Irreversible);
        }

        // Closure: crossings of p = p0 with matching theta and direction.
        let events = odecore::find_events(&traj, |sv| sv.x[1] - s.p_theta);
        for e in &events {
            if e.t - x0.t < 1e-9 {
                continue;
            }
            let d = ((e.state.x[0] - s.theta).powi(2) + (e.state.x[1] - s.p_theta).powi(2)).sqrt();
            if d < CLOSURE_DELTA {
                return Ok(NumericClass::Reversible);
            }
        }
        start = traj.last();
        elapsed += WINDOW;
    }
    Ok(NumericClass::Undetermined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const K1: PendulumParams = PendulumParams { k: 1.0 };

    #[test]
    fn energy_values() {
        // cos(pi) = -1 exactly in f64
        assert_eq!(energy(&PendulumState { theta: PI, p_theta: 0.0 }, &K1), -0.5);
        assert_eq!(energy(&PendulumState { theta: 0.0, p_theta: 0.0 }, &K1), 0.5);
        assert_eq!(energy(&PendulumState { theta: 0.0, p_theta: 2.0 }, &K1), 2.5);
    }

    #[test]
    fn analytic_classes() {
        assert_eq!(
            classify_analytic(&PendulumState { theta: PI, p_theta: 0.0 }, &K1),
            AnalyticClass::Reversible
        );
        assert_eq!(
            classify_analytic(&PendulumState { theta: 0.0, p_theta: 2.0 }, &K1),
            AnalyticClass::Irreversible
        );
        assert_eq!(
            classify_analytic(&PendulumState { theta: 0.0, p_theta: 0.0 }, &K1),
            AnalyticClass::Separatrix
        );
    }

    #[test]
    fn stable_equilibrium_constant() {
        let sys = PendulumSystem { params: K1 };
        let out = odecore::integrate(
            &sys,
            &crate::odecore::StateVector::new(0.0, vec![PI, 0.0]),
            10.0,
            1e-10,
        )
        .unwrap();
        let end = out.trajectory.last();
        assert!((end.x[0] - PI).abs() < 1e-9);
        assert!(end.x[1].abs() < 1e-9);
    }

    /// Libration period by quadrature: T = 4/K * K(k) scaled for this
    /// potential. For H = p^2/2 + (K^2/2) cos(theta) with psi = theta - pi the
    /// motion is the standard pendulum psi'' = -K'^2 sin psi with K'^2 = K^2/2;
    /// period T = 4/K' * ellipk(sin(psi0/2)) for release from rest at psi0.
    fn libration_period_oracle(theta0: f64, k: f64) -> f64 {
        let psi0 = theta0 - PI;
        let omega = (0.5 * k * k).sqrt();
        let m = (0.5 * psi0).sin().abs();
        4.0 / omega * ellipk(m)
    }

    /// Complete elliptic integral K(m) by the arithmetic-geometric mean.
    fn ellipk(m: f64) -> f64 {
        let mut a = 1.0f64;
        let mut b = (1.0 - m * m).sqrt();
        for _ in 0..60 {
            let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
            a = an;
            b = bn;
            if (a - b).abs() < 1e-16 {
                break;
            }
        }
        0.5 * PI / a
    }

    #[test]
    fn libration_classified_reversible_at_oracle_period() {
        let s = PendulumState { theta: PI / 2.0, p_theta: 0.0 };
        let period = libration_period_oracle(s.theta, 1.0);
        assert!(period < 100.0, "oracle period {period}");
        assert_eq!(
            classify_numeric(&s, &K1, 100.0, 1e-10).unwrap(),
            NumericClass::Reversible
        );
    }

    #[test]
    fn rotation_classified_irreversible() {
        let s = PendulumState { theta: 0.0, p_theta: 2.0 };
        assert_eq!(
            classify_numeric(&s, &K1, 100.0, 1e-10).unwrap(),
            NumericClass::Irreversible
        );
    }

    #[test]
    fn near_separatrix_short_horizon_undetermined() {
        // Energy within 1e-12 of the separatrix: the period is far beyond
        // t_max = 5, and the angle cannot complete a turn either.
        let e = 0.5 + 1e-12;
        let theta = 0.6f64;
        let p = (2.0 * (e - 0.5 * theta.cos())).sqrt();
        let s = PendulumState { theta, p_theta: p };
        assert_eq!(
            classify_numeric(&s, &K1, 5.0, 1e-10).unwrap(),
            NumericClass::Undetermined
        );
    }

    #[test]
    fn energy_conserved_along_trajectory() {
        let sys = PendulumSystem { params: K1 };
        let s0 = PendulumState { theta: 1.0, p_theta: 0.5 };
        let e0 = energy(&s0, &K1);
        let out = odecore::integrate(
            &sys,
            &crate::odecore::StateVector::new(0.0, vec![s0.theta, s0.p_theta]),
            50.0,
            1e-10,
        )
        .unwrap();
        let traj = odecore::resample_uniform(&out.trajectory, 200).unwrap();
        for i in 0..traj.len() {
            let sv = traj.sample(i);
            let e = energy(&PendulumState { theta: sv.x[0], p_theta: sv.x[1] }, &K1);
            assert!(
                (e - e0).abs() < 1e-8 * e0.abs().max(1.0),
                "drift {} at t={}",
                (e - e0).abs(),
                sv.t
            );
        }
    }

    #[test]
    fn flow_reversal_defect_small() {
        let sys = PendulumSystem { params: K1 };
        let d = odecore::check_reversal_property(
            &sys,
            &reversal_involution(),
            &crate::odecore::StateVector::new(0.0, vec![1.0, 0.5]),
            10.0,
            1e-10,
        )
        .unwrap();
        assert!(d < 1e-6, "defect {d}");
    }
}
