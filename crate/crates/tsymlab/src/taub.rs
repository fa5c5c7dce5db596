//! Factorized constraint Hamiltonian with a two-sheet structure:
//! H = (sqrt(6) p_q + S/sqrt(6)) (sqrt(6) p_q - S/sqrt(6)),
//! S = sqrt(p_u^2 + (12 pi)^2 e^{6u}). S never vanishes, so the constraint
//! surface H = 0 splits into two sheets p_q = +-S/6 that never meet; the
//! twin map exchanges them.

use std::io::Write;

use thiserror::Error;

use crate::odecore::{self, fmt_g17, OdeError, StateVector, System, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaubState {
    pub q: f64,
    pub u: f64,
    pub p_q: f64,
    pub p_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sheet {
    /// p_q = +S/6
    Plus,
    /// p_q = -S/6
    Minus,
}

impl Sheet {
    pub fn sign(self) -> f64 {
        match self {
            Sheet::Plus => 1.0,
            Sheet::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Sheet {
        match self {
            Sheet::Plus => Sheet::Minus,
            Sheet::Minus => Sheet::Plus,
        }
    }
}

#[derive(Debug, Error)]
pub enum TaubError {
    #[error("p_q = 0 lies on neither sheet (|p_q| >= S/6 > 0 on shell)")]
    UndefinedBranch,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// S(u, p_u) = sqrt(p_u^2 + (12 pi)^2 e^{6u}); strictly positive everywhere.
pub fn sheet_gap(u: f64, p_u: f64) -> f64 {
    let w = 12.0 * std::f64::consts::PI * (3.0 * u).exp();
    (p_u * p_u + w * w).sqrt()
}

/// H evaluated on an arbitrary state: H = 6 p_q^2 - S^2/6.
pub fn hamiltonian(s: &TaubState) -> f64 {
    let big_s = sheet_gap(s.u, s.p_u);
    6.0 * s.p_q * s.p_q - big_s * big_s / 6.0
}

/// Solves H = 0 for p_q on the chosen sheet.
pub fn sheet_solve(u: f64, p_u: f64, branch: Sheet) -> f64 {
    branch.sign() * sheet_gap(u, p_u) / 6.0
}

/// |H| normalized by S^2, plus the branch inferred from sign(p_q).
pub fn sheet_residual(s: &TaubState) -> Result<(f64, Sheet), TaubError> {
    if s.p_q == 0.0 {
        return Err(TaubError::UndefinedBranch);
    }
    let big_s = sheet_gap(s.u, s.p_u);
    let res = hamiltonian(s).abs() / (big_s * big_s);
    let branch = if s.p_q > 0.0 { Sheet::Plus } else { Sheet::Minus };
    Ok((res, branch))
}

/// Reduced dynamics on one sheet, with q as the evolution parameter and
/// reduced Hamiltonian h(u, p_u) = -p_q = -(sign) S/6:
///   du/dq   = dh/dp_u = -(sign) p_u / (6 S)
///   dp_u/dq = -dh/du  = +(sign) (12 pi)^2 e^{6u} / (2 S)
pub struct ReducedSheetSystem {
    pub branch: Sheet,
}

impl System for ReducedSheetSystem {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _q: f64, y: &[f64], dy: &mut [f64]) {
        let (u, p_u) = (y[0], y[1]);
        let sign = self.branch.sign();
        let big_s = sheet_gap(u, p_u);
        let w2 = (12.0 * std::f64::consts::PI).powi(2) * (6.0 * u).exp();
        dy[0] = -sign * p_u / (6.0 * big_s);
        dy[1] = sign * w2 / (2.0 * big_s);
    }
}

/// Reduced Hamiltonian h = -(sign) S/6, conserved along the flow.
pub fn reduced_hamiltonian(u: f64, p_u: f64, branch: Sheet) -> f64 {
    -branch.sign() * sheet_gap(u, p_u) / 6.0
}

/// An on-shell trajectory: reduced samples (u, p_u) over q, with the sheet
/// fixing p_q.
#[derive(Debug, Clone)]
pub struct SheetTrajectory {
    pub traj: Trajectory,
    pub branch: Sheet,
}

impl SheetTrajectory {
    pub fn state_at(&self, q: f64) -> Result<TaubState, OdeError> {
        let y = self.traj.eval(q)?;
        Ok(TaubState {
            q,
            u: y[0],
            p_q: sheet_solve(y[0], y[1], self.branch),
            p_u: y[1],
        })
    }

    /// CSV: `q,u,p_u,p_q,branch,H_residual`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "q,u,p_u,p_q,branch,H_residual")?;
        for i in 0..self.traj.len() {
            let s = self.traj.sample(i);
            let state = TaubState {
                q: s.t,
                u: s.x[0],
                p_q: sheet_solve(s.x[0], s.x[1], self.branch),
                p_u: s.x[1],
            };
            let (res, _) = sheet_residual(&state).expect("on-shell p_q nonzero");
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_g17(state.q),
                fmt_g17(state.u),
                fmt_g17(state.p_u),
                fmt_g17(state.p_q),
                match self.branch {
                    Sheet::Plus => "plus",
                    Sheet::Minus => "minus",
                },
                fmt_g17(res)
            )?;
        }
        Ok(())
    }
}

/// Evolves (u, p_u) on the chosen sheet over [0, q_span].
pub fn reduced_evolution(
    u0: f64,
    p_u0: f64,
    branch: Sheet,
    q_span: f64,
    tol: f64,
) -> Result<SheetTrajectory, TaubError> {
    let sys = ReducedSheetSystem { branch };
    let x0 = StateVector::new(0.0, vec![u0, p_u0]);
    let out = odecore::integrate(&sys, &x0, q_span, tol)?;
    Ok(SheetTrajectory {
        traj: out.trajectory,
        branch,
    })
}

/// The twin map: q -> -q with the conjugate momentum p_q -> -p_q, samplewise,
/// order reversed. It exchanges the two factors of H, so a Plus trajectory
/// maps onto the Minus sheet (and vice versa); applying it twice restores the
/// original exactly.
pub fn twin_map(st: &SheetTrajectory) -> SheetTrajectory {
    let n = st.traj.len();
    let samples: Vec<StateVector> = (0..n)
        .rev()
        .map(|i| {
            let s = st.traj.sample(i);
            StateVector::new(-s.t, s.x)
        })
        .collect();
    SheetTrajectory {
        traj: Trajectory::from_samples(&samples),
        branch: st.branch.opposite(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sheet_solve_closed_forms() {
        // u = 0, p_u = 0: S = 12 pi, p_q = +-2 pi.
        assert!((sheet_solve(0.0, 0.0, Sheet::Plus) - 2.0 * PI).abs() < 1e-14);
        assert!((sheet_solve(0.0, 0.0, Sheet::Minus) + 2.0 * PI).abs() < 1e-14);
        // u -> -inf: exponential term vanishes, p_q -> p_u/6.
        assert!((sheet_solve(-200.0, 1.0, Sheet::Plus) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn solved_states_satisfy_constraint() {
        for &(u, p_u) in &[(0.0, 0.0), (0.5, -1.3), (-2.0, 4.0)] {
            let p_q = sheet_solve(u, p_u, Sheet::Plus);
            let s = TaubState { q: 0.0, u, p_q, p_u };
            let big_s = sheet_gap(u, p_u);
            assert!(hamiltonian(&s).abs() < 1e-10 * big_s * big_s);
            let (res, br) = sheet_residual(&s).unwrap();
            assert!(res < 1e-10);
            assert_eq!(br, Sheet::Plus);
        }
    }

    #[test]
    fn residual_linear_in_perturbation() {
        let (u, p_u) = (0.2, 0.7);
        let p_q = sheet_solve(u, p_u, Sheet::Plus);
        let big_s = sheet_gap(u, p_u);
        let eps = 1e-3;
        let s = TaubState { q: 0.0, u, p_q: p_q + eps, p_u };
        let (res, _) = sheet_residual(&s).unwrap();
        // d|H|/dp_q = 12 p_q = 2 S, so residual ~ 2 S eps / S^2.
        let expected = 2.0 * eps / big_s;
        assert!((res - expected).abs() < 0.01 * expected, "res {res} vs {expected}");
    }

    #[test]
    fn p_q_zero_is_off_shell() {
        let s = TaubState { q: 0.0, u: 0.0, p_q: 0.0, p_u: 0.0 };
        assert!(matches!(sheet_residual(&s), Err(TaubError::UndefinedBranch)));
    }

    #[test]
    fn vector_field_at_turning_point() {
        let sys = ReducedSheetSystem { branch: Sheet::Plus };
        let mut dy = [0.0; 2];
        sys.eval(0.0, &[0.3, 0.0], &mut dy);
        assert_eq!(dy[0], 0.0, "du/dq vanishes when p_u = 0");
        assert!(dy[1] != 0.0, "exponential potential pushes p_u");
    }

    #[test]
    fn reduced_hamiltonian_conserved() {
        let st = reduced_evolution(0.0, 1.0, Sheet::Plus, 20.0, 1e-10).unwrap();
        let h0 = reduced_hamiltonian(0.0, 1.0, Sheet::Plus);
        for i in 0..st.traj.len() {
            let s = st.traj.sample(i);
            let h = reduced_hamiltonian(s.x[0], s.x[1], Sheet::Plus);
            assert!(
                ((h - h0) / h0).abs() < 1e-8,
                "drift {} at q = {}",
                ((h - h0) / h0).abs(),
                s.t
            );
        }
    }

    #[test]
    fn opposite_sheets_are_q_reverses() {
        let plus = reduced_evolution(0.1, 0.4, Sheet::Plus, 3.0, 1e-11).unwrap();
        let minus = reduced_evolution(0.1, 0.4, Sheet::Minus, -3.0, 1e-11).unwrap();
        for &q in &[0.5, 1.5, 2.5] {
            let a = plus.traj.eval(q).unwrap();
            let b = minus.traj.eval(-q).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-8);
            assert!((a[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn twin_of_twin_is_identity() {
        let st = reduced_evolution(0.0, 1.0, Sheet::Plus, 5.0, 1e-9).unwrap();
        let back = twin_map(&twin_map(&st));
        assert_eq!(back.branch, Sheet::Plus);
        assert_eq!(back.traj.len(), st.traj.len());
        for i in 0..st.traj.len() {
            assert_eq!(back.traj.sample(i), st.traj.sample(i));
        }
    }

    #[test]
    fn twin_lies_on_opposite_sheet_and_satisfies_its_dynamics() {
        let tol = 1e-10;
        let plus = reduced_evolution(0.0, 1.0, Sheet::Plus, 5.0, tol).unwrap();
        let twin = twin_map(&plus);
        assert_eq!(twin.branch, Sheet::Minus);
        // Constraint residual on every sample.
        for i in 0..twin.traj.len() {
            let s = twin.traj.sample(i);
            let state = twin.state_at(s.t).unwrap();
            let (res, br) = sheet_residual(&state).unwrap();
            assert!(res < 1e-8);
            assert_eq!(br, Sheet::Minus);
        }
        // Re-integrating the Minus dynamics from the twin's first sample
        // reproduces the twin samples.
        let first = twin.traj.first();
        let sys = ReducedSheetSystem { branch: Sheet::Minus };
        let re = odecore::integrate(&sys, &first, twin.traj.t_last(), tol)
            .unwrap()
            .trajectory;
        let mut worst: f64 = 0.0;
        for i in 0..twin.traj.len() {
            let s = twin.traj.sample(i);
            let y = re.eval(s.t).unwrap();
            worst = worst.max((y[0] - s.x[0]).abs().max((y[1] - s.x[1]).abs()));
        }
        assert!(worst < 10.0 * 1e-7, "twin dynamics residual {worst}");
    }

    #[test]
    fn single_point_twin() {
        let st = SheetTrajectory {
            traj: Trajectory::from_samples(&[StateVector::new(1.0, vec![0.2, 0.3])]),
            branch: Sheet::Plus,
        };
        let tw = twin_map(&st);
        assert_eq!(tw.branch, Sheet::Minus);
        let s = tw.traj.sample(0);
        assert_eq!(s.t, -1.0);
        assert_eq!(s.x, vec![0.2, 0.3]);
    }
}
