//! Closed FLRW universe with a minimally coupled massive scalar field,
//! V(phi) = m^2 phi^2 / 2, units G = c = 1, spatial curvature k = +1.
//!
//! The Hamiltonian constraint
//!   a_dot^2 + k = (8 pi / 3) a^2 rho + (Lambda / 3) a^2
//! determines the scale factor from the reduced phase-space point
//! (a_dot, phi, phi_dot). Trajectories are time-symmetric exactly when they
//! cross one of the axes (0, phi, 0) (even) or (0, 0, phi_dot) (odd); the
//! module measures the distance to those axes, sweeps the two symmetric
//! surfaces, and estimates the fraction of a sampling box within epsilon of
//! symmetry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::odecore::{
    self, Integration, OdeError, ReversalInvolution, StateVector, System, Trajectory,
};

const FOUR_PI_3: f64 = 4.0 * std::f64::consts::PI / 3.0;
const EIGHT_PI_3: f64 = 8.0 * std::f64::consts::PI / 3.0;

/// Scale factor above which the constraint solution is treated as divergent
/// rather than returned.
const A_DIVERGE: f64 = 1e8;

#[derive(Debug, Clone, Copy)]
pub struct CosmoParams {
    /// Scalar-field mass (model units).
    pub m: f64,
    /// Cosmological constant.
    pub lambda: f64,
    /// Spatial curvature; the constraint reduction needs +1.
    pub k: i32,
    /// Singularity cutoff: integration stops when a <= a_min.
    pub a_min: f64,
    /// Integration horizon per time direction.
    pub t_max: f64,
    /// Integrator tolerance.
    pub tol: f64,
}

impl Default for CosmoParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            lambda: 0.0,
            k: 1,
            a_min: 1e-4,
            t_max: 100.0,
            tol: 1e-10,
        }
    }
}

impl CosmoParams {
    pub fn validate(&self) -> Result<(), CosmoError> {
        if !(self.m > 0.0) {
            return Err(CosmoError::BadParams("m must be positive"));
        }
        if !(self.a_min > 0.0) {
            return Err(CosmoError::BadParams("a_min must be positive"));
        }
        Ok(())
    }
}

/// Full phase-space point (a, a_dot, phi, phi_dot) at cosmic time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosmoState {
    pub a: f64,
    pub a_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
    pub t: f64,
}

/// Point of the reduced 3-dimensional phase space (a_dot, phi, phi_dot).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedPoint {
    pub a_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

#[derive(Debug, Error)]
pub enum CosmoError {
    #[error("invalid parameters: {0}")]
    BadParams(&'static str),
    #[error("scale factor {a} at or below the singularity cutoff")]
    Singular { a: f64 },
    #[error("constraint has no solution at this point (non-positive radicand)")]
    NoSolution,
    #[error("constraint solution diverges (a > {A_DIVERGE:e}); energy density too small")]
    Divergent,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

pub fn energy_density(phi: f64, phi_dot: f64, p: &CosmoParams) -> f64 {
    0.5 * phi_dot * phi_dot + 0.5 * p.m * p.m * phi * phi
}

pub fn pressure(phi: f64, phi_dot: f64, p: &CosmoParams) -> f64 {
    0.5 * phi_dot * phi_dot - 0.5 * p.m * p.m * phi * phi
}

/// Evolution equations:
///   a_ddot   = -(4 pi / 3) a (rho + 3 p) + (Lambda / 3) a
///   phi_ddot = -3 (a_dot / a) phi_dot - m^2 phi
pub fn rhs(s: &CosmoState, p: &CosmoParams) -> Result<[f64; 4], CosmoError> {
    if s.a <= p.a_min {
        return Err(CosmoError::Singular { a: s.a });
    }
    let rho = energy_density(s.phi, s.phi_dot, p);
    let pres = pressure(s.phi, s.phi_dot, p);
    Ok([
        s.a_dot,
        -FOUR_PI_3 * s.a * (rho + 3.0 * pres) + p.lambda / 3.0 * s.a,
        s.phi_dot,
        -3.0 * (s.a_dot / s.a) * s.phi_dot - p.m * p.m * s.phi,
    ])
}

/// Solves the constraint for the positive root of a; the reconstructed state
/// has residual below 1e-12.
pub fn solve_constraint_for_a(r: &ReducedPoint, p: &CosmoParams) -> Result<f64, CosmoError> {
    let rho = energy_density(r.phi, r.phi_dot, p);
    let denom = EIGHT_PI_3 * rho + p.lambda / 3.0;
    let num = r.a_dot * r.a_dot + p.k as f64;
    if denom <= 0.0 || num <= 0.0 {
        return Err(CosmoError::NoSolution);
    }
    let a = (num / denom).sqrt();
    if a > A_DIVERGE {
        return Err(CosmoError::Divergent);
    }
    Ok(a)
}

/// Reconstructs the full state at t = 0 from a reduced point.
pub fn reconstruct(r: &ReducedPoint, p: &CosmoParams) -> Result<CosmoState, CosmoError> {
    Ok(CosmoState {
        a: solve_constraint_for_a(r, p)?,
        a_dot: r.a_dot,
        phi: r.phi,
        phi_dot: r.phi_dot,
        t: 0.0,
    })
}

/// Normalized constraint residual |a_dot^2 + k - (8pi/3) a^2 rho -
/// (Lambda/3) a^2| / max(1, a_dot^2 + k).
pub fn constraint_residual(s: &CosmoState, p: &CosmoParams) -> f64 {
    let rho = energy_density(s.phi, s.phi_dot, p);
    let lhs = s.a_dot * s.a_dot + p.k as f64;
    let rhs = EIGHT_PI_3 * s.a * s.a * rho + p.lambda / 3.0 * s.a * s.a;
    (lhs - rhs).abs() / lhs.abs().max(1.0)
}

/// State layout for integration: [a, a_dot, phi, phi_dot].
pub struct CosmoSystem {
    pub params: CosmoParams,
}

impl System for CosmoSystem {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let p = &self.params;
        if y[0] <= 0.0 {
            dy.fill(f64::NAN);
            return;
        }
        let rho = energy_density(y[2], y[3], p);
        let pres = pressure(y[2], y[3], p);
        dy[0] = y[1];
        dy[1] = -FOUR_PI_3 * y[0] * (rho + 3.0 * pres) + p.lambda / 3.0 * y[0];
        dy[2] = y[3];
        dy[3] = -3.0 * (y[1] / y[0]) * y[3] - p.m * p.m * y[2];
    }

    fn stop_signal(&self, _t: f64, y: &[f64]) -> f64 {
        y[0] - self.params.a_min
    }
}

/// Time reversal at the state level: (a, a_dot, phi, phi_dot) ->
/// (a, -a_dot, phi, -phi_dot).
pub fn reversal_involution() -> ReversalInvolution {
    ReversalInvolution::new(vec![1.0, -1.0, 1.0, -1.0])
}

fn state_vector(s: &CosmoState) -> StateVector {
    StateVector::new(s.t, vec![s.a, s.a_dot, s.phi, s.phi_dot])
}

/// Both time directions from one state, each stopped at the singularity
/// cutoff or the horizon.
pub struct TwoSided {
    pub forward: Integration,
    pub backward: Integration,
}

impl TwoSided {
    pub fn integrate(s: &CosmoState, p: &CosmoParams) -> Result<TwoSided, CosmoError> {
        let sys = CosmoSystem { params: *p };
        let x0 = state_vector(s);
        let forward = odecore::integrate(&sys, &x0, s.t + p.t_max, p.tol)?;
        let backward = odecore::integrate(&sys, &x0, s.t - p.t_max, p.tol)?;
        Ok(TwoSided { forward, backward })
    }

    pub fn t_lo(&self) -> f64 {
        self.backward.trajectory.t_last()
    }

    pub fn t_hi(&self) -> f64 {
        self.forward.trajectory.t_last()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        if t >= self.forward.trajectory.t_first() {
            self.forward.trajectory.eval(t)
        } else {
            self.backward.trajectory.eval(t)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryKind {
    Even,
    Odd,
    None,
}

/// Normalization for the defect functional. The axis distances themselves
/// are normalized by the local oscillation envelope (see [`axis_distances`]),
/// so only the expansion rate needs an external scale.
#[derive(Debug, Clone, Copy)]
pub struct SymmetryScales {
    /// Half-width of the a_dot range, used by the no-turning-point fallback.
    pub a_dot: f64,
}

impl Default for SymmetryScales {
    fn default() -> Self {
        Self { a_dot: 1.0 }
    }
}

/// Envelope-normalized distances of a phase-space point to the even axis
/// (0, phi, 0) and the odd axis (0, 0, phi_dot):
///   d_even = |phi_dot| / E,  d_odd = m |phi| / E,  E = sqrt(phi_dot^2 + m^2 phi^2).
///
/// Normalizing by the local envelope E rather than a fixed scale matters:
/// the scalar amplitude decays like a^{-3/2}, so at a late expansion maximum
/// |phi| and |phi_dot| are both tiny for every long-lived trajectory and a
/// fixed normalization would score them all as near-symmetric. The
/// envelope-normalized distance is the oscillator phase angle, invariant
/// under amplitude decay, zero exactly on the axes and bounded by 1.
pub fn axis_distances(phi: f64, phi_dot: f64, m: f64) -> (f64, f64) {
    let e = (phi_dot * phi_dot + m * m * phi * phi).sqrt();
    if e == 0.0 {
        // Exact vacuum: the point lies on both axes.
        return (0.0, 0.0);
    }
    (phi_dot.abs() / e, m * phi.abs() / e)
}

#[derive(Debug, Clone)]
pub struct SymmetryReport {
    /// Dimensionless distance of the trajectory from the symmetry axes.
    pub defect: f64,
    /// Best symmetry-time candidate; present iff kind != None.
    pub t_s: Option<f64>,
    pub kind: SymmetryKind,
    pub waveform_defect: Option<f64>,
    /// Set when an integration direction failed and the report covers only
    /// the reachable window.
    pub partial: bool,
}

const INFIMUM_SAMPLES: usize = 200;
/// Half-width of the waveform guard window around each candidate.
const GUARD_WINDOW: f64 = 5.0;
const GUARD_SAMPLES: usize = 64;

/// Distance-to-axis functional evaluated at turning-point candidates
/// (events a_dot = 0), with a trajectory-infimum fallback. The defect
/// vanishes exactly on trajectories through (0, phi, 0) or (0, 0, phi_dot);
/// candidates are scored by the envelope-normalized [`axis_distances`], and
/// the best candidate's direct waveform asymmetry is reported alongside as a
/// diagnostic.
pub fn symmetry_defect(
    r: &ReducedPoint,
    p: &CosmoParams,
    scales: &SymmetryScales,
) -> Result<SymmetryReport, CosmoError> {
    let s0 = reconstruct(r, p)?;
    let sys = CosmoSystem { params: *p };
    let x0 = state_vector(&s0);

    let mut partial = false;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for dir in [1.0, -1.0] {
        match odecore::integrate(&sys, &x0, s0.t + dir * p.t_max, p.tol) {
            Ok(out) => trajectories.push(out.trajectory),
            Err(OdeError::Stiffness { .. }) => partial = true,
            Err(e) => return Err(e.into()),
        }
    }
    if trajectories.is_empty() {
        return Err(CosmoError::Ode(OdeError::Stiffness { t: s0.t }));
    }

    let t_hi = trajectories
        .iter()
        .map(|t| t.t_last())
        .fold(s0.t, f64::max);
    let t_lo = trajectories
        .iter()
        .map(|t| t.t_last())
        .fold(s0.t, f64::min);
    let eval_two = |t: f64| -> Option<Vec<f64>> {
        for traj in &trajectories {
            if traj.contains(t) {
                return traj.eval(t).ok();
            }
        }
        None
    };

    // Turning-point candidates, scored by the envelope-normalized distance
    // to the nearest axis.
    let mut best: Option<(f64, f64, SymmetryKind)> = None; // (score, t, kind)
    for traj in &trajectories {
        for ev in odecore::find_events(traj, |sv| sv.x[1]) {
            let (d_even, d_odd) = axis_distances(ev.state.x[2], ev.state.x[3], p.m);
            let (d, kind) = if d_even <= d_odd {
                (d_even, SymmetryKind::Even)
            } else {
                (d_odd, SymmetryKind::Odd)
            };
            if best.map(|(bs, _, _)| d < bs).unwrap_or(true) {
                best = Some((d, ev.t, kind));
            }
        }
    }

    // Turning points take priority; the trajectory infimum of
    // max(|a_dot|/s, min(envelope axis distances)) is only a fallback for
    // trajectories that never turn within the window.
    let report = match best {
        Some((score, t, kind)) => {
            // Waveform asymmetry about the best candidate, reported as a
            // diagnostic; the window is clipped to the integrated span.
            let (avail_hi, avail_lo) = (t_hi - t, t - t_lo);
            let w_eff = (t.abs() + GUARD_WINDOW).min(avail_hi).min(avail_lo);
            let wave = if w_eff > 0.0 {
                waveform_asymmetry(&eval_two, t, kind, w_eff)
            } else {
                None
            };
            SymmetryReport {
                defect: score,
                t_s: Some(t),
                kind,
                waveform_defect: wave,
                partial,
            }
        }
        None => {
            let mut infimum = f64::INFINITY;
            for traj in &trajectories {
                let res = odecore::resample_uniform(traj, INFIMUM_SAMPLES)?;
                for i in 0..res.len() {
                    let sv = res.sample(i);
                    let (d_even, d_odd) = axis_distances(sv.x[2], sv.x[3], p.m);
                    let d_axis = d_even.min(d_odd);
                    infimum = infimum.min((sv.x[1].abs() / scales.a_dot).max(d_axis));
                }
            }
            SymmetryReport {
                defect: infimum,
                t_s: None,
                kind: SymmetryKind::None,
                waveform_defect: None,
                partial,
            }
        }
    };
    Ok(report)
}

/// Waveform asymmetry about t_s over a window, from an evaluator of the full
/// state: max over offsets of |a(t_s+tau) - a(t_s-tau)|/a(t_s) plus the phi
/// mismatch (Even: difference, Odd: sum). None when the evaluator cannot
/// cover the window.
fn waveform_asymmetry<F: Fn(f64) -> Option<Vec<f64>>>(
    eval: &F,
    t_s: f64,
    kind: SymmetryKind,
    window: f64,
) -> Option<f64> {
    let a_s = eval(t_s)?[0];
    let mut defect: f64 = 0.0;
    for i in 1..=GUARD_SAMPLES {
        let tau = window * (i as f64) / (GUARD_SAMPLES as f64);
        let plus = eval(t_s + tau)?;
        let minus = eval(t_s - tau)?;
        let da = (plus[0] - minus[0]).abs() / a_s;
        let dphi = match kind {
            SymmetryKind::Even => (plus[2] - minus[2]).abs(),
            SymmetryKind::Odd => (plus[2] + minus[2]).abs(),
            SymmetryKind::None => unreachable!("guard only runs on candidates"),
        };
        defect = defect.max(da + dphi);
    }
    Some(defect)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveKind {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy)]
pub struct WaveformCheck {
    pub defect: f64,
    /// Requested window, possibly truncated by the singularity cutoff.
    pub effective_window: f64,
}

const WAVEFORM_SAMPLES: usize = 256;

/// Direct waveform comparison about t_s:
/// max over offsets of |a(t_s+tau) - a(t_s-tau)| / a(t_s) plus the phi
/// mismatch (Even: difference, Odd: sum).
pub fn waveform_symmetry_check(
    r: &ReducedPoint,
    t_s: f64,
    kind: WaveKind,
    window: f64,
    p: &CosmoParams,
) -> Result<WaveformCheck, CosmoError> {
    assert!(window > 0.0, "window must be positive");
    let s0 = reconstruct(r, p)?;
    let wide = CosmoParams {
        t_max: (t_s.abs() + window) * 1.001 + 1e-9,
        ..*p
    };
    let two = TwoSided::integrate(&s0, &wide)?;
    let eff = window
        .min(two.t_hi() - t_s)
        .min(t_s - two.t_lo());
    if eff <= 0.0 {
        return Ok(WaveformCheck { defect: f64::INFINITY, effective_window: 0.0 });
    }
    let a_s = two.eval(t_s)?[0];
    let mut defect: f64 = 0.0;
    for i in 1..=WAVEFORM_SAMPLES {
        let tau = eff * (i as f64) / (WAVEFORM_SAMPLES as f64);
        let plus = two.eval(t_s + tau)?;
        let minus = two.eval(t_s - tau)?;
        let da = (plus[0] - minus[0]).abs() / a_s;
        let dphi = match kind {
            WaveKind::Even => (plus[2] - minus[2]).abs(),
            WaveKind::Odd => (plus[2] + minus[2]).abs(),
        };
        defect = defect.max(da + dphi);
    }
    Ok(WaveformCheck { defect, effective_window: eff })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub axis: Axis,
    pub seed: f64,
    pub t: f64,
    pub a_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceCloud {
    pub points: Vec<SurfacePoint>,
    /// Seeds skipped because the constraint had no admissible solution or the
    /// integration failed.
    pub skipped_seeds: usize,
}

/// Axis sampling specification for the two symmetric surfaces.
#[derive(Debug, Clone)]
pub struct AxisGrid {
    /// phi values seeding the even axis (0, phi, 0).
    pub even_phi: Vec<f64>,
    /// phi_dot values seeding the odd axis (0, 0, phi_dot).
    pub odd_phi_dot: Vec<f64>,
    /// Resampled points per time direction per seed.
    pub n_times: usize,
    /// Sweep cutoff: propagation stops once a exceeds this multiple of the
    /// seed's scale factor. Re-deriving the symmetry time from a late point
    /// means re-tracing a near-de-Sitter contraction backward, which
    /// amplifies integration error exponentially in the number of e-folds;
    /// the cap keeps every emitted point within the well-conditioned range.
    pub a_growth_cap: f64,
}

/// Sweeps trajectories from the two symmetry axes; the swept sets are the
/// 2-dimensional surfaces containing every time-symmetric trajectory.
pub fn build_symmetric_surfaces(grid: &AxisGrid, p: &CosmoParams) -> Result<SurfaceCloud, CosmoError> {
    assert!(grid.n_times >= 2);
    assert!(grid.a_growth_cap > 1.0, "growth cap must exceed 1");
    struct Capped {
        inner: CosmoSystem,
        a_max: f64,
    }
    impl System for Capped {
        fn dim(&self) -> usize {
            4
        }
        fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
            self.inner.eval(t, y, dy)
        }
        fn stop_signal(&self, t: f64, y: &[f64]) -> f64 {
            self.inner.stop_signal(t, y).min(self.a_max - y[0])
        }
    }
    let mut points = Vec::new();
    let mut skipped = 0usize;
    let seeds: Vec<(Axis, f64)> = grid
        .even_phi
        .iter()
        .map(|&v| (Axis::Even, v))
        .chain(grid.odd_phi_dot.iter().map(|&v| (Axis::Odd, v)))
        .collect();
    for (axis, seed) in seeds {
        let r = match axis {
            Axis::Even => ReducedPoint { a_dot: 0.0, phi: seed, phi_dot: 0.0 },
            Axis::Odd => ReducedPoint { a_dot: 0.0, phi: 0.0, phi_dot: seed },
        };
        let s0 = match reconstruct(&r, p) {
            Ok(s) => s,
            Err(CosmoError::NoSolution) | Err(CosmoError::Divergent) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let sys = Capped {
            inner: CosmoSystem { params: *p },
            a_max: grid.a_growth_cap * s0.a,
        };
        let x0 = state_vector(&s0);
        let fwd = odecore::integrate(&sys, &x0, s0.t + p.t_max, p.tol);
        let back = odecore::integrate(&sys, &x0, s0.t - p.t_max, p.tol);
        let (fwd, back) = match (fwd, back) {
            (Ok(f), Ok(b)) => (f, b),
            (Err(OdeError::Stiffness { .. }), _) | (_, Err(OdeError::Stiffness { .. })) => {
                skipped += 1;
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        };
        for traj in [&fwd.trajectory, &back.trajectory] {
            if traj.len() < 2 {
                // Zero-propagation side: the seed itself is still emitted
                // below via the other direction or the endpoints.
                points.push(SurfacePoint {
                    axis,
                    seed,
                    t: traj.t_first(),
                    a_dot: r.a_dot,
                    phi: r.phi,
                    phi_dot: r.phi_dot,
                });
                continue;
            }
            let res = odecore::resample_uniform(traj, grid.n_times)?;
            for i in 0..res.len() {
                let sv = res.sample(i);
                points.push(SurfacePoint {
                    axis,
                    seed,
                    t: sv.t,
                    a_dot: sv.x[1],
                    phi: sv.x[2],
                    phi_dot: sv.x[3],
                });
            }
        }
    }
    Ok(SurfaceCloud { points, skipped_seeds: skipped })
}

/// Uniform sampling box on the reduced chart.
#[derive(Debug, Clone, Copy)]
pub struct SamplingBox {
    pub a_dot: (f64, f64),
    pub phi: (f64, f64),
    pub phi_dot: (f64, f64),
}

impl SamplingBox {
    pub fn scales(&self) -> SymmetryScales {
        let hw = |(lo, hi): (f64, f64)| ((hi - lo) / 2.0).abs().max(1e-12);
        SymmetryScales { a_dot: hw(self.a_dot) }
    }
}

#[derive(Debug, Clone)]
pub struct MeasureSample {
    pub point: ReducedPoint,
    pub report: SymmetryReport,
}

#[derive(Debug, Clone)]
pub struct MeasureRun {
    pub samples: Vec<MeasureSample>,
    /// (epsilon, fraction of samples with defect < epsilon).
    pub fractions: Vec<(f64, f64)>,
    pub rejected_draws: usize,
}

/// Draws n points uniformly from the box (counter-based per-index streams,
/// so the result is independent of scheduling), computes the symmetry defect
/// of each, and tabulates the fraction below every epsilon.
pub fn estimate_symmetric_fraction(
    n: usize,
    sbox: &SamplingBox,
    epsilons: &[f64],
    seed: u64,
    p: &CosmoParams,
) -> Result<MeasureRun, CosmoError> {
    assert!(n >= 100, "need at least 100 samples");
    let scales = sbox.scales();

    let results: Vec<Result<(MeasureSample, usize), CosmoError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut rejected = 0usize;
            for _ in 0..1000 {
                let point = ReducedPoint {
                    a_dot: rng.gen_range(sbox.a_dot.0..sbox.a_dot.1),
                    phi: rng.gen_range(sbox.phi.0..sbox.phi.1),
                    phi_dot: rng.gen_range(sbox.phi_dot.0..sbox.phi_dot.1),
                };
                match symmetry_defect(&point, p, &scales) {
                    Ok(report) => return Ok((MeasureSample { point, report }, rejected)),
                    Err(CosmoError::NoSolution) | Err(CosmoError::Divergent) => {
                        rejected += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(CosmoError::BadParams("box lies outside the admissible region"))
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    let mut rejected_draws = 0;
    for r in results {
        let (s, rej) = r?;
        samples.push(s);
        rejected_draws += rej;
    }

    let fractions = epsilons
        .iter()
        .map(|&eps| {
            let count = samples.iter().filter(|s| s.report.defect < eps).count();
            (eps, count as f64 / n as f64)
        })
        .collect();

    Ok(MeasureRun { samples, fractions, rejected_draws })
}

/// Least-squares slope of log(fraction) vs log(epsilon), with r^2. An
/// epsilon-neighbourhood of a codimension-1 set scales with exponent 1.
pub fn fit_scaling_exponent(table: &[(f64, f64)]) -> Result<(f64, f64), CosmoError> {
    let rows: Vec<(f64, f64)> = table
        .iter()
        .filter(|&&(eps, f)| eps > 0.0 && f > 0.0)
        .map(|&(eps, f)| (eps.ln(), f.ln()))
        .collect();
    if rows.len() < 3 {
        return Err(CosmoError::BadParams(
            "need at least 3 rows with positive fraction to fit",
        ));
    }
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let sxx = rows.iter().map(|r| (r.0 - mx) * (r.0 - mx)).sum::<f64>();
    let sxy = rows.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = rows
        .iter()
        .map(|r| {
            let e = r.1 - (slope * r.0 + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = rows.iter().map(|r| (r.1 - my) * (r.1 - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((slope, r2))
}

/// Local PCA spectra over k-nearest-neighbour patches of a 3-d point cloud;
/// returns singular values (sqrt of covariance eigenvalues) sorted
/// descending, one triple per probe. Probes are drawn deterministically.
pub fn local_pca_spectra(
    points: &[[f64; 3]],
    n_probes: usize,
    k: usize,
    seed: u64,
) -> Vec<[f64; 3]> {
    use nalgebra::Matrix3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_probes);
    if points.len() < k + 1 {
        return out;
    }
    for _ in 0..n_probes {
        let c = points[rng.gen_range(0..points.len())];
        let mut dists: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let d = (0..3).map(|j| (q[j] - c[j]).powi(2)).sum::<f64>();
                (d, i)
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let patch: Vec<[f64; 3]> = dists[..k].iter().map(|&(_, i)| points[i]).collect();
        let mean = [
            patch.iter().map(|q| q[0]).sum::<f64>() / k as f64,
            patch.iter().map(|q| q[1]).sum::<f64>() / k as f64,
            patch.iter().map(|q| q[2]).sum::<f64>() / k as f64,
        ];
        let mut cov = Matrix3::<f64>::zeros();
        for q in &patch {
            for a in 0..3 {
                for b in 0..3 {
                    cov[(a, b)] += (q[a] - mean[a]) * (q[b] - mean[b]) / k as f64;
                }
            }
        }
        let eig = cov.symmetric_eigen();
        let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|&l: &f64| l.max(0.0).sqrt()).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        out.push([sv[0], sv[1], sv[2]]);
    }
    out
}
