//! Generic dynamical-system engine: adaptive Dormand-Prince 5(4) integration
//! with dense output, event location, state-reversal involutions, and the
//! flow-reversal defect that quantifies time-reversal invariance numerically.

use std::io::Write;

use thiserror::Error;

/// A phase-space point at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub t: f64,
    pub x: Vec<f64>,
}

impl StateVector {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|c| c.is_finite())
    }

    /// Euclidean distance between the component vectors (times ignored).
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Componentwise sign flip applied at the state level; applying it twice is
/// the identity. This is how the transformation t -> -t acts on a state.
#[derive(Debug, Clone)]
pub struct ReversalInvolution {
    signs: Vec<f64>,
}

impl ReversalInvolution {
    /// Panics if any sign is not exactly +1 or -1.
    pub fn new(signs: Vec<f64>) -> Self {
        assert!(
            signs.iter().all(|&s| s == 1.0 || s == -1.0),
            "reversal signs must be +1 or -1"
        );
        Self { signs }
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn apply(&self, s: &StateVector) -> StateVector {
        assert_eq!(s.dim(), self.signs.len());
        StateVector {
            t: s.t,
            x: s.x.iter().zip(&self.signs).map(|(c, s)| c * s).collect(),
        }
    }

    pub fn apply_components(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.signs).map(|(c, s)| c * s).collect()
    }
}

/// A first-order ODE system dy/dt = f(t, y).
pub trait System {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]);

    /// Integration stops when this becomes <= 0; the crossing is refined to
    /// dense-output accuracy. Default: never stop.
    fn stop_signal(&self, _t: f64, _y: &[f64]) -> f64 {
        1.0
    }
}

/// A system defined by a closure, for tests and one-off fields.
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> System for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.f)(t, y, dydt)
    }
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}: system too stiff for this tolerance")]
    Stiffness { t: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("non-finite derivative at the initial state")]
    BadInitialState,
    #[error("query t = {t} outside trajectory span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
}

/// Why an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Reached the requested end time.
    Completed,
    /// The system's stop signal crossed zero.
    StopEvent,
    /// A non-finite derivative was encountered; trajectory holds the last
    /// valid state.
    Singularity,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 4th-order embedded weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
// Dense-output weights (Hairer's continuous extension, order 4).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const MIN_STEP_FRACTION: f64 = 1e-14;
/// Dense-output interpolation order of the integrator.
pub const DENSE_ORDER: usize = 4;

#[derive(Debug, Clone)]
enum Dense {
    /// Quartic continuous extension: rcont[0..5], each of length dim.
    Poly(Box<[Vec<f64>; 5]>),
    /// Straight line between segment endpoints.
    Linear,
}

#[derive(Debug, Clone)]
struct Segment {
    t1: f64,
    y1: Vec<f64>,
    dense: Dense,
}

/// A time-ordered solution with dense interpolation. Sample times are
/// strictly monotone (increasing or decreasing, following the direction of
/// integration).
#[derive(Debug, Clone)]
pub struct Trajectory {
    t0: f64,
    y0: Vec<f64>,
    segments: Vec<Segment>,
    interpolation_order: usize,
}

impl Trajectory {
    /// Builds a sample-only trajectory with linear interpolation.
    /// Panics on fewer than one sample or non-monotone times.
    pub fn from_samples(samples: &[StateVector]) -> Self {
        assert!(!samples.is_empty(), "need at least one sample");
        let dir = if samples.len() >= 2 {
            (samples[1].t - samples[0].t).signum()
        } else {
            1.0
        };
        for w in samples.windows(2) {
            assert!(
                (w[1].t - w[0].t) * dir > 0.0,
                "sample times must be strictly monotone"
            );
        }
        Self {
            t0: samples[0].t,
            y0: samples[0].x.clone(),
            segments: samples[1..]
                .iter()
                .map(|s| Segment {
                    t1: s.t,
                    y1: s.x.clone(),
                    dense: Dense::Linear,
                })
                .collect(),
            interpolation_order: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn interpolation_order(&self) -> usize {
        self.interpolation_order
    }

    pub fn t_first(&self) -> f64 {
        self.t0
    }

    pub fn t_last(&self) -> f64 {
        self.segments.last().map_or(self.t0, |s| s.t1)
    }

    /// +1.0 for forward integration, -1.0 for backward.
    pub fn direction(&self) -> f64 {
        if self.t_last() < self.t_first() {
            -1.0
        } else {
            1.0
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> StateVector {
        StateVector::new(self.t0, self.y0.clone())
    }

    pub fn last(&self) -> StateVector {
        match self.segments.last() {
            Some(s) => StateVector::new(s.t1, s.y1.clone()),
            None => self.first(),
        }
    }

    pub fn sample(&self, i: usize) -> StateVector {
        if i == 0 {
            self.first()
        } else {
            let s = &self.segments[i - 1];
            StateVector::new(s.t1, s.y1.clone())
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.push(self.t0);
        out.extend(self.segments.iter().map(|s| s.t1));
        out
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.span_sorted();
        t >= lo && t <= hi
    }

    fn span_sorted(&self) -> (f64, f64) {
        let (a, b) = (self.t_first(), self.t_last());
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Dense-output evaluation; errors outside [t_first, t_last].
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let (lo, hi) = self.span_sorted();
        if t < lo || t > hi {
            return Err(OdeError::OutOfSpan { t, lo, hi });
        }
        if self.segments.is_empty() || t == self.t0 {
            return Ok(self.y0.clone());
        }
        let dir = self.direction();
        // Find the first segment whose end lies at or beyond t.
        let idx = self
            .segments
            .partition_point(|s| (s.t1 - t) * dir < 0.0)
            .min(self.segments.len() - 1);
        let seg_t0 = if idx == 0 {
            self.t0
        } else {
            self.segments[idx - 1].t1
        };
        let seg_y0 = if idx == 0 {
            &self.y0
        } else {
            &self.segments[idx - 1].y1
        };
        let seg = &self.segments[idx];
        let h = seg.t1 - seg_t0;
        let theta = if h == 0.0 { 0.0 } else { (t - seg_t0) / h };
        Ok(match &seg.dense {
            Dense::Linear => seg_y0
                .iter()
                .zip(&seg.y1)
                .map(|(a, b)| a + theta * (b - a))
                .collect(),
            Dense::Poly(rcont) => {
                let th1 = 1.0 - theta;
                (0..self.dim())
                    .map(|i| {
                        rcont[0][i]
                            + theta
                                * (rcont[1][i]
                                    + th1 * (rcont[2][i] + theta * (rcont[3][i] + th1 * rcont[4][i])))
                    })
                    .collect()
            }
        })
    }

    pub fn state_at(&self, t: f64) -> Result<StateVector, OdeError> {
        Ok(StateVector::new(t, self.eval(t)?))
    }

    /// CSV export: header `t,c0,c1,...`, 17 significant digits, row order by
    /// sample time.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.dim() {
            write!(w, ",c{i}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            let s = self.sample(i);
            write!(w, "{}", fmt_g17(s.t))?;
            for c in &s.x {
                write!(w, ",{}", fmt_g17(*c))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Full-precision decimal formatting (17 significant digits round-trips f64).
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// An integration result: the trajectory plus why it ended.
#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub reason: StopReason,
}

/// Integrates `system` from `x0` to `t_end` (either direction) with adaptive
/// local error per step <= tol (used as both absolute and relative weight).
pub fn integrate<S: System>(
    system: &S,
    x0: &StateVector,
    t_end: f64,
    tol: f64,
) -> Result<Integration, OdeError> {
    if !(tol > 0.0) {
        return Err(OdeError::BadTolerance(tol));
    }
    let n = system.dim();
    assert_eq!(x0.dim(), n, "state dimension mismatch");
    let span = (t_end - x0.t).abs();
    let dir = (t_end - x0.t).signum();

    let mut traj = Trajectory {
        t0: x0.t,
        y0: x0.x.clone(),
        segments: Vec::new(),
        interpolation_order: DENSE_ORDER,
    };
    if span == 0.0 {
        return Ok(Integration {
            trajectory: traj,
            reason: StopReason::Completed,
        });
    }

    let mut t = x0.t;
    let mut y = x0.x.clone();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    system.eval(t, &y, &mut k[0]);
    if !k[0].iter().all(|v| v.is_finite()) {
        return Err(OdeError::BadInitialState);
    }

    // Initial step from the derivative scale.
    let ynorm = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let fnorm = k[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let f0norm = fnorm.max(ynorm / span);
    let mut h = dir
        * if fnorm > 1e-8 {
            (0.01 * ynorm / fnorm).min(span * 0.1)
        } else {
            span * 0.01
        };
    let h_min = span * MIN_STEP_FRACTION;

    let mut stop_prev = system.stop_signal(t, &y);
    let mut ytmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];

    loop {
        if (t_end - t) * dir <= 0.0 {
            break;
        }
        if h.abs() > (t_end - t).abs() {
            h = t_end - t;
        }
        if h.abs() < h_min {
            // Distinguish a genuine stiffness failure from running into a
            // singularity of the field: at a pole the derivative norm has
            // blown up relative to its initial size and the partial
            // trajectory up to here is the answer.
            let fnorm = k[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
            if fnorm > 1e4 * f0norm {
                return Ok(Integration {
                    trajectory: traj,
                    reason: StopReason::Singularity,
                });
            }
            return Err(OdeError::Stiffness { t });
        }

        // Stages 2..7 (FSAL: k[6] at the step end becomes next k[0]).
        let mut bad = false;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            system.eval(t + C[s] * h, &ytmp, &mut tail[0]);
            if !tail[0].iter().all(|v| v.is_finite()) {
                bad = true;
                break;
            }
        }
        if bad {
            // Non-finite derivative inside the step: shrink; if the step
            // cannot shrink further, stop at the last valid state.
            h *= 0.5;
            if h.abs() < h_min {
                return Ok(Integration {
                    trajectory: traj,
                    reason: StopReason::Singularity,
                });
            }
            continue;
        }

        // 5th-order solution (stage 7 row equals B5) and embedded error.
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += A[6][j] * k[j][i];
            }
            y5[i] = y[i] + h * acc;
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for j in 0..7 {
                e += (A6_OR_B5[j] - B4[j]) * k[j][i];
            }
            e *= h;
            let scale = tol + tol * y[i].abs().max(y5[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        // Error per unit step: the accumulated drift over a span then stays
        // near tol * span instead of tol * step_count.
        let err = (err_sq / n as f64).sqrt() / h.abs().max(f64::MIN_POSITIVE);

        if err <= 1.0 {
            // Accept: assemble the dense-output polynomial.
            let dy: Vec<f64> = (0..n).map(|i| y5[i] - y[i]).collect();
            let mut rcont = Box::new([
                y.clone(),
                dy.clone(),
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ]);
            for i in 0..n {
                rcont[2][i] = h * k[0][i] - dy[i];
                rcont[3][i] = dy[i] - h * k[6][i] - rcont[2][i];
                let mut acc = 0.0;
                for j in 0..7 {
                    acc += D[j] * k[j][i];
                }
                rcont[4][i] = h * acc;
            }
            let t_new = t + h;
            traj.segments.push(Segment {
                t1: t_new,
                y1: y5.clone(),
                dense: Dense::Poly(rcont),
            });

            let stop_new = system.stop_signal(t_new, &y5);
            if stop_prev > 0.0 && stop_new <= 0.0 {
                truncate_at_stop(system, &mut traj);
                return Ok(Integration {
                    trajectory: traj,
                    reason: StopReason::StopEvent,
                });
            }
            stop_prev = stop_new;

            t = t_new;
            std::mem::swap(&mut y, &mut y5);
            let k6 = k[6].clone();
            k[0].copy_from_slice(&k6);
            let fac = (0.9 * err.powf(-0.25)).clamp(0.2, 5.0);
            h *= fac;
        } else {
            let fac = (0.9 * err.powf(-0.25)).clamp(0.1, 1.0);
            h *= fac;
        }
    }

    Ok(Integration {
        trajectory: traj,
        reason: StopReason::Completed,
    })
}

// The 5th-order weights are row 7 of A with a zero appended.
const A6_OR_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// Replaces the last segment end with the refined stop-signal crossing.
fn truncate_at_stop<S: System>(system: &S, traj: &mut Trajectory) {
    let n_seg = traj.segments.len();
    let ta = if n_seg >= 2 {
        traj.segments[n_seg - 2].t1
    } else {
        traj.t0
    };
    let tb = traj.segments[n_seg - 1].t1;
    let g = |t: f64| {
        let y = traj.eval(t).expect("inside span");
        system.stop_signal(t, &y)
    };
    if let Some(t_stop) = refine_root(&g, ta, tb) {
        let y_stop = traj.eval(t_stop).expect("inside span");
        let seg = traj.segments.last_mut().expect("nonempty");
        seg.t1 = t_stop;
        seg.y1 = y_stop;
    }
}

/// Bisection/secant hybrid for a bracketed sign change; refined to 1e-10
/// relative time accuracy.
fn refine_root(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> Option<f64> {
    let mut ga = g(a);
    let mut gb = g(b);
    if ga == 0.0 {
        return Some(a);
    }
    if gb == 0.0 {
        return Some(b);
    }
    if ga * gb > 0.0 {
        return None;
    }
    let t_scale = a.abs().max(b.abs()).max(1.0);
    for iter in 0..200 {
        if (b - a).abs() <= 1e-10 * t_scale {
            break;
        }
        // Secant candidate on even iterations; forced bisection on odd ones
        // so a stalling secant (flat roots) cannot prevent convergence.
        let mut m = if iter % 2 == 0 && gb != ga {
            b - gb * (b - a) / (gb - ga)
        } else {
            0.5 * (a + b)
        };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if !(m > lo && m < hi) {
            m = 0.5 * (a + b);
        }
        let gm = g(m);
        if gm == 0.0 {
            return Some(m);
        }
        if ga * gm < 0.0 {
            b = m;
            gb = gm;
        } else {
            a = m;
            ga = gm;
        }
    }
    Some(0.5 * (a + b))
}

/// A located event: a zero of the event function along a trajectory.
#[derive(Debug, Clone)]
pub struct Event {
    pub t: f64,
    pub state: StateVector,
    /// Tangential (near-double-root) crossing: the event slope at the root is
    /// tiny relative to the event scale.
    pub grazing: bool,
}

const EVENT_SUBSAMPLES: usize = 8;

/// Locates all sign changes of `event` along the trajectory, refined to
/// 1e-10 relative time accuracy, ordered by sample order. Segment interiors
/// are subsampled so crossings inside long dense steps are not missed.
pub fn find_events<F: Fn(&StateVector) -> f64>(traj: &Trajectory, event: F) -> Vec<Event> {
    let mut out: Vec<Event> = Vec::new();
    if traj.len() < 2 {
        return out;
    }
    let g = |t: f64| event(&traj.state_at(t).expect("inside span"));

    // Build the scan grid: segment endpoints plus interior subsamples.
    let times = traj.sample_times();
    let mut grid: Vec<f64> = Vec::with_capacity(times.len() * EVENT_SUBSAMPLES);
    for w in times.windows(2) {
        for i in 0..EVENT_SUBSAMPLES {
            grid.push(w[0] + (w[1] - w[0]) * (i as f64 / EVENT_SUBSAMPLES as f64));
        }
    }
    grid.push(*times.last().expect("nonempty"));

    let vals: Vec<f64> = grid.iter().map(|&t| g(t)).collect();
    let g_scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let t_span = (traj.t_last() - traj.t_first()).abs().max(1e-300);

    // Endpoint zero at the very start (a sign change cannot bracket it).
    if vals[0].abs() <= 1e-12 * g_scale {
        let state = traj.first();
        out.push(Event {
            t: grid[0],
            state,
            grazing: slope_is_grazing(&g, grid[0], t_span, g_scale, traj),
        });
    }

    for i in 0..grid.len() - 1 {
        let (ga, gb) = (vals[i], vals[i + 1]);
        if ga == 0.0 && i > 0 {
            // Exact zero on an interior grid point: no bracketing interval
            // will catch it, report it directly.
            if out
                .last()
                .map(|e| (grid[i] - e.t).abs() > 1e-9 * t_span)
                .unwrap_or(true)
            {
                let state = traj.state_at(grid[i]).expect("inside span");
                out.push(Event {
                    t: grid[i],
                    state,
                    grazing: slope_is_grazing(&g, grid[i], t_span, g_scale, traj),
                });
            }
            continue;
        }
        if ga * gb < 0.0 {
            if let Some(t_root) = refine_root(&g, grid[i], grid[i + 1]) {
                if out
                    .last()
                    .map(|e| (t_root - e.t).abs() > 1e-9 * t_span)
                    .unwrap_or(true)
                {
                    let state = traj.state_at(t_root).expect("inside span");
                    out.push(Event {
                        t: t_root,
                        state,
                        grazing: slope_is_grazing(&g, t_root, t_span, g_scale, traj),
                    });
                }
            }
        }
    }

    // Near-tangent double roots can hide between grid points without a sign
    // change at any grid value. Find interior extrema of the grid values and
    // check whether the refined extremum pokes through zero.
    for i in 1..grid.len() - 1 {
        let (vl, vm, vr) = (vals[i - 1], vals[i], vals[i + 1]);
        if vl == 0.0 || vm == 0.0 || vr == 0.0 || vl.signum() != vr.signum() {
            continue; // plain crossings handled above
        }
        let want_min = vm > 0.0;
        let is_extremum = if want_min { vm < vl && vm < vr } else { vm > vl && vm > vr };
        if !is_extremum {
            continue;
        }
        let f = |t: f64| if want_min { g(t) } else { -g(t) };
        let (t_ext, v_ext) = ternary_minimize(&f, grid[i - 1], grid[i + 1], 1e-12 * t_span);
        if v_ext >= 0.0 {
            continue; // extremum stays on one side: no roots
        }
        for (ta, tb) in [(grid[i - 1], t_ext), (t_ext, grid[i + 1])] {
            if let Some(t_root) = refine_root(&g, ta, tb) {
                if out
                    .iter()
                    .all(|e| (t_root - e.t).abs() > 1e-9 * t_span)
                {
                    let state = traj.state_at(t_root).expect("inside span");
                    out.push(Event {
                        t: t_root,
                        state,
                        grazing: slope_is_grazing(&g, t_root, t_span, g_scale, traj),
                    });
                }
            }
        }
    }
    let dir = (traj.t_last() - traj.t_first()).signum();
    out.sort_by(|a, b| {
        (a.t * dir).partial_cmp(&(b.t * dir)).expect("finite event times")
    });
    out
}

/// Ternary search for the minimum of a unimodal function on [a, b]; returns
/// (argmin, min).
fn ternary_minimize(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let m = 0.5 * (a + b);
    (m, f(m))
}

fn slope_is_grazing(
    g: &dyn Fn(f64) -> f64,
    t: f64,
    t_span: f64,
    g_scale: f64,
    traj: &Trajectory,
) -> bool {
    let dt = 1e-6 * t_span;
    let (lo, hi) = traj.span_sorted();
    let (ta, tb) = ((t - dt).max(lo), (t + dt).min(hi));
    if tb <= ta {
        return false;
    }
    let slope = (g(tb) - g(ta)) / (tb - ta);
    // A regular crossing traverses the event scale in a time comparable to
    // the span; a grazing one is orders of magnitude slower.
    slope.abs() * t_span < 1e-3 * g_scale
}

/// Number of probe times used by the flow-reversal defect.
const REVERSAL_PROBES: usize = 128;

/// Flow-reversal defect: integrates forward over [0, T], reverses the final
/// state through R, integrates again, and measures the worst mismatch against
/// the reversed forward flow. Time-reversal invariant systems yield a defect
/// on the order of the integration error.
pub fn check_reversal_property<S: System>(
    system: &S,
    r: &ReversalInvolution,
    x0: &StateVector,
    t_horizon: f64,
    tol: f64,
) -> Result<f64, OdeError> {
    if t_horizon == 0.0 {
        return Ok(0.0);
    }
    let fwd = integrate(system, x0, x0.t + t_horizon, tol)?.trajectory;
    let t_reach = fwd.t_last() - x0.t;
    let end = fwd.last();
    let rev_start = StateVector::new(0.0, r.apply_components(&end.x));
    let back = integrate(system, &rev_start, t_reach, tol)?.trajectory;
    let t_common = (back.t_last() - back.t_first()).abs().min(t_reach.abs());
    if t_common < 0.5 * t_reach.abs() {
        // The reversed flow could not cover the window; the property is
        // unverifiable here and must not masquerade as a zero defect.
        return Ok(f64::INFINITY);
    }

    let mut defect: f64 = 0.0;
    for i in 0..=REVERSAL_PROBES {
        let s = t_common * (i as f64) / (REVERSAL_PROBES as f64);
        let a = back.eval(back.t_first() + s)?;
        let b = r.apply_components(&fwd.eval(x0.t + t_reach - s)?);
        let d = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        defect = defect.max(d);
    }
    Ok(defect)
}

/// Resamples a trajectory onto n equally spaced times; endpoints are the
/// original endpoints exactly.
pub fn resample_uniform(traj: &Trajectory, n: usize) -> Result<Trajectory, OdeError> {
    assert!(n >= 2, "need at least 2 samples");
    let (ta, tb) = (traj.t_first(), traj.t_last());
    let mut samples = Vec::with_capacity(n);
    samples.push(traj.first());
    for i in 1..n - 1 {
        let t = ta + (tb - ta) * (i as f64) / ((n - 1) as f64);
        samples.push(traj.state_at(t)?);
    }
    samples.push(traj.last());
    Ok(Trajectory::from_samples(&samples))
}
