//! Metric fields with signature (+,-,-,-): one positive and three negative
//! eigenvalues at every probed point.

use std::sync::Arc;

use nalgebra::Matrix4;

use super::{GeomError, Point4};

type ScaleFactor = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Evaluator = Arc<dyn Fn(&Point4) -> Matrix4<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricFamily {
    Minkowski,
    FlatFlrw,
    ClosedFlrw,
    Custom,
}

/// A spacetime metric given by a point evaluator; always symmetrized on
/// evaluation.
#[derive(Clone)]
pub struct MetricField {
    family: MetricFamily,
    eval: Evaluator,
}

impl MetricField {
    pub fn minkowski() -> Self {
        Self {
            family: MetricFamily::Minkowski,
            eval: Arc::new(|_| Matrix4::from_diagonal(&[1.0, -1.0, -1.0, -1.0].into())),
        }
    }

    /// ds^2 = dt^2 - a(t)^2 (dx^2 + dy^2 + dz^2) in Cartesian comoving
    /// coordinates (t, x, y, z).
    pub fn flat_flrw(a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let a: ScaleFactor = Arc::new(a);
        Self {
            family: MetricFamily::FlatFlrw,
            eval: Arc::new(move |x| {
                let s = a(x[0]);
                let s2 = -s * s;
                Matrix4::from_diagonal(&[1.0, s2, s2, s2].into())
            }),
        }
    }

    /// ds^2 = dt^2 - a(t)^2 (dchi^2 + sin^2(chi) dtheta^2
    /// + sin^2(chi) sin^2(theta) dphi^2) in coordinates (t, chi, theta, phi).
    pub fn closed_flrw(a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let a: ScaleFactor = Arc::new(a);
        Self {
            family: MetricFamily::ClosedFlrw,
            eval: Arc::new(move |x| {
                let s2 = a(x[0]).powi(2);
                let sc2 = x[1].sin().powi(2);
                let st2 = x[2].sin().powi(2);
                Matrix4::from_diagonal(&[1.0, -s2, -s2 * sc2, -s2 * sc2 * st2].into())
            }),
        }
    }

    pub fn custom(eval: impl Fn(&Point4) -> Matrix4<f64> + Send + Sync + 'static) -> Self {
        Self { family: MetricFamily::Custom, eval: Arc::new(eval) }
    }

    pub fn family(&self) -> MetricFamily {
        self.family
    }

    /// Raw evaluation, symmetrized; no signature check.
    pub fn eval(&self, x: &Point4) -> Matrix4<f64> {
        let g = (self.eval)(x);
        0.5 * (g + g.transpose())
    }

    /// Evaluation with the Lorentzian-signature invariant enforced.
    pub fn eval_checked(&self, x: &Point4) -> Result<Matrix4<f64>, GeomError> {
        let g = self.eval(x);
        check_signature(&g, x)?;
        Ok(g)
    }
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField").field("family", &self.family).finish()
    }
}

/// Requires one positive and three negative eigenvalues (and det g < 0,
/// which follows).
pub fn check_signature(g: &Matrix4<f64>, x: &Point4) -> Result<(), GeomError> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite(*x));
    }
    let eig = g.symmetric_eigenvalues();
    let mut signs = [0i8; 4];
    let (mut pos, mut neg) = (0, 0);
    for (i, &l) in eig.iter().enumerate() {
        signs[i] = if l > 0.0 {
            pos += 1;
            1
        } else if l < 0.0 {
            neg += 1;
            -1
        } else {
            0
        };
    }
    if pos != 1 || neg != 3 {
        return Err(GeomError::Signature(*x, signs));
    }
    Ok(())
}
