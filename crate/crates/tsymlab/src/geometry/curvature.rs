//! Christoffel symbols, Ricci tensor and scalar by second-order central
//! finite differences of the metric.

use nalgebra::Matrix4;

use super::{GeomError, MetricField, Point4};

/// Christoffel symbols indexed as gamma[lambda][(mu, nu)].
pub type Christoffel = [Matrix4<f64>; 4];

#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub point: Point4,
    pub g: Matrix4<f64>,
    pub g_inv: Matrix4<f64>,
    pub gamma: Christoffel,
    pub ricci: Matrix4<f64>,
    pub r: f64,
    pub sqrt_minus_g: f64,
}

fn shifted(x: &Point4, axis: usize, delta: f64) -> Point4 {
    let mut y = *x;
    y[axis] += delta;
    y
}

/// First coordinate derivatives of g, dg[lambda] = d g / d x^lambda.
pub(crate) fn metric_gradient(
    metric: &MetricField,
    x: &Point4,
    h: f64,
) -> Result<[Matrix4<f64>; 4], GeomError> {
    let mut dg = [Matrix4::zeros(); 4];
    for l in 0..4 {
        let gp = metric.eval_checked(&shifted(x, l, h))?;
        let gm = metric.eval_checked(&shifted(x, l, -h))?;
        dg[l] = (gp - gm) / (2.0 * h);
    }
    Ok(dg)
}

/// Gamma^lambda_{mu nu} = (1/2) g^{lambda sigma}
/// (dg[mu]_{sigma nu} + dg[nu]_{sigma mu} - dg[sigma]_{mu nu}).
pub fn christoffel(
    g: &Matrix4<f64>,
    dg: &[Matrix4<f64>; 4],
    x: &Point4,
) -> Result<Christoffel, GeomError> {
    let g_inv = g.try_inverse().ok_or(GeomError::Degenerate(*x))?;
    let mut gamma = [Matrix4::zeros(); 4];
    for l in 0..4 {
        for m in 0..4 {
            for n in 0..=m {
                let mut s = 0.0;
                for k in 0..4 {
                    s += g_inv[(l, k)] * (dg[m][(k, n)] + dg[n][(k, m)] - dg[k][(m, n)]);
                }
                gamma[l][(m, n)] = 0.5 * s;
                gamma[l][(n, m)] = 0.5 * s;
            }
        }
    }
    Ok(gamma)
}

fn christoffel_at(metric: &MetricField, x: &Point4, h: f64) -> Result<Christoffel, GeomError> {
    let g = metric.eval_checked(x)?;
    let dg = metric_gradient(metric, x, h)?;
    christoffel(&g, &dg, x)
}

/// Curvature by central differences with step h: Christoffel symbols from
/// the metric gradient and the Ricci tensor
///   R_{mu nu} = d_lambda Gamma^lambda_{mu nu} - d_nu Gamma^lambda_{mu lambda}
///             + Gamma^lambda_{lambda sigma} Gamma^sigma_{mu nu}
///             - Gamma^sigma_{mu lambda} Gamma^lambda_{nu sigma},
/// O(h^2) accurate for smooth metrics.
pub fn curvature(metric: &MetricField, x: &Point4, h: f64) -> Result<CurvatureBundle, GeomError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let g = metric.eval_checked(x)?;
    let g_inv = g.try_inverse().ok_or(GeomError::Degenerate(*x))?;
    let dg = metric_gradient(metric, x, h)?;
    let gamma = christoffel(&g, &dg, x)?;

    // dgamma[n][l] = d_n Gamma^l, by differencing Christoffels at x +- h e_n.
    let mut dgamma = [[Matrix4::zeros(); 4]; 4];
    for n in 0..4 {
        let gp = christoffel_at(metric, &shifted(x, n, h), h)?;
        let gm = christoffel_at(metric, &shifted(x, n, -h), h)?;
        for l in 0..4 {
            dgamma[n][l] = (gp[l] - gm[l]) / (2.0 * h);
        }
    }

    let mut ricci = Matrix4::zeros();
    for m in 0..4 {
        for n in 0..=m {
            let mut v = 0.0;
            for l in 0..4 {
                v += dgamma[l][l][(m, n)] - dgamma[n][l][(m, l)];
                for s in 0..4 {
                    v += gamma[l][(l, s)] * gamma[s][(m, n)] - gamma[s][(m, l)] * gamma[l][(n, s)];
                }
            }
            ricci[(m, n)] = v;
            ricci[(n, m)] = v;
        }
    }

    let r = (g_inv * ricci).trace();
    let det = g.determinant();
    if !det.is_finite() || det >= 0.0 {
        return Err(GeomError::Degenerate(*x));
    }
    Ok(CurvatureBundle { point: *x, g, g_inv, gamma, ricci, r, sqrt_minus_g: (-det).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form FLRW Ricci for this convention: R_00 = -3 addot/a,
    /// R_ij = (a addot + 2 adot^2 + 2k) h_ij with h the comoving 3-metric.
    fn flrw_ricci_oracle(a: f64, ad: f64, add: f64, k: f64, h3: [f64; 3]) -> Matrix4<f64> {
        let spatial = a * add + 2.0 * ad * ad + 2.0 * k;
        Matrix4::from_diagonal(
            &[-3.0 * add / a, spatial * h3[0], spatial * h3[1], spatial * h3[2]].into(),
        )
    }

    #[test]
    fn minkowski_is_flat() {
        let b = curvature(&MetricField::minkowski(), &[0.3, 1.0, -2.0, 0.5], 1e-3).unwrap();
        for l in 0..4 {
            assert!(b.gamma[l].norm() < 1e-12);
        }
        assert!(b.ricci.norm() < 1e-10, "ricci norm {}", b.ricci.norm());
        assert!(b.r.abs() < 1e-10);
        assert!((b.sqrt_minus_g - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dust_flrw_matches_oracle() {
        let m = MetricField::flat_flrw(|t| t.powf(2.0 / 3.0));
        let t = 1.0f64;
        let b = curvature(&m, &[t, 0.2, -0.4, 0.1], 1e-4).unwrap();
        let (a, ad, add) = (1.0, 2.0 / 3.0, -2.0 / 9.0);
        let oracle = flrw_ricci_oracle(a, ad, add, 0.0, [1.0; 3]);
        assert!((b.ricci - oracle).norm() < 1e-6, "err {}", (b.ricci - oracle).norm());
        // R = -6(addot/a + adot^2/a^2) = -4/3 at t = 1
        assert!((b.r + 4.0 / 3.0).abs() < 1e-6, "R {}", b.r);
    }

    #[test]
    fn closed_flrw_matches_oracle() {
        let m = MetricField::closed_flrw(|t| 2.0 + 0.3 * (0.5 * t).sin());
        let t = 0.7f64;
        let x = [t, 1.1, 0.9, 0.3];
        let b = curvature(&m, &x, 1e-4).unwrap();
        let a = 2.0 + 0.3 * (0.5 * t).sin();
        let ad = 0.15 * (0.5 * t).cos();
        let add = -0.075 * (0.5 * t).sin();
        let sc2 = x[1].sin().powi(2);
        let st2 = x[2].sin().powi(2);
        let oracle = flrw_ricci_oracle(a, ad, add, 1.0, [1.0, sc2, sc2 * st2]);
        assert!((b.ricci - oracle).norm() < 1e-6, "err {}", (b.ricci - oracle).norm());
        let r_oracle = -6.0 * (add / a + (ad / a).powi(2) + 1.0 / (a * a));
        assert!((b.r - r_oracle).abs() < 1e-6);
    }

    #[test]
    fn second_order_convergence() {
        let m = MetricField::flat_flrw(|t| t.powf(2.0 / 3.0));
        let x = [1.0, 0.0, 0.0, 0.0];
        let oracle = flrw_ricci_oracle(1.0, 2.0 / 3.0, -2.0 / 9.0, 0.0, [1.0; 3]);
        let err = |h: f64| (curvature(&m, &x, h).unwrap().ricci - oracle).norm();
        let (e1, e2, e3) = (err(4e-3), err(2e-3), err(1e-3));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn signature_violation_surfaces_as_error() {
        // g_11 flips sign at t = 0.5, inside the probe stencil.
        let m = MetricField::custom(|x| {
            Matrix4::from_diagonal(&[1.0, x[0] - 0.5, -1.0, -1.0].into())
        });
        assert!(curvature(&m, &[0.4999, 0.0, 0.0, 0.0], 1e-3).is_err());
    }
}
