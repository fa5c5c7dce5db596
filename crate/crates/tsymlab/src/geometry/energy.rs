//! Stress-energy from the Einstein equation, Type I tetrad decomposition,
//! dominant energy condition and the momentum-positivity check.

use nalgebra::{Matrix4, Vector4};

use super::{CurvatureBundle, GeomError};

/// T_{mu nu} = (1/8 pi) (R_{mu nu} - (1/2) g_{mu nu} R - Lambda g_{mu nu}).
pub fn stress_energy(bundle: &CurvatureBundle, lambda: f64) -> Matrix4<f64> {
    (bundle.ricci - (0.5 * bundle.r + lambda) * bundle.g) / (8.0 * std::f64::consts::PI)
}

/// Orthonormal tetrad diagonalizing a Type I stress-energy tensor:
/// T_{mu nu} = s0 V0_mu V0_nu + sum_i s_i Vi_mu Vi_nu with g(V0,V0) = +1,
/// g(Vi,Vi) = -1. Vectors are stored with contravariant components.
#[derive(Debug, Clone)]
pub struct TetradDecomposition {
    pub s0: f64,
    pub s: [f64; 3],
    pub v0: Vector4<f64>,
    pub v: [Vector4<f64>; 3],
    g: Matrix4<f64>,
}

impl TetradDecomposition {
    /// Rebuilds T_{mu nu} from the eigenvalues and covariant legs.
    pub fn reconstruct(&self) -> Matrix4<f64> {
        let w0 = self.g * self.v0;
        let mut t = self.s0 * w0 * w0.transpose();
        for i in 0..3 {
            let w = self.g * self.v[i];
            t += self.s[i] * w * w.transpose();
        }
        t
    }
}

const EIG_REL_TOL: f64 = 1e-7;

/// Solves the g-eigenproblem T^mu_nu V = lambda V. The timelike eigenvector
/// becomes V0 with s0 its eigenvalue; spacelike eigenvalues enter with
/// s_i = -lambda_i (from g(Vi,Vi) = -1). Degenerate eigenspaces are
/// orthonormalized deterministically by Gram-Schmidt against the frame axes
/// in index order. Complex or defective spectra are reported as non-Type I.
pub fn type_one_decomposition(
    t: &Matrix4<f64>,
    g: &Matrix4<f64>,
) -> Result<TetradDecomposition, GeomError> {
    let t = 0.5 * (t + t.transpose());
    // Orthonormal frame E with E^T g E = eta = diag(1,-1,-1,-1).
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    if eig.eigenvalues[order[0]] <= 0.0 || eig.eigenvalues[order[1]] >= 0.0 {
        return Err(GeomError::Signature([f64::NAN; 4], [0; 4]));
    }
    let mut frame = Matrix4::zeros();
    for (col, &i) in order.iter().enumerate() {
        let scale = eig.eigenvalues[i].abs().sqrt();
        frame.set_column(col, &(eig.eigenvectors.column(i) / scale));
    }
    let eta = Matrix4::from_diagonal(&[1.0, -1.0, -1.0, -1.0].into());

    // Mixed tensor in the frame; eta-self-adjoint, so Type I iff the real
    // spectrum is complete with one timelike eigenvector.
    let t_frame = frame.transpose() * t * frame;
    let mixed = eta * t_frame;
    let scale = mixed.norm().max(1e-300);
    let lambdas: Vec<f64> = if mixed.norm() == 0.0 {
        // nalgebra's Schur iteration does not terminate on the zero matrix.
        vec![0.0; 4]
    } else {
        let schur = nalgebra::linalg::Schur::try_new(mixed, f64::EPSILON, 100_000)
            .ok_or_else(|| GeomError::NonTypeI("eigenvalue iteration stalled".into()))?;
        let spectrum = schur.complex_eigenvalues();
        if spectrum.iter().any(|z| z.im.abs() > EIG_REL_TOL * scale) {
            return Err(GeomError::NonTypeI(format!("complex eigenvalues {spectrum:?}")));
        }
        let mut re: Vec<f64> = spectrum.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| b.partial_cmp(a).unwrap());
        re
    };
    // Group near-coincident eigenvalues and remember each cluster's
    // multiplicity, so the eigenspace basis size is never decided by a
    // singular-value threshold.
    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &l in &lambdas {
        match clusters.last_mut() {
            Some(last) if (last.0 - l).abs() <= EIG_REL_TOL * scale.max(1.0) => last.1 += 1,
            _ => clusters.push((l, 1)),
        }
    }

    // legs: (eigenvalue, frame components, timelike?)
    let mut legs: Vec<(f64, Vector4<f64>, bool)> = Vec::new();
    for &(l, mult) in &clusters {
        let shifted = mixed - Matrix4::identity() * l;
        let svd = shifted.svd(true, true);
        let v_t = svd.v_t.as_ref().unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap()
        });
        let basis: Vec<Vector4<f64>> =
            order[..mult].iter().map(|&i| v_t.row(i).transpose()).collect();
        // Deterministic eta-orthonormal legs: seed with the frame axes in
        // index order, projected onto the eigenspace.
        let cluster_start = legs.len();
        for axis in 0..4 {
            if legs.len() - cluster_start == basis.len() {
                break;
            }
            let seed = Vector4::ith(axis, 1.0);
            let mut cand: Vector4<f64> = basis.iter().map(|b| b * b.dot(&seed)).sum();
            for (_, v, _) in &legs[..] {
                let vn = (v.transpose() * eta * v)[0];
                cand -= v * ((v.transpose() * eta * cand)[0] / vn);
            }
            let norm2 = (cand.transpose() * eta * cand)[0];
            // Reject seeds whose projection is pure roundoff (the basis
            // vectors are unit) as well as eta-null directions.
            if cand.norm_squared() <= 1e-20 || norm2.abs() <= 1e-10 * cand.norm_squared() {
                continue;
            }
            let mut leg = cand / norm2.abs().sqrt();
            let pivot = (0..4).find(|&i| leg[i].abs() > 1e-9 * leg.norm()).unwrap_or(0);
            if leg[pivot] < 0.0 {
                leg = -leg;
            }
            // Rayleigh quotient per leg: quadratically accurate in the leg
            // error, so clustering never caps the eigenvalue precision.
            let rq = (leg.transpose() * t_frame * leg)[0] * norm2.signum();
            let resid = (mixed * leg - rq * leg).norm() / leg.norm();
            if resid > 10.0 * EIG_REL_TOL * scale.max(1.0) {
                return Err(GeomError::NonTypeI(format!("defective eigenvalue {l}")));
            }
            legs.push((rq, leg, norm2 > 0.0));
        }
    }

    let timelike: Vec<usize> = (0..legs.len()).filter(|&i| legs[i].2).collect();
    let spacelike: Vec<usize> = (0..legs.len()).filter(|&i| !legs[i].2).collect();
    if timelike.len() != 1 || spacelike.len() != 3 {
        return Err(GeomError::NonTypeI(format!(
            "eigenvector causal split {}+{} (need 1 timelike + 3 spacelike)",
            timelike.len(),
            spacelike.len()
        )));
    }

    let (s0, v0_f, _) = legs[timelike[0]];
    let mut v0 = frame * v0_f;
    // Future-pointing convention with respect to the chart time axis.
    if v0[0] < 0.0 {
        v0 = -v0;
    }
    let mut s = [0.0; 3];
    let mut v = [Vector4::zeros(); 3];
    for (i, &j) in spacelike.iter().enumerate() {
        s[i] = -legs[j].0;
        v[i] = frame * legs[j].1;
    }
    Ok(TetradDecomposition { s0, s, v0, v, g: *g })
}

/// Dominant energy condition on the decomposed spectrum: s0 >= 0 and every
/// s_i in [-s0, s0]; the margin is negative when failing.
pub fn dominant_energy_check(d: &TetradDecomposition) -> (bool, f64) {
    let margin = d.s.iter().fold(d.s0, |m, &si| m.min(d.s0 - si.abs()));
    (margin >= 0.0, margin)
}

/// Momentum-positivity of an energy-flux row tau^{0 mu} given in an
/// orthonormal frame: p0 >= 0 and causal (timelike or lightlike).
pub fn momentum_condition_check(tau_row: &[f64; 4]) -> (bool, bool) {
    let p0_nonneg = tau_row[0] >= 0.0;
    let q = tau_row[0] * tau_row[0]
        - tau_row[1] * tau_row[1]
        - tau_row[2] * tau_row[2]
        - tau_row[3] * tau_row[3];
    (p0_nonneg, q >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curvature, MetricField};

    fn minkowski_g() -> Matrix4<f64> {
        Matrix4::from_diagonal(&[1.0, -1.0, -1.0, -1.0].into())
    }

    #[test]
    fn diagonal_tensor_decomposes_exactly() {
        let t = Matrix4::from_diagonal(&[1.0, 0.3, 0.3, 0.3].into());
        let d = type_one_decomposition(&t, &minkowski_g()).unwrap();
        assert!((d.s0 - 1.0).abs() < 1e-12);
        for si in d.s {
            assert!((si - 0.3).abs() < 1e-12);
        }
        assert!((d.v0 - Vector4::ith(0, 1.0)).norm() < 1e-9);
        assert!((d.reconstruct() - t).norm() < 1e-8 * t.norm());
    }

    #[test]
    fn zero_tensor_gets_canonical_tetrad() {
        let d = type_one_decomposition(&Matrix4::zeros(), &minkowski_g()).unwrap();
        assert_eq!(d.s0, 0.0);
        assert_eq!(d.s, [0.0; 3]);
        assert!((d.v0 - Vector4::ith(0, 1.0)).norm() < 1e-12);
        for i in 0..3 {
            assert!((d.v[i].abs() - Vector4::ith(i + 1, 1.0)).norm() < 1e-12);
        }
    }

    fn boost_x(v: f64) -> Matrix4<f64> {
        let gamma = 1.0 / (1.0 - v * v).sqrt();
        let mut b = Matrix4::identity();
        b[(0, 0)] = gamma;
        b[(0, 1)] = gamma * v;
        b[(1, 0)] = gamma * v;
        b[(1, 1)] = gamma;
        b
    }

    #[test]
    fn boosted_tensor_has_invariant_spectrum() {
        let t = Matrix4::from_diagonal(&[1.0, 0.5, 0.4, 0.2].into());
        // Covariant transform under the inverse boost: T' = B^T T B.
        let b = boost_x(0.5);
        let t_boosted = b.transpose() * t * b;
        let d = type_one_decomposition(&t_boosted, &minkowski_g()).unwrap();
        assert!((d.s0 - 1.0).abs() < 1e-9);
        let mut s = d.s;
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in s.iter().zip([0.5, 0.4, 0.2]) {
            assert!((got - want).abs() < 1e-9, "s {s:?}");
        }
        // V0 is the boost image of the time axis (contravariant components
        // transform with the inverse of B).
        let v0_want = boost_x(0.5).try_inverse().unwrap() * Vector4::ith(0, 1.0);
        assert!((d.v0 - v0_want).norm() < 1e-9, "V0 {:?}", d.v0);
        assert!((d.reconstruct() - t_boosted).norm() < 1e-8 * t.norm());
    }

    #[test]
    fn degenerate_perfect_fluid_decomposes() {
        let t = Matrix4::from_diagonal(&[2.0, 0.7, 0.7, 0.7].into());
        let b = boost_x(-0.3);
        let d = type_one_decomposition(&(b.transpose() * t * b), &minkowski_g()).unwrap();
        assert!((d.s0 - 2.0).abs() < 1e-9);
        for si in d.s {
            assert!((si - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn null_fluid_rejected() {
        // T = k_mu k_nu with k null has no timelike eigenvector.
        let k = Vector4::new(1.0, 1.0, 0.0, 0.0);
        let t = k * k.transpose();
        assert!(matches!(
            type_one_decomposition(&t, &minkowski_g()),
            Err(GeomError::NonTypeI(_))
        ));
    }

    #[test]
    fn dec_margins() {
        let mk = |s0: f64, s: [f64; 3]| TetradDecomposition {
            s0,
            s,
            v0: Vector4::ith(0, 1.0),
            v: [Vector4::ith(1, 1.0), Vector4::ith(2, 1.0), Vector4::ith(3, 1.0)],
            g: minkowski_g(),
        };
        let (pass, margin) = dominant_energy_check(&mk(1.0, [0.5, 0.5, 0.5]));
        assert!(pass);
        assert!((margin - 0.5).abs() < 1e-15);
        let (pass, margin) = dominant_energy_check(&mk(1.0, [1.5, 0.0, 0.0]));
        assert!(!pass);
        assert!((margin + 0.5).abs() < 1e-15);
    }

    #[test]
    fn momentum_rows() {
        assert_eq!(momentum_condition_check(&[1.0, 0.0, 0.0, 0.0]), (true, true));
        assert_eq!(momentum_condition_check(&[1.0, 2.0, 0.0, 0.0]), (true, false));
        assert_eq!(momentum_condition_check(&[-1.0, 0.0, 0.0, 0.0]), (false, true));
    }

    #[test]
    fn dust_stress_energy_matches_friedmann() {
        // a = t^(2/3): rho = 1/(6 pi t^2), p = 0.
        let m = MetricField::flat_flrw(|t| t.powf(2.0 / 3.0));
        for i in 0..10 {
            let t = 1.0 + 0.25 * i as f64;
            let b = curvature(&m, &[t, 0.1, 0.2, 0.3], 2e-4).unwrap();
            let te = stress_energy(&b, 0.0);
            let rho = 1.0 / (6.0 * std::f64::consts::PI * t * t);
            // T^00 = T_00 here since g_00 = 1.
            assert!((te[(0, 0)] - rho).abs() < 1e-6 * rho, "t={t} T00={}", te[(0, 0)]);
            // Pressure: T_ij = p g_ij-spatial; dust has p = 0.
            for j in 1..4 {
                assert!(te[(j, j)].abs() < 1e-6 * rho * b.g[(j, j)].abs(), "t={t}");
            }
        }
    }

    #[test]
    fn minkowski_with_lambda() {
        let b = curvature(&MetricField::minkowski(), &[0.0; 4], 1e-3).unwrap();
        assert!(stress_energy(&b, 0.0).norm() < 1e-10);
        let lam = 0.7;
        let want = -(lam / (8.0 * std::f64::consts::PI)) * minkowski_g();
        assert!((stress_energy(&b, lam) - want).norm() < 1e-10);
    }
}
