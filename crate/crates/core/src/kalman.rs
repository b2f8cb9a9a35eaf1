//! Complex-valued Kalman filter primitives over Hermitian covariances.
//!
//! The correction step is available in the information form, which needs
//! `(P⁻)⁻¹`, and in the gain form, which only needs `C P⁻ Cᴴ + R` to be
//! invertible. Every covariance produced here is re-symmetrized.

use faer::linalg::solvers::Solve;
use faer::{c64, Col, ColRef, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, ensure_hermitian, hermitize, hpd_inverse, hpd_solve, identity, min_eigenvalue,
    spectral_norm, CCol, CMat,
};

/// Smallest eigenvalue of `P⁻` accepted by the information form.
pub const COVARIANCE_FLOOR: f64 = 1e-14;

const HERMITIAN_TOL: f64 = 1e-10;

/// Estimate and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: CCol,
    pub p: CMat,
}

impl FilterState {
    pub fn new(x: CCol, p: CMat) -> Result<Self> {
        if p.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "state covariance",
                expected: x.nrows(),
                actual: p.nrows(),
            });
        }
        ensure_hermitian(p.as_ref(), "P", HERMITIAN_TOL)?;
        Ok(Self { x, p })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }
}

/// `x_{k+1} = A x_k + u + G w` with `Cov(w) = Q`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: CMat,
    pub u: CCol,
    pub g: CMat,
    pub q: CMat,
}

impl LinearModel {
    /// Static state (`A = G = I`, `u = 0`) with process noise `Q`.
    pub fn random_walk(q: CMat) -> Self {
        let n = q.nrows();
        Self {
            a: identity(n),
            u: Col::zeros(n),
            g: identity(n),
            q,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let dims = [
            ("evolution matrix rows", self.a.nrows()),
            ("evolution matrix cols", self.a.ncols()),
            ("shift", self.u.nrows()),
            ("noise gain rows", self.g.nrows()),
        ];
        for (context, actual) in dims {
            if actual != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual,
                });
            }
        }
        if self.q.nrows() != self.g.ncols() {
            return Err(Error::DimensionMismatch {
                context: "process noise",
                expected: self.g.ncols(),
                actual: self.q.nrows(),
            });
        }
        ensure_hermitian(self.q.as_ref(), "Q", HERMITIAN_TOL)
    }
}

/// `y = C x + v` with `Cov(v) = R`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub c: CMat,
    pub r: CMat,
}

impl ObservationModel {
    fn check(&self, n: usize, m: usize) -> Result<()> {
        if self.c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "sensing matrix columns",
                expected: n,
                actual: self.c.ncols(),
            });
        }
        if self.c.nrows() != m || self.r.nrows() != m {
            return Err(Error::DimensionMismatch {
                context: "measurement",
                expected: self.c.nrows(),
                actual: m,
            });
        }
        ensure_hermitian(self.r.as_ref(), "R", HERMITIAN_TOL)
    }
}

/// `x⁻ = A x⁺ + u`, `P⁻ = A P⁺ Aᴴ + G Q Gᴴ`.
pub fn predict(state: &FilterState, model: &LinearModel) -> Result<FilterState> {
    model.check(state.dim())?;
    let x = &model.a * &state.x + &model.u;
    let mut p = &model.a * &state.p * model.a.adjoint() + &model.g * &model.q * model.g.adjoint();
    hermitize(&mut p);
    Ok(FilterState { x, p })
}

/// Correction in covariance (information) form:
/// `(P⁺)⁻¹ = (P⁻)⁻¹ + Cᴴ R⁻¹ C`, `x⁺ = P⁺((P⁻)⁻¹ x⁻ + Cᴴ R⁻¹ y)`.
///
/// The estimate is evaluated as `x⁻ + P⁺CᴴR⁻¹(y − Cx⁻)`, which is the same
/// expression since `P⁺(P⁻)⁻¹ = I − P⁺CᴴR⁻¹C`, without cancelling two large
/// terms when `R` is small.
pub fn update_information(
    state: &FilterState,
    obs: &ObservationModel,
    y: ColRef<'_, c64>,
) -> Result<FilterState> {
    obs.check(state.dim(), y.nrows())?;
    let min_eigenvalue = min_eigenvalue(state.p.as_ref())?;
    if min_eigenvalue <= COVARIANCE_FLOOR {
        return Err(Error::SingularCovariance {
            min_eigenvalue,
            floor: COVARIANCE_FLOOR,
        });
    }
    let p_inv = hpd_inverse(state.p.as_ref(), "P⁻")?;
    let r_llt = cholesky(obs.r.as_ref(), "R")?;
    let r_inv_c = r_llt.solve(&obs.c);
    let residual = y - &obs.c * &state.x;
    let r_inv_res = r_llt.solve(residual.as_mat());
    let mut info = &p_inv + obs.c.adjoint() * &r_inv_c;
    hermitize(&mut info);
    let p = hpd_inverse(info.as_ref(), "information matrix")?;
    let x = &state.x + (&p * (obs.c.adjoint() * &r_inv_res)).col(0);
    Ok(FilterState { x, p })
}

/// Gain-form correction result.
#[derive(Debug, Clone)]
pub struct GainUpdate {
    pub gain: CMat,
    pub state: FilterState,
}

/// Measurement noise for the internal gain computation.
pub(crate) enum Noise<'a> {
    Dense(MatRef<'a, c64>),
    Diagonal(&'a [f64]),
}

/// Gain and corrected covariance for prior `p_minus`:
/// `K = P⁻Cᴴ(C P⁻ Cᴴ + R)⁻¹`, `P⁺ = (I − K C) P⁻`.
pub(crate) fn gain_and_covariance(
    p_minus: MatRef<'_, c64>,
    c: MatRef<'_, c64>,
    noise: Noise<'_>,
) -> Result<(CMat, CMat)> {
    let cp = c * p_minus;
    let mut s = &cp * c.adjoint();
    match noise {
        Noise::Dense(r) => s += r,
        Noise::Diagonal(d) => {
            for (i, v) in d.iter().enumerate() {
                s[(i, i)] += c64::new(*v, 0.0);
            }
        }
    }
    hermitize(&mut s);
    // Kᴴ = S⁻¹ C P⁻ since S and P⁻ are Hermitian
    let k_adj = hpd_solve(s.as_ref(), cp.as_ref(), "innovation covariance")?;
    let gain = k_adj.adjoint().to_owned();
    let mut p = p_minus - &gain * &cp;
    hermitize(&mut p);
    Ok((gain, p))
}

/// Correction with the explicit Kalman gain:
/// `K = P⁻Cᴴ(CP⁻Cᴴ+R)⁻¹`, `P⁺ = (I − KC)P⁻`, `x⁺ = x⁻ + K(y − Cx⁻)`.
pub fn update_gain(
    state: &FilterState,
    obs: &ObservationModel,
    y: ColRef<'_, c64>,
) -> Result<GainUpdate> {
    obs.check(state.dim(), y.nrows())?;
    cholesky(obs.r.as_ref(), "R")?;
    let (gain, p) = gain_and_covariance(state.p.as_ref(), obs.c.as_ref(), Noise::Dense(obs.r.as_ref()))?;
    let innovation = y - &obs.c * &state.x;
    let x = &state.x + &gain * &innovation;
    Ok(GainUpdate {
        gain,
        state: FilterState { x, p },
    })
}

/// Residual propagation matrix of one predict+correct step,
/// `E = R·(R + C(P+Q)Cᴴ)⁻¹`, with three size measures.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub matrix: CMat,
    /// Largest singular value of `E`.
    pub spectral_norm: f64,
    /// Largest eigenvalue modulus of `E`.
    pub spectral_radius: f64,
    /// Operator norm of `E` in the `R⁻¹`-weighted norm `‖v‖ = ‖L⁻¹v‖`,
    /// `R = L Lᴴ`. Equals the largest eigenvalue of `Lᴴ(R + C(P+Q)Cᴴ)⁻¹L`.
    pub weighted_norm: f64,
}

pub fn convergence_certificate(
    c: MatRef<'_, c64>,
    p: MatRef<'_, c64>,
    q: MatRef<'_, c64>,
    r: MatRef<'_, c64>,
) -> Result<Certificate> {
    let n = c.ncols();
    let m = c.nrows();
    for (context, mat, dim) in [("P", p, n), ("Q", q, n), ("R", r, m)] {
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: dim,
                actual: mat.nrows(),
            });
        }
    }
    ensure_hermitian(p, "P", HERMITIAN_TOL)?;
    ensure_hermitian(q, "Q", HERMITIAN_TOL)?;
    ensure_hermitian(r, "R", HERMITIAN_TOL)?;
    cholesky(q, "Q")?;
    let r_llt = cholesky(r, "R")?;

    let pq = p + q;
    let mut s = r + c * &pq * c.adjoint();
    hermitize(&mut s);
    // Eᴴ = S⁻¹ R
    let e_adj = hpd_solve(s.as_ref(), r, "R + C(P+Q)Cᴴ")?;
    let matrix = e_adj.adjoint().to_owned();

    let l = r_llt.L();
    let s_inv_l = hpd_solve(s.as_ref(), l, "R + C(P+Q)Cᴴ")?;
    let mut sym = l.adjoint() * &s_inv_l;
    hermitize(&mut sym);
    let eig = crate::linalg::hermitian_eigenvalues(sym.as_ref())?;
    let weighted_norm = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    Ok(Certificate {
        spectral_norm: spectral_norm(matrix.as_ref())?,
        // E is similar to Lᴴ S⁻¹ L
        spectral_radius: weighted_norm,
        weighted_norm,
        matrix,
    })
}

/// `X ≥ Y` in the Loewner order: the smallest eigenvalue of `X − Y` is at
/// least `−tol`.
pub fn psd_order(x: MatRef<'_, c64>, y: MatRef<'_, c64>, tol: f64) -> Result<bool> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "psd_order",
            expected: x.nrows(),
            actual: y.nrows(),
        });
    }
    let check_tol = tol.max(HERMITIAN_TOL);
    ensure_hermitian(x, "X", check_tol)?;
    ensure_hermitian(y, "Y", check_tol)?;
    let mut d: Mat<c64> = x - y;
    hermitize(&mut d);
    Ok(min_eigenvalue(d.as_ref())? >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diagonal, max_abs, scaled_identity};

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn scalar(v: f64) -> CMat {
        Mat::from_fn(1, 1, |_, _| c(v))
    }

    fn col(values: &[c64]) -> CCol {
        Col::from_fn(values.len(), |i| values[i])
    }

    #[test]
    fn identity_dynamics_add_process_noise() {
        let x = col(&[c(1.0), c64::new(0.0, 2.0)]);
        let p = diagonal(&[1.0, 2.0]);
        let state = FilterState::new(x.clone(), p.clone()).unwrap();
        let q = diagonal(&[0.5, 0.25]);
        let out = predict(&state, &LinearModel::random_walk(q.clone())).unwrap();
        assert_eq!(out.x, x);
        assert!(max_abs((&out.p - (&p + &q)).as_ref()) < 1e-15);
    }

    #[test]
    fn scalar_doubling_quadruples_covariance() {
        let state = FilterState::new(col(&[c(1.0)]), scalar(1.0)).unwrap();
        let model = LinearModel {
            a: scalar(2.0),
            u: col(&[c(0.0)]),
            g: scalar(1.0),
            q: scalar(0.0),
        };
        let out = predict(&state, &model).unwrap();
        assert!((out.p[(0, 0)] - c(4.0)).norm() < 1e-15);
        assert!((out.x[0] - c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn predict_rejects_bad_dimensions() {
        let state = FilterState::new(col(&[c(1.0)]), scalar(1.0)).unwrap();
        let model = LinearModel::random_walk(identity(2));
        assert!(matches!(predict(&state, &model), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn scalar_information_update() {
        let state = FilterState::new(col(&[c(0.0)]), scalar(1.0)).unwrap();
        let obs = ObservationModel { c: scalar(1.0), r: scalar(1.0) };
        let y = col(&[c(1.0)]);
        let out = update_information(&state, &obs, y.as_ref()).unwrap();
        assert!((out.p[(0, 0)] - c(0.5)).norm() < 1e-15);
        assert!((out.x[0] - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn scalar_gain_update() {
        let state = FilterState::new(col(&[c(0.0)]), scalar(1.0)).unwrap();
        let obs = ObservationModel { c: scalar(1.0), r: scalar(1.0) };
        let y = col(&[c(1.0)]);
        let out = update_gain(&state, &obs, y.as_ref()).unwrap();
        assert!((out.gain[(0, 0)] - c(0.5)).norm() < 1e-15);
        assert!((out.state.p[(0, 0)] - c(0.5)).norm() < 1e-15);
        assert!((out.state.x[0] - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn zero_sensing_carries_no_information() {
        let x = col(&[c(0.3), c64::new(-1.0, 0.5)]);
        let p = diagonal(&[2.0, 0.7]);
        let state = FilterState::new(x.clone(), p.clone()).unwrap();
        let obs = ObservationModel { c: Mat::zeros(3, 2), r: identity(3) };
        let y = col(&[c(1.0), c(2.0), c(3.0)]);
        let info = update_information(&state, &obs, y.as_ref()).unwrap();
        assert!((&info.x - &x).norm_l2() < 1e-14);
        assert!(max_abs((&info.p - &p).as_ref()) < 1e-14);
        let gain = update_gain(&state, &obs, y.as_ref()).unwrap();
        assert!((&gain.state.x - &x).norm_l2() < 1e-14);
    }

    #[test]
    fn zero_prior_gives_zero_gain() {
        let x = col(&[c(0.3), c(1.0)]);
        let state = FilterState::new(x.clone(), Mat::zeros(2, 2)).unwrap();
        let obs = ObservationModel { c: identity(2), r: identity(2) };
        let y = col(&[c(5.0), c(5.0)]);
        let out = update_gain(&state, &obs, y.as_ref()).unwrap();
        assert!(max_abs(out.gain.as_ref()) == 0.0);
        assert_eq!(out.state.x, x);
        // the information form refuses the singular prior
        assert!(matches!(
            update_information(&state, &obs, y.as_ref()),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn non_positive_r_is_rejected() {
        let state = FilterState::new(col(&[c(0.0)]), scalar(1.0)).unwrap();
        let obs = ObservationModel { c: scalar(1.0), r: scalar(-1.0) };
        let y = col(&[c(1.0)]);
        assert!(matches!(update_gain(&state, &obs, y.as_ref()), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(
            update_information(&state, &obs, y.as_ref()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn certificate_without_sensing_is_identity() {
        let cert = convergence_certificate(
            Mat::<c64>::zeros(3, 2).as_ref(),
            identity(2).as_ref(),
            scaled_identity(2, 0.1).as_ref(),
            diagonal(&[1.0, 2.0, 3.0]).as_ref(),
        )
        .unwrap();
        assert!(max_abs((&cert.matrix - identity(3)).as_ref()) < 1e-14);
        assert!((cert.spectral_norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_certificate() {
        let cert = convergence_certificate(
            scalar(1.0).as_ref(),
            scalar(0.5).as_ref(),
            scalar(0.5).as_ref(),
            scalar(1.0).as_ref(),
        )
        .unwrap();
        assert!((cert.matrix[(0, 0)] - c(0.5)).norm() < 1e-15);
        assert!((cert.spectral_norm - 0.5).abs() < 1e-15);
    }

    #[test]
    fn certificate_rejects_indefinite_q() {
        let err = convergence_certificate(
            scalar(1.0).as_ref(),
            scalar(0.5).as_ref(),
            scalar(-0.5).as_ref(),
            scalar(1.0).as_ref(),
        );
        assert!(matches!(err, Err(Error::NotPositiveDefinite { name: "Q" })));
    }

    #[test]
    fn certificate_norm_exceeds_one_for_anisotropic_noise() {
        // only the weighted norm is bounded once R is not a multiple of I
        let cert = convergence_certificate(
            identity(2).as_ref(),
            Mat::from_fn(2, 2, |_, _| c(0.5)).as_ref(),
            scaled_identity(2, 1e-12).as_ref(),
            diagonal(&[1.0, 0.01]).as_ref(),
        )
        .unwrap();
        assert!(cert.spectral_norm > 1.3);
        assert!(cert.weighted_norm <= 1.0 + 1e-12);
        assert!(cert.spectral_radius <= 1.0 + 1e-12);
    }

    #[test]
    fn loewner_order_basics() {
        let one = identity(3);
        let two = scaled_identity(3, 2.0);
        assert!(psd_order(two.as_ref(), one.as_ref(), 1e-12).unwrap());
        assert!(!psd_order(one.as_ref(), two.as_ref(), 1e-12).unwrap());
    }

    #[test]
    fn loewner_order_rejects_non_hermitian() {
        let mut a = identity(2);
        a[(0, 1)] = c(1.0);
        assert!(matches!(
            psd_order(a.as_ref(), identity(2).as_ref(), 1e-12),
            Err(Error::NotHermitian { .. })
        ));
    }
}
