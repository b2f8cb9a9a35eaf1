//! Phase retrieval from intensities: an extended Kalman filter iterated on
//! the linearized quadratic observation model, with the ℓ1 pseudo-measurement
//! appended as the last observation row.
//!
//! One iteration linearizes `|S_r|² = ⟨x|T_r|x⟩` around the current
//! estimate `x_k`,
//!
//! ```text
//! C_{k+1} = [2⟨x_k|T_0; …; 2⟨x_k|T_{n−1}; ⟨p|(x_k)]
//! s_{k+1} = [⟨x_k|T_0|x_k⟩; …; ⟨x_k|T_{n−1}|x_k⟩; 0]
//! y_{k+1} = [|S_0|²; …; |S_{n−1}|²; γ_k‖x_k‖₁]
//! ```
//!
//! and applies one gain-form predict/correct step with `A = G = I`,
//! `R = diag(r_obs, …, r_obs, r_l1)` and the real innovation
//! `Re[y − C x_k + s]`.

use faer::{c64, Col, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{gain_and_covariance, FilterState, Noise};
use crate::l1::{phase_row, GammaSchedule, DIVERGENCE_FACTOR};
use crate::linalg::{l1_norm, l2_norm, scaled_identity, CMat};
use crate::scattering::{AmplitudeVector, GridShape, SensorFamily};

/// Default threshold below which `|p_j|` is set to zero.
pub const DEFAULT_EPS_PHASE: f64 = 1e-12;

/// Relative ℓ1 change over the trailing window that counts as a plateau.
pub const PLATEAU_TOLERANCE: f64 = 1e-6;

/// Covariances, lowering schedule and iteration budget of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// `P_0 = p0_scale·I`.
    pub p0_scale: f64,
    /// `Q = q_scale·I`.
    pub q_scale: f64,
    /// Noise variance of every intensity (or linear constraint) row.
    pub r_obs: f64,
    /// Noise variance of the ℓ1 pseudo-measurement row.
    pub r_l1: f64,
    pub schedule: GammaSchedule,
    pub max_iter: usize,
    #[serde(default = "default_eps_phase")]
    pub eps_phase: f64,
}

fn default_eps_phase() -> f64 {
    DEFAULT_EPS_PHASE
}

impl FilterConfig {
    /// Settings for the 117-site stacking-sequence chain.
    pub fn chain_default() -> Self {
        Self {
            p0_scale: 0.3,
            q_scale: 1e-8,
            r_obs: 1e-4,
            r_l1: 1e-6,
            schedule: GammaSchedule { a: 0.1, b: 0.0019 },
            max_iter: 1200,
            eps_phase: DEFAULT_EPS_PHASE,
        }
    }

    /// Settings for the 12×25 pattern.
    pub fn grid_default() -> Self {
        Self {
            q_scale: 1e-7,
            schedule: GammaSchedule { a: 0.17, b: 0.0028 },
            max_iter: 2000,
            ..Self::chain_default()
        }
    }

    /// Settings for linear compressive sensing with exact constraints.
    pub fn linear_cs_default() -> Self {
        Self {
            p0_scale: 1.0,
            q_scale: 1e-7,
            r_obs: 1e-7,
            r_l1: 5e-8,
            schedule: GammaSchedule { a: 0.1, b: 0.005 },
            max_iter: 1000,
            eps_phase: DEFAULT_EPS_PHASE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p0_scale", self.p0_scale),
            ("q_scale", self.q_scale),
            ("r_obs", self.r_obs),
            ("r_l1", self.r_l1),
            ("eps_phase", self.eps_phase),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.r_l1 >= self.r_obs {
            return Err(Error::InvalidParameter {
                name: "r_l1",
                reason: format!(
                    "the l1 row variance ({}) must be below the observation variance ({})",
                    self.r_l1, self.r_obs
                ),
            });
        }
        self.schedule.validate()
    }

    /// Modulus below which a reconstructed amplitude counts as vanishing.
    pub fn vanishing_threshold(&self) -> f64 {
        10.0 * self.q_scale.sqrt()
    }
}

/// Per-iteration diagnostics. Entry `k` describes the estimate `x_{k+1}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionTrace {
    /// `‖x_{k+1}‖₁`.
    pub l1_true: Vec<f64>,
    /// `Re⟨p(x_k)|x_{k+1}⟩ ≤ ‖x_{k+1}‖₁`.
    pub l1_linearized: Vec<f64>,
    /// Largest absolute misfit between model and measured data.
    pub intensity_residual_max: Vec<f64>,
    pub gamma: Vec<f64>,
    pub iterations_run: usize,
    /// First iteration at which the ℓ1 plateau detector fired. Informational
    /// only; runs always use the full budget.
    pub plateau_at: Option<usize>,
}

impl ReconstructionTrace {
    pub(crate) fn push(&mut self, l1_true: f64, l1_linearized: f64, residual: f64, gamma: f64) {
        self.l1_true.push(l1_true);
        self.l1_linearized.push(l1_linearized);
        self.intensity_residual_max.push(residual);
        self.gamma.push(gamma);
        self.iterations_run = self.l1_true.len();
    }

    /// Runs the plateau detector with a trailing window of 5% of `budget`.
    pub(crate) fn finish(&mut self, budget: usize) {
        self.iterations_run = self.l1_true.len();
        let window = (budget / 20).max(1);
        self.plateau_at = (window..self.l1_true.len()).find(|&k| {
            let now = self.l1_true[k];
            let before = self.l1_true[k - window];
            now > 0.0 && ((now - before) / now).abs() < PLATEAU_TOLERANCE
        });
    }

    /// Relative variation `(max − min)/mean` of `‖x_k‖₁` over the trailing
    /// `fraction` of the trace.
    pub fn tail_l1_variation(&self, fraction: f64) -> Option<f64> {
        let len = self.l1_true.len();
        let count = ((len as f64 * fraction).ceil() as usize).min(len);
        if count == 0 {
            return None;
        }
        let tail = &self.l1_true[len - count..];
        let max = tail.iter().cloned().fold(f64::MIN, f64::max);
        let min = tail.iter().cloned().fold(f64::MAX, f64::min);
        let mean = tail.iter().sum::<f64>() / count as f64;
        Some((max - min) / mean)
    }
}

/// Final estimate plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub estimate: AmplitudeVector,
    pub trace: ReconstructionTrace,
}

/// Linearized observation model `y = Re(C x) − s` at one estimate.
#[derive(Debug, Clone)]
pub struct LinearizedObservation {
    /// `(m+1)×n`: rows `2⟨x_k|T_r`, then `⟨p|(x_k)`.
    pub c: CMat,
    /// `⟨x_k|T_r|x_k⟩`, then an exact 0.
    pub bias: Vec<c64>,
    /// Measured intensities, then `γ_k‖x_k‖₁`.
    pub y: Vec<f64>,
}

impl LinearizedObservation {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    /// `Re[y − C x + s]`.
    pub fn innovation(&self, x: &[c64]) -> Vec<f64> {
        let cx = &self.c * Col::from_fn(x.len(), |i| x[i]);
        (0..self.rows())
            .map(|i| (c64::new(self.y[i], 0.0) - cx[i] + self.bias[i]).re)
            .collect()
    }
}

pub fn build_linearization(
    x_k: &AmplitudeVector,
    sensors: &SensorFamily,
    gamma_k: f64,
    measured: &[f64],
    eps_phase: f64,
) -> Result<LinearizedObservation> {
    let n = sensors.len();
    if x_k.len() != n {
        return Err(Error::DimensionMismatch {
            context: "estimate",
            expected: n,
            actual: x_k.len(),
        });
    }
    if measured.len() != n {
        return Err(Error::DimensionMismatch {
            context: "measured intensities",
            expected: n,
            actual: measured.len(),
        });
    }
    let l1 = x_k.l1_norm();
    if l1 == 0.0 {
        return Err(Error::ZeroEstimate { iteration: 0 });
    }
    let amplitudes = sensors.project(x_k.as_slice())?;
    let mut c = Mat::<c64>::zeros(n + 1, n);
    let mut row = vec![c64::new(0.0, 0.0); n];
    for (r, a) in amplitudes.iter().enumerate() {
        // 2⟨x|w_r w_rᴴ = 2·conj(w_rᴴx)·w_rᴴ
        sensors.row_into(r, &mut row);
        let scale = a.conj() * 2.0;
        for (q, w) in row.iter().enumerate() {
            c[(r, q)] = scale * w;
        }
    }
    let p = phase_row(x_k.as_slice(), eps_phase);
    for (q, v) in p.entries().iter().enumerate() {
        c[(n, q)] = *v;
    }
    let mut bias: Vec<c64> = amplitudes.iter().map(|a| c64::new(a.norm_sqr(), 0.0)).collect();
    bias.push(c64::new(0.0, 0.0));
    let mut y = measured.to_vec();
    y.push(gamma_k * l1);
    Ok(LinearizedObservation { c, bias, y })
}

/// One predict (`P_k + Q`) and gain-form correct step with the real-part
/// innovation.
pub fn ekf_step(state: &FilterState, lin: &LinearizedObservation, config: &FilterConfig) -> Result<FilterState> {
    let n = state.dim();
    let m = lin.rows();
    if lin.c.ncols() != n || lin.c.nrows() != m || lin.bias.len() != m || m == 0 {
        return Err(Error::DimensionMismatch {
            context: "linearized observation",
            expected: n,
            actual: lin.c.ncols(),
        });
    }
    let mut p_minus = state.p.clone();
    for i in 0..n {
        p_minus[(i, i)] += c64::new(config.q_scale, 0.0);
    }
    let mut noise = vec![config.r_obs; m];
    noise[m - 1] = config.r_l1;
    let (gain, p) = gain_and_covariance(p_minus.as_ref(), lin.c.as_ref(), Noise::Diagonal(&noise))?;

    let x: Vec<c64> = state.x.iter().copied().collect();
    let innovation = lin.innovation(&x);
    if innovation.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            reason: "non-finite innovation".into(),
        });
    }
    let innovation = Col::from_fn(m, |i| c64::new(innovation[i], 0.0));
    let x = &state.x + &gain * &innovation;
    Ok(FilterState { x, p })
}

/// Runs `config.max_iter` linearize/step iterations from `x0`.
pub fn reconstruct(
    measured: &[f64],
    x0: &AmplitudeVector,
    sensors: &SensorFamily,
    config: &FilterConfig,
) -> Result<Reconstruction> {
    reconstruct_with(measured, x0, sensors, config, |_, _, _| {})
}

/// [`reconstruct`] with a callback observing `(k, &linearization, &x_{k+1})`
/// after every step.
pub fn reconstruct_with<F>(
    measured: &[f64],
    x0: &AmplitudeVector,
    sensors: &SensorFamily,
    config: &FilterConfig,
    mut observe: F,
) -> Result<Reconstruction>
where
    F: FnMut(usize, &LinearizedObservation, &AmplitudeVector),
{
    config.validate()?;
    let n = sensors.len();
    if measured.len() != n {
        return Err(Error::DimensionMismatch {
            context: "measured intensities",
            expected: n,
            actual: measured.len(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial estimate",
            expected: n,
            actual: x0.len(),
        });
    }
    let norm0 = x0.l2_norm();
    if norm0 == 0.0 {
        return Err(Error::ZeroEstimate { iteration: 0 });
    }

    let mut state = FilterState {
        x: x0.to_col(),
        p: scaled_identity(n, config.p0_scale),
    };
    let mut x_k = x0.clone();
    let mut trace = ReconstructionTrace::default();

    for k in 0..config.max_iter {
        if l1_norm(state.x.as_ref()) == 0.0 {
            return Err(Error::ZeroEstimate { iteration: k });
        }
        let gamma_k = config.schedule.at(k);
        let lin = build_linearization(&x_k, sensors, gamma_k, measured, config.eps_phase)?;
        state = ekf_step(&state, &lin, config).map_err(|e| match e {
            Error::Divergence { reason, .. } => Error::Divergence { iteration: k, reason },
            other => other,
        })?;

        let norm = l2_norm(state.x.as_ref());
        if !norm.is_finite() || norm > DIVERGENCE_FACTOR * norm0 {
            return Err(Error::Divergence {
                iteration: k,
                reason: format!("estimate norm {norm:e} exceeds guard"),
            });
        }
        let next = AmplitudeVector::from_col(state.x.as_ref());
        let model = sensors.intensities(next.as_slice())?;
        let residual = model
            .iter()
            .zip(measured)
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        let linearized: f64 = lin.c.row(n).iter().zip(next.as_slice()).map(|(p, v)| p * v).sum::<c64>().re;
        trace.push(next.l1_norm(), linearized, residual, gamma_k);
        observe(k, &lin, &next);
        x_k = next;
    }
    trace.finish(config.max_iter);
    Ok(Reconstruction { estimate: x_k, trace })
}

/// Symmetry element that best maps the reference onto the estimate:
/// `x_est ≈ exp(i·phase)·g(x_ref)` with `g` an optional conjugate reflection
/// followed by a cyclic shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Cyclic shift along the two grid axes (`shift.0 = 0` for chains).
    pub shift: (usize, usize),
    pub reflected: bool,
    pub phase: f64,
}

impl Alignment {
    /// Applies the symmetry to `x` on `shape`.
    pub fn apply(&self, x: &[c64], shape: GridShape) -> Vec<c64> {
        let GridShape { n1, n2 } = shape;
        let rot = c64::from_polar(1.0, self.phase);
        (0..n1 * n2)
            .map(|flat| {
                let (k1, k2) = shape.split_index(flat);
                let s1 = (k1 + n1 - self.shift.0 % n1) % n1;
                let s2 = (k2 + n2 - self.shift.1 % n2) % n2;
                let v = if self.reflected {
                    x[shape.flat_index(n1 - 1 - s1, n2 - 1 - s2)].conj()
                } else {
                    x[shape.flat_index(s1, s2)]
                };
                rot * v
            })
            .collect()
    }

    /// Maps an estimate back into the reference frame, inverting [`apply`]
    /// and the global phase.
    ///
    /// [`apply`]: Alignment::apply
    pub fn undo(&self, x_est: &[c64], shape: GridShape) -> Vec<c64> {
        let GridShape { n1, n2 } = shape;
        let unrot = c64::from_polar(1.0, -self.phase);
        (0..n1 * n2)
            .map(|flat| {
                let (j1, j2) = shape.split_index(flat);
                if self.reflected {
                    let k1 = (n1 - 1 - j1 + self.shift.0) % n1;
                    let k2 = (n2 - 1 - j2 + self.shift.1) % n2;
                    (unrot * x_est[shape.flat_index(k1, k2)]).conj()
                } else {
                    let k1 = (j1 + self.shift.0) % n1;
                    let k2 = (j2 + self.shift.1) % n2;
                    unrot * x_est[shape.flat_index(k1, k2)]
                }
            })
            .collect()
    }
}

/// `min_g ‖x_est − g(x_ref)‖₂` over global phases, cyclic shifts and the
/// conjugate reflection of a chain.
pub fn aligned_error(x_est: &AmplitudeVector, x_ref: &AmplitudeVector) -> Result<(f64, Alignment)> {
    let shape = GridShape::chain(x_ref.len())?;
    aligned_error_on(x_est, x_ref, shape)
}

/// [`aligned_error`] on a 2D grid: shifts run over both axes and the
/// reflection inverts both axes.
pub fn aligned_error_on(
    x_est: &AmplitudeVector,
    x_ref: &AmplitudeVector,
    shape: GridShape,
) -> Result<(f64, Alignment)> {
    if x_est.len() != x_ref.len() {
        return Err(Error::DimensionMismatch {
            context: "aligned_error",
            expected: x_ref.len(),
            actual: x_est.len(),
        });
    }
    if x_ref.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            context: "aligned_error grid",
            expected: shape.len(),
            actual: x_ref.len(),
        });
    }
    let est = x_est.as_slice();
    let norm2 = x_est.l2_norm().powi(2) + x_ref.l2_norm().powi(2);
    let mut best: Option<(f64, Alignment)> = None;
    for reflected in [false, true] {
        for s1 in 0..shape.n1 {
            for s2 in 0..shape.n2 {
                let candidate = Alignment {
                    shift: (s1, s2),
                    reflected,
                    phase: 0.0,
                };
                let g = candidate.apply(x_ref.as_slice(), shape);
                // ⟨g, est⟩; the optimal phase rotates g onto est
                let overlap: c64 = g.iter().zip(est).map(|(a, b)| a.conj() * b).sum();
                let err = (norm2 - 2.0 * overlap.norm()).max(0.0).sqrt();
                if best.as_ref().is_none_or(|(e, _)| err < *e) {
                    best = Some((
                        err,
                        Alignment {
                            phase: crate::scattering::principal_phase(overlap),
                            ..candidate
                        },
                    ));
                }
            }
        }
    }
    let (_, alignment) = best.expect("grid is non-empty");
    // recompute directly to avoid cancellation in the expanded form
    let aligned = alignment.apply(x_ref.as_slice(), shape);
    let err = aligned
        .iter()
        .zip(est)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok((err, alignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::intensity_1d;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn sample(n: usize) -> AmplitudeVector {
        AmplitudeVector::new(
            (0..n)
                .map(|k| c64::from_polar(1.0 + (k as f64 * 0.37).sin(), k as f64 * 0.91))
                .collect(),
        )
    }

    #[test]
    fn config_rejects_weak_l1_row() {
        let mut cfg = FilterConfig::chain_default();
        cfg.validate().unwrap();
        cfg.r_l1 = cfg.r_obs;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn linearization_is_tangent_at_the_estimate() {
        let x = sample(7);
        let fam = SensorFamily::chain(7).unwrap();
        let measured = intensity_1d(&x).unwrap();
        let lin = build_linearization(&x, &fam, 1.0, &measured, DEFAULT_EPS_PHASE).unwrap();
        let innov = lin.innovation(x.as_slice());
        let scale = measured.iter().cloned().fold(0.0, f64::max);
        assert!(innov.iter().all(|v| v.abs() <= 1e-12 * scale));
        assert_eq!(lin.bias[7], c(0.0, 0.0));
    }

    #[test]
    fn linearization_by_hand_on_two_sites() {
        let x = AmplitudeVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let fam = SensorFamily::chain(2).unwrap();
        let lin = build_linearization(&x, &fam, 0.5, &[1.0, 1.0], DEFAULT_EPS_PHASE).unwrap();
        // 2⟨e_0|T_r = 2·(first row of T_r)
        let expected = [[c(2.0, 0.0), c(2.0, 0.0)], [c(2.0, 0.0), c(-2.0, 0.0)]];
        for r in 0..2 {
            for q in 0..2 {
                assert!((lin.c[(r, q)] - expected[r][q]).norm() < 1e-15);
            }
        }
        assert!((lin.bias[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((lin.bias[1] - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(lin.c[(2, 0)], c(1.0, 0.0));
        assert_eq!(lin.c[(2, 1)], c(0.0, 0.0));
        assert_eq!(lin.y, vec![1.0, 1.0, 0.5]);
    }

    #[test]
    fn linearization_rejects_zero_estimate() {
        let fam = SensorFamily::chain(3).unwrap();
        let err = build_linearization(&AmplitudeVector::zeros(3), &fam, 1.0, &[0.0; 3], 1e-12);
        assert!(matches!(err, Err(Error::ZeroEstimate { .. })));
    }

    #[test]
    fn scalar_step_matches_closed_form() {
        // n = 1: C = [2|x|²/x̄·…], check against scalar Kalman algebra
        let x0 = c(0.8, 0.0);
        let fam = SensorFamily::chain(1).unwrap();
        let cfg = FilterConfig {
            p0_scale: 0.5,
            q_scale: 0.1,
            r_obs: 1e-2,
            r_l1: 1e-3,
            schedule: GammaSchedule::constant(),
            max_iter: 1,
            eps_phase: DEFAULT_EPS_PHASE,
        };
        let x = AmplitudeVector::new(vec![x0]);
        let lin = build_linearization(&x, &fam, 1.0, &[1.0], cfg.eps_phase).unwrap();
        let state = FilterState {
            x: x.to_col(),
            p: scaled_identity(1, cfg.p0_scale),
        };
        let out = ekf_step(&state, &lin, &cfg).unwrap();
        // rows: c1 = 2·0.8 = 1.6, c2 = 1; M = 0.6
        let m = 0.6;
        let (c1, c2) = (1.6, 1.0);
        let s11 = c1 * m * c1 + 1e-2;
        let s12 = c1 * m * c2;
        let s22 = c2 * m * c2 + 1e-3;
        let det = s11 * s22 - s12 * s12;
        let k1 = m * (c1 * s22 - c2 * s12) / det;
        let k2 = m * (-c1 * s12 + c2 * s11) / det;
        let innov1 = 1.0 - 1.6 * 0.8 + 0.64;
        let innov2 = 0.8 - 0.8;
        let expected = 0.8 + k1 * innov1 + k2 * innov2;
        assert!((out.x[0] - c(expected, 0.0)).norm() < 1e-12);
        let p_expected = m - (k1 * c1 + k2 * c2) * m;
        assert!((out.p[(0, 0)].re - p_expected).abs() < 1e-12);
    }

    #[test]
    fn aligned_error_quotients_symmetries() {
        let x = sample(9);
        let phase = AmplitudeVector::new(x.as_slice().iter().map(|z| z * c64::from_polar(1.0, 1.3)).collect());
        assert!(aligned_error(&phase, &x).unwrap().0 < 1e-12);
        let shifted = AmplitudeVector::new((0..9).map(|k| x[(k + 3) % 9]).collect());
        assert!(aligned_error(&shifted, &x).unwrap().0 < 1e-12);
        let reflected = AmplitudeVector::new((0..9).map(|k| x[8 - k].conj()).collect());
        let (err, al) = aligned_error(&reflected, &x).unwrap();
        assert!(err < 1e-12);
        assert!(al.reflected);
    }

    #[test]
    fn undo_inverts_apply() {
        let x = sample(12);
        let shape = GridShape::new(3, 4).unwrap();
        for reflected in [false, true] {
            let al = Alignment {
                shift: (2, 1),
                reflected,
                phase: 0.7,
            };
            let back = al.undo(&al.apply(x.as_slice(), shape), shape);
            for (a, b) in back.iter().zip(x.as_slice()) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn aligned_error_length_mismatch() {
        assert!(matches!(
            aligned_error(&sample(3), &sample(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn plateau_detector_and_tail_variation() {
        let mut t = ReconstructionTrace::default();
        for k in 0..100 {
            let v = if k < 50 { 10.0 - k as f64 * 0.1 } else { 5.0 };
            t.push(v, v, 0.0, 1.0);
        }
        t.finish(100);
        assert_eq!(t.iterations_run, 100);
        assert_eq!(t.plateau_at, Some(55));
        assert_eq!(t.tail_l1_variation(0.1), Some(0.0));
    }
}
