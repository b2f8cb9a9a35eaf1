//! Linearized ℓ1 norm, the lowering schedule of the pseudo-measurement and
//! compressive sensing with a fixed linear sensing matrix.

use faer::linalg::solvers::Solve;
use faer::{c64, Col, ColRef, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{predict, update_information, FilterState, LinearModel, ObservationModel};
use crate::linalg::{cholesky, diagonal, hermitian_eigenvalues, hermitize, l1_norm, l2_norm, scaled_identity};
use crate::reconstruction::{FilterConfig, Reconstruction, ReconstructionTrace};
use crate::scattering::AmplitudeVector;

/// Divergence guard: `‖x_k‖₂` may not exceed this multiple of `‖x_0‖₂`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Relative eigenvalue threshold below which a Gram matrix counts as singular.
const GRAM_RCOND: f64 = 1e-12;

/// Row `⟨p|` linearizing `‖·‖₁` around a point `z0`: entries
/// `conj(z0_j)/|z0_j|`, or 0 where `|z0_j| < eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    entries: Vec<c64>,
}

impl PhaseRow {
    pub fn entries(&self) -> &[c64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `⟨p|z⟩ = Σ_j p_j z_j`; the row already carries the conjugation.
    pub fn apply(&self, z: &[c64]) -> c64 {
        self.entries.iter().zip(z).map(|(p, v)| p * v).sum()
    }

    pub fn apply_col(&self, z: ColRef<'_, c64>) -> c64 {
        self.entries.iter().zip(z.iter()).map(|(p, v)| p * v).sum()
    }
}

pub fn phase_row(z0: &[c64], eps_phase: f64) -> PhaseRow {
    PhaseRow {
        entries: z0
            .iter()
            .map(|z| {
                let r = z.norm();
                if r >= eps_phase {
                    z.conj() / r
                } else {
                    c64::new(0.0, 0.0)
                }
            })
            .collect(),
    }
}

/// `γ_k = 1 − a·exp(−b·k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub a: f64,
    pub b: f64,
}

impl GammaSchedule {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let s = Self { a, b };
        s.validate()?;
        Ok(s)
    }

    /// `γ ≡ 1`.
    pub fn constant() -> Self {
        Self { a: 0.0, b: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.a) {
            return Err(Error::InvalidParameter {
                name: "gamma.a",
                reason: format!("must lie in [0, 1), got {}", self.a),
            });
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma.b",
                reason: format!("must be non-negative, got {}", self.b),
            });
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        1.0 - self.a * (-self.b * k as f64).exp()
    }
}

pub fn gamma(schedule: &GammaSchedule, k: usize) -> Result<f64> {
    schedule.validate()?;
    Ok(schedule.at(k))
}

/// Least-squares solution `(CᴴC)⁻¹Cᴴy` for `m > n`, minimum-norm solution
/// `Cᴴ(CCᴴ)⁻¹y` otherwise.
pub fn linear_init(c: MatRef<'_, c64>, y: ColRef<'_, c64>) -> Result<AmplitudeVector> {
    if c.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "linear_init measurement",
            expected: c.nrows(),
            actual: y.nrows(),
        });
    }
    let overdetermined = c.nrows() > c.ncols();
    let mut gram = if overdetermined { c.adjoint() * c } else { c * c.adjoint() };
    hermitize(&mut gram);
    let eig = hermitian_eigenvalues(gram.as_ref())?;
    let (lo, hi) = (eig.first().copied().unwrap_or(0.0), eig.last().copied().unwrap_or(0.0));
    if hi.is_nan() || hi <= 0.0 || lo <= GRAM_RCOND * hi {
        return Err(Error::RankDeficient { min_eigenvalue: lo });
    }
    let llt = cholesky(gram.as_ref(), "Gram matrix")?;
    let x: Col<c64> = if overdetermined {
        let rhs = c.adjoint() * y;
        llt.solve(rhs.as_mat()).col(0).to_owned()
    } else {
        let w = llt.solve(y.as_mat());
        (c.adjoint() * w.col(0)).to_owned()
    };
    Ok(AmplitudeVector::from_col(x.as_ref()))
}

/// ℓ1 minimization under `y = C x` with the pseudo-measurement filter,
/// starting from [`linear_init`].
pub fn linear_cs_reconstruct(
    c: MatRef<'_, c64>,
    y: ColRef<'_, c64>,
    config: &FilterConfig,
) -> Result<Reconstruction> {
    let x0 = linear_init(c, y)?;
    linear_cs_reconstruct_from(c, y, &x0, config)
}

/// Iterates `P_{k+1}⁻¹ = (P_k+Q)⁻¹ + C_{k+1}ᴴR⁻¹C_{k+1}` and the matching
/// estimate update, where `C_{k+1}` appends `⟨p|(x_k)` to `C` and `y_{k+1}`
/// appends the lowered target `γ_k‖x_k‖₁` to `y`.
pub fn linear_cs_reconstruct_from(
    c: MatRef<'_, c64>,
    y: ColRef<'_, c64>,
    x0: &AmplitudeVector,
    config: &FilterConfig,
) -> Result<Reconstruction> {
    config.validate()?;
    let (m, n) = (c.nrows(), c.ncols());
    if y.nrows() != m {
        return Err(Error::DimensionMismatch {
            context: "linear sensing measurement",
            expected: m,
            actual: y.nrows(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial estimate",
            expected: n,
            actual: x0.len(),
        });
    }
    if c.norm_l2() == 0.0 {
        return Err(Error::InvalidParameter {
            name: "C",
            reason: "sensing matrix is zero".into(),
        });
    }

    let mut noise = vec![config.r_obs; m + 1];
    noise[m] = config.r_l1;
    let r = diagonal(&noise);
    let model = LinearModel::random_walk(scaled_identity(n, config.q_scale));

    let mut c_aug: Mat<c64> = Mat::zeros(m + 1, n);
    c_aug.as_mut().subrows_mut(0, m).copy_from(c);
    let mut y_aug: Col<c64> = Col::zeros(m + 1);
    y_aug.as_mut().subrows_mut(0, m).copy_from(y);

    let mut state = FilterState {
        x: x0.to_col(),
        p: scaled_identity(n, config.p0_scale),
    };
    let norm0 = l2_norm(state.x.as_ref());
    let mut trace = ReconstructionTrace::default();

    for k in 0..config.max_iter {
        let l1 = l1_norm(state.x.as_ref());
        if l1 == 0.0 {
            return Err(Error::ZeroEstimate { iteration: k });
        }
        let gamma_k = config.schedule.at(k);
        let x_k: Vec<c64> = state.x.iter().copied().collect();
        let row = phase_row(&x_k, config.eps_phase);
        for (j, p) in row.entries().iter().enumerate() {
            c_aug[(m, j)] = *p;
        }
        y_aug[m] = c64::new(gamma_k * l1, 0.0);

        let prior = predict(&state, &model)?;
        let obs = ObservationModel { c: c_aug.clone(), r: r.clone() };
        state = update_information(&prior, &obs, y_aug.as_ref())?;

        let norm = l2_norm(state.x.as_ref());
        if !norm.is_finite() || norm > DIVERGENCE_FACTOR * norm0.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                iteration: k,
                reason: format!("estimate norm {norm:e} exceeds guard"),
            });
        }
        let residual = c * &state.x - y;
        let residual_max = residual.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        trace.push(
            l1_norm(state.x.as_ref()),
            row.apply_col(state.x.as_ref()).re,
            residual_max,
            gamma_k,
        );
    }
    trace.finish(config.max_iter);
    Ok(Reconstruction {
        estimate: AmplitudeVector::from_col(state.x.as_ref()),
        trace,
    })
}
