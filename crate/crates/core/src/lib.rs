//! Sparse phase retrieval from Fourier intensity spectra.
//!
//! Complex amplitude vectors are recovered from `|DFT(x)|²` by an extended
//! Kalman filter run on the linearized quadratic observation model, with an
//! ℓ1 pseudo-measurement that lowers the norm of the estimate step by step.
//!
//! * [`scattering`]: forward model, Toeplitz/Kronecker sensors, leakage.
//! * [`kalman`]: complex predict/correct primitives and the residual
//!   contraction certificate.
//! * [`l1`]: phase rows, lowering schedules, linear compressive sensing.
//! * [`reconstruction`]: the intensity-driven filter loop and symmetry-aware
//!   error evaluation.

pub mod error;
pub mod kalman;
pub mod l1;
pub mod linalg;
pub mod reconstruction;
pub mod scattering;

pub use faer::c64;

pub use error::{Error, Result};
pub use kalman::{
    convergence_certificate, predict, psd_order, update_gain, update_information, Certificate,
    FilterState, GainUpdate, LinearModel, ObservationModel,
};
pub use l1::{gamma, linear_cs_reconstruct, linear_cs_reconstruct_from, linear_init, phase_row, GammaSchedule, PhaseRow};
pub use linalg::kron_product;
pub use reconstruction::{
    aligned_error, aligned_error_on, build_linearization, ekf_step, reconstruct, reconstruct_with,
    Alignment, FilterConfig, LinearizedObservation, Reconstruction, ReconstructionTrace,
};
pub use scattering::{
    bilayer_phase_factors, build_initial_guess, intensity_1d, intensity_2d, leakage_profile,
    toeplitz_matrix, AmplitudeVector, BilayerPhases, GridShape, LeakageSpec, Scenario2D,
    SensorFamily, ToeplitzSensor,
};
