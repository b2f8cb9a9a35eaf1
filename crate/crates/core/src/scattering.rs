//! Forward scattering model: amplitude vectors, rank-one Toeplitz sensors and
//! their Kronecker products, bilayer phase factors and leakage-broadened
//! initial guesses.
//!
//! Sign convention: the forward transform is `S_r = Σ_k exp(+2πi·k·r/n)·x_k`.
//! The sensor `T_r` has entries `exp(−2πi·r·(p−q)/n)` and factors as
//! `v_r v_rᴴ` with `(v_r)_p = exp(−2πi·r·p/n)`, so `v_rᴴ x = S_r` and
//! `|S_r|² = ⟨x|T_r|x⟩`. Two-dimensional data are flattened row-major,
//! `(q1, q2) → q1·n2 + q2`, in both the state vector and the sensor index.

use std::f64::consts::PI;

use faer::{c64, Col, ColRef, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron_product, CMat};

/// Complex scattering amplitudes, one per lattice site.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    entries: Vec<c64>,
}

impl AmplitudeVector {
    pub fn new(entries: Vec<c64>) -> Self {
        Self { entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![c64::new(0.0, 0.0); n])
    }

    /// Builds `modulus·exp(i·phase)` entrywise.
    pub fn from_polar(moduli: &[f64], phases: &[f64]) -> Self {
        debug_assert_eq!(moduli.len(), phases.len());
        Self::new(
            moduli
                .iter()
                .zip(phases)
                .map(|(&r, &phi)| c64::from_polar(r, phi))
                .collect(),
        )
    }

    pub fn from_col(col: ColRef<'_, c64>) -> Self {
        Self::new(col.iter().copied().collect())
    }

    pub fn to_col(&self) -> Col<c64> {
        Col::from_fn(self.entries.len(), |i| self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[c64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<c64> {
        self.entries
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.norm()).collect()
    }

    /// Principal phases in `(−π, π]`; zero entries report phase 0.
    pub fn phases(&self) -> Vec<f64> {
        self.entries.iter().map(|z| principal_phase(*z)).collect()
    }

    /// Indices of nonzero entries.
    pub fn support(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

impl From<Vec<c64>> for AmplitudeVector {
    fn from(entries: Vec<c64>) -> Self {
        Self::new(entries)
    }
}

impl std::ops::Index<usize> for AmplitudeVector {
    type Output = c64;

    fn index(&self, i: usize) -> &c64 {
        &self.entries[i]
    }
}

/// Phase in `(−π, π]`.
pub fn principal_phase(z: c64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let phi = z.im.atan2(z.re);
    if phi <= -PI {
        phi + 2.0 * PI
    } else {
        phi
    }
}

/// Extents of a periodic lattice. A chain of `n` sites is the grid `1 × n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n1: usize,
    pub n2: usize,
}

impl GridShape {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { n1, n2 })
    }

    pub fn chain(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flattening shared by the state vector and the sensor index.
    pub fn flat_index(&self, q1: usize, q2: usize) -> usize {
        debug_assert!(q1 < self.n1 && q2 < self.n2);
        q1 * self.n2 + q2
    }

    pub fn split_index(&self, flat: usize) -> (usize, usize) {
        (flat / self.n2, flat % self.n2)
    }
}

/// `exp(−2πi·k/n)` with the exponent reduced modulo `n` in integers.
fn root_of_unity(k: i64, n: usize) -> c64 {
    let n_i = n as i64;
    let mut k = k.rem_euclid(n_i);
    // symmetric range so that entries for k and −k are exact conjugates
    if 2 * k > n_i {
        k -= n_i;
    }
    c64::from_polar(1.0, -2.0 * PI * (k as f64) / (n as f64))
}

/// One Hermitian rank-one Toeplitz sensor `T_r` on a chain of `n` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToeplitzSensor {
    n: usize,
    r: usize,
}

impl ToeplitzSensor {
    pub fn new(r: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGrid);
        }
        if r >= n {
            return Err(Error::FrequencyOutOfRange { r, n });
        }
        Ok(Self { n, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Entry `(p, q) = exp(−2πi·r·(p−q)/n)`.
    pub fn entry(&self, p: usize, q: usize) -> c64 {
        root_of_unity(self.r as i64 * (p as i64 - q as i64), self.n)
    }

    /// `v_r` with `(v_r)_p = exp(−2πi·r·p/n)`.
    pub fn vector(&self) -> Col<c64> {
        Col::from_fn(self.n, |p| root_of_unity((self.r * p) as i64, self.n))
    }

    pub fn dense(&self) -> CMat {
        Mat::from_fn(self.n, self.n, |p, q| self.entry(p, q))
    }
}

/// Dense `T_r` for frequency `r` on `n` sites.
pub fn toeplitz_matrix(r: usize, n: usize) -> Result<CMat> {
    Ok(ToeplitzSensor::new(r, n)?.dense())
}

/// The full family of sensors `M²·T_{r1}⊗T_{r2}` on a grid, stored as the
/// rank-one factors `w_r = M·(v_{r1}⊗v_{r2})`.
///
/// Only the two 1D phase tables are kept; sensor rows are assembled on
/// demand and projections run as two nested 1D contractions.
#[derive(Debug, Clone)]
pub struct SensorFamily {
    shape: GridShape,
    multiplicity: f64,
    // conj tables: table[r][q] = exp(+2πi·r·q/n)
    table1: Vec<c64>,
    table2: Vec<c64>,
}

impl SensorFamily {
    pub fn chain(n: usize) -> Result<Self> {
        Self::grid(GridShape::chain(n)?, 1.0)
    }

    pub fn grid(shape: GridShape, multiplicity: f64) -> Result<Self> {
        if shape.n1 == 0 || shape.n2 == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(multiplicity > 0.0 && multiplicity.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "multiplicity",
                reason: format!("must be positive, got {multiplicity}"),
            });
        }
        let table = |n: usize| -> Vec<c64> {
            (0..n * n)
                .map(|idx| root_of_unity((idx / n * (idx % n)) as i64, n).conj())
                .collect()
        };
        Ok(Self {
            shape,
            multiplicity,
            table1: table(shape.n1),
            table2: table(shape.n2),
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn multiplicity(&self) -> f64 {
        self.multiplicity
    }

    /// Number of sensors, equal to the state dimension.
    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::DimensionMismatch {
                context: "sensor family",
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Projections `w_rᴴ x` for every sensor, i.e. the (scaled) Fourier
    /// amplitudes `S_r`.
    pub fn project(&self, x: &[c64]) -> Result<Vec<c64>> {
        self.check_len(x.len())?;
        let GridShape { n1, n2 } = self.shape;
        // inner[q1·n2 + r2] = Σ_q2 e2[r2][q2]·X[q1, q2]
        let mut inner = vec![c64::new(0.0, 0.0); n1 * n2];
        for q1 in 0..n1 {
            let row = &x[q1 * n2..(q1 + 1) * n2];
            for r2 in 0..n2 {
                let phases = &self.table2[r2 * n2..(r2 + 1) * n2];
                inner[q1 * n2 + r2] = phases.iter().zip(row).map(|(e, v)| e * v).sum();
            }
        }
        let mut out = vec![c64::new(0.0, 0.0); n1 * n2];
        for r1 in 0..n1 {
            let phases = &self.table1[r1 * n1..(r1 + 1) * n1];
            for r2 in 0..n2 {
                let mut acc = c64::new(0.0, 0.0);
                for (q1, e) in phases.iter().enumerate() {
                    acc += e * inner[q1 * n2 + r2];
                }
                out[r1 * n2 + r2] = acc * self.multiplicity;
            }
        }
        Ok(out)
    }

    /// Quadratic forms `⟨x|w_r w_rᴴ|x⟩ = |w_rᴴ x|²`.
    pub fn intensities(&self, x: &[c64]) -> Result<Vec<f64>> {
        Ok(self.project(x)?.into_iter().map(|a| a.norm_sqr()).collect())
    }

    /// Writes the row vector `w_rᴴ` into `out`.
    pub fn row_into(&self, r: usize, out: &mut [c64]) {
        let GridShape { n1, n2 } = self.shape;
        let (r1, r2) = self.shape.split_index(r);
        let e1 = &self.table1[r1 * n1..(r1 + 1) * n1];
        let e2 = &self.table2[r2 * n2..(r2 + 1) * n2];
        for (q1, a) in e1.iter().enumerate() {
            let scaled = a * self.multiplicity;
            for (q2, b) in e2.iter().enumerate() {
                out[q1 * n2 + q2] = scaled * b;
            }
        }
    }

    /// Dense `M²·T_{r1}⊗T_{r2}` built from explicit Toeplitz matrices. Only
    /// meant for checks; the hot path never materializes it.
    pub fn dense_sensor(&self, r: usize) -> Result<CMat> {
        if r >= self.len() {
            return Err(Error::FrequencyOutOfRange { r, n: self.len() });
        }
        let (r1, r2) = self.shape.split_index(r);
        let t1 = toeplitz_matrix(r1, self.shape.n1)?;
        let t2 = toeplitz_matrix(r2, self.shape.n2)?;
        let mut k = kron_product(t1.as_ref(), t2.as_ref());
        let m2 = self.multiplicity * self.multiplicity;
        for j in 0..k.ncols() {
            for i in 0..k.nrows() {
                k[(i, j)] *= m2;
            }
        }
        Ok(k)
    }
}

/// `|S_r|²` for a chain, `r = 0, …, n−1`.
pub fn intensity_1d(x: &AmplitudeVector) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    SensorFamily::chain(x.len())?.intensities(x.as_slice())
}

/// A two-dimensional layer of `n1 × n2` amplitudes repeated over `M`
/// identical bilayers.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario2D {
    pub shape: GridShape,
    pub multiplicity: u32,
    /// Row-major amplitudes `X[q1, q2]`.
    pub amplitudes: Vec<c64>,
}

impl Scenario2D {
    pub fn new(shape: GridShape, multiplicity: u32, amplitudes: Vec<c64>) -> Result<Self> {
        let sc = Self {
            shape,
            multiplicity,
            amplitudes,
        };
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<()> {
        if self.amplitudes.len() != self.shape.len() {
            return Err(Error::DimensionMismatch {
                context: "2D amplitudes",
                expected: self.shape.len(),
                actual: self.amplitudes.len(),
            });
        }
        if self.multiplicity == 0 {
            return Err(Error::InvalidParameter {
                name: "multiplicity",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn sensors(&self) -> Result<SensorFamily> {
        SensorFamily::grid(self.shape, f64::from(self.multiplicity))
    }

    pub fn vectorized(&self) -> AmplitudeVector {
        AmplitudeVector::new(self.amplitudes.clone())
    }
}

/// `|S_{r1 r2}|² = M²·⟨x|T_{r1}⊗T_{r2}|x⟩`, indexed `r1·n2 + r2`.
pub fn intensity_2d(sc: &Scenario2D) -> Result<Vec<f64>> {
    sc.validate()?;
    sc.sensors()?.intensities(&sc.amplitudes)
}

/// The three relative phase factors a bilayer can carry for the in-plane
/// wave-vector components `(κ1, κ2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilayerPhases {
    pub factors: [c64; 3],
    /// `κ1 − κ2 ≡ 0 (mod 3)`: all factors equal 1 and the stacking is
    /// invisible.
    pub bragg_insensitive: bool,
}

pub fn bilayer_phase_factors(kappa1: i64, kappa2: i64) -> BilayerPhases {
    // exp(2πi·k/3) with k reduced mod 3
    let third = |k: i64| c64::from_polar(1.0, 2.0 * PI * (k.rem_euclid(3) as f64) / 3.0);
    BilayerPhases {
        factors: [
            c64::new(1.0, 0.0),
            third(2 * kappa1 + kappa2),
            third(kappa1 + 2 * kappa2),
        ],
        bragg_insensitive: (kappa1 - kappa2).rem_euclid(3) == 0,
    }
}

/// Support and broadening parameters of a leakage profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSpec {
    pub support: Vec<usize>,
    pub shift: f64,
    pub modulus_scale: f64,
    pub phase_scale: f64,
}

impl LeakageSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if let Some(&index) = self.support.iter().find(|&&i| i >= n) {
            return Err(Error::SupportOutOfRange { index, n });
        }
        if !(0.0..1.0).contains(&self.shift) {
            return Err(Error::InvalidParameter {
                name: "shift",
                reason: format!("must lie in [0, 1), got {}", self.shift),
            });
        }
        for (name, v) in [
            ("modulus_scale", self.modulus_scale),
            ("phase_scale", self.phase_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// `sin(πt)/(πt)`, exact at integer arguments.
fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else if t.fract() == 0.0 {
        0.0
    } else {
        let a = PI * t;
        a.sin() / a
    }
}

/// `½(f⁺ + f⁻)` of per-site values `weights[i]` located at `support[i]`.
pub fn weighted_leakage(support: &[usize], weights: &[f64], shift: f64, n: usize) -> Vec<f64> {
    debug_assert_eq!(support.len(), weights.len());
    (0..n)
        .map(|k| {
            support
                .iter()
                .zip(weights)
                .map(|(&alpha, &w)| {
                    let d = k as f64 - alpha as f64;
                    0.5 * w * (sinc(d + shift) + sinc(d - shift))
                })
                .sum()
        })
        .collect()
}

/// Leakage profile of the support indicator on `n` sites.
pub fn leakage_profile(spec: &LeakageSpec, n: usize) -> Result<Vec<f64>> {
    if spec.support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(&index) = spec.support.iter().find(|&&i| i >= n) {
        return Err(Error::SupportOutOfRange { index, n });
    }
    let ones = vec![1.0; spec.support.len()];
    Ok(weighted_leakage(&spec.support, &ones, spec.shift, n))
}

/// Broadens the moduli and the principal phases of a sparse vector
/// separately and recombines them as `modulus·exp(i·phase)`.
pub fn build_initial_guess(x_sparse: &AmplitudeVector, spec: &LeakageSpec) -> Result<AmplitudeVector> {
    let n = x_sparse.len();
    spec.validate(n)?;
    let mut support = spec.support.clone();
    support.sort_unstable();
    support.dedup();
    if support != x_sparse.support() {
        return Err(Error::SupportMismatch);
    }
    let moduli: Vec<f64> = support.iter().map(|&i| x_sparse[i].norm()).collect();
    let phases: Vec<f64> = support.iter().map(|&i| principal_phase(x_sparse[i])).collect();
    let modulus_profile = weighted_leakage(&support, &moduli, spec.shift, n);
    let phase_profile = weighted_leakage(&support, &phases, spec.shift, n);
    Ok(AmplitudeVector::new(
        modulus_profile
            .iter()
            .zip(&phase_profile)
            .map(|(&m, &p)| c64::from_polar(spec.modulus_scale * m, spec.phase_scale * p))
            .collect(),
    ))
}
