//! Seeded property sweeps over the library primitives.

use std::f64::consts::PI;
use std::time::Instant;

use faer::{Col, Mat, Scale};
use phase_kalman::linalg::{hermitian_deviation, identity, max_abs};
use phase_kalman::{
    c64, convergence_certificate, intensity_1d, intensity_2d, predict, psd_order, toeplitz_matrix, update_gain,
    update_information, AmplitudeVector, FilterState, GridShape, LinearModel, ObservationModel, Scenario2D,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CliError, Result};

/// Toeplitz grid sizes checked by the orthogonality suite.
pub const TOEPLITZ_SIZES: [usize; 3] = [4, 7, 117];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seeds: usize,
    pub base_seed: u64,
    /// Perturbs one Toeplitz sensor so that the orthogonality suite must fail.
    pub inject_broken_sensor: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 100,
            base_seed: 0x5eed,
            inject_broken_sensor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    /// Largest value of the gated quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub detail: String,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<14} instances={:<4} worst={:.3e} tol={:e} {:.2}s{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.tolerance,
            self.seconds,
            if self.detail.is_empty() { String::new() } else { format!("  {}", self.detail) }
        )
    }
}

fn cnormal(g: &mut ChaCha8Rng) -> c64 {
    c64::new(g.sample(StandardNormal), g.sample(StandardNormal))
}

fn random_mat(g: &mut ChaCha8Rng, m: usize, n: usize) -> Mat<c64> {
    Mat::from_fn(m, n, |_, _| cnormal(g))
}

fn random_col(g: &mut ChaCha8Rng, n: usize) -> Col<c64> {
    Col::from_fn(n, |_| cnormal(g))
}

/// `B Bᴴ / k + shift·I`.
fn random_hpd(g: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat<c64> {
    let k = n + 2;
    let b = random_mat(g, n, k);
    let mut a = Scale(c64::new(1.0 / k as f64, 0.0)) * (&b * b.adjoint());
    for i in 0..n {
        a[(i, i)] += c64::new(shift, 0.0);
    }
    a
}

fn rel_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    max_abs((a - b).as_ref()) / max_abs(b.as_ref()).max(1e-300)
}

fn col_rel_diff(a: &Col<c64>, b: &Col<c64>) -> f64 {
    let d = a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
    let s = b.iter().fold(0.0f64, |m, y| m.max(y.norm()));
    d / s.max(1e-300)
}

fn suite(
    name: &'static str,
    tolerance: f64,
    f: impl FnOnce() -> Result<(usize, f64, String)>,
) -> Result<SuiteResult> {
    let start = Instant::now();
    let (instances, worst, detail) = f()?;
    Ok(SuiteResult {
        name,
        passed: worst <= tolerance,
        instances,
        worst,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    })
}

fn lib(e: phase_kalman::Error) -> CliError {
    CliError::Reconstruction(e)
}

/// `max ‖T_r T_s − n δ_rs T_r‖_max` and `‖Σ T_r − n I‖_max` over all pairs,
/// with the products for each `r` taken as one stacked multiply.
pub fn toeplitz_defect(n: usize, broken: bool) -> Result<f64> {
    let mut t: Vec<Mat<c64>> = (0..n).map(|r| toeplitz_matrix(r, n)).collect::<phase_kalman::Result<_>>().map_err(lib)?;
    if broken && n > 1 {
        t[1][(0, n - 1)] *= c64::new(1.01, 0.0);
    }
    let stacked = Mat::from_fn(n, n * n, |i, col| t[col / n][(i, col % n)]);
    let nn = c64::new(n as f64, 0.0);
    let mut worst = t.iter().fold(0.0f64, |a, tr| a.max(hermitian_deviation(tr.as_ref())));
    // T_s T_r = (T_r T_s)ᴴ for Hermitian sensors, so s ≥ r suffices.
    for (r, tr) in t.iter().enumerate() {
        let prod = tr * stacked.as_ref().subcols(r * n, (n - r) * n);
        for s in r..n {
            let block = prod.as_ref().subcols((s - r) * n, n);
            let d = if r == s {
                max_abs((block - Scale(nn) * tr).as_ref())
            } else {
                max_abs(block)
            };
            worst = worst.max(d);
        }
    }
    let mut sum = Mat::<c64>::zeros(n, n);
    for tr in &t {
        sum += tr;
    }
    Ok(worst.max(max_abs((sum - Scale(nn) * identity(n)).as_ref())))
}

fn brute_quadratic_1d(x: &[c64], r: usize) -> f64 {
    let n = x.len();
    let mut acc = c64::new(0.0, 0.0);
    for p in 0..n {
        for q in 0..n {
            let t = c64::from_polar(1.0, -2.0 * PI * r as f64 * (p as f64 - q as f64) / n as f64);
            acc += x[p].conj() * t * x[q];
        }
    }
    acc.re
}

fn naive_dft2_power(x: &[c64], n1: usize, n2: usize, m: f64, r1: usize, r2: usize) -> f64 {
    let mut acc = c64::new(0.0, 0.0);
    for k1 in 0..n1 {
        for k2 in 0..n2 {
            let arg = 2.0 * PI * (((k1 * r1) % n1) as f64 / n1 as f64 + ((k2 * r2) % n2) as f64 / n2 as f64);
            acc += c64::from_polar(1.0, arg) * x[k1 * n2 + k2];
        }
    }
    m * m * acc.norm_sqr()
}

/// `|Σ_k exp(+2πikr/n) x_k|²`.
fn naive_dft_power(x: &[c64], r: usize) -> f64 {
    let n = x.len();
    x.iter()
        .enumerate()
        .map(|(k, v)| c64::from_polar(1.0, 2.0 * PI * ((k * r) % n) as f64 / n as f64) * v)
        .sum::<c64>()
        .norm_sqr()
}

/// `M²·⟨x|T_{r1} ⊗ T_{r2}|x⟩` with the Kronecker entries written out.
fn brute_quadratic_2d(x: &[c64], n1: usize, n2: usize, m: f64, r1: usize, r2: usize) -> f64 {
    let t = |r: usize, p: usize, q: usize, n: usize| {
        c64::from_polar(1.0, -2.0 * PI * r as f64 * (p as f64 - q as f64) / n as f64)
    };
    let mut acc = c64::new(0.0, 0.0);
    for a in 0..n1 * n2 {
        for b in 0..n1 * n2 {
            let k = t(r1, a / n2, b / n2, n1) * t(r2, a % n2, b % n2, n2);
            acc += x[a].conj() * k * x[b];
        }
    }
    m * m * acc.re
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

/// Relative deviation of the library intensities from brute-force quadratic
/// forms and direct DFTs, in 1D and 2D, normalized by the largest reference
/// intensity of each instance.
pub fn forward_model_defect(seeds: usize, base_seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..seeds {
        let mut g = ChaCha8Rng::seed_from_u64(base_seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
        let n = g.random_range(1..=40);
        let x: Vec<c64> = (0..n).map(|_| cnormal(&mut g)).collect();
        let got = intensity_1d(&AmplitudeVector::new(x.clone())).map_err(lib)?;
        let quad: Vec<f64> = (0..n).map(|r| brute_quadratic_1d(&x, r)).collect();
        let dft: Vec<f64> = (0..n).map(|r| naive_dft_power(&x, r)).collect();
        let scale = dft.iter().cloned().fold(0.0, f64::max);
        for r in 0..n {
            worst = worst.max(rel(got[r], quad[r], scale)).max(rel(got[r], dft[r], scale));
        }

        let n1 = g.random_range(1..=6);
        let n2 = g.random_range(1..=8);
        let m = g.random_range(1..=3u32);
        let x: Vec<c64> = (0..n1 * n2).map(|_| cnormal(&mut g)).collect();
        let sc = Scenario2D::new(GridShape::new(n1, n2).map_err(lib)?, m, x.clone()).map_err(lib)?;
        let got = intensity_2d(&sc).map_err(lib)?;
        let dft: Vec<f64> = (0..n1 * n2)
            .map(|f| naive_dft2_power(&x, n1, n2, m as f64, f / n2, f % n2))
            .collect();
        let scale = dft.iter().cloned().fold(0.0, f64::max);
        for f in 0..n1 * n2 {
            let quad = brute_quadratic_2d(&x, n1, n2, m as f64, f / n2, f % n2);
            worst = worst.max(rel(got[f], dft[f], scale)).max(rel(got[f], quad, scale));
        }
    }
    Ok(worst)
}

fn random_update(g: &mut ChaCha8Rng) -> (FilterState, ObservationModel, Col<c64>) {
    let n = g.random_range(1..=20);
    let m = g.random_range(1..=20);
    let prior = FilterState {
        x: random_col(g, n),
        p: random_hpd(g, n, 0.2),
    };
    let obs = ObservationModel {
        c: random_mat(g, m, n),
        r: random_hpd(g, m, 0.2),
    };
    let y = random_col(g, m);
    (prior, obs, y)
}

/// Largest relative disagreement between the information and gain forms.
pub fn update_form_defect(seeds: usize, seed: u64) -> Result<f64> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..seeds {
        let (prior, obs, y) = random_update(&mut g);
        let info = update_information(&prior, &obs, y.as_ref()).map_err(lib)?;
        let gain = update_gain(&prior, &obs, y.as_ref()).map_err(lib)?.state;
        worst = worst.max(rel_diff(&info.p, &gain.p)).max(col_rel_diff(&info.x, &gain.x));
    }
    Ok(worst)
}

/// Extremes of the residual propagation matrix over random instances with
/// general positive definite `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateSweep {
    pub max_spectral_norm: f64,
    pub max_weighted_norm: f64,
    pub max_spectral_radius: f64,
}

pub fn certificate_sweep(seeds: usize, seed: u64) -> Result<CertificateSweep> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CertificateSweep {
        max_spectral_norm: 0.0,
        max_weighted_norm: 0.0,
        max_spectral_radius: 0.0,
    };
    for _ in 0..seeds {
        let n = g.random_range(1..=12);
        let m = g.random_range(1..=12);
        let c = random_mat(&mut g, m, n);
        let p = random_hpd(&mut g, n, 0.0);
        let q = random_hpd(&mut g, n, 1e-3);
        let r = random_hpd(&mut g, m, 0.05);
        let cert = convergence_certificate(c.as_ref(), p.as_ref(), q.as_ref(), r.as_ref()).map_err(lib)?;
        out.max_spectral_norm = out.max_spectral_norm.max(cert.spectral_norm);
        out.max_weighted_norm = out.max_weighted_norm.max(cert.weighted_norm);
        out.max_spectral_radius = out.max_spectral_radius.max(cert.spectral_radius);
    }
    Ok(out)
}

/// Number of failed covariance orderings `P+Q ≥ P`, `P+Q ≥ P⁺` and `P⁺ ≥ 0`.
pub fn psd_order_violations(seeds: usize, seed: u64) -> Result<usize> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..seeds {
        let (prior, obs, y) = random_update(&mut g);
        let n = prior.dim();
        let q = random_hpd(&mut g, n, 1e-3);
        let predicted = predict(&prior, &LinearModel::random_walk(q)).map_err(lib)?;
        let posterior = update_gain(&predicted, &obs, y.as_ref()).map_err(lib)?.state;
        let tol = 1e-9 * max_abs(predicted.p.as_ref());
        let checks = [
            psd_order(predicted.p.as_ref(), prior.p.as_ref(), tol).map_err(lib)?,
            psd_order(predicted.p.as_ref(), posterior.p.as_ref(), tol).map_err(lib)?,
            psd_order(posterior.p.as_ref(), Mat::<c64>::zeros(n, n).as_ref(), tol).map_err(lib)?,
        ];
        violations += checks.iter().filter(|ok| !**ok).count();
    }
    Ok(violations)
}

pub fn run_suites(opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    let seeds = opts.seeds;
    let base = opts.base_seed;
    let mut out = Vec::new();

    out.push(suite("toeplitz", 1e-10, || {
        let mut worst = 0.0f64;
        for n in TOEPLITZ_SIZES {
            worst = worst.max(toeplitz_defect(n, opts.inject_broken_sensor)?);
        }
        Ok((TOEPLITZ_SIZES.len(), worst, format!("n={TOEPLITZ_SIZES:?}")))
    })?);
    out.push(suite("forward_model", 1e-10, || {
        Ok((seeds, forward_model_defect(seeds, base)?, String::new()))
    })?);
    out.push(suite("update_forms", 1e-8, || {
        Ok((seeds, update_form_defect(seeds, base.wrapping_add(1))?, String::new()))
    })?);
    // Gated on the weighted norm; the plain spectral norm is reported only.
    out.push(suite("certificate", 1.0 + 1e-10, || {
        let c = certificate_sweep(seeds, base.wrapping_add(2))?;
        Ok((
            seeds,
            c.max_weighted_norm.max(c.max_spectral_radius),
            format!("max_spectral_norm={:.6e}", c.max_spectral_norm),
        ))
    })?);
    out.push(suite("psd_order", 0.0, || {
        let v = psd_order_violations(seeds, base.wrapping_add(3))?;
        Ok((seeds, v as f64, "P+Q ≥ P, P+Q ≥ P⁺ ≥ 0".into()))
    })?);
    Ok(out)
}

/// Runs every suite, prints one line per suite and fails with the number of
/// failed suites.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    let results = run_suites(opts)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Verification(failed));
    }
    Ok(results)
}
