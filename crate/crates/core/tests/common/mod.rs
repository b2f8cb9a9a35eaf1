#![allow(dead_code)]

use faer::{Col, Mat, Scale};
use phase_kalman::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cnormal(rng: &mut ChaCha8Rng) -> c64 {
    c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| cnormal(rng)).collect()
}

pub fn random_col(rng: &mut ChaCha8Rng, n: usize) -> Col<c64> {
    Col::from_fn(n, |_| cnormal(rng))
}

pub fn random_mat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Mat<c64> {
    Mat::from_fn(m, n, |_, _| cnormal(rng))
}

/// `B Bᴴ/k + shift·I` with `B` of size `n×k`.
pub fn random_hpd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat<c64> {
    let k = n + 2;
    let b = random_mat(rng, n, k);
    let mut a = Scale(c64::new(1.0 / k as f64, 0.0)) * (&b * b.adjoint());
    for i in 0..n {
        a[(i, i)] += c64::new(shift, 0.0);
    }
    phase_kalman::linalg::hermitize(&mut a);
    a
}

/// Positive semidefinite of rank at most `rank`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Mat<c64> {
    let b = random_mat(rng, n, rank);
    let mut a = &b * b.adjoint();
    phase_kalman::linalg::hermitize(&mut a);
    a
}

pub fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    phase_kalman::linalg::max_abs((a - b).as_ref())
}

/// `max|a − b| / max(max|b|, tiny)`.
pub fn rel_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    max_abs_diff(a, b) / phase_kalman::linalg::max_abs(b.as_ref()).max(1e-300)
}

pub fn col_rel_diff(a: &Col<c64>, b: &Col<c64>) -> f64 {
    let num = a.iter().zip(b.iter()).fold(0.0f64, |m, (u, v)| m.max((u - v).norm()));
    let den = b.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    num / den.max(1e-300)
}
