mod common;

use common::{col_rel_diff, random_col, random_hpd, random_mat, random_psd, rel_diff, rng};
use faer::{Col, Mat, Scale};
use phase_kalman::linalg::{hpd_inverse, hpd_solve, identity, scaled_identity};
use phase_kalman::{
    c64, convergence_certificate, predict, psd_order, update_gain, update_information, FilterState,
    LinearModel, ObservationModel,
};
use rand::Rng;

#[test]
fn predict_matches_matrix_products() {
    let mut g = rng(21);
    for _ in 0..20 {
        let n = g.random_range(1..10);
        let r = g.random_range(1..6);
        let state = FilterState {
            x: random_col(&mut g, n),
            p: random_hpd(&mut g, n, 0.1),
        };
        let model = LinearModel {
            a: random_mat(&mut g, n, n),
            u: random_col(&mut g, n),
            g: random_mat(&mut g, n, r),
            q: random_hpd(&mut g, r, 0.5),
        };
        let out = predict(&state, &model).unwrap();
        let p_ref = &model.a * &state.p * model.a.adjoint() + &model.g * &model.q * model.g.adjoint();
        let x_ref = &model.a * &state.x + &model.u;
        assert!(rel_diff(&out.p, &p_ref) <= 1e-12);
        assert!(col_rel_diff(&out.x, &x_ref) <= 1e-12);
    }
}

#[test]
fn information_and_gain_forms_agree() {
    let mut g = rng(22);
    for _ in 0..100 {
        let n = g.random_range(1..=20);
        let m = g.random_range(1..=20);
        let prior = FilterState {
            x: random_col(&mut g, n),
            p: random_hpd(&mut g, n, 0.2),
        };
        let obs = ObservationModel {
            c: random_mat(&mut g, m, n),
            r: random_hpd(&mut g, m, 0.2),
        };
        let y = random_col(&mut g, m);
        let info = update_information(&prior, &obs, y.as_ref()).unwrap();
        let gain = update_gain(&prior, &obs, y.as_ref()).unwrap().state;
        assert!(rel_diff(&info.p, &gain.p) <= 1e-8, "n={n} m={m}");
        assert!(col_rel_diff(&info.x, &gain.x) <= 1e-8, "n={n} m={m}");
    }
}

#[test]
fn certificate_is_a_contraction_in_the_weighted_norm() {
    let mut g = rng(23);
    for _ in 0..100 {
        let n = g.random_range(1..=12);
        let m = g.random_range(1..=12);
        let c = random_mat(&mut g, m, n);
        let rank = g.random_range(1..=n);
        let p = random_psd(&mut g, n, rank);
        let q = random_hpd(&mut g, n, 1e-3);
        let r = random_hpd(&mut g, m, 0.05);
        let cert = convergence_certificate(c.as_ref(), p.as_ref(), q.as_ref(), r.as_ref()).unwrap();
        assert!(cert.weighted_norm <= 1.0 + 1e-10);
        assert!(cert.spectral_radius <= 1.0 + 1e-10);
        assert!(cert.weighted_norm > 0.0);
    }
}

#[test]
fn certificate_spectral_norm_bounded_for_isotropic_noise() {
    let mut g = rng(24);
    for _ in 0..100 {
        let n = g.random_range(1..=12);
        let m = g.random_range(1..=12);
        let c = random_mat(&mut g, m, n);
        let p = random_psd(&mut g, n, 2);
        let q = scaled_identity(n, 1e-4);
        let r = scaled_identity(m, g.random_range(1e-3..1.0));
        let cert = convergence_certificate(c.as_ref(), p.as_ref(), q.as_ref(), r.as_ref()).unwrap();
        assert!(cert.spectral_norm <= 1.0 + 1e-10);
    }
}

#[test]
fn loewner_ordering_of_sums_and_inverses() {
    let mut g = rng(25);
    for _ in 0..100 {
        let n = g.random_range(1..=12);
        let r = random_hpd(&mut g, n, 0.1);
        let rank = g.random_range(1..=n);
        let x = random_psd(&mut g, n, rank);
        let sum = &r + &x;
        assert!(psd_order(sum.as_ref(), r.as_ref(), 1e-10).unwrap());
        let r_inv = hpd_inverse(r.as_ref(), "R").unwrap();
        let sum_inv = hpd_inverse(sum.as_ref(), "R+X").unwrap();
        // scale the tolerance with the conditioning of the inverses
        let tol = 1e-10 * phase_kalman::linalg::max_abs(r_inv.as_ref()).max(1.0);
        assert!(psd_order(r_inv.as_ref(), sum_inv.as_ref(), tol).unwrap());
    }
}

#[test]
fn covariance_decays_like_inverse_fisher_information() {
    let mut g = rng(26);
    let (n, m) = (4, 7);
    let c = random_mat(&mut g, m, n);
    let r = random_hpd(&mut g, m, 0.3);
    let model = LinearModel::random_walk(Mat::zeros(n, n));
    let obs = ObservationModel { c: c.clone(), r: r.clone() };
    let mut state = FilterState {
        x: Col::zeros(n),
        p: identity(n),
    };
    let y = Col::<c64>::zeros(m);
    for _ in 0..1000 {
        let prior = predict(&state, &model).unwrap();
        state = update_information(&prior, &obs, y.as_ref()).unwrap();
    }
    let r_inv = hpd_inverse(r.as_ref(), "R").unwrap();
    let fisher = c.adjoint() * &r_inv * &c;
    let mut fisher = fisher.to_owned();
    phase_kalman::linalg::hermitize(&mut fisher);
    let limit = hpd_inverse(fisher.as_ref(), "CᴴR⁻¹C").unwrap();
    let scaled = Scale(c64::new(1000.0, 0.0)) * &state.p;
    let rel = phase_kalman::linalg::spectral_norm((&scaled - &limit).as_ref()).unwrap()
        / phase_kalman::linalg::spectral_norm(limit.as_ref()).unwrap();
    assert!(rel <= 0.05, "relative deviation {rel}");
}

/// `sqrt(vᴴR⁻¹v)`.
fn weighted(r: &Mat<c64>, v: &Col<c64>) -> f64 {
    let w = hpd_solve(r.as_ref(), v.as_mat(), "R").unwrap();
    (v.adjoint() * w.col(0)).re.max(0.0).sqrt()
}

#[test]
fn one_step_shrinks_the_weighted_residual() {
    let mut g = rng(27);
    for _ in 0..100 {
        let n = g.random_range(1..=12);
        let m = g.random_range(1..=12);
        let c = random_mat(&mut g, m, n);
        let r = random_hpd(&mut g, m, 0.05);
        let state = FilterState {
            x: random_col(&mut g, n),
            p: random_psd(&mut g, n, n),
        };
        let model = LinearModel::random_walk(random_hpd(&mut g, n, 1e-3));
        let y = random_col(&mut g, m);
        let prior = predict(&state, &model).unwrap();
        let obs = ObservationModel { c: c.clone(), r: r.clone() };
        let post = update_gain(&prior, &obs, y.as_ref()).unwrap().state;
        let before = &c * &state.x - &y;
        let after = &c * &post.x - &y;
        assert!(weighted(&r, &after) <= weighted(&r, &before) * (1.0 + 1e-10) + 1e-12);
    }
}
