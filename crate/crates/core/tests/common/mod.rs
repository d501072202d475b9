#![allow(dead_code)]

use microtele::gaussian::{GaussianState, NoiseModel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use microtele::teleport::{SegmentLosses, TeleportParams};

pub type CMatrix = DMatrix<Complex64>;

/// Annihilation operator truncated to `dim` Fock levels.
pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Displaced squeezed thermal state `D(α) S(ξ) ρ_th S(ξ)† D(α)†` built in
/// `work_dim` levels and cut to `dim`.
pub fn fock_state(
    n_th: f64,
    xi: Complex64,
    alpha: Complex64,
    dim: usize,
    work_dim: usize,
) -> CMatrix {
    let a = annihilation(work_dim);
    let ad = a.adjoint();
    let mut rho = CMatrix::zeros(work_dim, work_dim);
    for k in 0..work_dim {
        let pk = if n_th == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (n_th / (1.0 + n_th)).powi(k as i32) / (1.0 + n_th)
        };
        rho[(k, k)] = Complex64::new(pk, 0.0);
    }
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let sq_gen = (a2 * xi.conj() - ad2 * xi) * Complex64::new(0.5, 0.0);
    let s = sq_gen.exp();
    let disp_gen = &ad * alpha - &a * alpha.conj();
    let d = disp_gen.exp();
    let u = d * s;
    let full = &u * rho * u.adjoint();
    full.view((0, 0), (dim, dim)).into_owned()
}

fn expect(rho: &CMatrix, op: &CMatrix) -> Complex64 {
    (rho * op).trace()
}

/// Quadrature means and symmetrized covariance of `rho` with
/// `q = (a + a†)/2`, `p = (a − a†)/2i`.
pub fn fock_moments(rho: &CMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let dim = rho.nrows();
    let a = annihilation(dim);
    let ad = a.adjoint();
    let ea = expect(rho, &a);
    let ea2 = expect(rho, &(&a * &a));
    let n = expect(rho, &(&ad * &a)).re;
    let (q, p) = (ea.re, ea.im);
    let vq = 0.25 * (2.0 * ea2.re + 2.0 * n + 1.0) - q * q;
    let vp = 0.25 * (-2.0 * ea2.re + 2.0 * n + 1.0) - p * p;
    let cqp = 0.5 * ea2.im - q * p;
    (
        DVector::from_vec(vec![q, p]),
        DMatrix::from_row_slice(2, 2, &[vq, cqp, cqp, vp]),
    )
}

pub fn mean_photons(rho: &CMatrix) -> f64 {
    let a = annihilation(rho.nrows());
    expect(rho, &(a.adjoint() * &a)).re
}

/// `⟨β|ρ|β⟩` in the truncated basis.
pub fn coherent_overlap(rho: &CMatrix, beta: Complex64) -> f64 {
    let dim = rho.nrows();
    let mut v = DVector::<Complex64>::zeros(dim);
    let mut term = Complex64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    for k in 0..dim {
        v[k] = term;
        term = term * beta / ((k + 1) as f64).sqrt();
    }
    (v.adjoint() * rho * &v)[(0, 0)].re
}

/// Random displaced squeezed thermal state with mean photon number at most
/// `max_photons`, as a Fock matrix and as a Gaussian state. States whose
/// population beyond `dim` levels exceeds 1e-8 are redrawn so the truncated
/// matrix stays a faithful oracle.
pub fn random_fock_state<R: Rng>(
    rng: &mut R,
    dim: usize,
    max_photons: f64,
) -> (CMatrix, GaussianState) {
    loop {
        let n_th = rng.random_range(0.0..0.4);
        let r = rng.random_range(0.0..0.6);
        let xi = Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
        let alpha = Complex64::from_polar(
            rng.random_range(0.0..0.9f64).sqrt(),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let rho = fock_state(n_th, xi, alpha, dim, dim + 40);
        if mean_photons(&rho) > max_photons || 1.0 - rho.trace().re > 1e-8 {
            continue;
        }
        let (mean, cov) = fock_moments(&rho);
        let state = GaussianState::from_moments(["m"], mean, cov).unwrap();
        return (rho, state);
    }
}

/// Random chain parameters within the physically meaningful ranges.
pub fn random_teleport_params<R: Rng>(rng: &mut R) -> TeleportParams {
    let chi2 = rng.random_range(0.2..1.2);
    let noise = NoiseModel {
        chi1: rng.random_range(0.0..0.05),
        chi2,
        ..NoiseModel::default()
    }
    .with_env_photons(rng.random_range(0.0..0.1));
    TeleportParams {
        squeezing_db: rng.random_range(0.0..12.0),
        gain_db: rng.random_range(10.0..30.0),
        coupling_db: rng.random_range(-25.0..-5.0),
        hybrid_loss_db: rng.random_range(0.0..1.0),
        segment_losses: SegmentLosses {
            alice_db: rng.random_range(0.0..2.0),
            feedforward_db: rng.random_range(0.0..2.0),
        },
        noise,
        photons: rng.random_range(0.0..5.0),
        phase: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    }
}
