//! Multimode Gaussian states and the affine channels acting on them.
//!
//! Quadrature convention used throughout the crate: `a = q + i p`, so the
//! vacuum variance of each quadrature is 0.25 and a displaced state with mean
//! `(q̄, p̄)` carries `n_d = q̄² + p̄²` displacement photons. Vectors are laid
//! out as `(q₁, p₁, …, q_M, p_M)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quadrature variance of the vacuum.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Absolute tolerance for symmetry and symplectic-form checks.
pub const MATRIX_TOL: f64 = 1e-10;

/// Slack allowed below 0.25 for the smallest symplectic eigenvalue.
pub const PHYSICAL_TOL: f64 = 1e-9;

const PLANCK: f64 = 6.626_070_15e-34;
const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("duplicate mode `{0}`")]
    DuplicateMode(String),
    #[error("covariance is not symmetric (max deviation {0:.3e})")]
    Asymmetric(f64),
    #[error("state violates the uncertainty relation: smallest symplectic eigenvalue {0:.6e}")]
    NonPhysical(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, StateError>;

/// Converts a power ratio in decibels to a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Quadrature means `(√n·cos θ, √n·sin θ)` of a displacement carrying
/// `photons` photons at angle `theta` (radians).
pub fn polar_displacement(photons: f64, theta: f64) -> [f64; 2] {
    let amp = photons.sqrt();
    let (s, c) = theta.sin_cos();
    [amp * c, amp * s]
}

/// Mean thermal occupation of a bosonic mode at frequency `freq` (Hz) and
/// temperature `temp` (K).
pub fn bose_occupation(temp: f64, freq: f64) -> f64 {
    if temp <= 0.0 {
        return 0.0;
    }
    1.0 / (PLANCK * freq / (BOLTZMANN * temp)).exp_m1()
}

/// Inverse of [`bose_occupation`]: the temperature at which a mode at `freq`
/// holds `photons` thermal photons.
pub fn bose_temperature(photons: f64, freq: f64) -> f64 {
    if photons <= 0.0 {
        return 0.0;
    }
    PLANCK * freq / (BOLTZMANN * (1.0 / photons).ln_1p())
}

/// Noise sources of the teleportation chain.
///
/// Amplifier noise follows `n(G) = chi1·(G − 1)^chi2` photons referred to the
/// amplifier input, with `G` the linear degenerate gain. The electromagnetic
/// environment is a thermal bath at `temperature` seen at `frequency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub chi1: f64,
    pub chi2: f64,
    /// Kelvin.
    pub temperature: f64,
    /// Hz.
    pub frequency: f64,
}

impl NoiseModel {
    pub const CARRIER_FREQUENCY: f64 = 5.435e9;

    pub fn noiseless() -> Self {
        Self {
            chi1: 0.0,
            chi2: 1.0,
            temperature: 0.0,
            frequency: Self::CARRIER_FREQUENCY,
        }
    }

    /// Sets the bath temperature so that the environment holds `photons`
    /// thermal photons at the model frequency.
    pub fn with_env_photons(mut self, photons: f64) -> Self {
        self.temperature = bose_temperature(photons, self.frequency);
        self
    }

    /// Input-referred amplifier noise photons at linear gain `gain`.
    /// No amplification means no added noise.
    pub fn amplifier_photons(&self, gain: f64) -> f64 {
        if gain <= 1.0 || self.chi1 == 0.0 {
            return 0.0;
        }
        self.chi1 * (gain - 1.0).powf(self.chi2)
    }

    pub fn env_photons(&self) -> f64 {
        bose_occupation(self.temperature, self.frequency)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.chi1, self.chi2, self.temperature, self.frequency]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(StateError::InvalidArgument(
                "noise model contains a non-finite value".into(),
            ));
        }
        if self.chi1 < 0.0 || self.temperature < 0.0 || self.frequency <= 0.0 {
            return Err(StateError::InvalidArgument(format!(
                "noise model out of range: chi1={}, T={}, f={}",
                self.chi1, self.temperature, self.frequency
            )));
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    /// Moderate measurement-amplifier noise, `n(21 dB) ≈ 0.1`, and an
    /// environment holding 0.025 thermal photons.
    fn default() -> Self {
        Self {
            chi1: 0.009,
            chi2: 0.5,
            temperature: 0.0,
            frequency: Self::CARRIER_FREQUENCY,
        }
        .with_env_photons(0.025)
    }
}

/// Phase convention of a two-port beamsplitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeamsplitterConvention {
    /// `(√t·a + √(1−t)·b, √(1−t)·a − √t·b)`.
    #[default]
    Real,
    /// `(√t·a + i√(1−t)·b, i√(1−t)·a + √t·b)`.
    Symmetric,
}

/// Affine Gaussian channel on `k` modes: `σ → XσXᵀ + Y`, `x̄ → X·x̄ + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl GaussianChannel {
    pub fn identity(modes: usize) -> Self {
        let n = 2 * modes;
        Self {
            x: DMatrix::identity(n, n),
            y: DMatrix::zeros(n, n),
            d: DVector::zeros(n),
        }
    }

    pub fn mode_count(&self) -> usize {
        self.x.nrows() / 2
    }

    pub fn displacement(dq: f64, dp: f64) -> Self {
        let mut ch = Self::identity(1);
        ch.d[0] = dq;
        ch.d[1] = dp;
        ch
    }

    /// Single-mode squeezer. `gamma` is the angle of the antisqueezed axis
    /// measured from the p-axis; `squeezing_db` sets the squeezed variance of
    /// a vacuum input to `0.25·10^(−S/10)`.
    pub fn squeezer(squeezing_db: f64, gamma: f64) -> Self {
        let r = squeezing_db * std::f64::consts::LN_10 / 20.0;
        Self {
            x: axis_scaling(r.exp(), gamma),
            y: DMatrix::zeros(2, 2),
            d: DVector::zeros(2),
        }
    }

    pub fn beamsplitter(transmissivity: f64, convention: BeamsplitterConvention) -> Self {
        let c = transmissivity.sqrt();
        let s = (1.0 - transmissivity).sqrt();
        let x = match convention {
            BeamsplitterConvention::Real => DMatrix::from_row_slice(
                4,
                4,
                &[
                    c, 0.0, s, 0.0, //
                    0.0, c, 0.0, s, //
                    s, 0.0, -c, 0.0, //
                    0.0, s, 0.0, -c,
                ],
            ),
            BeamsplitterConvention::Symmetric => DMatrix::from_row_slice(
                4,
                4,
                &[
                    c, 0.0, 0.0, -s, //
                    0.0, c, s, 0.0, //
                    0.0, -s, c, 0.0, //
                    s, 0.0, 0.0, c,
                ],
            ),
        };
        Self {
            x,
            y: DMatrix::zeros(4, 4),
            d: DVector::zeros(4),
        }
    }

    /// Pure-loss beamsplitter coupling to a thermal bath with `env_photons`.
    pub fn attenuator(loss_db: f64, env_photons: f64) -> Self {
        let eta = db_to_linear(-loss_db);
        let noise = (1.0 - eta) * VACUUM_VARIANCE * (1.0 + 2.0 * env_photons);
        Self {
            x: DMatrix::identity(2, 2) * eta.sqrt(),
            y: DMatrix::identity(2, 2) * noise,
            d: DVector::zeros(2),
        }
    }

    /// Degenerate (phase-sensitive) amplifier with linear gain `10^(G/10)` on
    /// the quadrature at `angle` from the p-axis and `1/G` on the orthogonal
    /// one. `noise_photons` are referred to the input: the added noise is
    /// `X·(n/2)·I·Xᵀ`.
    pub fn phase_sensitive_amp(gain_db: f64, angle: f64, noise_photons: f64) -> Self {
        let x = axis_scaling(db_to_linear(gain_db).sqrt(), angle);
        let y = &x * x.transpose() * (2.0 * noise_photons * VACUUM_VARIANCE);
        Self {
            x,
            y,
            d: DVector::zeros(2),
        }
    }

    /// `‖XΩXᵀ − Ω‖_max`.
    pub fn symplectic_defect(&self) -> f64 {
        let omega = symplectic_form(self.mode_count());
        (&self.x * &omega * self.x.transpose() - omega).amax()
    }

    pub fn is_symplectic(&self, tol: f64) -> bool {
        self.symplectic_defect() < tol
    }

    /// Checks `Y = Yᵀ` and `Y ⪰ 0` within `tol`.
    pub fn noise_is_valid(&self, tol: f64) -> bool {
        if (&self.y - self.y.transpose()).amax() > tol {
            return false;
        }
        let eig = SymmetricEigen::new(self.y.clone());
        eig.eigenvalues.iter().all(|&v| v >= -tol)
    }
}

/// 2×2 matrix scaling the axis at `angle` from the p-axis by `k` and the
/// orthogonal axis by `1/k`.
fn axis_scaling(k: f64, angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    // stretched axis u = (sin, cos), compressed axis v = (cos, −sin)
    let inv = 1.0 / k;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            k * s * s + inv * c * c,
            (k - inv) * s * c,
            (k - inv) * s * c,
            k * c * c + inv * s * s,
        ],
    )
}

/// Block-diagonal symplectic form with `[[0, 1], [−1, 0]]` per mode.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues of a covariance matrix, ascending, one per mode.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Vec<f64> {
    let modes = cov.nrows() / 2;
    let eig = SymmetricEigen::new(cov.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root =
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let omega = symplectic_form(modes);
    // √σ Ω √σ is antisymmetric with eigenvalues ±iν_k, so its singular
    // values are the ν_k, each twice
    let a = &root * omega * &root;
    let mut nu: Vec<f64> = a.singular_values().iter().copied().collect();
    nu.sort_by(f64::total_cmp);
    nu.into_iter().step_by(2).collect()
}

/// Mean vector and covariance matrix over labeled modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    modes: Vec<String>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Product vacuum over the given labels.
    pub fn vacuum<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let modes: Vec<String> = labels.into_iter().map(Into::into).collect();
        if modes.is_empty() {
            return Err(StateError::InvalidArgument(
                "a state needs at least one mode".into(),
            ));
        }
        check_distinct(&modes)?;
        let n = 2 * modes.len();
        Ok(Self {
            modes,
            mean: DVector::zeros(n),
            cov: DMatrix::identity(n, n) * VACUUM_VARIANCE,
        })
    }

    /// Builds a state from raw moments. Checks shape and symmetry only; use
    /// [`GaussianState::check_physical`] for the uncertainty relation.
    pub fn from_moments<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let modes: Vec<String> = labels.into_iter().map(Into::into).collect();
        if modes.is_empty() {
            return Err(StateError::InvalidArgument(
                "a state needs at least one mode".into(),
            ));
        }
        check_distinct(&modes)?;
        let n = 2 * modes.len();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(StateError::Dimension(format!(
                "{} modes need a {n}-vector and {n}x{n} covariance, got {} and {}x{}",
                modes.len(),
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(StateError::InvalidArgument("non-finite moment".into()));
        }
        let scale = cov.amax().max(1.0);
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(StateError::Asymmetric(asym));
        }
        Ok(Self { modes, mean, cov })
    }

    /// Coherent state with the given quadrature means on a single mode.
    pub fn coherent(label: impl Into<String>, q: f64, p: f64) -> Result<Self> {
        Self::vacuum([label])?.displace_index(0, q, p)
    }

    pub fn modes(&self) -> &[String] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m == label)
            .ok_or_else(|| StateError::UnknownMode(label.to_string()))
    }

    /// Mean `(q̄, p̄)` of one mode.
    pub fn mode_mean(&self, label: &str) -> Result<[f64; 2]> {
        let k = self.index_of(label)?;
        Ok([self.mean[2 * k], self.mean[2 * k + 1]])
    }

    /// Displacement photon number `q̄² + p̄²` of one mode.
    pub fn displacement_photons(&self, label: &str) -> Result<f64> {
        let [q, p] = self.mode_mean(label)?;
        Ok(q * q + p * p)
    }

    pub fn displace(&self, mode: &str, dq: f64, dp: f64) -> Result<Self> {
        self.apply(&GaussianChannel::displacement(dq, dp), &[mode])
    }

    fn displace_index(mut self, k: usize, dq: f64, dp: f64) -> Result<Self> {
        self.mean[2 * k] += dq;
        self.mean[2 * k + 1] += dp;
        Ok(self)
    }

    pub fn squeeze(&self, mode: &str, squeezing_db: f64, gamma: f64) -> Result<Self> {
        if !squeezing_db.is_finite() || !gamma.is_finite() {
            return Err(StateError::InvalidArgument(format!(
                "squeezing must be finite, got S={squeezing_db} dB, angle={gamma}"
            )));
        }
        self.apply(&GaussianChannel::squeezer(squeezing_db, gamma), &[mode])
    }

    pub fn beamsplitter(
        &self,
        mode_a: &str,
        mode_b: &str,
        transmissivity: f64,
        convention: BeamsplitterConvention,
    ) -> Result<Self> {
        if mode_a == mode_b {
            return Err(StateError::InvalidArgument(format!(
                "beamsplitter needs two distinct modes, got `{mode_a}` twice"
            )));
        }
        if !(0.0..=1.0).contains(&transmissivity) {
            return Err(StateError::InvalidArgument(format!(
                "transmissivity {transmissivity} outside [0, 1]"
            )));
        }
        self.apply(
            &GaussianChannel::beamsplitter(transmissivity, convention),
            &[mode_a, mode_b],
        )
    }

    pub fn loss(&self, mode: &str, loss_db: f64, env_photons: f64) -> Result<Self> {
        if loss_db.is_nan() || loss_db < 0.0 {
            return Err(StateError::InvalidArgument(format!(
                "loss must be >= 0 dB, got {loss_db}"
            )));
        }
        if !(env_photons >= 0.0 && env_photons.is_finite()) {
            return Err(StateError::InvalidArgument(format!(
                "environment photons must be finite and >= 0, got {env_photons}"
            )));
        }
        self.apply(&GaussianChannel::attenuator(loss_db, env_photons), &[mode])
    }

    /// Phase-sensitive amplification with noise taken from `noise` at the
    /// requested gain. `angle = 0` amplifies p, `angle = π/2` amplifies q.
    pub fn phase_sensitive_amp(
        &self,
        mode: &str,
        gain_db: f64,
        angle: f64,
        noise: &NoiseModel,
    ) -> Result<Self> {
        if gain_db.is_nan() || gain_db < 0.0 || gain_db.is_infinite() {
            return Err(StateError::InvalidArgument(format!(
                "amplifier gain must be finite and >= 0 dB, got {gain_db}"
            )));
        }
        let n = noise.amplifier_photons(db_to_linear(gain_db));
        self.apply(
            &GaussianChannel::phase_sensitive_amp(gain_db, angle, n),
            &[mode],
        )
    }

    /// Reduced state on `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        if keep.is_empty() {
            return Err(StateError::InvalidArgument(
                "partial trace must keep at least one mode".into(),
            ));
        }
        let idx = self.quadrature_indices(keep)?;
        let n = idx.len();
        let mean = DVector::from_fn(n, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(n, n, |i, j| self.cov[(idx[i], idx[j])]);
        Ok(Self {
            modes: keep.iter().map(|s| s.to_string()).collect(),
            mean,
            cov,
        })
    }

    /// Applies a channel acting on `targets` (in channel order); the other
    /// modes are untouched.
    pub fn apply(&self, channel: &GaussianChannel, targets: &[&str]) -> Result<Self> {
        if channel.mode_count() != targets.len() {
            return Err(StateError::Dimension(format!(
                "channel acts on {} modes but {} were given",
                channel.mode_count(),
                targets.len()
            )));
        }
        let idx = self.quadrature_indices(targets)?;
        let k = idx.len();
        let n = self.cov.nrows();

        let mut mean = self.mean.clone();
        let local = DVector::from_fn(k, |i, _| self.mean[idx[i]]);
        let moved = &channel.x * local + &channel.d;
        for (i, &r) in idx.iter().enumerate() {
            mean[r] = moved[i];
        }

        // rows: X·σ[I, :]
        let mut cov = self.cov.clone();
        let rows = DMatrix::from_fn(k, n, |i, j| self.cov[(idx[i], j)]);
        let rows = &channel.x * rows;
        for (i, &r) in idx.iter().enumerate() {
            for j in 0..n {
                cov[(r, j)] = rows[(i, j)];
            }
        }
        // columns: σ'[:, I]·Xᵀ
        let cols = DMatrix::from_fn(n, k, |i, j| cov[(i, idx[j])]);
        let cols = cols * channel.x.transpose();
        for (j, &c) in idx.iter().enumerate() {
            for i in 0..n {
                cov[(i, c)] = cols[(i, j)];
            }
        }
        for (i, &r) in idx.iter().enumerate() {
            for (j, &c) in idx.iter().enumerate() {
                cov[(r, c)] += channel.y[(i, j)];
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self {
            modes: self.modes.clone(),
            mean,
            cov,
        })
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.cov)
    }

    /// Errors unless every symplectic eigenvalue is at least `0.25 − tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let nu_min = self
            .symplectic_eigenvalues()
            .first()
            .copied()
            .unwrap_or(f64::NAN);
        if nu_min.is_nan() || nu_min < VACUUM_VARIANCE - tol {
            return Err(StateError::NonPhysical(nu_min));
        }
        Ok(())
    }

    fn quadrature_indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(2 * labels.len());
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(StateError::DuplicateMode(label.to_string()));
            }
            let k = self.index_of(label)?;
            idx.push(2 * k);
            idx.push(2 * k + 1);
        }
        Ok(idx)
    }
}

fn check_distinct(modes: &[String]) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].contains(m) {
            return Err(StateError::DuplicateMode(m.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vacuum_has_quarter_variance() {
        let v = GaussianState::vacuum(["a"]).unwrap();
        assert_eq!(v.mean().as_slice(), &[0.0, 0.0]);
        assert_eq!(v.cov(), &(DMatrix::identity(2, 2) * 0.25));
        let v3 = GaussianState::vacuum(["a", "b", "c"]).unwrap();
        assert_eq!(v3.cov(), &(DMatrix::identity(6, 6) * 0.25));
        assert!(matches!(
            GaussianState::vacuum(Vec::<String>::new()),
            Err(StateError::InvalidArgument(_))
        ));
        assert!(matches!(
            GaussianState::vacuum(["a", "a"]),
            Err(StateError::DuplicateMode(_))
        ));
    }

    #[test]
    fn trace_of_product_vacuum_is_vacuum() {
        let v = GaussianState::vacuum(["a", "b"]).unwrap();
        let a = v.partial_trace(&["a"]).unwrap();
        assert_eq!(a, GaussianState::vacuum(["a"]).unwrap());
        assert_eq!(v.partial_trace(&["a", "b"]).unwrap(), v);
        assert!(v.partial_trace(&[]).is_err());
        assert!(matches!(
            v.partial_trace(&["z"]),
            Err(StateError::UnknownMode(_))
        ));
    }

    #[test]
    fn displacement_photon_number() {
        let v = GaussianState::vacuum(["a"]).unwrap();
        let d = v.displace("a", 1.1f64.sqrt(), 0.0).unwrap();
        assert!(close(d.displacement_photons("a").unwrap(), 1.1, 1e-15));
        assert_eq!(d.cov(), v.cov());
        for theta in [0.0, 0.4, 2.0, 5.5] {
            let amp = 2.7f64.sqrt();
            let d = v
                .displace("a", amp * f64::cos(theta), amp * f64::sin(theta))
                .unwrap();
            assert!(close(d.displacement_photons("a").unwrap(), 2.7, 1e-14));
        }
        assert_eq!(v.displace("a", 0.0, 0.0).unwrap(), v);
        assert!(matches!(
            v.displace("b", 1.0, 0.0),
            Err(StateError::UnknownMode(_))
        ));
    }

    #[test]
    fn squeezer_orientation() {
        let v = GaussianState::vacuum(["a"]).unwrap();
        // antisqueezed axis on p at gamma = 0
        let s = v.squeeze("a", 6.0, 0.0).unwrap();
        assert!(close(s.cov()[(0, 0)], 0.25 * 10f64.powf(-0.6), 1e-12));
        assert!(close(s.cov()[(1, 1)], 0.25 * 10f64.powf(0.6), 1e-12));
        assert!(close(s.cov()[(0, 0)], 0.0628, 1e-4));
        assert!(close(s.cov()[(1, 1)], 0.9953, 1e-4));
        // antisqueezed axis on q at gamma = π/2
        let s = v.squeeze("a", 6.0, FRAC_PI_2).unwrap();
        assert!(close(s.cov()[(0, 0)], 0.9953, 1e-4));
        assert!(close(s.cov()[(1, 1)], 0.0628, 1e-4));
        assert_eq!(v.squeeze("a", 0.0, 1.3).unwrap().cov(), v.cov());
        assert!(v.squeeze("a", f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn hybrid_of_orthogonal_squeezers_is_two_mode_squeezed() {
        let s = GaussianState::vacuum(["a", "b"])
            .unwrap()
            .squeeze("a", 6.0, FRAC_PI_2)
            .unwrap()
            .squeeze("b", 6.0, 0.0)
            .unwrap()
            .beamsplitter("a", "b", 0.5, BeamsplitterConvention::Real)
            .unwrap();
        let c = s.cov();
        let avg = 0.25 * (10f64.powf(0.6) + 10f64.powf(-0.6)) / 2.0;
        let half_diff = 0.25 * (10f64.powf(0.6) - 10f64.powf(-0.6)) / 2.0;
        for i in 0..4 {
            assert!(close(c[(i, i)], avg, 1e-12));
        }
        assert!(close(avg, 0.529, 1e-3));
        assert!(close(half_diff, 0.466, 1e-3));
        assert!(close(c[(0, 2)].abs(), half_diff, 1e-12));
        assert!(close(c[(1, 3)].abs(), half_diff, 1e-12));
        assert!(close(c[(0, 2)], -c[(1, 3)], 1e-12));
        let local = s.partial_trace(&["b"]).unwrap();
        assert!(close(local.cov()[(0, 1)], 0.0, 1e-12));
        assert!(close(local.cov()[(0, 0)], 0.529, 1e-3));
    }

    #[test]
    fn beamsplitter_edge_cases() {
        let v = GaussianState::vacuum(["a", "b"]).unwrap();
        let c = v
            .displace("a", 0.3, -0.2)
            .unwrap()
            .squeeze("b", 3.0, 0.4)
            .unwrap();
        let same = c
            .beamsplitter("a", "b", 1.0, BeamsplitterConvention::Symmetric)
            .unwrap();
        assert!((same.cov() - c.cov()).amax() < 1e-15);
        assert!((same.mean() - c.mean()).amax() < 1e-15);
        for t in [0.0, 0.2, 0.5, 0.97] {
            for conv in [
                BeamsplitterConvention::Real,
                BeamsplitterConvention::Symmetric,
            ] {
                let out = v.beamsplitter("a", "b", t, conv).unwrap();
                assert!((out.cov() - v.cov()).amax() < 1e-15);
            }
        }
        assert!(v.beamsplitter("a", "a", 0.5, Default::default()).is_err());
        assert!(v.beamsplitter("a", "b", 1.2, Default::default()).is_err());
        assert!(v.beamsplitter("a", "b", -0.1, Default::default()).is_err());
    }

    #[test]
    fn loss_channel_examples() {
        let v = GaussianState::vacuum(["a"]).unwrap();
        for db in [0.0, 0.4, 2.0, 30.0] {
            assert!((v.loss("a", db, 0.0).unwrap().cov() - v.cov()).amax() < 1e-15);
        }
        let c = GaussianState::coherent("a", 1.0, 0.0).unwrap();
        let out = c.loss("a", 2.0, 0.0).unwrap();
        assert!(close(out.mean()[0], 10f64.powf(-0.1), 1e-15));
        assert!(close(out.mean()[0], 0.7943, 1e-4));
        let out = v.loss("a", f64::INFINITY, 0.025).unwrap();
        assert!(close(out.cov()[(0, 0)], 0.25 * 1.05, 1e-15));
        assert!(close(out.cov()[(1, 1)], 0.25 * 1.05, 1e-15));
        assert!(v.loss("a", -0.1, 0.0).is_err());
        assert!(v.loss("a", 1.0, -1.0).is_err());
    }

    #[test]
    fn amplifier_matches_gain_matrix() {
        let g_db = 21.0;
        let g = db_to_linear(g_db);
        let ch = GaussianChannel::phase_sensitive_amp(g_db, 0.0, 0.0);
        assert!(close(ch.x[(0, 0)], 1.0 / g.sqrt(), 1e-12));
        assert!(close(ch.x[(1, 1)], g.sqrt(), 1e-12));
        assert!(close(g.sqrt(), 11.220, 1e-3));
        assert!(ch.is_symplectic(MATRIX_TOL));
        assert!(close(ch.x.determinant(), 1.0, 1e-12));

        let v = GaussianState::vacuum(["m"]).unwrap();
        let out = v
            .phase_sensitive_amp("m", g_db, 0.0, &NoiseModel::noiseless())
            .unwrap();
        assert!(close(out.cov()[(0, 0)], 0.25 / g, 1e-15));
        assert!(close(out.cov()[(1, 1)], 0.25 * g, 1e-10));
        // π/2 amplifies q
        let out = v
            .phase_sensitive_amp("m", g_db, FRAC_PI_2, &NoiseModel::noiseless())
            .unwrap();
        assert!(close(out.cov()[(0, 0)], 0.25 * g, 1e-10));
        let id = v
            .phase_sensitive_amp("m", 0.0, 0.3, &NoiseModel::default())
            .unwrap();
        assert!((id.cov() - v.cov()).amax() < 1e-15);
        assert!(v
            .phase_sensitive_amp("m", -1.0, 0.0, &NoiseModel::noiseless())
            .is_err());
    }

    #[test]
    fn amplifier_noise_is_input_referred() {
        let noise = NoiseModel {
            chi1: 0.2,
            chi2: 1.0,
            ..NoiseModel::noiseless()
        };
        let g = 4.0;
        let n = noise.amplifier_photons(g);
        assert!(close(n, 0.6, 1e-15));
        let v = GaussianState::vacuum(["m"]).unwrap();
        let out = v
            .phase_sensitive_amp("m", linear_to_db(g), 0.0, &noise)
            .unwrap();
        assert!(close(out.cov()[(1, 1)], g * (0.25 + n / 2.0), 1e-12));
        assert!(close(out.cov()[(0, 0)], (0.25 + n / 2.0) / g, 1e-12));
    }

    #[test]
    fn noise_model_environment() {
        let m = NoiseModel::noiseless();
        assert_eq!(m.env_photons(), 0.0);
        let m = NoiseModel::default();
        assert!(close(m.env_photons(), 0.025, 1e-14));
        assert!(close(m.temperature, 0.0702, 1e-3));
        let mut hot = m;
        let mut last = 0.0;
        for t in [0.001, 0.01, 0.05, 0.1, 1.0] {
            hot.temperature = t;
            let n = hot.env_photons();
            assert!(n >= last);
            last = n;
        }
        assert!(close(m.amplifier_photons(db_to_linear(21.0)), 0.1, 1e-3));
        assert_eq!(m.amplifier_photons(1.0), 0.0);
    }

    #[test]
    fn channel_invariants() {
        let lossless = [
            GaussianChannel::squeezer(7.0, 0.3),
            GaussianChannel::beamsplitter(0.3, BeamsplitterConvention::Real),
            GaussianChannel::beamsplitter(0.3, BeamsplitterConvention::Symmetric),
            GaussianChannel::phase_sensitive_amp(25.0, 1.1, 0.0),
            GaussianChannel::displacement(1.0, 2.0),
            GaussianChannel::identity(3),
        ];
        for ch in &lossless {
            assert!(ch.is_symplectic(MATRIX_TOL), "{ch:?}");
            assert!(ch.noise_is_valid(MATRIX_TOL));
        }
        assert!(GaussianChannel::attenuator(3.0, 0.1).noise_is_valid(MATRIX_TOL));
        assert!(GaussianChannel::phase_sensitive_amp(20.0, 0.5, 0.2).noise_is_valid(1e-9));
    }

    #[test]
    fn symplectic_eigenvalues_of_known_states() {
        let th =
            GaussianState::from_moments(["a"], DVector::zeros(2), DMatrix::identity(2, 2) * 0.75)
                .unwrap();
        assert!(close(th.symplectic_eigenvalues()[0], 0.75, 1e-12));
        let sq = GaussianState::vacuum(["a", "b"])
            .unwrap()
            .squeeze("a", 10.0, 0.2)
            .unwrap()
            .beamsplitter("a", "b", 0.5, Default::default())
            .unwrap();
        for nu in sq.symplectic_eigenvalues() {
            assert!(close(nu, 0.25, 1e-9));
        }
        let bad =
            GaussianState::from_moments(["a"], DVector::zeros(2), DMatrix::identity(2, 2) * 0.2)
                .unwrap();
        assert!(matches!(
            bad.check_physical(PHYSICAL_TOL),
            Err(StateError::NonPhysical(_))
        ));
    }

    #[test]
    fn from_moments_rejects_bad_shapes() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.3]);
        assert!(matches!(
            GaussianState::from_moments(["a"], DVector::zeros(2), asym),
            Err(StateError::Asymmetric(_))
        ));
        assert!(matches!(
            GaussianState::from_moments(["a"], DVector::zeros(3), DMatrix::identity(2, 2)),
            Err(StateError::Dimension(_))
        ));
    }
}
