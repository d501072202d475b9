//! Figures of merit for single-mode Gaussian states: coherent-state fidelity,
//! purity, Wigner function, squeezing levels, phase-estimation Fisher
//! information and the resulting bit rate, plus moment-based tomography on
//! simulated quadrature samples.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{GaussianState, Result, StateError, PHYSICAL_TOL, VACUUM_VARIANCE};

fn single_mode(state: &GaussianState) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    if state.mode_count() != 1 {
        return Err(StateError::InvalidArgument(format!(
            "expected a single-mode state, got {} modes",
            state.mode_count()
        )));
    }
    let m = state.mean();
    let c = state.cov();
    Ok((
        Vector2::new(m[0], m[1]),
        Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]),
    ))
}

/// Fidelity between a pure coherent state with quadrature means `alpha_mean`
/// and a single-mode Gaussian state:
/// `F = exp(−½ δᵀΣ⁻¹δ) / (2√det Σ)` with `Σ = σ_out + 0.25·I`.
pub fn fidelity_coherent(out: &GaussianState, alpha_mean: [f64; 2]) -> Result<f64> {
    let (mean, cov) = single_mode(out)?;
    out.check_physical(PHYSICAL_TOL)?;
    let sigma = cov + Matrix2::identity() * VACUUM_VARIANCE;
    let inv = sigma
        .try_inverse()
        .ok_or_else(|| StateError::InvalidArgument("singular overlap matrix".into()))?;
    let delta = mean - Vector2::new(alpha_mean[0], alpha_mean[1]);
    let quad = delta.dot(&(inv * delta));
    Ok((-0.5 * quad).exp() / (2.0 * sigma.determinant().sqrt()))
}

/// `Tr ρ² = 1 / (4√det σ)`.
pub fn purity(state: &GaussianState) -> Result<f64> {
    let (_, cov) = single_mode(state)?;
    state.check_physical(PHYSICAL_TOL)?;
    Ok(1.0 / (4.0 * cov.determinant().sqrt()))
}

/// Squeezing and antisqueezing of one mode relative to vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingReport {
    /// `−10·log₁₀(σ²_min / 0.25)`; positive below vacuum.
    pub squeezing_db: f64,
    /// `10·log₁₀(σ²_max / 0.25)`.
    pub antisqueezing_db: f64,
    /// Angle of the antisqueezed axis from the p-axis in `[0, π)`; `None`
    /// when the noise ellipse is a circle.
    pub angle: Option<f64>,
}

pub fn squeezing_db(state: &GaussianState, mode: &str) -> Result<SqueezingReport> {
    let local = state.partial_trace(&[mode])?;
    let (_, cov) = single_mode(&local)?;
    let eig = SymmetricEigen::new(cov);
    let (imin, imax) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let vmin = eig.eigenvalues[imin];
    let vmax = eig.eigenvalues[imax];
    if vmin <= 0.0 {
        return Err(StateError::NonPhysical(vmin));
    }
    let angle = if (vmax - vmin) <= 1e-12 * vmax {
        None
    } else {
        let u = eig.eigenvectors.column(imax);
        // u = (sin γ, cos γ)
        Some(u[0].atan2(u[1]).rem_euclid(PI))
    };
    Ok(SqueezingReport {
        squeezing_db: -10.0 * (vmin / VACUUM_VARIANCE).log10(),
        antisqueezing_db: 10.0 * (vmax / VACUUM_VARIANCE).log10(),
        angle,
    })
}

/// Quantum Fisher information for phase estimation on a displaced squeezed
/// thermal state:
/// `F_Q = 4μ·n_d·(λcos²φ + λ⁻¹sin²φ) + (1−λ²)² / ((1+μ²)·λ²)`.
pub fn qfi_phase(lambda: f64, phi: f64, mu: f64, n_d: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(StateError::InvalidArgument(format!(
            "squeezed variance ratio must be positive, got {lambda}"
        )));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(StateError::InvalidArgument(format!(
            "purity must lie in (0, 1], got {mu}"
        )));
    }
    if n_d.is_nan() || n_d < 0.0 {
        return Err(StateError::InvalidArgument(format!(
            "displacement photons must be >= 0, got {n_d}"
        )));
    }
    let (s, c) = phi.sin_cos();
    let displacement = 4.0 * mu * n_d * (lambda * c * c + s * s / lambda);
    let squeezing = (1.0 - lambda * lambda).powi(2) / ((1.0 + mu * mu) * lambda * lambda);
    Ok(displacement + squeezing)
}

/// Parameters of a single-mode state entering the phase-estimation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimationSummary {
    /// `√(σ²_min/σ²_max)`, which equals `e^{−2r}` for (thermal) squeezed states.
    pub lambda: f64,
    /// Angle between the displacement direction and the squeezed axis.
    pub phi: f64,
    pub mu: f64,
    pub n_d: f64,
    pub fisher: f64,
    /// Cramér–Rao bound on the phase variance, `1/F_Q`.
    pub sigma2: f64,
}

impl PhaseEstimationSummary {
    /// Extracts `λ`, `φ`, `μ` and `n_d` from a single-mode state. With zero
    /// displacement, `φ` is measured from the q-axis.
    pub fn from_state(state: &GaussianState) -> Result<Self> {
        let (mean, cov) = single_mode(state)?;
        let mu = purity(state)?;
        let eig = SymmetricEigen::new(cov);
        let (imin, imax) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let lambda = (eig.eigenvalues[imin] / eig.eigenvalues[imax]).sqrt();
        let squeezed = eig.eigenvectors.column(imin);
        let n_d = mean.norm_squared();
        let phi = if lambda >= 1.0 - 1e-12 {
            0.0
        } else {
            let dir = if n_d > 0.0 {
                mean / mean.norm()
            } else {
                Vector2::new(1.0, 0.0)
            };
            dir.dot(&squeezed).abs().clamp(0.0, 1.0).acos()
        };
        let fisher = qfi_phase(lambda, phi, mu, n_d)?;
        Ok(Self {
            lambda,
            phi,
            mu,
            n_d,
            fisher,
            sigma2: 1.0 / fisher,
        })
    }
}

/// Shannon–Hartley bit rate `Δf·log₂(1 + Δθ²·F_Q)` in bits/s, using the
/// Cramér–Rao bound `σ² = 1/F_Q` for the phase noise.
pub fn bitrate(delta_f: f64, fisher: f64, delta_theta: f64) -> Result<f64> {
    if !(delta_f > 0.0 && delta_f.is_finite()) {
        return Err(StateError::InvalidArgument(format!(
            "bandwidth must be positive, got {delta_f}"
        )));
    }
    if fisher.is_nan() || fisher < 0.0 {
        return Err(StateError::InvalidArgument(format!(
            "Fisher information must be >= 0, got {fisher}"
        )));
    }
    Ok(delta_f * (delta_theta * delta_theta * fisher).ln_1p() / std::f64::consts::LN_2)
}

/// Uniform (q, p) lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub q_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
}

impl GridSpec {
    /// Square window of `±n_sigma` standard deviations of the widest
    /// quadrature around the state mean.
    pub fn around(state: &GaussianState, n_sigma: f64, points: usize) -> Result<Self> {
        let (mean, cov) = single_mode(state)?;
        let eig = SymmetricEigen::new(cov);
        let half = n_sigma * eig.eigenvalues.max().sqrt();
        Ok(Self {
            q_min: mean[0] - half,
            q_max: mean[0] + half,
            q_points: points,
            p_min: mean[1] - half,
            p_max: mean[1] + half,
            p_points: points,
        })
    }

    fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![min];
        }
        (0..n)
            .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Wigner function sampled on a grid; `values[iq * p.len() + ip]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl WignerGrid {
    pub fn at(&self, iq: usize, ip: usize) -> f64 {
        self.values[iq * self.p.len() + ip]
    }

    /// Trapezoidal integral over the grid.
    pub fn integrate(&self) -> f64 {
        let w = |axis: &[f64], i: usize| -> f64 {
            if axis.len() < 2 {
                return 1.0;
            }
            let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
            if i == 0 || i == axis.len() - 1 {
                0.5 * h
            } else {
                h
            }
        };
        let mut total = 0.0;
        for iq in 0..self.q.len() {
            for ip in 0..self.p.len() {
                total += w(&self.q, iq) * w(&self.p, ip) * self.at(iq, ip);
            }
        }
        total
    }

    /// Grid point with the largest value.
    pub fn peak(&self) -> (f64, f64) {
        let (k, _) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty grid");
        let np = self.p.len();
        (self.q[k / np], self.p[k % np])
    }

    /// CSV with `#` metadata lines followed by a `q,p,W` table.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        extra: &[(String, String)],
    ) -> std::io::Result<()> {
        writeln!(out, "# wigner function of a single-mode gaussian state")?;
        writeln!(out, "# convention: a = q + i p, vacuum variance 0.25")?;
        writeln!(out, "# mean_q={} mean_p={}", self.mean[0], self.mean[1])?;
        writeln!(
            out,
            "# cov_qq={} cov_qp={} cov_pp={}",
            self.cov[0][0], self.cov[0][1], self.cov[1][1]
        )?;
        for (k, v) in extra {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "q,p,W")?;
        for (iq, q) in self.q.iter().enumerate() {
            for (ip, p) in self.p.iter().enumerate() {
                writeln!(out, "{q},{p},{}", self.at(iq, ip))?;
            }
        }
        Ok(())
    }
}

/// `W(x) = exp(−½(x−x̄)ᵀσ⁻¹(x−x̄)) / (2π√det σ)` on the requested lattice.
pub fn wigner(state: &GaussianState, grid: &GridSpec) -> Result<WignerGrid> {
    let (mean, cov) = single_mode(state)?;
    if grid.q_points == 0 || grid.p_points == 0 {
        return Err(StateError::InvalidArgument("empty Wigner grid".into()));
    }
    let det = cov.determinant();
    let inv = match cov.try_inverse() {
        Some(inv) if det > 0.0 => inv,
        _ => {
            return Err(StateError::InvalidArgument(
                "singular covariance, Wigner function undefined".into(),
            ))
        }
    };
    let norm = 1.0 / (2.0 * PI * det.sqrt());
    let q = GridSpec::axis(grid.q_min, grid.q_max, grid.q_points);
    let p = GridSpec::axis(grid.p_min, grid.p_max, grid.p_points);
    let mut values = Vec::with_capacity(q.len() * p.len());
    for &qi in &q {
        for &pi in &p {
            let x = Vector2::new(qi, pi) - mean;
            values.push(norm * (-0.5 * x.dot(&(inv * x))).exp());
        }
    }
    Ok(WignerGrid {
        q,
        p,
        values,
        mean: [mean[0], mean[1]],
        cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
    })
}

/// Draws samples `start..end` of the seeded quadrature stream. Each sample
/// consumes four 32-bit words of a ChaCha8 stream, so any sub-range can be
/// generated independently and concatenated.
pub fn sample_range(
    state: &GaussianState,
    range: std::ops::Range<usize>,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    let (mean, cov) = single_mode(state)?;
    let chol = cov
        .cholesky()
        .ok_or_else(|| StateError::InvalidArgument("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(4 * range.start as u128);
    let unit = |bits: u64| (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut out = Vec::with_capacity(range.len());
    for _ in range {
        // Box–Muller with u1 in (0, 1]
        let u1 = 1.0 - unit(rng.next_u64());
        let u2 = unit(rng.next_u64());
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        let z = Vector2::new(radius * c, radius * s);
        let x = mean + l * z;
        out.push([x[0], x[1]]);
    }
    Ok(out)
}

/// `n` i.i.d. draws from the state's quadrature distribution.
pub fn sample_quadratures(state: &GaussianState, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(StateError::InvalidArgument(
            "sample count must be > 0".into(),
        ));
    }
    sample_range(state, 0..n, seed)
}

/// First and second moments estimated from quadrature samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub samples: usize,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub mean_se: [f64; 2],
    pub cov_se: [[f64; 2]; 2],
}

impl MomentEstimate {
    pub fn to_state(&self, label: &str) -> Result<GaussianState> {
        GaussianState::from_moments(
            [label],
            DVector::from_row_slice(&self.mean),
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    self.cov[0][0],
                    self.cov[0][1],
                    self.cov[1][0],
                    self.cov[1][1],
                ],
            ),
        )
    }
}

/// Unbiased sample mean and covariance with normal-theory standard errors.
pub fn reconstruct_moments(samples: &[[f64; 2]]) -> Result<MomentEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(StateError::InvalidArgument(format!(
            "need at least 2 samples for a covariance estimate, got {n}"
        )));
    }
    let nf = n as f64;
    let mut mean = [0.0; 2];
    for s in samples {
        mean[0] += s[0];
        mean[1] += s[1];
    }
    mean[0] /= nf;
    mean[1] /= nf;
    let mut cov = [[0.0; 2]; 2];
    for s in samples {
        let d = [s[0] - mean[0], s[1] - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= nf - 1.0;
        }
    }
    cov[1][0] = cov[0][1];
    let mean_se = [(cov[0][0] / nf).sqrt(), (cov[1][1] / nf).sqrt()];
    let mut cov_se = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            cov_se[i][j] = ((cov[i][i] * cov[j][j] + cov[i][j] * cov[i][j]) / (nf - 1.0)).sqrt();
        }
    }
    Ok(MomentEstimate {
        samples: n,
        mean,
        cov,
        mean_se,
        cov_se,
    })
}
