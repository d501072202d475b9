//! Parameter sweeps of the teleportation chain, fidelity tables on disk, and
//! least-squares fitting of the noise model `(T, chi1, chi2)`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{NoiseModel, StateError};
use crate::teleport::{teleport_coherent, TeleportParams};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("unknown sweep axis `{0}` (expected G_dB, S_dB, n_d or theta_rad)")]
    UnknownAxis(String),
    #[error("axis `{0}` listed twice")]
    DuplicateAxis(String),
    #[error("axis `{0}` has no values")]
    EmptyAxis(String),
    #[error("invalid grid `{0}`: {1}")]
    Grid(String, String),
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}, line {line}: {message}")]
    Row {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}: file contains no records")]
    Empty(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("objective is not finite at {0}")]
    NonFinite(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SweepError>;

/// Sweepable fields of [`TeleportParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Measurement gain, dB.
    GainDb,
    /// Entanglement squeezing, dB.
    SqueezingDb,
    /// Input displacement, photons.
    Photons,
    /// Input displacement angle, radians.
    ThetaRad,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::GainDb => "G_dB",
            Axis::SqueezingDb => "S_dB",
            Axis::Photons => "n_d",
            Axis::ThetaRad => "theta_rad",
        }
    }

    fn set(self, p: &mut TeleportParams, v: f64) {
        match self {
            Axis::GainDb => p.gain_db = v,
            Axis::SqueezingDb => p.squeezing_db = v,
            Axis::Photons => p.photons = v,
            Axis::ThetaRad => p.phase = v,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "G_dB" | "G" => Axis::GainDb,
            "S_dB" | "S" => Axis::SqueezingDb,
            "n_d" | "nd" => Axis::Photons,
            "theta_rad" => Axis::ThetaRad,
            other => return Err(SweepError::UnknownAxis(other.to_string())),
        })
    }
}

/// Inclusive arithmetic grid `start, start+step, …` up to `stop`, tolerant
/// to rounding at the end point.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    let spec = format!("{start}:{stop}:{step}");
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(SweepError::Grid(spec, "values must be finite".into()));
    }
    if step <= 0.0 {
        return Err(SweepError::Grid(spec, "step must be positive".into()));
    }
    if stop < start {
        return Err(SweepError::Grid(spec, "stop is below start".into()));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

/// Parses `a:b:step` or a single value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| SweepError::Grid(spec.to_string(), format!("`{s}` is not a number")))
    };
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, s] => linspace_step(num(a)?, num(b)?, num(s)?),
        _ => Err(SweepError::Grid(
            spec.to_string(),
            "expected `start:stop:step`".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Grids in iteration order; the last axis varies fastest.
    pub axes: Vec<(Axis, Vec<f64>)>,
    /// Values of every parameter not swept.
    pub base: TeleportParams,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl SweepSpec {
    pub fn new(base: TeleportParams) -> Self {
        Self {
            axes: Vec::new(),
            base,
            jobs: None,
        }
    }

    pub fn axis(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        let axis: Axis = name.parse()?;
        self.axes.push((axis, values));
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (axis, values)) in self.axes.iter().enumerate() {
            if values.is_empty() {
                return Err(SweepError::EmptyAxis(axis.to_string()));
            }
            if self.axes[..i].iter().any(|(a, _)| a == axis) {
                return Err(SweepError::DuplicateAxis(axis.to_string()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters of the `index`-th grid point in row-major axis order.
    pub fn point(&self, mut index: usize) -> TeleportParams {
        let mut p = self.base;
        for (axis, values) in self.axes.iter().rev() {
            axis.set(&mut p, values[index % values.len()]);
            index /= values.len();
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Simulated,
    Measured,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Simulated => "simulated",
            Provenance::Measured => "measured",
        })
    }
}

/// One fidelity value with the parameters it was obtained at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRecord {
    #[serde(rename = "G_dB")]
    pub gain_db: f64,
    #[serde(rename = "S_dB")]
    pub squeezing_db: f64,
    #[serde(rename = "n_d")]
    pub photons: f64,
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    #[serde(rename = "F")]
    pub fidelity: f64,
    #[serde(rename = "F_err")]
    pub fidelity_err: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub phi: Option<f64>,
    pub provenance: Provenance,
}

impl FidelityRecord {
    pub fn measured(
        gain_db: f64,
        squeezing_db: f64,
        photons: f64,
        theta: f64,
        fidelity: f64,
    ) -> Self {
        Self {
            gain_db,
            squeezing_db,
            photons,
            theta,
            fidelity,
            fidelity_err: None,
            mu: None,
            lambda: None,
            phi: None,
            provenance: Provenance::Measured,
        }
    }

    /// `base` with this record's swept parameters applied.
    pub fn params(&self, base: &TeleportParams) -> TeleportParams {
        let mut p = *base;
        p.gain_db = self.gain_db;
        p.squeezing_db = self.squeezing_db;
        p.photons = self.photons;
        p.phase = self.theta;
        p
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(format!("F = {} is outside [0, 1]", self.fidelity));
        }
        if let Some(e) = self.fidelity_err {
            if !e.is_finite() || e < 0.0 {
                return Err(format!("F_err = {e} must be finite and >= 0"));
            }
        }
        let params = [self.gain_db, self.squeezing_db, self.photons, self.theta];
        if params.iter().any(|v| !v.is_finite()) {
            return Err("parameters must be finite".into());
        }
        Ok(())
    }
}

fn simulate(p: &TeleportParams) -> Result<FidelityRecord> {
    let r = teleport_coherent(p)?;
    Ok(FidelityRecord {
        gain_db: p.gain_db,
        squeezing_db: p.squeezing_db,
        photons: p.photons,
        theta: p.phase,
        fidelity: r.fidelity,
        fidelity_err: None,
        mu: Some(r.purity),
        lambda: Some(r.lambda),
        phi: Some(r.phi),
        provenance: Provenance::Simulated,
    })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SweepError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Evaluates the Cartesian product of the axes. Output order is independent
/// of the number of workers.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<FidelityRecord>> {
    spec.validate()?;
    with_pool(spec.jobs, || {
        (0..spec.len())
            .into_par_iter()
            .map(|i| simulate(&spec.point(i)))
            .collect::<Result<Vec<_>>>()
    })?
}

const REQUIRED_COLUMNS: [&str; 5] = ["G_dB", "S_dB", "n_d", "theta_rad", "F"];
const OUTPUT_COLUMNS: [&str; 10] = [
    "G_dB",
    "S_dB",
    "n_d",
    "theta_rad",
    "F",
    "F_err",
    "mu",
    "lambda",
    "phi",
    "provenance",
];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records with the sweep schema. Floats use the shortest
/// representation that reads back exactly.
pub fn write_fidelity_csv<W: Write>(out: W, records: &[FidelityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OUTPUT_COLUMNS)?;
    for r in records {
        w.write_record([
            r.gain_db.to_string(),
            r.squeezing_db.to_string(),
            r.photons.to_string(),
            r.theta.to_string(),
            r.fidelity.to_string(),
            opt_field(r.fidelity_err),
            opt_field(r.mu),
            opt_field(r.lambda),
            opt_field(r.phi),
            r.provenance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a fidelity table. Columns are matched by header name; unknown
/// columns are ignored. Every record is marked as measured.
pub fn read_fidelity_csv<R: Read>(input: R, name: &str) -> Result<Vec<FidelityRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(SweepError::Empty(name.to_string()));
    }
    let col = |c: &str| headers.iter().position(|h| h == c);
    let mut idx = [0usize; 5];
    for (slot, c) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = col(c).ok_or_else(|| SweepError::MissingColumn {
            path: name.to_string(),
            column: c.to_string(),
        })?;
    }
    let err_idx = col("F_err");

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let row_err = |message: String| SweepError::Row {
            path: name.to_string(),
            line,
            message,
        };
        let num = |i: usize, c: &str| -> Result<f64> {
            let cell = row.get(i).unwrap_or("");
            cell.parse::<f64>()
                .map_err(|_| row_err(format!("column `{c}`: `{cell}` is not a number")))
        };
        let v: Vec<f64> = idx
            .iter()
            .zip(REQUIRED_COLUMNS)
            .map(|(&i, c)| num(i, c))
            .collect::<Result<_>>()?;
        let mut rec = FidelityRecord::measured(v[0], v[1], v[2], v[3], v[4]);
        if let Some(i) = err_idx {
            if !row.get(i).unwrap_or("").is_empty() {
                rec.fidelity_err = Some(num(i, "F_err")?);
            }
        }
        rec.validate().map_err(row_err)?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(SweepError::Empty(name.to_string()));
    }
    Ok(records)
}

pub fn load_fidelity_csv(path: impl AsRef<Path>) -> Result<Vec<FidelityRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_fidelity_csv(std::io::BufReader::new(file), &path.display().to_string())
}

/// Noise-model parameters in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Kelvin.
    pub temperature: f64,
    pub chi1: f64,
    pub chi2: f64,
}

impl NoiseParams {
    pub fn noise_model(&self, frequency: f64) -> NoiseModel {
        NoiseModel {
            chi1: self.chi1,
            chi2: self.chi2,
            temperature: self.temperature,
            frequency,
        }
    }

    fn to_vec(self) -> [f64; 3] {
        [self.temperature.ln(), self.chi1.ln(), self.chi2]
    }

    fn from_vec(x: &[f64; 3]) -> Self {
        Self {
            temperature: x[0].exp(),
            chi1: x[1].exp(),
            chi2: x[2],
        }
    }
}

/// Box constraints of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub temperature: (f64, f64),
    pub chi1: (f64, f64),
    pub chi2: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            temperature: (1e-4, 1.0),
            chi1: (1e-6, 10.0),
            chi2: (0.0, 3.0),
        }
    }
}

impl FitBounds {
    pub fn contains(&self, p: &NoiseParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.temperature, self.temperature)
            && inside(p.chi1, self.chi1)
            && inside(p.chi2, self.chi2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fixed chain parameters; gain, squeezing and displacement come from
    /// each record.
    pub base: TeleportParams,
    pub initial: NoiseParams,
    pub bounds: FitBounds,
    /// Restarts after the first simplex run.
    pub restarts: usize,
    /// Simplex iterations per run.
    pub max_iterations: usize,
    /// Seed of the restart jitter.
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            base: TeleportParams::default(),
            initial: NoiseParams {
                temperature: 0.07,
                chi1: 0.05,
                chi2: 0.6,
            },
            bounds: FitBounds::default(),
            restarts: 5,
            max_iterations: 4000,
            seed: 0,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: NoiseParams,
    /// Weighted residual sum of squares at the optimum.
    pub rss: f64,
    /// One-standard-error half-widths of (T, chi1, chi2) from the
    /// linearized model at the optimum; `NaN` if the curvature is singular.
    pub half_widths: [f64; 3],
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after every simplex iteration.
    pub history: Vec<f64>,
    pub points: usize,
}

struct Problem<'a> {
    data: &'a [FidelityRecord],
    weights: Vec<f64>,
    base: TeleportParams,
    bounds: FitBounds,
}

impl Problem<'_> {
    fn predict(&self, params: &NoiseParams) -> Option<Vec<f64>> {
        let mut base = self.base;
        base.noise = params.noise_model(self.base.noise.frequency);
        self.data
            .par_iter()
            .map(|r| {
                teleport_coherent(&r.params(&base))
                    .ok()
                    .map(|t| t.fidelity)
                    .filter(|f| f.is_finite())
            })
            .collect()
    }

    fn rss_of(&self, predicted: &[f64]) -> f64 {
        predicted
            .iter()
            .zip(self.data)
            .zip(&self.weights)
            .map(|((p, r), w)| w * (p - r.fidelity).powi(2))
            .sum()
    }

    fn objective(&self, x: &[f64; 3]) -> f64 {
        let params = NoiseParams::from_vec(x);
        if !self.bounds.contains(&params) {
            return f64::INFINITY;
        }
        match self.predict(&params) {
            Some(pred) => self.rss_of(&pred),
            None => f64::INFINITY,
        }
    }
}

fn check_data(data: &[FidelityRecord]) -> Result<()> {
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for r in data {
        r.validate().map_err(SweepError::InsufficientData)?;
        if !distinct.contains(&(r.gain_db, r.squeezing_db)) {
            distinct.push((r.gain_db, r.squeezing_db));
        }
    }
    if distinct.len() < 3 {
        return Err(SweepError::InsufficientData(format!(
            "{} distinct (G, S) points, at least 3 required",
            distinct.len()
        )));
    }
    if data.iter().all(|r| r.fidelity == data[0].fidelity) {
        return Err(SweepError::Degenerate(format!(
            "every record has F = {}",
            data[0].fidelity
        )));
    }
    Ok(())
}

struct Simplex {
    vertices: Vec<([f64; 3], f64)>,
}

impl Simplex {
    fn sort(&mut self) {
        self.vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
    }

    fn best(&self) -> ([f64; 3], f64) {
        self.vertices[0]
    }

    fn spread(&self) -> (f64, f64) {
        let fs = self.vertices.iter().map(|v| v.1);
        let f_spread =
            fs.clone().fold(f64::NEG_INFINITY, f64::max) - fs.fold(f64::INFINITY, f64::min);
        let b = self.vertices[0].0;
        let x_spread = self.vertices[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&b).map(|(a, c)| (a - c).abs()))
            .fold(0.0, f64::max);
        (f_spread, x_spread)
    }
}

fn combine(a: &[f64; 3], b: &[f64; 3], t: f64) -> [f64; 3] {
    // a + t·(b − a)
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// One Nelder–Mead run. Appends the best value after each iteration to
/// `history` and returns (best point, best value, iterations, evaluations).
fn nelder_mead(
    f: &(dyn Fn(&[f64; 3]) -> f64 + Sync),
    start: [f64; 3],
    f_start: f64,
    steps: [f64; 3],
    max_iter: usize,
    history: &mut Vec<f64>,
) -> ([f64; 3], f64, usize, usize) {
    let mut points = vec![start];
    for (i, s) in steps.iter().enumerate() {
        let mut x = start;
        x[i] += s;
        points.push(x);
    }
    let values: Vec<f64> = points[1..].par_iter().map(f).collect();
    let mut evals = values.len();
    let mut simplex = Simplex {
        vertices: std::iter::once((start, f_start))
            .chain(points[1..].iter().copied().zip(values))
            .collect(),
    };
    simplex.sort();

    let mut iterations = 0;
    while iterations < max_iter {
        let (f_spread, x_spread) = simplex.spread();
        let f_best = simplex.best().1;
        if f_spread <= 1e-14 * f_best.abs() + 1e-300 || x_spread < 1e-13 {
            break;
        }
        iterations += 1;
        let n = simplex.vertices.len() - 1;
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex.vertices[..n] {
            for k in 0..3 {
                centroid[k] += x[k] / n as f64;
            }
        }
        let (worst, f_worst) = simplex.vertices[n];
        let f_second = simplex.vertices[n - 1].1;

        let xr = combine(&centroid, &worst, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < f_best {
            let xe = combine(&centroid, &worst, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex.vertices[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f_second {
            simplex.vertices[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < f_worst {
                let xc = combine(&centroid, &worst, -0.5);
                (xc, f(&xc))
            } else {
                let xc = combine(&centroid, &worst, 0.5);
                (xc, f(&xc))
            };
            evals += 1;
            if fc < f_worst.min(fr) {
                simplex.vertices[n] = (xc, fc);
            } else {
                let best = simplex.best().0;
                let shrunk: Vec<[f64; 3]> = simplex.vertices[1..]
                    .iter()
                    .map(|(x, _)| combine(&best, x, 0.5))
                    .collect();
                let values: Vec<f64> = shrunk.par_iter().map(f).collect();
                evals += values.len();
                for (v, nv) in simplex.vertices[1..]
                    .iter_mut()
                    .zip(shrunk.into_iter().zip(values))
                {
                    *v = nv;
                }
            }
        }
        simplex.sort();
        history.push(simplex.best().1);
    }
    let (x, fx) = simplex.best();
    (x, fx, iterations, evals)
}

/// Weighted least-squares fit of the noise model to measured fidelities.
///
/// Minimizes `Σ w_i (F_sim − F_i)²` with `w_i = 1/F_err_i²` when an error is
/// given and 1 otherwise, over `(ln T, ln chi1, chi2)` with a simplex search
/// followed by jittered restarts from the incumbent. The fit is converged
/// once a restart improves the objective by less than 1e-9 relative.
pub fn fit_noise_model(data: &[FidelityRecord], opts: &FitOptions) -> Result<FitResult> {
    check_data(data)?;
    if !opts.bounds.contains(&opts.initial)
        || opts.initial.temperature <= 0.0
        || opts.initial.chi1 <= 0.0
    {
        return Err(SweepError::State(StateError::InvalidArgument(format!(
            "initial point {:?} is outside the bounds",
            opts.initial
        ))));
    }
    let weights: Vec<f64> = data
        .iter()
        .map(|r| match r.fidelity_err {
            Some(e) if e > 0.0 => 1.0 / (e * e),
            _ => 1.0,
        })
        .collect();
    let problem = Problem {
        data,
        weights,
        base: opts.base,
        bounds: opts.bounds,
    };
    let objective = |x: &[f64; 3]| problem.objective(x);

    with_pool(opts.jobs, || {
        let x0 = opts.initial.to_vec();
        let f0 = objective(&x0);
        if !f0.is_finite() {
            return Err(SweepError::NonFinite(format!("{:?}", opts.initial)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let base_steps = [0.5, 0.5, 0.1];
        let mut history = vec![f0];
        let (mut x, mut fx, mut iterations, mut evaluations) = nelder_mead(
            &objective,
            x0,
            f0,
            base_steps,
            opts.max_iterations,
            &mut history,
        );
        evaluations += 1;
        let mut converged = fx == 0.0;
        for _ in 0..opts.restarts {
            if converged {
                break;
            }
            let steps = base_steps.map(|s| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * s * rng.random_range(0.5..1.5)
            });
            let (nx, nf, it, ev) =
                nelder_mead(&objective, x, fx, steps, opts.max_iterations, &mut history);
            iterations += it;
            evaluations += ev;
            let improvement = (fx - nf) / fx;
            if nf <= fx {
                x = nx;
                fx = nf;
            }
            converged = fx == 0.0 || improvement < 1e-9;
        }
        let params = NoiseParams::from_vec(&x);
        let half_widths = half_widths(&problem, &params, fx);
        Ok(FitResult {
            params,
            rss: fx,
            half_widths,
            iterations,
            evaluations,
            converged,
            history,
            points: data.len(),
        })
    })?
}

/// Standard errors from `s²·(JᵀWJ)⁻¹`, `s² = RSS/(N − 3)`, with `J` the
/// central-difference Jacobian of the predictions in natural units.
fn half_widths(problem: &Problem, params: &NoiseParams, rss: f64) -> [f64; 3] {
    let nan = [f64::NAN; 3];
    let n = problem.data.len();
    if n <= 3 {
        return nan;
    }
    let natural = [params.temperature, params.chi1, params.chi2];
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, 3);
    for k in 0..3 {
        let h = 1e-5 * natural[k].abs().max(1e-3);
        let mut plus = natural;
        let mut minus = natural;
        plus[k] += h;
        minus[k] = (minus[k] - h).max(0.0);
        let make = |v: [f64; 3]| NoiseParams {
            temperature: v[0],
            chi1: v[1],
            chi2: v[2],
        };
        let (Some(fp), Some(fm)) = (problem.predict(&make(plus)), problem.predict(&make(minus)))
        else {
            return nan;
        };
        let width = plus[k] - minus[k];
        for i in 0..n {
            jac[(i, k)] = (fp[i] - fm[i]) / width;
        }
    }
    let w = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(problem.weights.clone()));
    let info = jac.transpose() * w * &jac;
    let Some(inv) = info.try_inverse() else {
        return nan;
    };
    let s2 = rss / (n - 3) as f64;
    [0, 1, 2].map(|k| (s2 * inv[(k, k)]).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    #[serde(rename = "G_dB")]
    pub gain_db: f64,
    #[serde(rename = "S_dB")]
    pub squeezing_db: f64,
    #[serde(rename = "n_d")]
    pub photons: f64,
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    pub observed: f64,
    pub predicted: f64,
    /// `predicted − observed`.
    pub residual: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    /// `√(Σ w r² / N)`.
    pub rms: f64,
    pub max_abs: f64,
    /// Index into `rows` of the largest |residual|.
    pub max_index: usize,
}

/// Residuals of `data` against the chain evaluated with the fitted noise.
pub fn residual_report(
    data: &[FidelityRecord],
    fit: &FitResult,
    base: &TeleportParams,
) -> Result<ResidualReport> {
    let mut base = *base;
    base.noise = fit.params.noise_model(base.noise.frequency);
    let predicted: Vec<f64> = data
        .par_iter()
        .map(|r| teleport_coherent(&r.params(&base)).map(|t| t.fidelity))
        .collect::<std::result::Result<_, _>>()?;
    let rows: Vec<ResidualRow> = data
        .iter()
        .zip(predicted)
        .map(|(r, p)| ResidualRow {
            gain_db: r.gain_db,
            squeezing_db: r.squeezing_db,
            photons: r.photons,
            theta: r.theta,
            observed: r.fidelity,
            predicted: p,
            residual: p - r.fidelity,
            weight: match r.fidelity_err {
                Some(e) if e > 0.0 => 1.0 / (e * e),
                _ => 1.0,
            },
        })
        .collect();
    let (mut max_abs, mut max_index) = (0.0, 0);
    for (i, row) in rows.iter().enumerate() {
        if row.residual.abs() > max_abs {
            max_abs = row.residual.abs();
            max_index = i;
        }
    }
    let ss: f64 = rows
        .iter()
        .map(|r| r.weight * r.residual * r.residual)
        .sum();
    let rms = if rows.is_empty() {
        0.0
    } else {
        (ss / rows.len() as f64).sqrt()
    };
    Ok(ResidualReport {
        rows,
        rms,
        max_abs,
        max_index,
    })
}
