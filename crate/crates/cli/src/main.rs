mod error;
mod manifest;
mod model;
mod validate;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use microtele::metrics::{
    fidelity_coherent, purity, reconstruct_moments, sample_quadratures, squeezing_db, wigner,
    GridSpec, PhaseEstimationSummary,
};
use microtele::sweepfit::{
    fit_noise_model, parse_grid, read_fidelity_csv, residual_report, run_sweep, write_fidelity_csv,
    FitOptions, NoiseParams, SweepSpec,
};
use microtele::teleport::{run_chain, TeleportResult};
use microtele::{GaussianState, NoiseModel};
use serde::Serialize;
use serde_json::json;

use error::{CliError, Result};
use manifest::{read_manifest, sha256_file, ManifestBuilder};
use model::Source;

/// Gaussian simulator for analog-feedforward microwave teleportation.
///
/// Units are fixed by parameter name: S, G, beta and L_* in dB, nd in
/// photons, theta in degrees (theta_rad on sweep grids), T_K in kelvin,
/// n_env in photons.
#[derive(Debug, Parser)]
#[command(name = "microtele", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Built-in network (`teleport`).
    #[arg(long)]
    builtin: Option<String>,
    /// Netlist file.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Parameter binding KEY=VALUE, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Lossless, noiseless chain with beta = -60 dB and G·beta = 4.
    #[arg(long)]
    ideal: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one network and print the result as JSON.
    Simulate {
        #[command(flatten)]
        net: NetArgs,
        /// Also write the JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Draw this many quadrature samples of the output and reconstruct its moments.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fidelity over a parameter grid of the built-in network, as CSV.
    Sweep {
        #[command(flatten)]
        net: NetArgs,
        /// Axis grid NAME=start:stop:step with NAME in G, S, nd, theta_rad.
        #[arg(long = "grid", value_name = "NAME=A:B:STEP", required = true)]
        grid: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fit (T, chi1, chi2) to a fidelity table.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Fixed device parameters and starting values (T_K, chi1, chi2).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the restart jitter.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Wigner function of the output on a square grid, as CSV.
    Wigner {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        out: PathBuf,
        /// Grid points per axis.
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Half-width of the grid in standard deviations of the widest axis.
        #[arg(long, default_value_t = 6.0)]
        span: f64,
    },
    /// Run the invariant suite; exits 5 on any failure.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tolerance of the netlist-versus-chain comparison.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a command from its manifest and check the outputs are identical.
    Replay { manifest: PathBuf },
}

struct Evaluated {
    source: String,
    bindings: BTreeMap<String, f64>,
    noise: NoiseModel,
    output: GaussianState,
    reference: Option<[f64; 2]>,
}

fn evaluate(net: &NetArgs) -> Result<Evaluated> {
    let source = Source::from_flags(net.builtin.as_deref(), net.net.as_deref())?;
    let sets = model::collect_sets(&net.set)?;
    match source {
        Source::Teleport => {
            let p = model::teleport_params(&sets, &["S", "G", "nd"], net.ideal)?;
            Ok(Evaluated {
                source: source.label(),
                bindings: p.netlist_bindings(),
                noise: p.noise,
                output: run_chain(&p)?,
                reference: Some(p.input_mean()),
            })
        }
        Source::File(_) => {
            if net.ideal {
                return Err(CliError::Usage(
                    "--ideal applies to --builtin teleport only".into(),
                ));
            }
            let program = source.program()?;
            let (bindings, noise) = model::netlist_bindings(&program, &sets)?;
            let output = program.execute(&bindings, &noise)?;
            let has_source = program.steps.iter().any(|s| {
                matches!(
                    s,
                    microtele::network::Step::Channel {
                        element: microtele::network::Element::Displace { .. },
                        ..
                    }
                )
            });
            let reference = if has_source {
                Some(program.input_reference(&bindings)?)
            } else {
                None
            };
            Ok(Evaluated {
                source: source.label(),
                bindings,
                noise,
                output,
                reference,
            })
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn net_inputs(net: &NetArgs) -> Vec<PathBuf> {
    net.net.iter().cloned().collect()
}

fn noise_json(n: &NoiseModel) -> serde_json::Value {
    json!({
        "chi1": n.chi1,
        "chi2": n.chi2,
        "temperature_K": n.temperature,
        "env_photons": n.env_photons(),
        "frequency_Hz": n.frequency,
    })
}

#[derive(Serialize)]
struct StateJson {
    modes: Vec<String>,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

fn state_json(s: &GaussianState) -> StateJson {
    let c = s.cov();
    StateJson {
        modes: s.modes().to_vec(),
        mean: s.mean().iter().copied().collect(),
        cov: (0..c.nrows())
            .map(|i| c.row(i).iter().copied().collect())
            .collect(),
    }
}

fn cmd_simulate(net: &NetArgs, samples: Option<usize>, seed: u64) -> Result<serde_json::Value> {
    let ev = evaluate(net)?;
    let mut out = json!({
        "network": ev.source,
        "bindings": ev.bindings,
        "noise": noise_json(&ev.noise),
        "output": state_json(&ev.output),
    });
    if ev.output.mode_count() == 1 {
        let summary = PhaseEstimationSummary::from_state(&ev.output)?;
        let mode = ev.output.modes()[0].clone();
        let sq = squeezing_db(&ev.output, &mode)?;
        out["purity"] = json!(purity(&ev.output)?);
        out["lambda"] = json!(summary.lambda);
        out["phi"] = json!(summary.phi);
        out["fisher"] = json!(summary.fisher);
        out["squeezing"] = json!({
            "squeezing_db": sq.squeezing_db,
            "antisqueezing_db": sq.antisqueezing_db,
            "angle_rad": sq.angle,
        });
        if let Some(reference) = ev.reference {
            let r = TeleportResult::evaluate(ev.output.clone(), reference)?;
            out["input_mean"] = json!(reference);
            out["F"] = json!(fidelity_coherent(&ev.output, reference)?);
            debug_assert_eq!(r.fidelity, out["F"].as_f64().unwrap());
        }
        if let Some(n) = samples {
            let draws = sample_quadratures(&ev.output, n, seed)?;
            let est = reconstruct_moments(&draws)?;
            let rec = est.to_state(&mode)?;
            out["tomography"] = json!({
                "samples": n,
                "seed": seed,
                "mean": est.mean,
                "cov": est.cov,
                "mean_se": est.mean_se,
                "squeezing_db": squeezing_db(&rec, &mode)?.squeezing_db,
            });
        }
    } else if samples.is_some() {
        return Err(CliError::Usage(
            "--samples needs a single-mode output".into(),
        ));
    }
    Ok(out)
}

fn sweep_spec(net: &NetArgs, grid: &[String], jobs: Option<usize>) -> Result<SweepSpec> {
    match Source::from_flags(net.builtin.as_deref(), net.net.as_deref())? {
        Source::Teleport => {}
        Source::File(_) => {
            return Err(CliError::Usage("sweeps run on --builtin teleport".into()));
        }
    }
    let sets = model::collect_sets(&net.set)?;
    let base = model::teleport_params(&sets, &[], net.ideal)?;
    let mut spec = SweepSpec::new(base);
    spec.jobs = jobs;
    for g in grid {
        let (name, range) = g
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--grid expects NAME=A:B:STEP, got `{g}`")))?;
        if name == "theta" {
            return Err(CliError::Usage(
                "sweep the displacement angle with `theta_rad` (radians)".into(),
            ));
        }
        spec = spec.axis(name, parse_grid(range)?)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_fit(
    data: &Path,
    set: &[String],
    seed: u64,
    jobs: Option<usize>,
) -> Result<serde_json::Value> {
    let file = std::fs::File::open(data).map_err(|e| CliError::io(data, e))?;
    let records = read_fidelity_csv(std::io::BufReader::new(file), &data.display().to_string())?;
    let mut sets = model::collect_sets(set)?;
    let defaults = FitOptions::default();
    let initial = NoiseParams {
        temperature: sets.remove("T_K").unwrap_or(defaults.initial.temperature),
        chi1: sets.remove("chi1").unwrap_or(defaults.initial.chi1),
        chi2: sets.remove("chi2").unwrap_or(defaults.initial.chi2),
    };
    for k in ["S", "G", "nd", "theta", "n_env"] {
        if sets.contains_key(k) {
            return Err(CliError::Binding(format!(
                "`{k}` cannot be fixed in a fit; it comes from the data or is fitted"
            )));
        }
    }
    let base = model::teleport_params(&sets, &[], false)?;
    let opts = FitOptions {
        base,
        initial,
        seed,
        jobs,
        ..defaults
    };
    let fit = fit_noise_model(&records, &opts)?;
    let report = residual_report(&records, &fit, &base)?;
    Ok(json!({
        "data": data.display().to_string(),
        "fit": fit,
        "env_photons": fit.params.noise_model(base.noise.frequency).env_photons(),
        "residuals": report,
        "fixed": base,
    }))
}

fn cmd_wigner(net: &NetArgs, out: &Path, points: usize, span: f64) -> Result<serde_json::Value> {
    let ev = evaluate(net)?;
    if ev.output.mode_count() != 1 {
        return Err(CliError::Usage("wigner needs a single-mode output".into()));
    }
    let spec = GridSpec::around(&ev.output, span, points)?;
    let grid = wigner(&ev.output, &spec)?;
    let mut extra = vec![("network".to_string(), ev.source.clone())];
    extra.extend(ev.bindings.iter().map(|(k, v)| (k.clone(), v.to_string())));
    let mut buf = Vec::new();
    grid.write_csv(&mut buf, &extra)
        .map_err(|e| CliError::io(out, e))?;
    write_file(out, &buf)?;
    let (q, p) = grid.peak();
    Ok(json!({
        "out": out.display().to_string(),
        "points": [points, points],
        "integral": grid.integrate(),
        "peak": [q, p],
    }))
}

fn print_json(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}

fn run(argv: Vec<String>) -> Result<()> {
    let cli =
        match Cli::try_parse_from(std::iter::once("microtele".to_string()).chain(argv.clone())) {
            Ok(c) => c,
            Err(e) => {
                let code = e.exit_code();
                let _ = e.print();
                std::process::exit(code);
            }
        };
    let start = Instant::now();
    let stdout = std::io::stdout();
    match &cli.command {
        Command::Simulate {
            net,
            out,
            samples,
            seed,
        } => {
            let result = cmd_simulate(net, *samples, *seed)?;
            let text = print_json(&result);
            stdout.lock().write_all(text.as_bytes()).ok();
            if let Some(out) = out {
                write_file(out, text.as_bytes())?;
                ManifestBuilder {
                    command: "simulate".into(),
                    argv,
                    parameters: json!({"bindings": result["bindings"], "noise": result["noise"]}),
                    inputs: net_inputs(net),
                    seed: Some(*seed),
                }
                .write(out, start.elapsed())?;
            }
        }
        Command::Sweep {
            net,
            grid,
            out,
            jobs,
        } => {
            let spec = sweep_spec(net, grid, *jobs)?;
            let records = run_sweep(&spec)?;
            let mut buf = Vec::new();
            write_fidelity_csv(&mut buf, &records)?;
            write_file(out, &buf)?;
            let axes: BTreeMap<String, Vec<f64>> = spec
                .axes
                .iter()
                .map(|(a, v)| (a.to_string(), v.clone()))
                .collect();
            ManifestBuilder {
                command: "sweep".into(),
                argv,
                parameters: json!({"base": spec.base, "axes": axes}),
                inputs: vec![],
                seed: None,
            }
            .write(out, start.elapsed())?;
            eprintln!("wrote {} rows to {}", records.len(), out.display());
        }
        Command::Fit {
            data,
            set,
            out,
            seed,
            jobs,
        } => {
            let result = cmd_fit(data, set, *seed, *jobs)?;
            let text = print_json(&result);
            stdout.lock().write_all(text.as_bytes()).ok();
            if let Some(out) = out {
                write_file(out, text.as_bytes())?;
                ManifestBuilder {
                    command: "fit".into(),
                    argv,
                    parameters: json!({"fixed": result["fixed"]}),
                    inputs: vec![data.clone()],
                    seed: Some(*seed),
                }
                .write(out, start.elapsed())?;
            }
        }
        Command::Wigner {
            net,
            out,
            points,
            span,
        } => {
            let summary = cmd_wigner(net, out, *points, *span)?;
            stdout
                .lock()
                .write_all(print_json(&summary).as_bytes())
                .ok();
            ManifestBuilder {
                command: "wigner".into(),
                argv,
                parameters: json!({"points": points, "span": span}),
                inputs: net_inputs(net),
                seed: None,
            }
            .write(out, start.elapsed())?;
        }
        Command::Validate { seed, tol, out } => {
            let checks = validate::run(*seed, *tol);
            let mut text = String::new();
            for c in &checks {
                text += &format!(
                    "{} {}: {}\n",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            stdout.lock().write_all(text.as_bytes()).ok();
            if let Some(out) = out {
                write_file(out, print_json(&json!(checks)).as_bytes())?;
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::Validation(format!("{failed} checks failed")));
            }
        }
        Command::Replay { manifest } => {
            let m = read_manifest(manifest)?;
            for (path, hash) in &m.inputs {
                if &sha256_file(Path::new(path))? != hash {
                    return Err(CliError::Validation(format!(
                        "input {path} changed since the run"
                    )));
                }
            }
            run(m.argv.clone())?;
            for (path, hash) in &m.outputs {
                if &sha256_file(Path::new(path))? != hash {
                    return Err(CliError::Validation(format!(
                        "output {path} differs from the recorded run"
                    )));
                }
            }
            eprintln!("replayed {}: outputs identical", m.command);
        }
    }
    Ok(())
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = run(argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
