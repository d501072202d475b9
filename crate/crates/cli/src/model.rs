//! Turning `--set` flags into chain parameters or netlist bindings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use microtele::network::{compile_network, parse_network, ChannelProgram, TELEPORT_NET};
use microtele::teleport::{unity_gain_db, SegmentLosses, TeleportParams};
use microtele::NoiseModel;

use crate::error::{CliError, Result};

/// Keys of the noise model accepted next to the network parameters.
pub const NOISE_KEYS: [&str; 4] = ["chi1", "chi2", "T_K", "n_env"];

/// Parameters of the built-in teleportation network, with units.
pub const TELEPORT_KEYS: [(&str, &str); 8] = [
    ("S", "dB"),
    ("G", "dB"),
    ("beta", "dB"),
    ("L_HR", "dB"),
    ("L_alice", "dB"),
    ("L_ff", "dB"),
    ("nd", "photons"),
    ("theta", "degrees"),
];

pub fn parse_set(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--set {k}: `{v}` is not a number")))?;
    Ok((k.trim().to_string(), v))
}

pub fn collect_sets(sets: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for s in sets {
        let (k, v) = parse_set(s)?;
        if !v.is_finite() {
            return Err(CliError::Binding(format!("parameter `{k}` must be finite")));
        }
        if out.insert(k.clone(), v).is_some() {
            return Err(CliError::Usage(format!("`{k}` set twice")));
        }
    }
    Ok(out)
}

pub fn noise_model(sets: &BTreeMap<String, f64>, base: NoiseModel) -> Result<NoiseModel> {
    let mut noise = base;
    if let Some(&v) = sets.get("chi1") {
        noise.chi1 = v;
    }
    if let Some(&v) = sets.get("chi2") {
        noise.chi2 = v;
    }
    match (sets.get("T_K"), sets.get("n_env")) {
        (Some(_), Some(_)) => {
            return Err(CliError::Binding(
                "set either `T_K` or `n_env`, not both".into(),
            ))
        }
        (Some(&t), None) => noise.temperature = t,
        (None, Some(&n)) => noise = noise.with_env_photons(n),
        (None, None) => {}
    }
    noise
        .validate()
        .map_err(|e| CliError::Binding(e.to_string()))?;
    Ok(noise)
}

/// Chain parameters of the built-in network. Keys in `required` must be
/// present; the rest default to the experimental configuration. With
/// `ideal`, coupler, gain, losses and noise take their projective-limit
/// values regardless of the flags.
pub fn teleport_params(
    sets: &BTreeMap<String, f64>,
    required: &[&str],
    ideal: bool,
) -> Result<TeleportParams> {
    for k in sets.keys() {
        if !TELEPORT_KEYS.iter().any(|(n, _)| n == k) && !NOISE_KEYS.contains(&k.as_str()) {
            let known: Vec<&str> = TELEPORT_KEYS
                .iter()
                .map(|(n, _)| *n)
                .chain(NOISE_KEYS)
                .collect();
            return Err(CliError::Binding(format!(
                "unknown parameter `{k}` for the teleport network (known: {})",
                known.join(", ")
            )));
        }
    }
    for k in required {
        if ideal && matches!(*k, "G" | "beta") {
            continue;
        }
        if !sets.contains_key(*k) {
            return Err(CliError::Binding(format!(
                "unbound parameter `{k}`: pass --set {k}=..."
            )));
        }
    }
    let d = TeleportParams::default();
    let get = |k: &str, default: f64| sets.get(k).copied().unwrap_or(default);
    let mut p = TeleportParams {
        squeezing_db: get("S", d.squeezing_db),
        gain_db: get("G", d.gain_db),
        coupling_db: get("beta", d.coupling_db),
        hybrid_loss_db: get("L_HR", d.hybrid_loss_db),
        segment_losses: SegmentLosses {
            alice_db: get("L_alice", d.segment_losses.alice_db),
            feedforward_db: get("L_ff", d.segment_losses.feedforward_db),
        },
        noise: noise_model(sets, d.noise)?,
        photons: get("nd", d.photons),
        phase: get("theta", d.phase.to_degrees()).to_radians(),
    };
    if ideal {
        let i = TeleportParams::ideal(p.squeezing_db);
        p = TeleportParams {
            squeezing_db: p.squeezing_db,
            photons: p.photons,
            phase: p.phase,
            ..i
        };
        p.gain_db = unity_gain_db(p.coupling_db);
    }
    p.validate().map_err(|e| CliError::Binding(e.to_string()))?;
    Ok(p)
}

/// Where the network comes from.
#[derive(Debug, Clone)]
pub enum Source {
    Teleport,
    File(PathBuf),
}

impl Source {
    pub fn from_flags(builtin: Option<&str>, net: Option<&Path>) -> Result<Self> {
        match (builtin, net) {
            (Some(_), Some(_)) => Err(CliError::Usage("use either --builtin or --net".into())),
            (Some("teleport"), None) => Ok(Source::Teleport),
            (Some(other), None) => Err(CliError::Usage(format!(
                "unknown built-in network `{other}` (available: teleport)"
            ))),
            (None, Some(p)) => Ok(Source::File(p.to_path_buf())),
            (None, None) => Err(CliError::Usage(
                "pass --builtin teleport or --net <path>".into(),
            )),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Source::Teleport => "teleport".into(),
            Source::File(p) => p.display().to_string(),
        }
    }

    pub fn text(&self) -> Result<String> {
        match self {
            Source::Teleport => Ok(TELEPORT_NET.to_string()),
            Source::File(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e)),
        }
    }

    pub fn program(&self) -> Result<ChannelProgram> {
        let text = self.text()?;
        let desc = parse_network(&text).map_err(|e| match self {
            Source::File(p) => CliError::Parse(format!("{}: {e}", p.display())),
            Source::Teleport => CliError::from(e),
        })?;
        Ok(compile_network(&desc))
    }
}

/// Splits flags into netlist bindings and the noise model for a file
/// network; unknown keys are binding errors.
pub fn netlist_bindings(
    program: &ChannelProgram,
    sets: &BTreeMap<String, f64>,
) -> Result<(BTreeMap<String, f64>, NoiseModel)> {
    let mut bindings = BTreeMap::new();
    for (k, &v) in sets {
        if NOISE_KEYS.contains(&k.as_str()) {
            continue;
        }
        if !program.parameters.contains_key(k) {
            return Err(CliError::Binding(format!(
                "network has no parameter `${k}`"
            )));
        }
        bindings.insert(k.clone(), v);
    }
    if let Some(missing) = program.unbound(&bindings).first() {
        return Err(CliError::Binding(format!(
            "unbound parameter `${missing}`: pass --set {missing}=..."
        )));
    }
    Ok((bindings, noise_model(sets, NoiseModel::default())?))
}
