//! Invariant suite behind `microtele validate`.

use std::f64::consts::PI;

use microtele::gaussian::{BeamsplitterConvention, GaussianChannel, PHYSICAL_TOL};
use microtele::network::{compile_network, parse_network, TELEPORT_NET};
use microtele::teleport::{
    classical_teleport, ideal_fidelity, run_chain, teleport_coherent, SegmentLosses,
};
use microtele::{NoiseModel, TeleportParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn random_params(rng: &mut ChaCha8Rng) -> TeleportParams {
    TeleportParams {
        squeezing_db: rng.random_range(0.0..12.0),
        gain_db: rng.random_range(10.0..30.0),
        coupling_db: rng.random_range(-25.0..-5.0),
        hybrid_loss_db: rng.random_range(0.0..1.0),
        segment_losses: SegmentLosses {
            alice_db: rng.random_range(0.0..2.0),
            feedforward_db: rng.random_range(0.0..2.0),
        },
        noise: NoiseModel {
            chi1: rng.random_range(0.0..0.05),
            chi2: rng.random_range(0.2..1.2),
            ..NoiseModel::default()
        }
        .with_env_photons(rng.random_range(0.0..0.1)),
        photons: rng.random_range(0.0..5.0),
        phase: rng.random_range(-PI..PI),
    }
}

/// Runs every check. `tol` bounds the netlist-versus-chain deviation.
pub fn run(seed: u64, tol: f64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut defect: f64 = 0.0;
    for _ in 0..100 {
        let angle = rng.random_range(-PI..PI);
        for ch in [
            GaussianChannel::squeezer(rng.random_range(-15.0..15.0), angle),
            GaussianChannel::beamsplitter(
                rng.random_range(0.0..=1.0),
                BeamsplitterConvention::Real,
            ),
            GaussianChannel::beamsplitter(
                rng.random_range(0.0..=1.0),
                BeamsplitterConvention::Symmetric,
            ),
            GaussianChannel::phase_sensitive_amp(rng.random_range(0.0..30.0), angle, 0.0),
        ] {
            defect = defect.max(ch.symplectic_defect());
        }
    }
    checks.push(Check {
        name: "symplectic",
        pass: defect <= 1e-10,
        detail: format!("max |XΩXᵀ − Ω| = {defect:.2e}"),
    });

    let program = compile_network(&parse_network(TELEPORT_NET).expect("built-in netlist parses"));
    let mut dev: f64 = 0.0;
    let mut nu_min = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..25 {
        let p = random_params(&mut rng);
        let hand = run_chain(&p);
        let dsl = program.execute(&p.netlist_bindings(), &p.noise);
        match (hand, dsl) {
            (Ok(h), Ok(d)) => {
                dev = dev
                    .max((h.cov() - d.cov()).amax())
                    .max((h.mean() - d.mean()).amax());
                nu_min = nu_min.min(h.symplectic_eigenvalues()[0]);
            }
            _ => failures += 1,
        }
    }
    checks.push(Check {
        name: "netlist-equivalence",
        pass: failures == 0 && dev <= tol,
        detail: format!("max deviation {dev:.2e} (tol {tol:.0e}), {failures} failed runs"),
    });
    checks.push(Check {
        name: "physicality",
        pass: nu_min >= 0.25 - PHYSICAL_TOL,
        detail: format!("min symplectic eigenvalue {nu_min:.12}"),
    });

    let mut worst: f64 = 0.0;
    for s in [0.0, 3.0, 6.0, 10.0] {
        let f = teleport_coherent(&TeleportParams::ideal(s))
            .map(|r| r.fidelity)
            .unwrap_or(f64::NAN);
        worst = worst.max((f - ideal_fidelity(s)).abs());
    }
    checks.push(Check {
        name: "ideal-limit",
        pass: worst < 1e-3,
        detail: format!("max |F − 1/(1+10^(−S/10))| = {worst:.2e}"),
    });

    let f_ct = classical_teleport(&TeleportParams::ideal(0.0))
        .map(|r| r.fidelity)
        .unwrap_or(f64::NAN);
    checks.push(Check {
        name: "classical-threshold",
        pass: (f_ct - 0.5).abs() < 1e-3,
        detail: format!("F(S = 0) = {f_ct:.6}"),
    });

    let desc = parse_network(TELEPORT_NET).expect("built-in netlist parses");
    let round_trip = parse_network(&desc.to_string())
        .map(|d| d == desc)
        .unwrap_or(false);
    checks.push(Check {
        name: "netlist-round-trip",
        pass: round_trip,
        detail: format!("printed netlist reparses to the same description: {round_trip}"),
    });
    checks
}
