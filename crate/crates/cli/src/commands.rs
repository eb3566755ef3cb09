use std::path::Path;

use nematicon::analysis::{auxiliary_w_probe, emit_plot_data, ground_state_decay, radial_bound_check, CsvTable, PlotData};
use nematicon::angle::{solve_angle, AngleOptions};
use nematicon::evolution::{propagate, EvolutionConfig, PlaneReference, RunStatus};
use nematicon::groundstate::{minimize_charge, ChargeMinimum, FlowOptions, GroundState, Provenance};
use nematicon::io::{load_field, read_header, save_field, write_atomic, RunManifest, TaskState, TaskStatus};
use nematicon::nehari::{minimize_nehari, NehariOptions};
use nematicon::spectrum::{coercivity_probe, SectorBlock, SpectrumOptions};
use nematicon::verify::{self, Profile};
use nematicon::{Field2D, PlaneGrid, RadialField, RadialGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::{prepare_out, CliError};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Scalar record of a ground state, stored as `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundSummary {
    pub solver: Provenance,
    pub a: f64,
    pub sigma: f64,
    pub energy: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub action: f64,
    pub residual: f64,
    pub virial_defect: f64,
    pub lambda: f64,
    pub q: f64,
}

impl GroundSummary {
    pub fn of(gs: &GroundState) -> Self {
        Self {
            solver: gs.solver,
            a: gs.a,
            sigma: gs.sigma,
            energy: gs.energy(),
            e_plus: gs.report.e_plus,
            e_minus: gs.report.e_minus,
            action: gs.report.action,
            residual: gs.residual,
            virial_defect: gs.virial_defect(),
            lambda: gs.params.lambda,
            q: gs.params.q,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(nematicon::Error::from)?;
    text.push(b'\n');
    write_atomic(path, &text)?;
    Ok(())
}

/// Store `v`, `φ` and the summary of a ground state in `dir`.
pub fn save_ground(dir: &Path, gs: &GroundState) -> Result<(), CliError> {
    save_field(&dir.join("v.field"), &gs.v)?;
    save_field(&dir.join("phi.field"), &gs.phi)?;
    write_json(&dir.join("summary.json"), &GroundSummary::of(gs))
}

/// Read a ground state written by [`save_ground`].
pub fn load_ground(dir: &Path) -> Result<GroundState, CliError> {
    let text = std::fs::read_to_string(dir.join("summary.json")).map_err(nematicon::Error::from)?;
    let s: GroundSummary = serde_json::from_str(&text).map_err(nematicon::Error::from)?;
    let grid = read_header(&dir.join("v.field"))?.grid.radial_grid()?;
    let v: RadialField = load_field(&dir.join("v.field"), &grid)?;
    let phi: RadialField = load_field(&dir.join("phi.field"), &grid)?;
    let params = nematicon::MediumParams::new(s.lambda, s.q)?;
    Ok(GroundState::from_profiles(v, phi, s.sigma, params, s.solver)?)
}

/// Ground state from an earlier run, or a fresh fixed-charge solve.
fn obtain_ground(cfg: &GroundConfig) -> Result<GroundState, CliError> {
    if let Some(dir) = &cfg.input {
        return load_ground(dir);
    }
    let grid = RadialGrid::new(cfg.r_max, cfg.n)?;
    match minimize_charge(&grid, cfg.a, &cfg.params(), &FlowOptions::default())? {
        ChargeMinimum::Ground(gs) => Ok(gs),
        ChargeMinimum::NoGroundState(d) => Err(CliError::Failed(format!(
            "no ground state at a = {}: {:?} after {} iterations (energy {:.3e})",
            cfg.a, d.reason, d.iterations, d.energy
        ))),
    }
}

fn finish<C: Serialize>(dir: &Path, cfg: &C, started: f64, tasks: Vec<TaskStatus>) -> Result<RunManifest, CliError> {
    let manifest = RunManifest {
        config: serde_json::to_value(cfg).map_err(nematicon::Error::from)?,
        code_version: CODE_VERSION.to_string(),
        started,
        finished: started,
        tasks,
        files: Vec::new(),
    };
    Ok(manifest.finalize(dir)?)
}

fn ok_task(name: &str) -> Vec<TaskStatus> {
    vec![TaskStatus {
        name: name.to_string(),
        state: TaskState::Ok,
        message: None,
    }]
}

pub fn angle(cfg: &AngleConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    let u = match &cfg.input {
        Some(path) => {
            let grid = read_header(path)?.grid.radial_grid()?;
            load_field::<_, f64>(path, &grid)?
        }
        None => {
            let grid = RadialGrid::new(cfg.r_max, cfg.n)?;
            let (a, w) = (cfg.amplitude, cfg.width);
            RadialField::from_fn(&grid, |r| a * (-r * r / (2.0 * w * w)).exp())
        }
    };
    let sol = solve_angle(&u, &cfg.params(), &AngleOptions::radial().with_tol(cfg.tol), None)?;
    prepare_out(out, force)?;
    save_field(&out.join("theta.field"), &sol.theta)?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "residual": sol.residual,
            "iterations": sol.iterations,
            "theta_max": sol.theta.max_abs(),
        }),
    )?;
    eprintln!("angle: residual {:.2e} after {} Newton steps", sol.residual, sol.iterations);
    finish(out, cfg, started, ok_task("angle"))?;
    Ok(())
}

pub fn ground(cfg: &GroundConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    let gs = obtain_ground(cfg)?;
    prepare_out(out, force)?;
    save_ground(out, &gs)?;
    eprintln!(
        "ground: a = {}, σ = {:.8}, J = {:.10e}, residual {:.1e}",
        gs.a,
        gs.sigma,
        gs.energy(),
        gs.residual
    );
    finish(out, cfg, started, ok_task("ground"))?;
    Ok(())
}

pub fn nehari(cfg: &NehariConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    let grid = RadialGrid::new(cfg.r_max, cfg.n)?;
    let gs = minimize_nehari(&grid, cfg.sigma, &cfg.params(), &NehariOptions::default())?;
    prepare_out(out, force)?;
    save_ground(out, &gs)?;
    eprintln!(
        "nehari: σ = {}, a = {:.8}, c = {:.10e}, residual {:.1e}",
        gs.sigma, gs.a, gs.report.action, gs.residual
    );
    finish(out, cfg, started, ok_task("nehari"))?;
    Ok(())
}

pub fn spectrum(cfg: &SpectrumConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    let gs = obtain_ground(&cfg.ground())?;
    let opts = SpectrumOptions {
        max_k: cfg.max_k,
        count: cfg.count,
        kernel_rel_tol: cfg.kernel_rel_tol,
        ..Default::default()
    };
    let report = coercivity_probe(&gs, &opts)?;
    prepare_out(out, force)?;
    write_json(&out.join("spectrum.json"), &report)?;
    let spectra = report
        .sectors
        .iter()
        .flat_map(|s| {
            let op = if s.block == SectorBlock::Amplitude { 1 } else { 2 };
            s.eigenvalues.iter().enumerate().map(move |(i, &e)| (op, s.k, i, e))
        })
        .collect();
    emit_plot_data(out, &PlotData { spectra, ..Default::default() })?;
    eprintln!(
        "spectrum: τ(𝓛₁) = {:.6}, τ(𝓛₂) = {:.6}, {:?}",
        report.tau_amplitude, report.tau_phase, report.verdict
    );
    finish(out, cfg, started, ok_task("spectrum"))?;
    Ok(())
}

pub fn evolve(cfg: &EvolveConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    let plane = PlaneGrid::new(cfg.box_size, cfg.plane_n)?;
    let p = nematicon::MediumParams::new(cfg.lambda, cfg.q)?;
    let ecfg = EvolutionConfig {
        dz: cfg.dz,
        z_end: cfg.z_end,
        snapshot_every: cfg.snapshot_every,
        record_every: cfg.record_every,
        coupling: cfg.coupling,
        perturbation: cfg.perturbation.clone(),
        ..Default::default()
    };
    let (u0, reference) = match cfg.initial {
        InitialState::Ground => {
            let gs = obtain_ground(&cfg.ground())?;
            let r = PlaneReference::from_ground_state(&gs, &plane, ecfg.angle_tol)?;
            (r.v.clone(), Some(r))
        }
        InitialState::Gaussian => {
            let (a, w) = (cfg.amplitude, cfg.width);
            let u = Field2D::from_fn(&plane, |x, y| Complex64::new(a * (-(x * x + y * y) / (2.0 * w * w)).exp(), 0.0));
            (u, None)
        }
    };
    let theta0 = reference.as_ref().map(|r| &r.phi);
    let trace = propagate(&u0, theta0, &ecfg, &p, reference.as_ref())?;

    prepare_out(out, force)?;
    let mut table = CsvTable::new(["z", "charge", "energy", "angle_residual", "orbital_distance", "phase"]);
    for s in &trace.samples {
        table.push(vec![
            s.z,
            s.charge,
            s.energy,
            s.angle_residual,
            s.orbital_distance.unwrap_or(f64::NAN),
            s.phase.unwrap_or(f64::NAN),
        ])?;
    }
    table.write(&out.join("trace.csv"))?;
    save_field(&out.join("final_u.field"), &trace.final_u)?;
    save_field(&out.join("final_theta.field"), &trace.final_theta)?;
    if !trace.snapshots.is_empty() {
        let snaps = out.join("snapshots");
        std::fs::create_dir_all(&snaps).map_err(nematicon::Error::from)?;
        for (i, (_, u)) in trace.snapshots.iter().enumerate() {
            save_field(&snaps.join(format!("u_{i:05}.field")), u)?;
        }
    }
    let (state, message) = match &trace.status {
        RunStatus::Completed => (TaskState::Ok, None),
        RunStatus::Aborted(m) => (TaskState::Failed, Some(m.clone())),
    };
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "status": trace.status,
            "charge_drift": trace.charge_drift(),
            "energy_drift": trace.energy_drift(),
            "phase_slope": trace.phase_slope(),
            "reference_sigma": reference.as_ref().map(|r| r.sigma),
            "warnings": trace.warnings,
        }),
    )?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "evolve: z = {}, Q drift {:.2e}, E drift {:.2e}",
        cfg.z_end,
        trace.charge_drift(),
        trace.energy_drift()
    );
    finish(
        out,
        cfg,
        started,
        vec![TaskStatus {
            name: "evolve".into(),
            state,
            message: message.clone(),
        }],
    )?;
    match message {
        Some(m) => Err(CliError::Failed(format!("propagation aborted: {m}"))),
        None => Ok(()),
    }
}

pub fn decay(cfg: &DecayConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    let gs = obtain_ground(&cfg.ground())?;
    let (v_fit, phi_fit) = ground_state_decay(&gs)?;
    let aux = auxiliary_w_probe(&gs);
    let bound = radial_bound_check(&gs.v)?;
    prepare_out(out, force)?;
    write_json(
        &out.join("decay.json"),
        &serde_json::json!({
            "sigma": gs.sigma,
            "v": v_fit,
            "phi": phi_fit,
            "linearized_rate": (2.0 * gs.sigma).sqrt(),
            "auxiliary": {
                "r0": aux.r0,
                "min_margin": aux.min_margin,
                "tail_coefficient": aux.tail_coefficient,
            },
            "radial_bound_constant": bound,
        }),
    )?;
    let mut rows = CsvTable::new(["r", "w", "w_rr", "coefficient"]);
    for r in &aux.rows {
        rows.push(vec![r.r, r.w, r.w_rr, r.coefficient])?;
    }
    rows.write(&out.join("auxiliary.csv"))?;
    emit_plot_data(
        out,
        &PlotData {
            decay: vec![v_fit.clone(), phi_fit.clone()],
            ..Default::default()
        },
    )?;
    eprintln!(
        "decay: m_v = {:.4} (√σ = {:.4}), m_φ = {:.4}, R² = {:.6}/{:.6}",
        v_fit.rate,
        gs.sigma.sqrt(),
        phi_fit.rate,
        v_fit.r_squared,
        phi_fit.r_squared
    );
    finish(out, cfg, started, ok_task("decay"))?;
    Ok(())
}

pub fn verify(quick: bool, out: &Path, force: bool) -> Result<(), CliError> {
    let started = nematicon::io::unix_now();
    prepare_out(out, force)?;
    let profile = if quick { Profile::Quick } else { Profile::Full };
    let report = verify::run(profile, Some(out), |r| println!("{}", r.line()))?;
    let tasks = report
        .results
        .iter()
        .map(|r| TaskStatus {
            name: format!("criterion {:02}: {}", r.id, r.name),
            state: if r.passed { TaskState::Ok } else { TaskState::Failed },
            message: Some(r.detail.clone()),
        })
        .collect();
    finish(out, &serde_json::json!({ "profile": profile }), started, tasks)?;
    let failed = report.results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} verification criteria failed")));
    }
    println!("all {} criteria passed", report.results.len());
    Ok(())
}
