//! The twelve-item verification suite shared by the `verify` subcommand and
//! the acceptance test target.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{ground_state_decay, CsvTable};
use crate::angle::{solve_angle, AngleOptions};
use crate::energy::{angle_functional, evaluate, grad_e_u, grad_f_theta, modified_energy_gradient, MediumParams};
use crate::error::{Error, Result};
use crate::evolution::{
    free_gaussian, modulus_deviation, propagate, EvolutionConfig, EvolutionTrace, Perturbation, PlaneReference,
    Propagator,
};
use crate::grid::{Field, Field2D, Geometry, InnerProduct, PlaneGrid, RadialField, RadialGrid, RealField2D, Scalar};
use crate::groundstate::{locate_threshold, minimize_charge, sweep_charge, FlowOptions, GroundState};
use crate::nehari::{minimize_nehari, NehariOptions};
use crate::spectrum::{assemble_sector, coercivity_probe, mode_overlap, translation_mode, SectorBlock, SpectrumOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Default grids and propagation lengths.
    Full,
    /// Coarser radial grid and short propagations.
    Quick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub r_max: f64,
    pub radial_n: usize,
    pub box_size: f64,
    pub plane_n: usize,
    pub dz: f64,
    /// Propagation length for conservation and phase checks.
    pub z_conservation: f64,
    /// Propagation length for the perturbed orbit.
    pub z_orbit: f64,
    pub free_steps: usize,
    pub threshold_bracket: (f64, f64),
    pub threshold_tol: f64,
    pub seed: u64,
}

impl Profile {
    pub fn settings(self) -> Settings {
        let full = Settings {
            r_max: 40.0,
            radial_n: 2048,
            box_size: 40.0,
            plane_n: 256,
            dz: 0.002,
            z_conservation: 20.0,
            z_orbit: 40.0,
            free_steps: 1000,
            threshold_bracket: (2.0, 4.0),
            threshold_tol: 0.01,
            seed: 20240611,
        };
        match self {
            Profile::Full => full,
            Profile::Quick => Settings {
                radial_n: 1024,
                z_conservation: 1.0,
                z_orbit: 2.0,
                threshold_tol: 0.05,
                ..full
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub profile: Profile,
    pub settings: Settings,
    pub results: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

/// A check either passes or fails with the measured numbers.
type Check = Result<(bool, String)>;

struct Context {
    settings: Settings,
    params: MediumParams,
    radial: Arc<RadialGrid>,
    plane: Arc<PlaneGrid>,
    ground: std::result::Result<(f64, GroundState), String>,
    reference: Option<std::result::Result<PlaneReference, String>>,
}

impl Context {
    fn new(settings: Settings) -> Result<Self> {
        let params = MediumParams::default();
        let radial = RadialGrid::new(settings.r_max, settings.radial_n)?;
        let plane = PlaneGrid::new(settings.box_size, settings.plane_n)?;
        let ground = locate_ground(&radial, &params, &settings).map_err(|e| e.to_string());
        Ok(Self {
            settings,
            params,
            radial,
            plane,
            ground,
            reference: None,
        })
    }

    fn ground(&self) -> Result<(f64, &GroundState)> {
        match &self.ground {
            Ok((a0, gs)) => Ok((*a0, gs)),
            Err(e) => Err(Error::InvalidParameter(format!("ground state unavailable: {e}"))),
        }
    }

    fn reference(&mut self) -> Result<&PlaneReference> {
        if self.reference.is_none() {
            let r = self
                .ground()
                .and_then(|(_, gs)| PlaneReference::from_ground_state(gs, &self.plane, AngleOptions::plane().tol))
                .map_err(|e| e.to_string());
            self.reference = Some(r);
        }
        match self.reference.as_ref().unwrap() {
            Ok(r) => Ok(r),
            Err(e) => Err(Error::InvalidParameter(format!("plane reference unavailable: {e}"))),
        }
    }
}

fn locate_ground(grid: &Arc<RadialGrid>, p: &MediumParams, s: &Settings) -> Result<(f64, GroundState)> {
    let t = locate_threshold(grid, p, s.threshold_bracket, s.threshold_tol, &FlowOptions::default())?;
    let a = 2.0 * t.a0;
    let gs = minimize_charge(grid, a, p, &FlowOptions::default())?
        .ground()
        .ok_or_else(|| Error::InvalidParameter(format!("no ground state at a = {a}")))?;
    Ok((t.a0, gs))
}

/// Run all criteria in order, reporting each as it finishes.
pub fn run(profile: Profile, artifacts: Option<&Path>, mut on_result: impl FnMut(&CriterionResult)) -> Result<VerifyReport> {
    let settings = profile.settings();
    if let Some(dir) = artifacts {
        std::fs::create_dir_all(dir)?;
    }
    let setup = Instant::now();
    let mut ctx = Context::new(settings.clone())?;
    let setup_seconds = setup.elapsed().as_secs_f64();

    let mut results = Vec::new();
    let mut record = |id: u32, name: &str, start: Instant, check: Check| {
        let (passed, detail) = match check {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let r = CriterionResult {
            id,
            name: name.to_string(),
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_result(&r);
        results.push(r);
    };

    let t = Instant::now();
    record(1, "angle fidelity", t, angle_fidelity(&ctx));
    let t = Instant::now();
    record(2, "gradient consistency", t, gradient_consistency(&ctx));
    let t = Instant::now();
    let c3 = ground_state_identities(&ctx).map(|(ok, d)| (ok, format!("{d}; setup {setup_seconds:.1} s")));
    record(3, "fixed-charge ground state", t, c3);
    let t = Instant::now();
    record(4, "charge sweep monotonicity", t, charge_sweep(&ctx));
    let t = Instant::now();
    record(5, "cross-solver oracle", t, cross_solver(&ctx));
    let t = Instant::now();
    record(6, "spectral kernel structure", t, kernel_structure(&ctx));
    let t = Instant::now();
    record(7, "coercivity", t, coercivity(&ctx));
    let t = Instant::now();
    let (c8, c9) = match conservation_runs(&mut ctx) {
        Ok((base, half)) => (conservation(&base, &half), stationarity(&mut ctx, &base)),
        Err(e) => {
            let msg = e.to_string();
            (Err(Error::InvalidParameter(msg.clone())), Err(Error::InvalidParameter(msg)))
        }
    };
    record(8, "conservation", t, c8);
    let t = Instant::now();
    record(9, "stationarity and phase", t, c9);
    let t = Instant::now();
    record(10, "orbital stability probe", t, orbital_probe(&mut ctx, artifacts));
    let t = Instant::now();
    record(11, "decay", t, decay(&ctx));
    let t = Instant::now();
    record(12, "free-evolution oracle", t, free_evolution(&ctx));

    let report = VerifyReport {
        profile,
        settings,
        results,
    };
    if let Some(dir) = artifacts {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        crate::io::write_atomic(&dir.join("verify_report.json"), text.as_bytes())?;
    }
    Ok(report)
}

/// A flat-topped beam of random height; the angle is locally balanced on `r < radius - 12`,
/// many screening lengths inside the edge.
fn random_plateau(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> (RadialField, f64) {
    let height = rng.gen_range(0.2..2.0);
    let radius = rng.gen_range(20.0..28.0);
    let edge = rng.gen_range(1.0..2.0);
    let u = RadialField::from_fn(grid, |r| height * 0.5 * (1.0 - ((r - radius) / edge).tanh()));
    (u, radius - 12.0)
}

fn angle_fidelity(ctx: &Context) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.settings.seed);
    let opts = AngleOptions::radial().with_tol(1e-10);
    let (mut worst_res, mut worst_plateau, mut in_range) = (0.0f64, 0.0f64, true);
    for _ in 0..10 {
        let (u, plateau) = random_plateau(&ctx.radial, &mut rng);
        let sol = solve_angle(&u, &ctx.params, &opts, None)?;
        worst_res = worst_res.max(sol.residual);
        in_range &= sol.theta.values().iter().all(|t| (0.0..=FRAC_PI_4).contains(t));
        let nodes = ctx.radial.nodes();
        for i in 0..nodes.len() {
            if nodes[i] <= plateau {
                let uu = u.values()[i];
                let oracle = 0.5 * (2.0 * uu * uu / ctx.params.q).atan();
                worst_plateau = worst_plateau.max((sol.theta.values()[i] - oracle).abs());
            }
        }
    }
    Ok((
        worst_res < 1e-10 && in_range && worst_plateau < 1e-3,
        format!("max residual {worst_res:.2e}, θ in [0, π/4]: {in_range}, plateau error {worst_plateau:.2e}"),
    ))
}

fn smooth_random(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng, scale: f64) -> RadialField {
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = rng.gen_range(1.0..4.0);
    RadialField::from_fn(grid, |r| {
        let x = r / w;
        scale * (c[0] + c[1] * x + c[2] * x * x + c[3] * (2.0 * x).cos()) * (-x * x).exp()
    })
}

/// Worst relative mismatch between a central difference of `f` and the
/// pairing of `grad` with each direction.
fn directional_mismatch<G: Geometry, T: Scalar>(
    f: impl Fn(&Field<G, T>) -> Result<f64>,
    grad: &Field<G, T>,
    x: &Field<G, T>,
    dirs: &[Field<G, T>],
) -> Result<f64> {
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for d in dirs {
        let fd = (f(&x.add_scaled(eps, d)?)? - f(&x.add_scaled(-eps, d)?)?) / (2.0 * eps);
        let an = grad.inner(d, InnerProduct::L2)?;
        worst = worst.max((fd - an).abs() / an.abs().max(1e-8));
    }
    Ok(worst)
}

fn gradient_consistency(ctx: &Context) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.settings.seed + 1);
    let p = ctx.params;
    let g = &ctx.radial;
    let u = smooth_random(g, &mut rng, 1.0);
    let th = smooth_random(g, &mut rng, 0.3).map(|t| t.abs().min(FRAC_PI_4));
    let dirs: Vec<RadialField> = (0..20).map(|_| smooth_random(g, &mut rng, 1.0)).collect();

    let e_u = directional_mismatch(|x| Ok(evaluate(x, &th, &p, 0.0)?.e), &grad_e_u(&u, &th)?, &u, &dirs)?;
    let f_th = directional_mismatch(|x| angle_functional(&u, x, &p), &grad_f_theta(&u, &th, &p)?, &th, &dirs)?;

    let sigma = 0.4;
    let opts = AngleOptions::radial();
    let theta_u = solve_angle(&u, &p, &opts, None)?.theta;
    let e_sigma = directional_mismatch(
        |x| {
            let t = solve_angle(x, &p, &opts, Some(&theta_u))?.theta;
            Ok(evaluate(x, &t, &p, sigma)?.action)
        },
        &modified_energy_gradient(&u, &theta_u, sigma)?,
        &u,
        &dirs,
    )?;

    let plane = PlaneGrid::new(16.0, 64)?;
    let mut rand_plane = |s: f64| {
        let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5));
        Field2D::from_fn(&plane, move |x, y| {
            Complex64::new(a + x / 4.0, b - y / 3.0) * (s * (-(x * x + y * y) / (4.0 * c * c)).exp())
        })
    };
    let up = rand_plane(1.0);
    let thp: RealField2D = rand_plane(0.4).map(|z| z.re.abs().min(FRAC_PI_4));
    let pdirs: Vec<Field2D> = (0..20).map(|_| rand_plane(1.0)).collect();
    let e_plane = directional_mismatch(|x| Ok(evaluate(x, &thp, &p, 0.0)?.e), &grad_e_u(&up, &thp)?, &up, &pdirs)?;

    let worst = e_u.max(f_th).max(e_sigma).max(e_plane);
    Ok((
        worst < 1e-5,
        format!("relative mismatch: E_u {e_u:.1e}, F_θ {f_th:.1e}, E_σ {e_sigma:.1e}, plane E_u {e_plane:.1e}"),
    ))
}

fn ground_state_identities(ctx: &Context) -> Check {
    let (a0, gs) = ctx.ground()?;
    let (r1, r2) = gs.residuals()?;
    let virial = gs.virial_defect();
    let sigma_ok = gs.sigma > 1e-3 && gs.sigma < 1.0 - 1e-3;
    let j = gs.energy();
    Ok((
        r1 < 1e-8 && r2 < 1e-8 && sigma_ok && virial < 1e-6 && j < 0.0,
        format!(
            "threshold {a0:.4}, a = {:.4}: residuals {r1:.1e}/{r2:.1e}, σ = {:.6}, virial {virial:.1e}, J = {j:.6e}",
            gs.a, gs.sigma
        ),
    ))
}

fn charge_sweep(ctx: &Context) -> Check {
    let (_, gs) = ctx.ground()?;
    let a_list: Vec<f64> = (0..8).map(|i| gs.a * (0.6 + 0.2 * i as f64)).collect();
    let sweep = sweep_charge(&ctx.radial, &a_list, &ctx.params, &FlowOptions::default(), true)?;
    let sig = sweep.sigma_values();
    let j = sweep.j_values();
    if sig.iter().chain(&j).any(Option::is_none) {
        return Ok((false, "a sweep point has no ground state".into()));
    }
    let sig: Vec<f64> = sig.into_iter().flatten().collect();
    let j: Vec<f64> = j.into_iter().flatten().collect();
    let increasing = sig.windows(2).all(|w| w[1] > w[0]);
    let nonincreasing = j.windows(2).all(|w| w[1] <= w[0]);
    let mut worst_gap = f64::INFINITY;
    for i in 0..a_list.len() {
        for k in i + 1..a_list.len() {
            worst_gap = worst_gap.min(a_list[k] / a_list[i] * j[i] - j[k]);
        }
    }
    Ok((
        increasing && nonincreasing && worst_gap > 0.0,
        format!(
            "σ {:.4}..{:.4} increasing: {increasing}; J nonincreasing: {nonincreasing}; min subadditivity gap {worst_gap:.3e}",
            sig[0],
            sig[sig.len() - 1]
        ),
    ))
}

fn cross_solver(ctx: &Context) -> Check {
    let (_, gs) = ctx.ground()?;
    let n = minimize_nehari(&ctx.radial, gs.sigma, &ctx.params, &NehariOptions::default())?;
    let da = (n.a - gs.a).abs() / gs.a;
    let de = (n.energy() - gs.energy()).abs() / gs.energy().abs();
    Ok((
        da < 1e-3 && de < 1e-5,
        format!("charge rel. diff {da:.2e}, energy rel. diff {de:.2e}"),
    ))
}

fn kernel_structure(ctx: &Context) -> Check {
    let (_, gs) = ctx.ground()?;
    let rep = coercivity_probe(gs, &SpectrumOptions::default())?;

    let phase = assemble_sector(gs, 0, SectorBlock::Phase)?;
    let m2 = &phase.eigensolve(1)?[0];
    let ov2 = mode_overlap(m2, &gs.v, None)?;
    let tol2 = rep.sector(SectorBlock::Phase, 0).map(|s| s.kernel_tol).unwrap_or(0.0);

    let amp1 = assemble_sector(gs, 1, SectorBlock::Amplitude)?;
    let m1 = &amp1.eigensolve(1)?[0];
    let (dv, dphi) = translation_mode(gs);
    let ov1 = mode_overlap(m1, &dv, Some(&dphi))?;
    let tol1 = rep.sector(SectorBlock::Amplitude, 1).map(|s| s.kernel_tol).unwrap_or(0.0);

    let mut higher = Vec::new();
    for k in 2..=3 {
        higher.push(assemble_sector(gs, k, SectorBlock::Amplitude)?.eigensolve(1)?[0].value);
    }
    let ok = ov2 > 0.999
        && m2.value.abs() < tol2
        && ov1 > 0.999
        && m1.value.abs() < tol1
        && higher.iter().all(|&x| x > 0.0);
    Ok((
        ok,
        format!(
            "𝓛₂ k=0: λ = {:.2e} (tol {tol2:.1e}), overlap {ov2:.6}; 𝓛₁ k=1: λ = {:.2e} (tol {tol1:.1e}), overlap {ov1:.6}; k=2,3 lowest {:.4}, {:.4}",
            m2.value, m1.value, higher[0], higher[1]
        ),
    ))
}

fn coercivity(ctx: &Context) -> Check {
    let (_, gs) = ctx.ground()?;
    let rep = coercivity_probe(gs, &SpectrumOptions::default())?;
    let fine_grid = RadialGrid::new(ctx.settings.r_max, 2 * ctx.settings.radial_n)?;
    let fine = minimize_charge(&fine_grid, gs.a, &ctx.params, &FlowOptions::default())?
        .ground()
        .ok_or_else(|| Error::InvalidParameter("no ground state on the refined grid".into()))?;
    let rep_fine = coercivity_probe(&fine, &SpectrumOptions::default())?;
    let change = |a: f64, b: f64| (a - b).abs() / a.abs();
    let (ca, cp) = (
        change(rep.tau_amplitude, rep_fine.tau_amplitude),
        change(rep.tau_phase, rep_fine.tau_phase),
    );
    Ok((
        rep.tau_amplitude > 0.0 && rep.tau_phase > 0.0 && ca < 0.2 && cp < 0.2,
        format!(
            "τ(𝓛₁) = {:.5} → {:.5} ({:.1}%), τ(𝓛₂) = {:.5} → {:.5} ({:.1}%)",
            rep.tau_amplitude,
            rep_fine.tau_amplitude,
            100.0 * ca,
            rep.tau_phase,
            rep_fine.tau_phase,
            100.0 * cp
        ),
    ))
}

fn conservation_runs(ctx: &mut Context) -> Result<(EvolutionTrace, EvolutionTrace)> {
    let s = ctx.settings.clone();
    let p = ctx.params;
    let r = ctx.reference()?.clone();
    let run = |dz: f64| {
        let cfg = EvolutionConfig {
            dz,
            z_end: s.z_conservation,
            record_every: ((0.1 / dz).round() as usize).max(1),
            ..Default::default()
        };
        propagate(&r.v, Some(&r.phi), &cfg, &p, Some(&r))
    };
    Ok((run(s.dz)?, run(0.5 * s.dz)?))
}

fn conservation(base: &EvolutionTrace, half: &EvolutionTrace) -> Check {
    for t in [base, half] {
        if let crate::evolution::RunStatus::Aborted(msg) = &t.status {
            return Ok((false, format!("run aborted: {msg}")));
        }
    }
    let (dq, de) = (base.charge_drift(), base.energy_drift());
    let ratio = de / half.energy_drift();
    Ok((
        dq < 1e-10 && de < 1e-6 && (3.0..=5.0).contains(&ratio),
        format!(
            "Q drift {dq:.2e}, E drift {de:.2e}, E drift at dz/2 {:.2e} (ratio {ratio:.2})",
            half.energy_drift()
        ),
    ))
}

fn stationarity(ctx: &mut Context, base: &EvolutionTrace) -> Check {
    let r = ctx.reference()?;
    let dev = modulus_deviation(&base.final_u, &r.v)?;
    let slope = base
        .phase_slope()
        .ok_or_else(|| Error::InvalidParameter("too few phase samples".into()))?;
    // u ~ e^{iσz} v gives arg⟨u, v⟩ = σz
    let rel = (slope - r.sigma).abs() / r.sigma;
    Ok((
        dev < 1e-4 && rel < 1e-3,
        format!("modulus deviation {dev:.2e}, phase slope {slope:.6} vs σ = {:.6} ({rel:.1e})", r.sigma),
    ))
}

fn orbital_probe(ctx: &mut Context, artifacts: Option<&Path>) -> Check {
    let s = ctx.settings.clone();
    let p = ctx.params;
    let r = ctx.reference()?.clone();
    let cfg = EvolutionConfig {
        dz: s.dz,
        z_end: s.z_orbit,
        record_every: ((0.1 / s.dz).round() as usize).max(1),
        perturbation: Some(Perturbation::Bump {
            amplitude: 0.01,
            width: 2.0,
        }),
        ..Default::default()
    };
    let trace = propagate(&r.v, Some(&r.phi), &cfg, &p, Some(&r))?;
    if let crate::evolution::RunStatus::Aborted(msg) = &trace.status {
        return Ok((false, format!("run aborted: {msg}")));
    }
    let d = trace.orbital_distance_series();
    let d0 = d[0];
    let peak = d.iter().copied().fold(0.0, f64::max);
    if let Some(dir) = artifacts {
        let mut table = CsvTable::new(["z", "orbital_distance"]);
        for (z, x) in trace.z_values().into_iter().zip(&d) {
            table.push(vec![z, *x])?;
        }
        table.write(&dir.join("orbital_envelope.csv"))?;
    }
    Ok((
        peak < 5.0 * d0,
        format!("initial distance {d0:.3e}, max {peak:.3e} (ratio {:.2}) up to z = {}", peak / d0, s.z_orbit),
    ))
}

fn decay(ctx: &Context) -> Check {
    let (_, gs) = ctx.ground()?;
    let (v, phi) = ground_state_decay(gs)?;
    let sharp = (2.0 * gs.sigma).sqrt();
    let near = (v.rate - sharp).abs() / sharp;
    Ok((
        v.rate >= gs.sigma.sqrt() - 0.02 && near < 0.1 && phi.valid,
        format!(
            "m_v = {:.4} (√σ = {:.4}, √(2σ) = {sharp:.4}, {:.1}% off), φ rate {:.4} R² = {:.6}",
            v.rate,
            gs.sigma.sqrt(),
            100.0 * near,
            phi.rate,
            phi.r_squared
        ),
    ))
}

fn free_evolution(ctx: &Context) -> Check {
    let s = &ctx.settings;
    let width = 2.0;
    let u0 = free_gaussian(&ctx.plane, width, 0.0);
    let cfg = EvolutionConfig {
        dz: s.dz,
        coupling: false,
        ..Default::default()
    };
    let mut prop = Propagator::new(&u0, None, s.dz, &cfg, &ctx.params)?;
    for _ in 0..s.free_steps {
        prop.step()?;
    }
    let exact = free_gaussian(&ctx.plane, width, prop.z());
    let err = prop.u()?.add_scaled(-1.0, &exact)?.norm(InnerProduct::L2) / exact.norm(InnerProduct::L2);
    Ok((
        err < 1e-6,
        format!("relative L² error {err:.2e} after {} steps (z = {:.3})", s.free_steps, prop.z()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_profile_is_coarser() {
        let (f, q) = (Profile::Full.settings(), Profile::Quick.settings());
        assert!(q.radial_n < f.radial_n);
        assert!(q.z_conservation < f.z_conservation && q.z_orbit < f.z_orbit);
        assert_eq!(f.radial_n, 2048);
        assert_eq!((f.plane_n, f.box_size, f.dz), (256, 40.0, 0.002));
    }

    #[test]
    fn result_line_names_the_outcome() {
        let r = CriterionResult {
            id: 3,
            name: "x".into(),
            passed: false,
            detail: "d".into(),
            seconds: 1.0,
        };
        assert!(r.line().starts_with("[FAIL]  3. x"));
    }
}
