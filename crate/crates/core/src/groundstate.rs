//! Fixed-charge ground states: minimize `E(u, Θ(u))` over `‖u‖² = a` by a
//! preconditioned normalized gradient flow, then polish `(v, φ, σ)` with
//! Newton's method on the stationary system
//!
//! ```text
//! -Δv + 2σv - 2v sin 2φ = 0,      -λΔφ + q sin 2φ - 2v² cos 2φ = 0.
//! ```
//!
//! Below the existence threshold the infimum is zero and is not attained:
//! the flow spreads the beam out. On a bounded grid the spreading stops at
//! the box scale, so the solver classifies a state as "no ground state" when
//! its energy is nonnegative once it has converged or spread over the box.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::angle::{solve_angle, AngleOptions};
use crate::energy::{evaluate, grad_e_u, EnergyReport, MediumParams};
use crate::error::{Error, Result};
use crate::grid::{Geometry, InnerProduct, RadialField, RadialGrid};
use crate::linalg::BandMatrix;

/// Which solver produced a [`GroundState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ChargeFlow,
    Nehari,
}

/// A stationary wave `(e^{iσz} v, φ)`.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub v: RadialField,
    pub phi: RadialField,
    pub sigma: f64,
    /// `‖v‖²`.
    pub a: f64,
    pub params: MediumParams,
    pub report: EnergyReport,
    /// Larger of the sup-norm residuals of the two stationary equations.
    pub residual: f64,
    pub solver: Provenance,
}

/// Sup-norm residuals of the amplitude and angle equations.
pub fn stationary_residuals(v: &RadialField, phi: &RadialField, sigma: f64, p: &MediumParams) -> Result<(f64, f64)> {
    v.check_same_grid(phi)?;
    let lap_v = v.laplacian()?;
    let lap_phi = phi.laplacian()?;
    let mut r_amp = 0.0f64;
    let mut r_ang = 0.0f64;
    for i in 0..v.values().len() {
        let (vi, fi) = (v.values()[i], phi.values()[i]);
        let (s, c) = (2.0 * fi).sin_cos();
        r_amp = r_amp.max((-lap_v.values()[i] + 2.0 * sigma * vi - 2.0 * vi * s).abs());
        r_ang = r_ang.max((-p.lambda * lap_phi.values()[i] + p.q * s - 2.0 * vi * vi * c).abs());
    }
    Ok((r_amp, r_ang))
}

impl GroundState {
    /// Assemble a state from converged profiles, evaluating its energy split
    /// and residuals.
    pub fn from_profiles(
        v: RadialField,
        phi: RadialField,
        sigma: f64,
        params: MediumParams,
        solver: Provenance,
    ) -> Result<Self> {
        let report = evaluate(&v, &phi, &params, sigma)?;
        let (r_amp, r_ang) = stationary_residuals(&v, &phi, sigma, &params)?;
        let a = v.norm_squared(InnerProduct::L2);
        Ok(Self {
            v,
            phi,
            sigma,
            a,
            params,
            report,
            residual: r_amp.max(r_ang),
            solver,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.v.grid()
    }

    /// Minimal energy `J_a` (for charge-flow states) or `E` at the state.
    pub fn energy(&self) -> f64 {
        self.report.e
    }

    /// Relative defect of `-4E⁻ = 2σ‖v‖²`.
    pub fn virial_defect(&self) -> f64 {
        let lhs = 2.0 * self.sigma * self.a;
        (lhs + 4.0 * self.report.e_minus).abs() / lhs.abs()
    }

    pub fn residuals(&self) -> Result<(f64, f64)> {
        stationary_residuals(&self.v, &self.phi, self.sigma, &self.params)
    }
}

/// Gaussian `e^{-r²/(2w²)}` scaled to `‖u‖² = a`.
pub fn gaussian_profile(grid: &Arc<RadialGrid>, a: f64, width: f64) -> RadialField {
    let g = RadialField::from_fn(grid, |r| (-r * r / (2.0 * width * width)).exp());
    rescale_to_charge(&g, a)
}

/// Ring `r² e^{-r²/(2w²)}` scaled to `‖u‖² = a`.
pub fn ring_profile(grid: &Arc<RadialGrid>, a: f64, width: f64) -> RadialField {
    let g = RadialField::from_fn(grid, |r| r * r * (-r * r / (2.0 * width * width)).exp());
    rescale_to_charge(&g, a)
}

pub fn rescale_to_charge(u: &RadialField, a: f64) -> RadialField {
    let n2 = u.norm_squared(InnerProduct::L2);
    u.scaled((a / n2).sqrt())
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    /// Sup-norm tolerance on both stationary residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial pseudo-time step of the preconditioned flow.
    pub step: f64,
    /// Shift `μ` of the preconditioner `½(-Δ) + μ`.
    pub shift: f64,
    /// Starting profile; defaults to a Gaussian of width 2 at the target charge.
    pub initial: Option<RadialField>,
    /// Residual below which the Newton polish takes over; `None` disables it.
    pub polish_below: Option<f64>,
    pub polish_iterations: usize,
    /// Consecutive rejected steps tolerated before giving up.
    pub rejection_window: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            step: 1.0,
            shift: 0.25,
            initial: None,
            polish_below: Some(1e-4),
            polish_iterations: 8,
            rejection_window: 50,
        }
    }
}

/// Why the flow found no ground state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vanishing {
    /// The sup-norm collapsed below `1e-8` of its initial value.
    Collapsed,
    /// At nonnegative energy, the beam spread to the box scale: its rms
    /// radius exceeds `r_max / 4` or most charge lies beyond `r_max / 2`.
    Spread,
    /// The flow converged to a state of nonnegative energy (a box mode).
    NonNegativeEnergy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    pub reason: Vanishing,
    pub iterations: usize,
    pub energy: f64,
    /// Final sup-norm divided by the initial one.
    pub sup_ratio: f64,
    /// Fraction of the charge beyond `r_max / 2`.
    pub outer_fraction: f64,
}

#[derive(Clone, Debug)]
pub enum ChargeMinimum {
    Ground(GroundState),
    NoGroundState(FlowDiagnostics),
}

impl ChargeMinimum {
    pub fn ground(self) -> Option<GroundState> {
        match self {
            ChargeMinimum::Ground(g) => Some(g),
            ChargeMinimum::NoGroundState(_) => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, ChargeMinimum::Ground(_))
    }
}

fn outer_fraction(u: &RadialField) -> f64 {
    let grid = u.grid();
    let half = 0.5 * grid.r_max();
    let vals = u.values();
    let total = grid.integrate(|i| vals[i] * vals[i]);
    let outer = grid.integrate(|i| if grid.nodes()[i] > half { vals[i] * vals[i] } else { 0.0 });
    outer / total
}

/// Root-mean-square radius `(∫ r² u² / ∫ u²)^{1/2}`.
pub fn rms_radius(u: &RadialField) -> f64 {
    let grid = u.grid();
    let vals = u.values();
    let total = grid.integrate(|i| vals[i] * vals[i]);
    let moment = grid.integrate(|i| grid.nodes()[i].powi(2) * vals[i] * vals[i]);
    (moment / total).sqrt()
}

fn angle_opts() -> AngleOptions {
    AngleOptions::radial().with_tol(1e-11)
}

/// Minimize `E` on the charge sphere `‖u‖² = a`.
pub fn minimize_charge(
    grid: &Arc<RadialGrid>,
    a: f64,
    p: &MediumParams,
    opts: &FlowOptions,
) -> Result<ChargeMinimum> {
    p.validate()?;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("charge must be positive, got {a}")));
    }
    let mut u = match &opts.initial {
        Some(init) => {
            if !init.grid().same_as(grid) {
                return Err(Error::GridMismatch);
            }
            if init.norm_squared(InnerProduct::L2) == 0.0 {
                return Err(Error::InvalidParameter("initial profile is zero".into()));
            }
            rescale_to_charge(init, a)
        }
        None => gaussian_profile(grid, a, 2.0),
    };
    let initial_sup = u.max_abs();
    let mut theta = solve_angle(&u, p, &angle_opts(), None)?.theta;
    let mut energy = evaluate(&u, &theta, p, 0.0)?.e;
    let mut tau = opts.step;
    let mut rejections = 0;
    let mut best_residual = f64::INFINITY;

    let shift = vec![opts.shift; grid.len()];
    let precond = |rhs: &[f64]| grid.solve_screened(0.5, &shift, rhs, None, 0.0);

    for iteration in 0..opts.max_iter {
        let g = grad_e_u(&u, &theta)?;
        let sigma = -g.inner(&u, InnerProduct::L2)? / a;
        let r_amp = g
            .values()
            .iter()
            .zip(u.values())
            .fold(0.0f64, |m, (gi, ui)| m.max((2.0 * (gi + sigma * ui)).abs()));
        best_residual = best_residual.min(r_amp);

        let sup_ratio = u.max_abs() / initial_sup;
        let outer = outer_fraction(&u);
        let diagnostics = |reason| FlowDiagnostics {
            reason,
            iterations: iteration,
            energy,
            sup_ratio,
            outer_fraction: outer,
        };
        if sup_ratio < 1e-8 {
            return Ok(ChargeMinimum::NoGroundState(diagnostics(Vanishing::Collapsed)));
        }
        if energy >= 0.0 && (outer > 0.5 || rms_radius(&u) > 0.25 * grid.r_max()) {
            return Ok(ChargeMinimum::NoGroundState(diagnostics(Vanishing::Spread)));
        }

        if let Some(threshold) = opts.polish_below {
            if r_amp < threshold {
                if let Ok((v, phi, s)) = newton_polish(&u, &theta, sigma, Some(a), p, opts.polish_iterations) {
                    let state = GroundState::from_profiles(v, phi, s, *p, Provenance::ChargeFlow)?;
                    if state.residual < opts.tol {
                        if state.energy() >= 0.0 {
                            let mut d = diagnostics(Vanishing::NonNegativeEnergy);
                            d.energy = state.energy();
                            return Ok(ChargeMinimum::NoGroundState(d));
                        }
                        return Ok(ChargeMinimum::Ground(normalize_sign(state)?));
                    }
                }
            }
        }
        if r_amp < opts.tol {
            let (_, r_ang) = stationary_residuals(&u, &theta, sigma, p)?;
            if r_ang < opts.tol {
                if energy >= 0.0 {
                    return Ok(ChargeMinimum::NoGroundState(diagnostics(Vanishing::NonNegativeEnergy)));
                }
                let state = GroundState::from_profiles(u, theta, sigma, *p, Provenance::ChargeFlow)?;
                return Ok(ChargeMinimum::Ground(normalize_sign(state)?));
            }
        }

        // tangent direction of the preconditioned gradient
        let pg = precond(g.values())?;
        let pu = precond(u.values())?;
        let uv = u.values();
        let w = grid.weights();
        let pg_u: f64 = (0..uv.len()).map(|i| w[i] * pg[i] * uv[i]).sum();
        let pu_u: f64 = (0..uv.len()).map(|i| w[i] * pu[i] * uv[i]).sum();
        let beta = pg_u / pu_u;
        let dir: Vec<f64> = pg.iter().zip(&pu).map(|(a, b)| a - beta * b).collect();

        let window_start_tau = tau;
        loop {
            let trial_vals: Vec<f64> = uv.iter().zip(&dir).map(|(x, d)| x - tau * d).collect();
            let trial = rescale_to_charge(&RadialField::new(grid.clone(), trial_vals)?, a);
            let trial_theta = solve_angle(&trial, p, &angle_opts(), Some(&theta))?.theta;
            let trial_energy = evaluate(&trial, &trial_theta, p, 0.0)?.e;
            if trial_energy <= energy + 1e-12 {
                u = trial;
                theta = trial_theta;
                energy = trial_energy;
                rejections = 0;
                tau = (tau * 1.25).min(50.0 * opts.step);
                break;
            }
            rejections += 1;
            tau *= 0.5;
            if rejections >= opts.rejection_window {
                return Err(Error::StepTooLarge {
                    window: opts.rejection_window,
                    suggested: 0.5 * window_start_tau.min(opts.step),
                });
            }
        }
    }
    Err(Error::NoConvergence {
        solver: "charge flow",
        iterations: opts.max_iter,
        residual: best_residual,
    })
}

fn normalize_sign(mut state: GroundState) -> Result<GroundState> {
    let sum: f64 = state.v.values().iter().sum();
    if sum < 0.0 {
        state.v = state.v.scaled(-1.0);
    }
    Ok(state)
}

/// Newton's method on the stationary system, with the charge constraint
/// `‖v‖² = a` and `σ` as extra unknown when `charge` is given, or at fixed
/// `σ` otherwise. Unknowns are interleaved per node so the Jacobian is a
/// band matrix of half-width two.
pub fn newton_polish(
    v: &RadialField,
    phi: &RadialField,
    sigma: f64,
    charge: Option<f64>,
    p: &MediumParams,
    max_iter: usize,
) -> Result<(RadialField, RadialField, f64)> {
    v.check_same_grid(phi)?;
    let grid = v.grid().clone();
    let n = grid.len();
    let w = grid.weights().to_vec();
    let mut x: Vec<f64> = v.values().to_vec();
    let mut f: Vec<f64> = phi.values().to_vec();
    let mut s = sigma;

    let residual_vec = |x: &[f64], f: &[f64], s: f64| -> (Vec<f64>, f64) {
        let lap_x = grid.laplacian(x);
        let lap_f = grid.laplacian(f);
        let mut r = vec![0.0; 2 * n];
        for i in 0..n {
            let (sn, cs) = (2.0 * f[i]).sin_cos();
            r[2 * i] = -lap_x[i] + 2.0 * s * x[i] - 2.0 * x[i] * sn;
            r[2 * i + 1] = -p.lambda * lap_f[i] + p.q * sn - 2.0 * x[i] * x[i] * cs;
        }
        let c = charge.map_or(0.0, |a| (0..n).map(|i| w[i] * x[i] * x[i]).sum::<f64>() - a);
        (r, c)
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let (mut r, mut c) = residual_vec(&x, &f, s);
    let mut res = sup(&r);
    for _ in 0..max_iter {
        if res < 1e-12 {
            break;
        }
        let jac = stationary_jacobian(&grid, &x, &f, s, p);
        let lu = jac.factor()?;
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let y1 = lu.solve(&minus_r);
        let (dx, ds) = match charge {
            Some(_) => {
                // bordered system: J δ + 2x δσ = -r, Σ 2 w x δ = -c
                let b: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 0 { 2.0 * x[k / 2] } else { 0.0 }).collect();
                let y2 = lu.solve(&b);
                let cy1: f64 = (0..n).map(|i| 2.0 * w[i] * x[i] * y1[2 * i]).sum();
                let cy2: f64 = (0..n).map(|i| 2.0 * w[i] * x[i] * y2[2 * i]).sum();
                let ds = (cy1 + c) / cy2;
                let dx: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - ds * b).collect();
                (dx, ds)
            }
            None => (y1, 0.0),
        };
        let nx: Vec<f64> = (0..n).map(|i| x[i] + dx[2 * i]).collect();
        let nf: Vec<f64> = (0..n).map(|i| f[i] + dx[2 * i + 1]).collect();
        let ns = s + ds;
        let (nr, nc) = residual_vec(&nx, &nf, ns);
        let nres = sup(&nr);
        if !(nres < res) {
            break;
        }
        x = nx;
        f = nf;
        s = ns;
        r = nr;
        c = nc;
        res = nres;
    }
    Ok((
        RadialField::new(grid.clone(), x)?,
        RadialField::new(grid, f)?,
        s,
    ))
}

/// Jacobian of the stationary system in interleaved `(v_i, φ_i)` ordering.
/// In the symmetric weighted form this is the linearized operator `𝓛₁`.
pub(crate) fn stationary_jacobian(
    grid: &RadialGrid,
    v: &[f64],
    phi: &[f64],
    sigma: f64,
    p: &MediumParams,
) -> BandMatrix {
    let n = grid.len();
    let mut m = BandMatrix::zeros(2 * n, 2, 2);
    for i in 0..n {
        let (lo, d, up) = grid.neg_laplacian_row(i);
        let (sn, cs) = (2.0 * phi[i]).sin_cos();
        let (a, b) = (2 * i, 2 * i + 1);
        m.add(a, a, d + 2.0 * sigma - 2.0 * sn);
        m.add(a, b, -4.0 * v[i] * cs);
        m.add(b, a, -4.0 * v[i] * cs);
        m.add(b, b, p.lambda * d + 2.0 * p.q * cs + 4.0 * v[i] * v[i] * sn);
        if i > 0 {
            m.add(a, a - 2, lo);
            m.add(b, b - 2, p.lambda * lo);
        }
        if i + 1 < n {
            m.add(a, a + 2, up);
            m.add(b, b + 2, p.lambda * up);
        }
    }
    m
}

/// Outcome of one sweep point.
#[derive(Clone, Debug)]
pub enum SweepOutcome {
    Ground(GroundState),
    NoGroundState(FlowDiagnostics),
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct ChargeSweepEntry {
    pub a: f64,
    pub outcome: SweepOutcome,
}

/// `J_a`, `σ(a)` and forward difference quotients of `σ` along a list of charges.
#[derive(Clone, Debug)]
pub struct ChargeSweep {
    pub entries: Vec<ChargeSweepEntry>,
}

impl ChargeSweep {
    pub fn a_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.a).collect()
    }

    pub fn states(&self) -> Vec<&GroundState> {
        self.entries
            .iter()
            .filter_map(|e| match &e.outcome {
                SweepOutcome::Ground(g) => Some(g),
                _ => None,
            })
            .collect()
    }

    /// `J_a` per entry; `0` where no ground state exists, `None` on failure.
    pub fn j_values(&self) -> Vec<Option<f64>> {
        self.entries
            .iter()
            .map(|e| match &e.outcome {
                SweepOutcome::Ground(g) => Some(g.energy()),
                SweepOutcome::NoGroundState(_) => Some(0.0),
                SweepOutcome::Failed(_) => None,
            })
            .collect()
    }

    pub fn sigma_values(&self) -> Vec<Option<f64>> {
        self.entries
            .iter()
            .map(|e| match &e.outcome {
                SweepOutcome::Ground(g) => Some(g.sigma),
                _ => None,
            })
            .collect()
    }

    /// `(σ(a_{k+1}) - σ(a_k)) / (a_{k+1} - a_k)` between consecutive ground states.
    pub fn dini_estimates(&self) -> Vec<(f64, f64)> {
        let states = self.states();
        states
            .windows(2)
            .map(|w| (w[0].a, (w[1].sigma - w[0].sigma) / (w[1].a - w[0].a)))
            .collect()
    }
}

/// Run [`minimize_charge`] over increasing charges, warm-starting each point
/// from the previous ground state when `chain` is set.
pub fn sweep_charge(
    grid: &Arc<RadialGrid>,
    a_list: &[f64],
    p: &MediumParams,
    opts: &FlowOptions,
    chain: bool,
) -> Result<ChargeSweep> {
    if a_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("charges must be strictly increasing".into()));
    }
    let mut entries = Vec::with_capacity(a_list.len());
    let mut previous: Option<RadialField> = None;
    for &a in a_list {
        let mut point_opts = opts.clone();
        if chain {
            if let Some(prev) = &previous {
                point_opts.initial = Some(prev.clone());
            }
        }
        let outcome = match minimize_charge(grid, a, p, &point_opts) {
            Ok(ChargeMinimum::Ground(g)) => {
                previous = Some(g.v.clone());
                SweepOutcome::Ground(g)
            }
            Ok(ChargeMinimum::NoGroundState(d)) => SweepOutcome::NoGroundState(d),
            Err(e) => SweepOutcome::Failed(e.to_string()),
        };
        entries.push(ChargeSweepEntry { a, outcome });
    }
    Ok(ChargeSweep { entries })
}

/// Result of the threshold bisection.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdEstimate {
    pub a0: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bracket width after each bisection step.
    pub widths: Vec<f64>,
}

/// Bisect on the charge between a point without and a point with a ground
/// state until the bracket is narrower than `tol_a`.
pub fn locate_threshold(
    grid: &Arc<RadialGrid>,
    p: &MediumParams,
    bracket: (f64, f64),
    tol_a: f64,
    opts: &FlowOptions,
) -> Result<ThresholdEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo && tol_a > 0.0) {
        return Err(Error::BracketError(format!("need 0 < a_lo < a_hi, got ({lo}, {hi})")));
    }
    if minimize_charge(grid, lo, p, opts)?.is_ground() {
        return Err(Error::BracketError(format!("a ground state exists at a_lo = {lo}")));
    }
    if !minimize_charge(grid, hi, p, opts)?.is_ground() {
        return Err(Error::BracketError(format!("no ground state at a_hi = {hi}")));
    }
    let mut widths = Vec::new();
    while hi - lo > tol_a {
        let mid = 0.5 * (lo + hi);
        if minimize_charge(grid, mid, p, opts)?.is_ground() {
            hi = mid;
        } else {
            lo = mid;
        }
        widths.push(hi - lo);
    }
    Ok(ThresholdEstimate {
        a0: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        widths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Arc<RadialGrid> {
        RadialGrid::new(30.0, 1024).unwrap()
    }

    fn ground(a: f64) -> GroundState {
        minimize_charge(&grid(), a, &MediumParams::default(), &FlowOptions::default())
            .unwrap()
            .ground()
            .expect("ground state")
    }

    #[test]
    fn small_charge_has_no_ground_state() {
        let r = minimize_charge(&grid(), 1.5, &MediumParams::default(), &FlowOptions::default()).unwrap();
        match r {
            ChargeMinimum::NoGroundState(d) => assert!(d.energy >= 0.0 || d.reason == Vanishing::Collapsed),
            ChargeMinimum::Ground(g) => panic!("unexpected ground state with J = {}", g.energy()),
        }
    }

    #[test]
    fn large_charge_ground_state_satisfies_identities() {
        let g = ground(6.0);
        assert!(g.energy() < 0.0);
        assert!(g.sigma > 1e-6 && g.sigma < 1.0 - 1e-6);
        assert!(g.virial_defect() < 1e-6, "{}", g.virial_defect());
        assert!(g.residual < 1e-8);
        assert!((g.a - 6.0).abs() < 1e-10 * 6.0);
        let (v, phi) = (g.v.values(), g.phi.values());
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!(phi.iter().all(|&x| (0.0..=std::f64::consts::FRAC_PI_4).contains(&x)));
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(phi.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert_eq!(g.solver, Provenance::ChargeFlow);
    }

    #[test]
    fn ring_start_reaches_the_same_energy() {
        let p = MediumParams::default();
        let g = grid();
        let from_gauss = ground(6.0);
        let opts = FlowOptions {
            initial: Some(ring_profile(&g, 6.0, 1.5)),
            ..Default::default()
        };
        let from_ring = minimize_charge(&g, 6.0, &p, &opts).unwrap().ground().unwrap();
        let rel = (from_ring.energy() - from_gauss.energy()).abs() / from_gauss.energy().abs();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn sweep_is_monotone_and_subadditive() {
        let sweep = sweep_charge(&grid(), &[4.0, 5.0, 6.5, 8.0], &MediumParams::default(), &FlowOptions::default(), true).unwrap();
        let sig: Vec<f64> = sweep.sigma_values().into_iter().map(Option::unwrap).collect();
        let j: Vec<f64> = sweep.j_values().into_iter().map(Option::unwrap).collect();
        let a = sweep.a_values();
        assert!(sig.windows(2).all(|w| w[1] > w[0]));
        assert!(j.windows(2).all(|w| w[1] <= w[0]));
        for i in 0..a.len() {
            for k in i + 1..a.len() {
                assert!(j[k] < a[k] / a[i] * j[i]);
            }
        }
        assert!(sweep.dini_estimates().iter().all(|(_, d)| d.is_finite() && *d > 0.0));
    }

    #[test]
    fn sweep_rejects_unordered_charges() {
        let r = sweep_charge(&grid(), &[5.0, 4.0], &MediumParams::default(), &FlowOptions::default(), true);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn threshold_bracket_is_validated() {
        let p = MediumParams::default();
        let o = FlowOptions::default();
        let g = grid();
        assert!(matches!(locate_threshold(&g, &p, (6.0, 8.0), 0.1, &o), Err(Error::BracketError(_))));
        assert!(matches!(locate_threshold(&g, &p, (1.0, 2.0), 0.1, &o), Err(Error::BracketError(_))));
        assert!(matches!(locate_threshold(&g, &p, (4.0, 3.0), 0.1, &o), Err(Error::BracketError(_))));
    }

    #[test]
    fn threshold_bisection_halves_and_is_consistent() {
        let p = MediumParams::default();
        let o = FlowOptions::default();
        let g = grid();
        let t = locate_threshold(&g, &p, (2.0, 4.0), 0.05, &o).unwrap();
        let mut w = 2.0;
        for &next in &t.widths {
            assert!((next - 0.5 * w).abs() < 1e-12);
            w = next;
        }
        assert!(!minimize_charge(&g, 0.95 * t.a0, &p, &o).unwrap().is_ground());
        let above = minimize_charge(&g, 1.05 * t.a0, &p, &o).unwrap().ground().unwrap();
        assert!(above.energy() < 0.0 && above.energy().abs() < 10.0 * 0.05);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = RadialGrid::new(10.0, 40).unwrap();
        let p = MediumParams::new(1.3, 0.7).unwrap();
        let v = RadialField::from_fn(&g, |r| 1.2 * (-r * r / 3.0).exp());
        let phi = RadialField::from_fn(&g, |r| 0.4 * (-r * r / 4.0).exp());
        let sigma = 0.3;
        let jac = stationary_jacobian(&g, v.values(), phi.values(), sigma, &p);
        let residual = |v: &RadialField, phi: &RadialField| -> Vec<f64> {
            let (lv, lp) = (v.laplacian().unwrap(), phi.laplacian().unwrap());
            let mut out = Vec::new();
            for i in 0..g.len() {
                let (s, c) = (2.0 * phi.values()[i]).sin_cos();
                let x = v.values()[i];
                out.push(-lv.values()[i] + 2.0 * sigma * x - 2.0 * x * s);
                out.push(-p.lambda * lp.values()[i] + p.q * s - 2.0 * x * x * c);
            }
            out
        };
        let eps = 1e-6;
        for col in [0usize, 1, 17, 40, 79] {
            let (mut vp, mut pp) = (v.clone(), phi.clone());
            let (mut vm, mut pm) = (v.clone(), phi.clone());
            if col % 2 == 0 {
                vp.values_mut()[col / 2] += eps;
                vm.values_mut()[col / 2] -= eps;
            } else {
                pp.values_mut()[col / 2] += eps;
                pm.values_mut()[col / 2] -= eps;
            }
            let (rp, rm) = (residual(&vp, &pp), residual(&vm, &pm));
            for row in 0..2 * g.len() {
                let fd = (rp[row] - rm[row]) / (2.0 * eps);
                let exact = jac.get(row, col);
                assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "({row},{col}): {fd} vs {exact}");
            }
        }
    }

    proptest! {
        #[test]
        fn rescaling_hits_the_charge(a in 0.01f64..100.0, width in 0.3f64..5.0) {
            let g = RadialGrid::new(30.0, 256).unwrap();
            let u = gaussian_profile(&g, a, width);
            prop_assert!((u.norm_squared(InnerProduct::L2) - a).abs() < 1e-12 * a);
            let r = ring_profile(&g, a, width);
            prop_assert!((r.norm_squared(InnerProduct::L2) - a).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let o = FlowOptions::default();
        assert!(minimize_charge(&grid(), -1.0, &MediumParams::default(), &o).is_err());
        let bad = MediumParams { lambda: 0.0, q: 1.0 };
        assert!(minimize_charge(&grid(), 5.0, &bad, &o).is_err());
    }
}
