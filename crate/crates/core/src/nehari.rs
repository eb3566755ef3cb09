//! Fixed-frequency ground states: minimize the modified energy
//! `E_σ(u) = S(u, Θ(u))` over the Nehari manifold
//!
//! ```text
//! 𝒩_σ = { u ≠ 0 : ∫|∇u|² + 2σ∫u² - 2∫sin(2Θ(u)) u² = 0 }
//! ```
//!
//! through its radial projection onto the admissible part of the unit `H¹`
//! sphere, `S^σ = { ‖w‖_{H¹} = 1, ∫|∇w|² - 2(1-σ)∫w² < 0 }`. Each `w ∈ S^σ`
//! has exactly one scale `r_w` with `r_w·w ∈ 𝒩_σ`, and `Ψ(w) = E_σ(r_w·w)`
//! is minimized by projected gradient descent on the sphere.

use std::sync::Arc;

use crate::angle::{solve_angle, AngleOptions};
use crate::energy::{check_sigma, evaluate, MediumParams};
use crate::error::{Error, Result};
use crate::grid::{Geometry, InnerProduct, RadialField, RadialGrid};
use crate::groundstate::{newton_polish, GroundState, Provenance};

/// Lower bound on `‖u‖_{H¹}` asserted for every converged Nehari state.
///
/// Measured minimum over `σ ∈ [0.01, 0.99]` at `(λ, q) = (1, 1)` on the
/// default grid is about 1.9; the floor leaves a wide margin.
pub const H1_FLOOR: f64 = 1.0;

fn angle_opts() -> AngleOptions {
    AngleOptions::radial().with_tol(1e-11)
}

// the residual carries roundoff proportional to the source term 2|u|²
fn scaled_angle_opts(u: &RadialField) -> AngleOptions {
    let peak = u.max_abs();
    angle_opts().with_tol(1e-11 * (peak * peak).max(1.0))
}

/// `∫|∇w|² - 2(1-σ)∫w²`; negative exactly on the admissible sphere.
pub fn sphere_defect(w: &RadialField, sigma: f64) -> f64 {
    w.dirichlet_energy() - 2.0 * (1.0 - sigma) * w.norm_squared(InnerProduct::L2)
}

/// Evaluator of the fibering derivative `α'_w(r) = (r/2)·h_w(r)` with
/// `h_w(r) = ∫|∇w|² + 2σ∫w² - 2∫sin(2Θ(rw)) w²`, caching the last angle
/// solve to warm-start the next one.
pub struct Fibering<'a> {
    w: &'a RadialField,
    sigma: f64,
    params: MediumParams,
    kinetic_plus_mass: f64,
    w2: Vec<f64>,
    cache: Option<(f64, RadialField)>,
    evaluations: usize,
}

impl<'a> Fibering<'a> {
    pub fn new(w: &'a RadialField, sigma: f64, params: &MediumParams) -> Result<Self> {
        check_sigma(sigma)?;
        params.validate()?;
        let m = w.norm_squared(InnerProduct::L2);
        Ok(Self {
            w,
            sigma,
            params: *params,
            kinetic_plus_mass: w.dirichlet_energy() + 2.0 * sigma * m,
            w2: w.values().iter().map(|x| x * x).collect(),
            cache: None,
            evaluations: 0,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Seed the angle cache, e.g. with `Θ` of a nearby state.
    pub fn with_cached_angle(mut self, r: f64, theta: RadialField) -> Self {
        self.cache = Some((r, theta));
        self
    }

    /// `h_w(r)`, positive below `r_w` and negative above.
    pub fn h(&mut self, r: f64) -> Result<f64> {
        self.evaluations += 1;
        let u = self.w.scaled(r);
        let warm = self.cache.as_ref().map(|(_, t)| t);
        let theta = solve_angle(&u, &self.params, &scaled_angle_opts(&u), warm)?.theta;
        let grid = self.w.grid();
        let th = theta.values();
        let coupling = grid.integrate(|i| (2.0 * th[i]).sin() * self.w2[i]);
        self.cache = Some((r, theta));
        Ok(self.kinetic_plus_mass - 2.0 * coupling)
    }

    pub fn alpha_prime(&mut self, r: f64) -> Result<f64> {
        Ok(0.5 * r * self.h(r)?)
    }

    /// Angle at the most recently evaluated scale.
    pub fn cached_angle(&self) -> Option<&(f64, RadialField)> {
        self.cache.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleOptions {
    /// Relative width at which the root bracket is accepted.
    pub rel_tol: f64,
    /// Largest scale searched for a sign change.
    pub r_cap: f64,
    /// First scale tried.
    pub r_start: f64,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            r_cap: 1e3,
            r_start: 1.0,
        }
    }
}

/// The scale `r_w` with `r_w·w ∈ 𝒩_σ`, and `Θ(r_w·w)`.
#[derive(Clone, Debug)]
pub struct Scale {
    pub r: f64,
    pub theta: RadialField,
    pub evaluations: usize,
}

/// Find the unique root of `α'_w` on `(0, r_cap]`.
pub fn nehari_scale(w: &RadialField, sigma: f64, p: &MediumParams) -> Result<f64> {
    Ok(nehari_scale_with(w, sigma, p, &ScaleOptions::default(), None)?.r)
}

/// [`nehari_scale`] with options and an optional angle warm start.
pub fn nehari_scale_with(
    w: &RadialField,
    sigma: f64,
    p: &MediumParams,
    opts: &ScaleOptions,
    warm: Option<(f64, RadialField)>,
) -> Result<Scale> {
    check_sigma(sigma)?;
    let defect = sphere_defect(w, sigma);
    if !(defect < 0.0) {
        return Err(Error::NotInSphere(defect));
    }
    let mut fib = Fibering::new(w, sigma, p)?;
    if let Some((r, t)) = warm {
        fib = fib.with_cached_angle(r, t);
    }
    let eval = |fib: &mut Fibering, r: f64| fib.h(r);

    // bracket [lo, hi] with h(lo) > 0 > h(hi)
    let r0 = opts.r_start.clamp(1e-6, opts.r_cap);
    let h0 = eval(&mut fib, r0)?;
    let (mut lo, mut h_lo, mut hi, mut h_hi);
    if h0 > 0.0 {
        lo = r0;
        h_lo = h0;
        hi = r0;
        loop {
            hi = (2.0 * hi).min(opts.r_cap);
            h_hi = eval(&mut fib, hi)?;
            if h_hi <= 0.0 {
                break;
            }
            lo = hi;
            h_lo = h_hi;
            if hi >= opts.r_cap {
                return Err(Error::ScaleNotFound(opts.r_cap));
            }
        }
    } else {
        hi = r0;
        h_hi = h0;
        lo = r0;
        loop {
            lo *= 0.5;
            h_lo = eval(&mut fib, lo)?;
            if h_lo > 0.0 {
                break;
            }
            hi = lo;
            h_hi = h_lo;
            if lo < 1e-12 {
                return Err(Error::ScaleNotFound(opts.r_cap));
            }
        }
    }
    if h_hi == 0.0 {
        let theta = fib.cache.take().expect("evaluated").1;
        return Ok(Scale {
            r: hi,
            theta,
            evaluations: fib.evaluations,
        });
    }

    // safeguarded secant (Illinois variant of regula falsi): keeps the bracket
    // and converges superlinearly on the smooth, monotone h
    let mut side = 0i8;
    while hi - lo > opts.rel_tol * hi {
        let mut r = hi - h_hi * (hi - lo) / (h_hi - h_lo);
        if !(r > lo && r < hi) {
            r = 0.5 * (lo + hi);
        }
        let h = eval(&mut fib, r)?;
        if h == 0.0 {
            lo = r;
            hi = r;
            break;
        }
        if h > 0.0 {
            lo = r;
            h_lo = h;
            if side == 1 {
                h_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = r;
            h_hi = h;
            if side == -1 {
                h_lo *= 0.5;
            }
            side = -1;
        }
        if fib.evaluations > 400 {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    fib.h(r)?;
    let theta = fib.cache.take().expect("evaluated").1;
    Ok(Scale {
        r,
        theta,
        evaluations: fib.evaluations,
    })
}

/// Normalized Gaussian of the given width on the unit `H¹` sphere.
pub fn unit_gaussian(grid: &Arc<RadialGrid>, width: f64) -> RadialField {
    let g = RadialField::from_fn(grid, |r| (-r * r / (2.0 * width * width)).exp());
    let n = g.norm(InnerProduct::H1);
    g.scaled(1.0 / n)
}

/// Gaussian width that places the initial profile safely inside `S^σ`.
pub fn initial_width(sigma: f64) -> f64 {
    (1.0 / (1.0 - sigma).sqrt()).max(2.0)
}

#[derive(Clone, Debug)]
pub struct NehariOptions {
    /// Sup-norm tolerance on the stationary residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step along the tangent gradient.
    pub step: f64,
    /// Restarts from a wider Gaussian after leaving `S^σ`.
    pub restarts: usize,
    /// Residual below which Newton's method at fixed `σ` takes over.
    pub polish_below: Option<f64>,
    pub polish_iterations: usize,
    /// Starting point on the sphere; defaults to a Gaussian.
    pub initial: Option<RadialField>,
}

impl Default for NehariOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5000,
            step: 1.0,
            restarts: 3,
            polish_below: Some(1e-4),
            polish_iterations: 8,
            initial: None,
        }
    }
}

/// A point of the sphere mapped onto the Nehari manifold.
#[derive(Clone, Debug)]
pub struct NehariPoint {
    pub w: RadialField,
    pub r_w: f64,
    pub u: RadialField,
    pub theta: RadialField,
    pub e_sigma: f64,
}

impl NehariPoint {
    pub fn project(w: RadialField, sigma: f64, p: &MediumParams, hint: Option<(f64, RadialField)>) -> Result<Self> {
        let opts = ScaleOptions {
            r_start: hint.as_ref().map_or(1.0, |(r, _)| *r),
            ..ScaleOptions::default()
        };
        let scale = nehari_scale_with(&w, sigma, p, &opts, hint)?;
        let u = w.scaled(scale.r);
        let e_sigma = evaluate(&u, &scale.theta, p, sigma)?.action;
        Ok(Self {
            w,
            r_w: scale.r,
            u,
            theta: scale.theta,
            e_sigma,
        })
    }

    /// `∫|∇u|² + 2σ∫u² - 2∫sin(2Θ(u)) u²`.
    pub fn manifold_residual(&self, sigma: f64) -> f64 {
        let grid = self.u.grid();
        let (u, th) = (self.u.values(), self.theta.values());
        let coupling = grid.integrate(|i| (2.0 * th[i]).sin() * u[i] * u[i]);
        self.u.dirichlet_energy() + 2.0 * sigma * self.u.norm_squared(InnerProduct::L2) - 2.0 * coupling
    }
}

fn amplitude_residual(u: &RadialField, theta: &RadialField, sigma: f64) -> Result<RadialField> {
    let lap = u.laplacian()?;
    let (uv, th) = (u.values(), theta.values());
    let vals = (0..uv.len())
        .map(|i| -lap.values()[i] + 2.0 * sigma * uv[i] - 2.0 * uv[i] * (2.0 * th[i]).sin())
        .collect();
    RadialField::new(u.grid().clone(), vals)
}

/// Minimize `E_σ` over `𝒩_σ`.
pub fn minimize_nehari(grid: &Arc<RadialGrid>, sigma: f64, p: &MediumParams, opts: &NehariOptions) -> Result<GroundState> {
    check_sigma(sigma)?;
    p.validate()?;
    let mut width = initial_width(sigma);
    let mut start = opts.initial.clone();
    for _ in 0..=opts.restarts {
        let w0 = match start.take() {
            Some(w) => {
                if !w.grid().same_as(grid) {
                    return Err(Error::GridMismatch);
                }
                let n = w.norm(InnerProduct::H1);
                w.scaled(1.0 / n)
            }
            None => unit_gaussian(grid, width),
        };
        match descend(w0, sigma, p, opts) {
            Err(Error::NotInSphere(_)) | Err(Error::ScaleNotFound(_)) => {
                width *= 1.5;
                continue;
            }
            other => return other,
        }
    }
    Err(Error::SphereEscape { restarts: opts.restarts })
}

fn descend(w0: RadialField, sigma: f64, p: &MediumParams, opts: &NehariOptions) -> Result<GroundState> {
    let grid = w0.grid().clone();
    let ones = vec![1.0; grid.len()];
    let mut point = NehariPoint::project(w0, sigma, p, None)?;
    let mut tau = opts.step;
    let mut best_residual = f64::INFINITY;

    for _ in 0..opts.max_iter {
        // E_σ'(u) as an L² representer: ½ × amplitude residual
        let res = amplitude_residual(&point.u, &point.theta, sigma)?;
        let r_inf = res.max_abs();
        best_residual = best_residual.min(r_inf);

        if let Some(threshold) = opts.polish_below {
            if r_inf < threshold {
                if let Ok((v, phi, _)) = newton_polish(&point.u, &point.theta, sigma, None, p, opts.polish_iterations) {
                    let state = GroundState::from_profiles(v, phi, sigma, *p, Provenance::Nehari)?;
                    if state.residual < opts.tol && state.v.norm(InnerProduct::H1) >= H1_FLOOR {
                        return Ok(orient(state));
                    }
                }
            }
        }
        if r_inf < opts.tol {
            let state = GroundState::from_profiles(point.u.clone(), point.theta.clone(), sigma, *p, Provenance::Nehari)?;
            if state.residual < opts.tol {
                return Ok(orient(state));
            }
        }

        // Ψ'(w)z = r_w E_σ'(u)z; H¹ Riesz representer of E_σ'(u)
        let half: Vec<f64> = res.values().iter().map(|x| 0.5 * x).collect();
        let g = RadialField::new(grid.clone(), grid.solve_screened(1.0, &ones, &half, None, 0.0)?)?;
        let along = g.inner(&point.w, InnerProduct::H1)?;
        let tangent = g.add_scaled(-along, &point.w)?.scaled(point.r_w);

        let mut accepted = false;
        for _ in 0..40 {
            let trial = point.w.add_scaled(-tau, &tangent)?;
            let trial = trial.scaled(1.0 / trial.norm(InnerProduct::H1));
            if sphere_defect(&trial, sigma) >= 0.0 {
                tau *= 0.5;
                continue;
            }
            let next = NehariPoint::project(trial, sigma, p, Some((point.r_w, point.theta.clone())))?;
            if next.e_sigma <= point.e_sigma + 1e-14 * point.e_sigma.abs() {
                point = next;
                tau = (tau * 1.5).min(1e3 * opts.step);
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearchStalled {
                backtracks: 40,
                residual: r_inf,
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "Nehari descent",
        iterations: opts.max_iter,
        residual: best_residual,
    })
}

fn orient(mut state: GroundState) -> GroundState {
    if state.v.values().iter().sum::<f64>() < 0.0 {
        state.v = state.v.scaled(-1.0);
    }
    state
}

/// Outcome of one frequency in a sweep.
#[derive(Clone, Debug)]
pub struct SigmaSweepEntry {
    pub sigma: f64,
    pub result: std::result::Result<GroundState, String>,
}

/// One Nehari solve per frequency, warm-started along the list when `chain`
/// is set. All frequencies are validated before any solve starts.
pub fn sweep_sigma(
    grid: &Arc<RadialGrid>,
    sigmas: &[f64],
    p: &MediumParams,
    opts: &NehariOptions,
    chain: bool,
) -> Result<Vec<SigmaSweepEntry>> {
    for &s in sigmas {
        check_sigma(s)?;
    }
    let mut out = Vec::with_capacity(sigmas.len());
    let mut previous: Option<RadialField> = None;
    for &sigma in sigmas {
        let mut point_opts = opts.clone();
        if chain {
            if let Some(prev) = &previous {
                if sphere_defect(prev, sigma) < 0.0 {
                    point_opts.initial = Some(prev.clone());
                }
            }
        }
        let result = minimize_nehari(grid, sigma, p, &point_opts).map_err(|e| e.to_string());
        if let Ok(g) = &result {
            previous = Some(g.v.clone());
        }
        out.push(SigmaSweepEntry { sigma, result });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::{minimize_charge, FlowOptions};
    use proptest::prelude::*;

    fn grid() -> Arc<RadialGrid> {
        RadialGrid::new(30.0, 1024).unwrap()
    }

    #[test]
    fn rough_profiles_are_outside_the_sphere() {
        let g = grid();
        let w = RadialField::from_fn(&g, |r| (8.0 * r).cos() * (-r * r).exp());
        let w = w.scaled(1.0 / w.norm(InnerProduct::H1));
        assert!(matches!(nehari_scale(&w, 0.5, &MediumParams::default()), Err(Error::NotInSphere(_))));
    }

    #[test]
    fn frequency_out_of_range_is_rejected() {
        let g = grid();
        let p = MediumParams::default();
        for s in [1.2, 1.0, 0.0, -0.1] {
            assert!(matches!(minimize_nehari(&g, s, &p, &NehariOptions::default()), Err(Error::SigmaOutOfRange(_))));
        }
        assert!(matches!(sweep_sigma(&g, &[0.3, 1.2], &p, &NehariOptions::default(), true), Err(Error::SigmaOutOfRange(_))));
    }

    #[test]
    fn fibering_derivative_changes_sign_at_the_scale() {
        let g = grid();
        let p = MediumParams::default();
        let w = unit_gaussian(&g, 2.0);
        let r = nehari_scale(&w, 0.3, &p).unwrap();
        let mut fib = Fibering::new(&w, 0.3, &p).unwrap();
        assert!(fib.alpha_prime(0.5 * r).unwrap() > 0.0);
        assert!(fib.alpha_prime(2.0 * r).unwrap() < 0.0);
        let tight = ScaleOptions { rel_tol: 1e-14, ..Default::default() };
        let r2 = nehari_scale_with(&w, 0.3, &p, &tight, None).unwrap().r;
        assert!((r - r2).abs() < 1e-8 * r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn scale_is_unique_for_random_sphere_points(
            width in 1.0f64..4.0,
            wobble in -0.3f64..0.3,
            sigma in 0.1f64..0.9,
        ) {
            let g = RadialGrid::new(30.0, 512).unwrap();
            let p = MediumParams::default();
            let w = RadialField::from_fn(&g, |r| (1.0 + wobble * (r / width).cos()) * (-r * r / (2.0 * width * width)).exp());
            let w = w.scaled(1.0 / w.norm(InnerProduct::H1));
            prop_assume!(sphere_defect(&w, sigma) < 0.0);
            let r = nehari_scale(&w, sigma, &p).unwrap();
            let mut fib = Fibering::new(&w, sigma, &p).unwrap();
            // one sign change on a log-spaced scan of (0, r_cap]
            let mut changes = 0;
            let mut prev = fib.alpha_prime(1e-3).unwrap();
            let mut s = 1e-3;
            while s < 1e3 {
                s *= 1.25;
                let cur = fib.alpha_prime(s).unwrap();
                if cur.signum() != prev.signum() && cur != 0.0 {
                    changes += 1;
                }
                prev = cur;
            }
            prop_assert_eq!(changes, 1);
            prop_assert!(fib.alpha_prime(0.8 * r).unwrap() > 0.0);
        }
    }

    #[test]
    fn nehari_state_is_stationary_and_on_the_manifold() {
        let g = grid();
        let p = MediumParams::default();
        let s = minimize_nehari(&g, 0.3, &p, &NehariOptions::default()).unwrap();
        assert_eq!(s.solver, Provenance::Nehari);
        assert!(s.residual < 1e-6);
        assert_eq!(s.sigma, 0.3);
        let h1 = s.v.norm(InnerProduct::H1);
        assert!(h1 >= H1_FLOOR);
        let pt = NehariPoint::project(s.v.scaled(1.0 / h1), 0.3, &p, None).unwrap();
        assert!((pt.r_w - h1).abs() < 1e-6 * h1);
        assert!(pt.manifold_residual(0.3).abs() < 1e-8 * h1 * h1);
        assert!(s.v.values().windows(2).all(|w| w[1] <= w[0] + 1e-14));
        // c(σ) = E_σ at the state equals E⁺ there, and is positive
        assert!(s.report.action > 0.0);
        assert!((s.report.action - s.report.e_plus).abs() < 1e-8 * s.report.action);
    }

    #[test]
    fn agrees_with_the_fixed_charge_solver() {
        let g = grid();
        let p = MediumParams::default();
        let s = minimize_nehari(&g, 0.3, &p, &NehariOptions::default()).unwrap();
        let c = minimize_charge(&g, s.a, &p, &FlowOptions::default()).unwrap().ground().unwrap();
        assert!((c.sigma - 0.3).abs() < 2e-3, "{}", c.sigma);
        assert!((c.energy() - s.energy()).abs() < 1e-5 * s.energy().abs());
    }

    #[test]
    fn sigma_sweep_has_increasing_charge() {
        let g = grid();
        let sweep = sweep_sigma(&g, &[0.2, 0.4, 0.6], &MediumParams::default(), &NehariOptions::default(), true).unwrap();
        let a: Vec<f64> = sweep.iter().map(|e| e.result.as_ref().unwrap().a).collect();
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!(sweep.iter().all(|e| e.result.as_ref().unwrap().report.action > 0.0));
    }
}
