//! Propagation along `z` on the periodic square by Strang splitting:
//!
//! ```text
//! u ← e^{i sin(2θ) dz/2} u,   û ← e^{-i|k|² dz/2} û,   θ ← Θ(u),   u ← e^{i sin(2θ) dz/2} u
//! ```
//!
//! The angle has no `z`-derivative and is re-solved from `u` after the
//! linear step, warm-started from the previous angle. The phase half-steps do
//! not change `|u|`, so the re-solved angle is also the angle of the
//! completed step and the scheme is symmetric.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{solve_angle, AngleOptions};
use crate::energy::{evaluate, MediumParams};
use crate::error::{Error, Result};
use crate::grid::{Field, Field2D, Geometry, InnerProduct, PlaneGrid, RadialField, RealField2D};
use crate::groundstate::GroundState;

/// Initial-state perturbations applied to an embedded ground state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    /// `u ← u·(1 + ε e^{-|x|²/w²})`.
    Bump { amplitude: f64, width: f64 },
    /// `u ← u + ε‖u‖_{H¹} n/‖n‖_{H¹}` with `n` smoothed complex white noise.
    Noise { amplitude: f64, seed: u64 },
    /// Charge-preserving dilation `u ← u(x/μ)/μ`.
    Rescale { factor: f64 },
}

impl Perturbation {
    pub fn apply(&self, u: &Field2D) -> Result<Field2D> {
        let grid = u.grid().clone();
        match *self {
            Perturbation::Bump { amplitude, width } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidParameter(format!("bump width must be positive, got {width}")));
                }
                let vals = u
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let r = grid.radius(i);
                        z * (1.0 + amplitude * (-(r * r) / (width * width)).exp())
                    })
                    .collect();
                Field::new(grid, vals)
            }
            Perturbation::Noise { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut noise: Vec<Complex64> = (0..grid.len())
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                // keep the noise resolvable: damp wavenumbers beyond a quarter of Nyquist
                grid.fft_forward(&mut noise);
                let k_max = grid.wavenumbers().iter().fold(0.0f64, |m, k| m.max(k.abs()));
                let kc2 = (0.25 * k_max).powi(2);
                noise.iter_mut().zip(grid.k_squared()).for_each(|(c, k2)| *c *= (-k2 / kc2).exp());
                grid.fft_inverse(&mut noise);
                let noise = Field::new(grid.clone(), noise)?;
                let scale = amplitude * u.norm(InnerProduct::H1) / noise.norm(InnerProduct::H1);
                u.add_scaled(scale, &noise)
            }
            Perturbation::Rescale { factor } => {
                if !(factor > 0.0) {
                    return Err(Error::InvalidParameter(format!("rescale factor must be positive, got {factor}")));
                }
                let hat = grid.spectrum(u.values());
                let vals = dilate(&grid, &hat, 1.0 / factor).into_iter().map(|z| z / factor).collect();
                Field::new(grid, vals)
            }
        }
    }
}

/// Samples of the trigonometric interpolant with spectrum `hat` at the
/// dilated lattice `s·(x, y)`, evaluated as two dense contractions.
fn dilate(grid: &PlaneGrid, hat: &[Complex64], s: f64) -> Vec<Complex64> {
    let n = grid.n_per_side();
    let k = grid.wavenumbers();
    let x0 = grid.coordinate(0);
    // phase[j][m] = e^{i k_m (s·x_j - x0)}
    let phase: Vec<Complex64> = (0..n)
        .flat_map(|j| {
            let x = s * grid.coordinate(j) - x0;
            k.iter().map(move |km| Complex64::from_polar(1.0, km * x))
        })
        .collect();
    // t[a][jy] = Σ_b hat[a][b] phase[jy][b]
    let mut t = vec![Complex64::default(); n * n];
    for a in 0..n {
        for jy in 0..n {
            t[a * n + jy] = (0..n).map(|b| hat[a * n + b] * phase[jy * n + b]).sum();
        }
    }
    let norm = 1.0 / (n * n) as f64;
    let mut out = vec![Complex64::default(); n * n];
    for jy in 0..n {
        for jx in 0..n {
            let v: Complex64 = (0..n).map(|a| t[a * n + jy] * phase[jx * n + a]).sum();
            out[jy * n + jx] = v * norm;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dz: f64,
    pub z_end: f64,
    /// Steps between stored snapshots; 0 stores none.
    #[serde(default)]
    pub snapshot_every: usize,
    /// Steps between recorded `(Q, E)` samples.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_one")]
    pub angle_resolve_every: usize,
    /// `false` freezes `θ ≡ 0`: free Schrödinger evolution.
    #[serde(default = "default_true")]
    pub coupling: bool,
    #[serde(default = "default_angle_tol")]
    pub angle_tol: f64,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
}

fn default_record_every() -> usize {
    50
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_angle_tol() -> f64 {
    AngleOptions::plane().tol
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dz: 0.002,
            z_end: 20.0,
            snapshot_every: 0,
            record_every: default_record_every(),
            angle_resolve_every: 1,
            coupling: true,
            angle_tol: default_angle_tol(),
            perturbation: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dz.is_finite() && self.dz > 0.0) {
            return Err(Error::InvalidParameter(format!("dz must be positive, got {}", self.dz)));
        }
        if !(self.z_end >= self.dz) {
            return Err(Error::InvalidParameter(format!(
                "z_end = {} must be at least dz = {}",
                self.z_end, self.dz
            )));
        }
        if self.record_every == 0 || self.angle_resolve_every == 0 {
            return Err(Error::InvalidParameter("record_every and angle_resolve_every must be >= 1".into()));
        }
        if !(self.angle_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("angle tolerance must be positive, got {}", self.angle_tol)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.z_end / self.dz).round() as usize
    }
}

/// Cubic Lagrange interpolation of a radial profile at radius `rho`, with the
/// even extension across the origin and zero beyond the last node.
pub fn interpolate_radial(f: &RadialField, rho: f64) -> f64 {
    let r = f.grid().nodes();
    let v = f.values();
    let n = r.len();
    if rho >= r[n - 1] {
        // odd ghost at the outer face, zero beyond it
        let edge = f.grid().r_max();
        return if rho >= edge { 0.0 } else { v[n - 1] * (edge - rho) / (edge - r[n - 1]) };
    }
    // first node with r >= rho
    let j = r.partition_point(|&x| x < rho);
    let node = |i: isize| -> (f64, f64) {
        if i < 0 {
            let m = (-i - 1) as usize;
            (-r[m], v[m])
        } else if (i as usize) < n {
            (r[i as usize], v[i as usize])
        } else {
            let m = 2 * n - 1 - i as usize;
            (2.0 * f.grid().r_max() - r[m], -v[m])
        }
    };
    let base = j as isize - 2;
    let pts: Vec<(f64, f64)> = (0..4).map(|k| node(base + k)).collect();
    let mut s = 0.0;
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (rho - pts[b].0) / (pts[a].0 - pts[b].0);
            }
        }
        s += l * pts[a].1;
    }
    s
}

/// Embed a radial profile centered in the box.
pub fn embed_radial(f: &RadialField, grid: &Arc<PlaneGrid>) -> RealField2D {
    RealField2D::from_fn(grid, |x, y| interpolate_radial(f, x.hypot(y)))
}

/// A ground state carried onto the plane grid. The reference angle is the
/// plane angle of the embedded amplitude, so the reference pair is
/// consistent with the plane discretization.
#[derive(Clone, Debug)]
pub struct PlaneReference {
    pub v: Field2D,
    pub phi: RealField2D,
    pub sigma: f64,
    /// `‖Θ_plane(v) - φ_embedded‖_{L²} / ‖φ_embedded‖_{L²}`.
    pub interpolation_error: f64,
    v_hat: Vec<Complex64>,
    phi_hat: Vec<Complex64>,
}

impl PlaneReference {
    pub fn from_ground_state(gs: &GroundState, grid: &Arc<PlaneGrid>, angle_tol: f64) -> Result<Self> {
        let v = embed_radial(&gs.v, grid).map(|x| Complex64::new(x, 0.0));
        let phi_embedded = embed_radial(&gs.phi, grid);
        let phi = solve_angle(&v, &gs.params, &AngleOptions::plane().with_tol(angle_tol), Some(&phi_embedded))?.theta;
        let interpolation_error =
            phi.add_scaled(-1.0, &phi_embedded)?.norm(InnerProduct::L2) / phi_embedded.norm(InnerProduct::L2);
        Ok(Self::new(v, phi, gs.sigma, interpolation_error))
    }

    pub fn new(v: Field2D, phi: RealField2D, sigma: f64, interpolation_error: f64) -> Self {
        let grid = v.grid().clone();
        let v_hat = grid.spectrum(v.values());
        let phi_hat = grid.spectrum(phi.values());
        Self {
            v,
            phi,
            sigma,
            interpolation_error,
            v_hat,
            phi_hat,
        }
    }

    /// `arg⟨u, v⟩_{L²}`.
    pub fn phase_of(&self, u: &Field2D) -> Result<f64> {
        Ok(u.inner_complex(&self.v, InnerProduct::L2)?.arg())
    }

    /// Upper bound on the distance of `(u, θ)` from the orbit of the
    /// reference under phase rotations and translations:
    /// `‖u - e^{iα}v(·-y)‖_{H¹} + ‖θ - φ(·-y)‖_{H¹}` at the best `(α, y)`
    /// found. `y` comes from the lattice maximum of the cross-correlation of
    /// `|u|` with `v`, refined by a parabola per axis; `α` is then exact.
    pub fn orbital_distance(&self, u: &Field2D, theta: &RealField2D) -> Result<f64> {
        let grid = self.v.grid();
        u.check_same_grid(&self.v)?;
        theta.check_same_grid(&self.phi)?;
        let n = grid.n_per_side();
        let h = grid.spacing();
        let k2 = grid.k_squared();

        let abs_hat = grid.spectrum(&u.values().iter().map(|z| z.norm()).collect::<Vec<f64>>());
        // C(s) = Σ_x |u|(x) v(x - s), so the peak sits at the shift of u relative to v
        let mut corr: Vec<Complex64> = abs_hat.iter().zip(&self.v_hat).map(|(a, b)| a * b.conj()).collect();
        grid.fft_inverse(&mut corr);
        let (best, _) = corr
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, c)| if c.re > bv { (i, c.re) } else { (bi, bv) });
        let (row, col) = (best / n, best % n);
        let at = |r: usize, c: usize| corr[(r % n) * n + (c % n)].re;
        let parabola = |m: f64, c0: f64, p: f64| {
            let d = m - 2.0 * c0 + p;
            if d < 0.0 {
                0.5 * (m - p) / d
            } else {
                0.0
            }
        };
        let dx = parabola(at(row, col + n - 1), at(row, col), at(row, col + 1));
        let dy = parabola(at(row + n - 1, col), at(row, col), at(row + 1, col));
        let wrap = |j: usize| if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
        let sx = (wrap(col) + dx) * h;
        let sy = (wrap(row) + dy) * h;

        // shift the references spectrally: v(x - s) ↔ v̂(k) e^{-ik·s}
        let shift = |hat: &[Complex64]| -> Vec<Complex64> {
            hat.iter()
                .enumerate()
                .map(|(i, c)| {
                    let (kx, ky) = grid.wavevector(i);
                    c * Complex64::from_polar(1.0, -(kx * sx + ky * sy))
                })
                .collect()
        };
        let v_s = shift(&self.v_hat);
        let phi_s = shift(&self.phi_hat);
        let u_hat = grid.spectrum(u.values());
        let th_hat = grid.spectrum(theta.values());
        let h1 = |i: usize| 1.0 + k2[i];

        // α = arg⟨u, v_s⟩_{H¹}; differences are formed explicitly to avoid
        // cancellation in ‖u‖² + ‖v‖² - 2|⟨u, v⟩|
        let rot = Complex64::from_polar(1.0, grid.spectral_pairing(&u_hat, &v_s, h1).arg());
        let diff: Vec<Complex64> = u_hat.iter().zip(&v_s).map(|(a, b)| a - rot * b).collect();
        let amp = grid.spectral_pairing(&diff, &diff, h1).re.max(0.0).sqrt();
        let diff: Vec<Complex64> = th_hat.iter().zip(&phi_s).map(|(a, b)| a - b).collect();
        let ang = grid.spectral_pairing(&diff, &diff, h1).re.max(0.0).sqrt();
        Ok(amp + ang)
    }
}

/// Strang-split propagator with its own angle and transform buffers.
pub struct Propagator {
    grid: Arc<PlaneGrid>,
    params: MediumParams,
    dz: f64,
    coupling: bool,
    resolve_every: usize,
    angle: AngleOptions,
    kinetic: Vec<Complex64>,
    u: Vec<Complex64>,
    theta: RealField2D,
    /// Angle before the last re-solve, for linear extrapolation of the warm start.
    theta_prev: Option<RealField2D>,
    angle_residual: f64,
    angle_iterations: usize,
    steps: usize,
    z: f64,
}

impl Propagator {
    /// Start from `u0`; the initial angle is solved unless one is supplied.
    pub fn new(
        u0: &Field2D,
        theta0: Option<&RealField2D>,
        dz: f64,
        cfg: &EvolutionConfig,
        p: &MediumParams,
    ) -> Result<Self> {
        p.validate()?;
        if !u0.is_finite() {
            return Err(Error::NonFiniteField);
        }
        if !(dz.is_finite() && dz != 0.0) {
            return Err(Error::InvalidParameter(format!("dz must be finite and nonzero, got {dz}")));
        }
        let grid = u0.grid().clone();
        let angle = AngleOptions::plane().with_tol(cfg.angle_tol);
        let (theta, angle_residual) = if cfg.coupling {
            let sol = solve_angle(u0, p, &angle, theta0)?;
            (sol.theta, sol.residual)
        } else {
            (RealField2D::zeros(grid.clone()), 0.0)
        };
        let kinetic = kinetic_multiplier(&grid, dz);
        Ok(Self {
            grid,
            params: *p,
            dz,
            coupling: cfg.coupling,
            resolve_every: cfg.angle_resolve_every.max(1),
            angle,
            kinetic,
            u: u0.values().to_vec(),
            theta,
            theta_prev: None,
            angle_residual,
            angle_iterations: 0,
            steps: 0,
            z: 0.0,
        })
    }

    /// Reverse the direction of propagation.
    pub fn reverse(&mut self) {
        self.dz = -self.dz;
        self.theta_prev = None;
        self.kinetic = kinetic_multiplier(&self.grid, self.dz);
    }

    fn potential_half_step(&mut self) {
        if !self.coupling {
            return;
        }
        let half = 0.5 * self.dz;
        for (z, th) in self.u.iter_mut().zip(self.theta.values()) {
            *z *= Complex64::from_polar(1.0, (2.0 * th).sin() * half);
        }
    }

    pub fn step(&mut self) -> Result<()> {
        self.potential_half_step();
        self.grid.fft_forward(&mut self.u);
        self.u.iter_mut().zip(&self.kinetic).for_each(|(z, m)| *z *= m);
        self.grid.fft_inverse(&mut self.u);
        if self.coupling && (self.steps + 1) % self.resolve_every == 0 {
            let u = Field::new(self.grid.clone(), std::mem::take(&mut self.u))?;
            let guess = match &self.theta_prev {
                Some(prev) => self.theta.scaled(2.0).add_scaled(-1.0, prev)?,
                None => self.theta.clone(),
            };
            let sol = solve_angle(&u, &self.params, &self.angle, Some(&guess));
            self.u = u.into_values();
            let sol = sol?;
            self.theta_prev = Some(std::mem::replace(&mut self.theta, sol.theta));
            self.angle_residual = sol.residual;
            self.angle_iterations += sol.iterations;
        }
        self.potential_half_step();
        self.steps += 1;
        self.z += self.dz;
        Ok(())
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn u(&self) -> Result<Field2D> {
        Field::new(self.grid.clone(), self.u.clone())
    }

    pub fn theta(&self) -> &RealField2D {
        &self.theta
    }

    /// Newton iterations spent in angle re-solves so far.
    pub fn angle_iterations(&self) -> usize {
        self.angle_iterations
    }

    /// Sup-norm residual of the angle equation reported by the last solve.
    pub fn angle_residual(&self) -> f64 {
        self.angle_residual
    }

    pub fn charge(&self) -> f64 {
        let w = self.grid.weight(0);
        0.5 * w * self.u.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn energy(&self) -> Result<f64> {
        Ok(evaluate(&self.u()?, &self.theta, &self.params, 0.0)?.e)
    }
}

fn kinetic_multiplier(grid: &PlaneGrid, dz: f64) -> Vec<Complex64> {
    grid.k_squared()
        .iter()
        .map(|k2| Complex64::from_polar(1.0, -0.5 * k2 * dz))
        .collect()
}

/// Mass fraction of `u` in the outer tenth of the box (`max(|x|,|y|) > 0.4 L`).
pub fn boundary_mass_fraction(u: &Field2D) -> f64 {
    let grid = u.grid();
    let edge = 0.4 * grid.box_size();
    let (mut outer, mut total) = (0.0, 0.0);
    for (i, z) in u.values().iter().enumerate() {
        let (x, y) = grid.position(i);
        let m = z.norm_sqr();
        total += m;
        if x.abs().max(y.abs()) > edge {
            outer += m;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Mass fraction of `u` inside the disc `r < L/4`.
pub fn central_mass_fraction(u: &Field2D) -> f64 {
    let grid = u.grid();
    let r0 = 0.25 * grid.box_size();
    let (mut inner, mut total) = (0.0, 0.0);
    for (i, z) in u.values().iter().enumerate() {
        let m = z.norm_sqr();
        total += m;
        if grid.radius(i) < r0 {
            inner += m;
        }
    }
    if total > 0.0 {
        inner / total
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub z: f64,
    pub charge: f64,
    pub energy: f64,
    pub angle_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbital_distance: Option<f64>,
    /// Unwrapped `arg⟨u, v⟩`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

#[derive(Clone, Debug)]
pub struct EvolutionTrace {
    pub samples: Vec<TraceSample>,
    pub snapshots: Vec<(f64, Field2D)>,
    pub warnings: Vec<String>,
    pub status: RunStatus,
    pub final_u: Field2D,
    pub final_theta: RealField2D,
}

impl EvolutionTrace {
    pub fn z_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.z).collect()
    }

    pub fn charge_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.charge).collect()
    }

    pub fn energy_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    pub fn orbital_distance_series(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.orbital_distance).collect()
    }

    /// `max |X(z) - X(0)| / |X(0)|` over the samples.
    pub fn relative_drift(series: &[f64]) -> f64 {
        let x0 = series.first().copied().unwrap_or(0.0);
        series.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max) / x0.abs()
    }

    pub fn charge_drift(&self) -> f64 {
        Self::relative_drift(&self.charge_series())
    }

    pub fn energy_drift(&self) -> f64 {
        Self::relative_drift(&self.energy_series())
    }

    /// Least-squares slope of the unwrapped phase against `z`.
    pub fn phase_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.samples.iter().filter_map(|s| s.phase.map(|p| (s.z, p))).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mz = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mp = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mz) * (p.1 - mp)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mz).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Run `cfg.steps()` steps from `u0` (after applying `cfg.perturbation`),
/// recording `Q` and `E` every `cfg.record_every` steps and, with a
/// reference, the orbital distance and phase. An angle failure mid-run ends
/// the trace with [`RunStatus::Aborted`].
pub fn propagate(
    u0: &Field2D,
    theta0: Option<&RealField2D>,
    cfg: &EvolutionConfig,
    p: &MediumParams,
    reference: Option<&PlaneReference>,
) -> Result<EvolutionTrace> {
    cfg.validate()?;
    let start = match &cfg.perturbation {
        Some(pert) => pert.apply(u0)?,
        None => Field::clone(u0),
    };
    let central = central_mass_fraction(&start);
    if central < 0.999 {
        return Err(Error::BoxTooSmall(format!(
            "only {:.4}% of the mass lies within r < L/4",
            100.0 * central
        )));
    }
    // a perturbed state needs its own angle
    let theta0 = if cfg.perturbation.is_some() { None } else { theta0 };
    let mut prop = Propagator::new(&start, theta0, cfg.dz, cfg, p)?;
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut warnings = Vec::new();
    let mut last_phase: Option<f64> = None;
    let mut status = RunStatus::Completed;

    let mut record = |prop: &Propagator, samples: &mut Vec<TraceSample>, warnings: &mut Vec<String>| -> Result<()> {
        let u = prop.u()?;
        let (orbital_distance, phase) = match reference {
            Some(r) => {
                let raw = r.phase_of(&u)?;
                let unwrapped = match last_phase {
                    Some(prev) => prev + wrap_angle(raw - prev),
                    None => raw,
                };
                last_phase = Some(unwrapped);
                (Some(r.orbital_distance(&u, prop.theta())?), Some(unwrapped))
            }
            None => (None, None),
        };
        let outer = boundary_mass_fraction(&u);
        if outer > 1e-6 && warnings.is_empty() {
            warnings.push(format!(
                "BoxTooSmall: boundary mass fraction {outer:.3e} at z = {:.4}",
                prop.z()
            ));
        }
        samples.push(TraceSample {
            z: prop.z(),
            charge: prop.charge(),
            energy: prop.energy()?,
            angle_residual: prop.angle_residual(),
            orbital_distance,
            phase,
        });
        Ok(())
    };

    record(&prop, &mut samples, &mut warnings)?;
    if cfg.snapshot_every > 0 {
        snapshots.push((0.0, prop.u()?));
    }
    for step in 1..=cfg.steps() {
        if let Err(e) = prop.step() {
            status = RunStatus::Aborted(format!("step {step}: {e}"));
            break;
        }
        if step % cfg.record_every == 0 || step == cfg.steps() {
            record(&prop, &mut samples, &mut warnings)?;
        }
        if cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0 {
            snapshots.push((prop.z(), prop.u()?));
        }
    }
    Ok(EvolutionTrace {
        samples,
        snapshots,
        warnings,
        status,
        final_u: prop.u()?,
        final_theta: prop.theta().clone(),
    })
}

fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Free Schrödinger evolution of `e^{-r²/(2s²)}` in the plane:
/// `s²/(s² + iz) · exp(-r²/(2(s² + iz)))`.
pub fn free_gaussian(grid: &Arc<PlaneGrid>, s: f64, z: f64) -> Field2D {
    let c = Complex64::new(s * s, z);
    let pref = Complex64::new(s * s, 0.0) / c;
    Field2D::from_fn(grid, |x, y| pref * (-(x * x + y * y) / (2.0 * c)).exp())
}

/// `‖|u| - |v|‖_{L²} / ‖v‖_{L²}`.
pub fn modulus_deviation(u: &Field2D, v: &Field2D) -> Result<f64> {
    u.check_same_grid(v)?;
    let w = u.grid().weight(0);
    let num: f64 = u.values().iter().zip(v.values()).map(|(a, b)| (a.norm() - b.norm()).powi(2)).sum::<f64>() * w;
    Ok(num.sqrt() / v.norm(InnerProduct::L2))
}
