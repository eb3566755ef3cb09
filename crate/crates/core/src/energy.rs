//! Scalar functionals of the coupled system and their discrete gradients.
//!
//! ```text
//! E⁺(θ)   = ¼ ∫ λ|∇θ|² + q(1 - cos 2θ)
//! E⁻(u,θ) = ¼ ∫ |∇u|² - 2|u|² sin 2θ
//! Q(u)    = ½ ∫ |u|²
//! S       = E⁺ + E⁻ + σQ
//! F_u(θ)  = λ∫|∇θ|² + q∫(1 - cos 2θ) - 2∫|u|² sin 2θ
//! ```
//!
//! Gradients are Riesz representers in the quadrature `L²` product, so
//! `(grad, h)` equals the directional derivative for every discrete `h`.

use serde::{Deserialize, Serialize};

use crate::angle::{self, AngleOptions};
use crate::error::{Error, Result};
use crate::grid::{Field, Geometry, RadialField, Scalar};

/// Elastic constant `λ` and pre-tilt constant `q` of the medium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    pub lambda: f64,
    pub q: f64,
}

impl Default for MediumParams {
    fn default() -> Self {
        Self { lambda: 1.0, q: 1.0 }
    }
}

impl MediumParams {
    pub fn new(lambda: f64, q: f64) -> Result<Self> {
        let p = Self { lambda, q };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidParameter(format!("q must be positive, got {}", self.q)));
        }
        Ok(())
    }
}

/// Energy split, charge and action at one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub charge: f64,
    pub action: f64,
    pub sigma: f64,
}

pub fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::SigmaOutOfRange(sigma))
    }
}

/// `1 - cos 2θ`, written to keep full relative precision near zero.
#[inline]
pub(crate) fn one_minus_cos2(theta: f64) -> f64 {
    let s = theta.sin();
    2.0 * s * s
}

pub fn e_plus<G: Geometry>(theta: &Field<G, f64>, p: &MediumParams) -> f64 {
    let grid = theta.grid();
    let th = theta.values();
    let potential = grid.integrate(|i| one_minus_cos2(th[i]));
    0.25 * (p.lambda * theta.dirichlet_energy() + p.q * potential)
}

pub fn e_minus<G: Geometry, T: Scalar>(u: &Field<G, T>, theta: &Field<G, f64>) -> Result<f64> {
    u.check_same_grid(theta)?;
    let (uv, th) = (u.values(), theta.values());
    let coupling = u.grid().integrate(|i| uv[i].abs2() * (2.0 * th[i]).sin());
    Ok(0.25 * (u.dirichlet_energy() - 2.0 * coupling))
}

pub fn charge<G: Geometry, T: Scalar>(u: &Field<G, T>) -> f64 {
    0.5 * u.norm_squared(crate::grid::InnerProduct::L2)
}

pub fn evaluate<G: Geometry, T: Scalar>(
    u: &Field<G, T>,
    theta: &Field<G, f64>,
    p: &MediumParams,
    sigma: f64,
) -> Result<EnergyReport> {
    let e_minus = e_minus(u, theta)?;
    let e_plus = e_plus(theta, p);
    let charge = charge(u);
    let e = e_plus + e_minus;
    Ok(EnergyReport {
        e,
        e_plus,
        e_minus,
        charge,
        action: e + sigma * charge,
        sigma,
    })
}

/// `L²` gradient of `E` in `u` at fixed `θ`: `½(-Δu - 2u sin 2θ)`.
pub fn grad_e_u<G: Geometry, T: Scalar>(u: &Field<G, T>, theta: &Field<G, f64>) -> Result<Field<G, T>> {
    u.check_same_grid(theta)?;
    let lap = u.laplacian()?;
    let th = theta.values();
    let values = u
        .values()
        .iter()
        .zip(lap.values())
        .zip(th)
        .map(|((&ui, &li), &t)| (-li - ui * (2.0 * (2.0 * t).sin())) * 0.5)
        .collect();
    Field::new(u.grid().clone(), values)
}

/// `F_u(θ)`, the functional whose unique minimizer on `[0, π/4]` is `Θ(u)`.
pub fn angle_functional<G: Geometry, T: Scalar>(
    u: &Field<G, T>,
    theta: &Field<G, f64>,
    p: &MediumParams,
) -> Result<f64> {
    u.check_same_grid(theta)?;
    let (uv, th) = (u.values(), theta.values());
    let local = u
        .grid()
        .integrate(|i| p.q * one_minus_cos2(th[i]) - 2.0 * uv[i].abs2() * (2.0 * th[i]).sin());
    Ok(p.lambda * theta.dirichlet_energy() + local)
}

/// Pointwise residual of the angle equation, `-λΔθ + q sin 2θ - 2|u|² cos 2θ`,
/// given `Δθ` and `|u|²`.
pub(crate) fn angle_residual(lap_theta: &[f64], theta: &[f64], u_abs2: &[f64], p: &MediumParams) -> Vec<f64> {
    lap_theta
        .iter()
        .zip(theta)
        .zip(u_abs2)
        .map(|((&l, &t), &a)| {
            let (s, c) = (2.0 * t).sin_cos();
            -p.lambda * l + p.q * s - 2.0 * a * c
        })
        .collect()
}

/// `L²` gradient of `F_u` in `θ`: `2(-λΔθ + q sin 2θ - 2|u|² cos 2θ)`.
pub fn grad_f_theta<G: Geometry, T: Scalar>(
    u: &Field<G, T>,
    theta: &Field<G, f64>,
    p: &MediumParams,
) -> Result<Field<G, f64>> {
    u.check_same_grid(theta)?;
    let lap = theta.laplacian()?;
    let u2: Vec<f64> = u.values().iter().map(|v| v.abs2()).collect();
    let r = angle_residual(lap.values(), theta.values(), &u2, p);
    Field::new(theta.grid().clone(), r.into_iter().map(|x| 2.0 * x).collect())
}

/// `E_σ(u) = E⁻(u, Θ(u)) + σ/2 ‖u‖² + E⁺(Θ(u))`.
pub fn modified_energy(u: &RadialField, p: &MediumParams, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let theta = angle::solve_angle(u, p, &AngleOptions::radial(), None)?.theta;
    modified_energy_at(u, &theta, p, sigma)
}

/// `E_σ` with `Θ(u)` supplied by the caller.
pub fn modified_energy_at<G: Geometry>(
    u: &Field<G, f64>,
    theta: &Field<G, f64>,
    p: &MediumParams,
    sigma: f64,
) -> Result<f64> {
    Ok(evaluate(u, theta, p, sigma)?.action)
}

/// `L²` representer of `E_σ'(u)`: `½(-Δu + 2σu - 2u sin 2Θ(u))`.
///
/// The angle enters only through `Θ(u)` itself because `θ ↦ S(u, θ)` is
/// stationary at `θ = Θ(u)`.
pub fn modified_energy_gradient<G: Geometry>(
    u: &Field<G, f64>,
    theta: &Field<G, f64>,
    sigma: f64,
) -> Result<Field<G, f64>> {
    let g = grad_e_u(u, theta)?;
    g.add_scaled(sigma, u)
}
