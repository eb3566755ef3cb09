//! The medium response `Θ(u)`: the minimizer of `F_u` over angles in
//! `[0, π/4]`, equivalently the solution of `-λΔθ + q sin 2θ = 2|u|² cos 2θ`.
//!
//! `F_u` is convex on `[0, π/4]`, so a damped Newton iteration whose iterates
//! are clipped to that interval converges to the unique minimizer.

use std::f64::consts::FRAC_PI_4;

use crate::energy::MediumParams;
use crate::error::{Error, Result};
use crate::grid::{Field, Geometry, InnerProduct, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleOptions {
    /// Sup-norm tolerance on the angle-equation residual.
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl AngleOptions {
    pub fn radial() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            max_backtracks: 40,
        }
    }

    pub fn plane() -> Self {
        Self {
            tol: 1e-8,
            ..Self::radial()
        }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }
}

#[derive(Clone, Debug)]
pub struct AngleSolution<G> {
    pub theta: Field<G, f64>,
    /// Sup-norm of the angle-equation residual.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate bookkeeping: the angle, `sin 2θ`, `cos 2θ`, the residual, and `F_u`.
struct Iterate {
    theta: Vec<f64>,
    sin2: Vec<f64>,
    cos2: Vec<f64>,
    residual: Vec<f64>,
    res_inf: f64,
    functional: f64,
}

fn assess<G: Geometry>(grid: &G, theta: Vec<f64>, u2: &[f64], p: &MediumParams) -> Iterate {
    let lap = grid.laplacian(&theta);
    let n = theta.len();
    let (mut sin2, mut cos2) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut residual = Vec::with_capacity(n);
    let mut res_inf = 0.0f64;
    let mut functional = 0.0;
    for i in 0..n {
        let (s, c) = (2.0 * theta[i]).sin_cos();
        let r = -p.lambda * lap[i] + p.q * s - 2.0 * u2[i] * c;
        res_inf = res_inf.max(r.abs());
        functional += grid.weight(i) * (-p.lambda * theta[i] * lap[i] + p.q * (1.0 - c) - 2.0 * u2[i] * s);
        sin2.push(s);
        cos2.push(c);
        residual.push(r);
    }
    Iterate {
        theta,
        sin2,
        cos2,
        residual,
        res_inf,
        functional,
    }
}

/// Solve for `Θ(u)`; fails with [`Error::NoConvergence`] at the iteration cap.
pub fn solve_angle<G: Geometry, T: Scalar>(
    u: &Field<G, T>,
    p: &MediumParams,
    opts: &AngleOptions,
    warm_start: Option<&Field<G, f64>>,
) -> Result<AngleSolution<G>> {
    let sol = solve_angle_best_effort(u, p, opts, warm_start)?;
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::NoConvergence {
            solver: "angle Newton",
            iterations: sol.iterations,
            residual: sol.residual,
        })
    }
}

/// Like [`solve_angle`], but returns the best iterate with `converged = false`
/// instead of failing at the iteration cap.
pub fn solve_angle_best_effort<G: Geometry, T: Scalar>(
    u: &Field<G, T>,
    p: &MediumParams,
    opts: &AngleOptions,
    warm_start: Option<&Field<G, f64>>,
) -> Result<AngleSolution<G>> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("angle tolerance must be positive, got {}", opts.tol)));
    }
    if !u.is_finite() {
        return Err(Error::NonFiniteField);
    }
    let grid = u.grid().as_ref();
    let u2: Vec<f64> = u.values().iter().map(|v| v.abs2()).collect();
    let start: Vec<f64> = match warm_start {
        Some(w) => {
            u.check_same_grid(w)?;
            w.values().iter().map(|t| t.clamp(0.0, FRAC_PI_4)).collect()
        }
        // pointwise balance of the equation with Δθ dropped
        None => u2.iter().map(|a| 0.5 * (2.0 * a / p.q).atan()).collect(),
    };
    let mut it = assess(grid, start, &u2, p);
    let mut iterations = 0;
    let weights: Vec<f64> = (0..grid.len()).map(|i| grid.weight(i)).collect();

    while it.res_inf >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let hessian: Vec<f64> = (0..u2.len())
            .map(|i| 2.0 * p.q * it.cos2[i] + 4.0 * u2[i] * it.sin2[i])
            .collect();
        let rhs: Vec<f64> = it.residual.iter().map(|r| -r).collect();
        // inexact Newton: ask the linear solve for just enough accuracy to
        // land below the tolerance in one step
        let inner_tol = (0.1 * opts.tol / it.res_inf).clamp(1e-13, 1e-1);
        let step = grid.solve_screened(p.lambda, &hessian, &rhs, None, inner_tol)?;
        // directional derivative of F_u along the step (grad F = 2·residual)
        let slope: f64 = (0..step.len())
            .map(|i| 2.0 * weights[i] * it.residual[i] * step[i])
            .sum();

        let mut t = 1.0;
        let mut backtracks = 0;
        loop {
            let trial: Vec<f64> = it
                .theta
                .iter()
                .zip(&step)
                .map(|(th, d)| (th + t * d).clamp(0.0, FRAC_PI_4))
                .collect();
            let next = assess(grid, trial, &u2, p);
            let armijo = next.functional <= it.functional + 1e-4 * t * slope.min(0.0);
            // near the minimum F_u only changes at roundoff level; the
            // residual is then the reliable progress measure
            let residual_drop = next.res_inf < (1.0 - 1e-4 * t) * it.res_inf;
            if armijo || residual_drop {
                it = next;
                break;
            }
            backtracks += 1;
            if backtracks > opts.max_backtracks {
                return Err(Error::LineSearchStalled {
                    backtracks,
                    residual: it.res_inf,
                });
            }
            t *= 0.5;
        }
    }

    let converged = it.res_inf < opts.tol;
    Ok(AngleSolution {
        theta: Field::new(u.grid().clone(), it.theta)?,
        residual: it.res_inf,
        iterations,
        converged,
    })
}

/// One row of the continuity table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityRow {
    pub scale: f64,
    pub du_h1: f64,
    pub dtheta_h1: f64,
    /// `‖δθ‖_{H¹} / ‖δu‖_{H¹}`, zero when `δu = 0`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    pub max_ratio: f64,
}

/// Empirical Lipschitz ratios of `u ↦ Θ(u)` in `H¹` along `u + s·h`.
pub fn angle_continuity_probe<G: Geometry>(
    u: &Field<G, f64>,
    perturbation: &Field<G, f64>,
    scales: &[f64],
    p: &MediumParams,
    opts: &AngleOptions,
) -> Result<ContinuityTable> {
    u.check_same_grid(perturbation)?;
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("scales must be positive and decreasing".into()));
    }
    let base = solve_angle(u, p, opts, None)?;
    let mut rows = Vec::with_capacity(scales.len());
    for &s in scales {
        let du = perturbation.scaled(s);
        let shifted = solve_angle(&u.add_scaled(1.0, &du)?, p, opts, Some(&base.theta))?;
        let du_h1 = du.norm(InnerProduct::H1);
        let dtheta_h1 = shifted.theta.add_scaled(-1.0, &base.theta)?.norm(InnerProduct::H1);
        let ratio = if du_h1 > 0.0 { dtheta_h1 / du_h1 } else { 0.0 };
        rows.push(ContinuityRow {
            scale: s,
            du_h1,
            dtheta_h1,
            ratio,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ContinuityTable { rows, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::angle_functional;
    use crate::grid::{Field2D, PlaneGrid, RadialField, RadialGrid};
    use num_complex::Complex64;
    use std::sync::Arc;

    #[test]
    fn zero_beam_gives_zero_angle() {
        let g = RadialGrid::new(10.0, 100).unwrap();
        let z = RadialField::zeros(Arc::clone(&g));
        let s = solve_angle(&z, &MediumParams::default(), &AngleOptions::radial(), None).unwrap();
        assert_eq!(s.residual, 0.0);
        assert_eq!(s.theta.max_abs(), 0.0);
    }

    #[test]
    fn plateau_matches_pointwise_balance() {
        let g = RadialGrid::new(40.0, 2048).unwrap();
        let p = MediumParams::default();
        for &height in &[0.3, 1.0, 2.5] {
            let u = RadialField::from_fn(&g, |r| height * 0.5 * (1.0 - ((r - 15.0) / 1.5).tanh()));
            let s = solve_angle(&u, &p, &AngleOptions::radial(), None).unwrap();
            let expected = 0.5 * (2.0 * height * height / p.q).atan();
            assert!((s.theta.values()[0] - expected).abs() < 1e-3);
            assert!(s.residual < 1e-10);
        }
    }

    #[test]
    fn minimizer_beats_perturbations() {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let p = MediumParams::new(2.0, 0.5).unwrap();
        let u = RadialField::from_fn(&g, |r| 1.5 * (-r * r / 4.0).exp());
        let s = solve_angle(&u, &p, &AngleOptions::radial(), None).unwrap();
        let f0 = angle_functional(&u, &s.theta, &p).unwrap();
        let bump = RadialField::from_fn(&g, |r| 1e-3 * (-(r - 2.0).powi(2)).exp());
        for sign in [-1.0, 1.0] {
            let moved = s.theta.add_scaled(sign, &bump).unwrap();
            assert!(angle_functional(&u, &moved, &p).unwrap() > f0);
        }
    }

    #[test]
    fn warm_starts_from_both_bounds_agree() {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let p = MediumParams::default();
        let u = RadialField::from_fn(&g, |r| 2.0 * (-r * r / 3.0).exp());
        let low = RadialField::zeros(Arc::clone(&g));
        let high = RadialField::from_fn(&g, |_| FRAC_PI_4);
        let a = solve_angle(&u, &p, &AngleOptions::radial(), Some(&low)).unwrap();
        let b = solve_angle(&u, &p, &AngleOptions::radial(), Some(&high)).unwrap();
        let diff = a.theta.add_scaled(-1.0, &b.theta).unwrap().max_abs();
        assert!(diff < 1e-8, "{diff}");
        assert!(a.theta.values().iter().all(|&t| (0.0..FRAC_PI_4).contains(&t)));
    }

    #[test]
    fn plane_solution_keeps_lattice_symmetry() {
        let g = PlaneGrid::new(20.0, 64).unwrap();
        let p = MediumParams::default();
        let u = Field2D::from_fn(&g, |x, y| Complex64::new(1.2 * (-(x * x + y * y) / 4.0).exp(), 0.0));
        let s = solve_angle(&u, &p, &AngleOptions::plane(), None).unwrap();
        assert!(s.residual < 1e-8);
        let n = g.n_per_side();
        let th = s.theta.values();
        let max = s.theta.max_abs();
        for iy in 0..n {
            for ix in 0..n {
                let v = th[iy * n + ix];
                assert!((v - th[ix * n + iy]).abs() < 1e-10 * max);
                assert!((v - th[iy * n + (n - ix) % n]).abs() < 1e-10 * max);
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let g = RadialGrid::new(10.0, 50).unwrap();
        let u = RadialField::zeros(Arc::clone(&g));
        let opts = AngleOptions::radial().with_tol(0.0);
        assert!(matches!(
            solve_angle(&u, &MediumParams::default(), &opts, None),
            Err(Error::InvalidParameter(_))
        ));
        let bad = MediumParams { lambda: -1.0, q: 1.0 };
        assert!(solve_angle(&u, &bad, &AngleOptions::radial(), None).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let g = RadialGrid::new(10.0, 200).unwrap();
        let u = RadialField::from_fn(&g, |r| 3.0 * (-r * r).exp());
        let opts = AngleOptions {
            max_iter: 1,
            ..AngleOptions::radial()
        };
        let zero = RadialField::zeros(Arc::clone(&g));
        let best = solve_angle_best_effort(&u, &MediumParams::default(), &opts, Some(&zero)).unwrap();
        assert!(!best.converged);
        assert!(matches!(
            solve_angle(&u, &MediumParams::default(), &opts, Some(&zero)),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn zero_perturbation_has_zero_response() {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let u = RadialField::from_fn(&g, |r| (-r * r / 2.0).exp());
        let h = RadialField::zeros(Arc::clone(&g));
        let t = angle_continuity_probe(&u, &h, &[1.0, 0.5], &MediumParams::default(), &AngleOptions::radial()).unwrap();
        assert!(t.rows.iter().all(|r| r.dtheta_h1 == 0.0 && r.ratio == 0.0));
    }

    #[test]
    fn continuity_ratios_settle() {
        let g = RadialGrid::new(20.0, 800).unwrap();
        let u = RadialField::from_fn(&g, |r| 1.3 * (-r * r / 3.0).exp());
        let h = RadialField::from_fn(&g, |r| (-(r - 1.0).powi(2)).exp());
        let scales = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        let t = angle_continuity_probe(&u, &h, &scales, &MediumParams::default(), &AngleOptions::radial()).unwrap();
        let k = t.rows.len();
        let (a, b) = (t.rows[k - 2].ratio, t.rows[k - 1].ratio);
        assert!((a - b).abs() < 0.2 * b, "{a} {b}");
        assert!(t.max_ratio.is_finite() && t.max_ratio > 0.0);
    }

    #[test]
    fn scales_must_decrease() {
        let g = RadialGrid::new(10.0, 50).unwrap();
        let u = RadialField::zeros(Arc::clone(&g));
        let r = angle_continuity_probe(&u, &u, &[0.1, 0.2], &MediumParams::default(), &AngleOptions::radial());
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }
}
