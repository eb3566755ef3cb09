//! Linearized operators at a ground state, one angular harmonic at a time.
//!
//! Perturbing `(v, φ)` by `(η, ϑ)` with real part `η₁` and imaginary part
//! `η₂` of `η` splits the second variation of `2S` into
//!
//! ```text
//! 𝓛₁ = [ -Δ + 2σ - 2 sin 2φ        -4v cos 2φ                    ]
//!      [ -4v cos 2φ               -λΔ + 2q cos 2φ + 4v² sin 2φ   ]   on (η₁, ϑ)
//! 𝓛₂ = -Δ + 2σ - 2 sin 2φ                                            on η₂
//! ```
//!
//! In harmonic sector `k` the radial Laplacian gains `-k²/r²`. Each sector
//! operator is discretized on the radial grid, conjugated by the square root
//! of the quadrature weights into a symmetric block-tridiagonal matrix, and
//! analyzed with Sturm counts (block `LDLᵀ` inertia), bisection, and inverse
//! iteration. Constrained minima use the Haynsworth inertia formula, so no
//! projector is ever formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, InnerProduct, RadialField};
use crate::groundstate::GroundState;
use crate::linalg::{BandLu, BandMatrix};

/// Which linearized operator a sector belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectorBlock {
    /// `𝓛₁`, coupled `(η₁, ϑ)` perturbations.
    Amplitude,
    /// `𝓛₂`, scalar `η₂` perturbations.
    Phase,
}

impl SectorBlock {
    fn block_size(self) -> usize {
        match self {
            SectorBlock::Amplitude => 2,
            SectorBlock::Phase => 1,
        }
    }
}

/// Symmetric block-tridiagonal matrix with `b × b` blocks, `b ∈ {1, 2}`.
#[derive(Clone, Debug)]
pub struct BlockTridiag {
    b: usize,
    n: usize,
    /// Diagonal blocks, row-major.
    diag: Vec<f64>,
    /// `off[i]` is the block in row `i`, column `i + 1`.
    off: Vec<f64>,
}

impl BlockTridiag {
    fn zeros(n: usize, b: usize) -> Self {
        Self {
            b,
            n,
            diag: vec![0.0; n * b * b],
            off: vec![0.0; (n - 1) * b * b],
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.b
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    #[inline]
    fn d(&self, i: usize, r: usize, c: usize) -> f64 {
        self.diag[(i * self.b + r) * self.b + c]
    }

    #[inline]
    fn o(&self, i: usize, r: usize, c: usize) -> f64 {
        self.off[(i * self.b + r) * self.b + c]
    }

    /// Entry `(row, col)` of the full matrix.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let (i, r) = (row / self.b, row % self.b);
        let (j, c) = (col / self.b, col % self.b);
        if i == j {
            self.d(i, r, c)
        } else if j == i + 1 {
            self.o(i, r, c)
        } else if i == j + 1 {
            self.o(j, c, r)
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let b = self.b;
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.n {
            for r in 0..b {
                let mut s = 0.0;
                for c in 0..b {
                    s += self.d(i, r, c) * x[i * b + c];
                    if i + 1 < self.n {
                        s += self.o(i, r, c) * x[(i + 1) * b + c];
                    }
                    if i > 0 {
                        s += self.o(i - 1, c, r) * x[(i - 1) * b + c];
                    }
                }
                y[i * b + r] = s;
            }
        }
        y
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in 0..self.dim() {
            let i = row / self.b;
            let start = i.saturating_sub(1) * self.b;
            let end = ((i + 2) * self.b).min(self.dim());
            let center = self.entry(row, row);
            let radius: f64 = (start..end).filter(|&c| c != row).map(|c| self.entry(row, c).abs()).sum();
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        (lo, hi)
    }

    /// Spectral radius bound.
    pub fn norm_estimate(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues below `shift` (Sylvester inertia of the block
    /// `LDLᵀ` factorization of `A - shift`).
    pub fn count_below(&self, shift: f64) -> usize {
        let tiny = 1e-300_f64.max(f64::EPSILON * 1e-6 * self.norm_cache());
        match self.b {
            1 => {
                let mut count = 0;
                let mut d_prev = 0.0;
                for i in 0..self.n {
                    let mut d = self.diag[i] - shift;
                    if i > 0 {
                        let e = self.off[i - 1];
                        d -= e * e / d_prev;
                    }
                    if d.abs() < tiny {
                        d = -tiny;
                    }
                    if d < 0.0 {
                        count += 1;
                    }
                    d_prev = d;
                }
                count
            }
            _ => {
                let mut count = 0;
                // inverse of the previous pivot block
                let mut inv = [0.0; 4];
                for i in 0..self.n {
                    let mut m = [
                        self.d(i, 0, 0) - shift,
                        self.d(i, 0, 1),
                        self.d(i, 1, 0),
                        self.d(i, 1, 1) - shift,
                    ];
                    if i > 0 {
                        // m -= Eᵀ D⁻¹ E with E = off[i-1]
                        let e = [self.o(i - 1, 0, 0), self.o(i - 1, 0, 1), self.o(i - 1, 1, 0), self.o(i - 1, 1, 1)];
                        let de = [
                            inv[0] * e[0] + inv[1] * e[2],
                            inv[0] * e[1] + inv[1] * e[3],
                            inv[2] * e[0] + inv[3] * e[2],
                            inv[2] * e[1] + inv[3] * e[3],
                        ];
                        m[0] -= e[0] * de[0] + e[2] * de[2];
                        m[1] -= e[0] * de[1] + e[2] * de[3];
                        m[2] -= e[1] * de[0] + e[3] * de[2];
                        m[3] -= e[1] * de[1] + e[3] * de[3];
                    }
                    let sym = 0.5 * (m[1] + m[2]);
                    let mut det = m[0] * m[3] - sym * sym;
                    let trace = m[0] + m[3];
                    let scale = m[0].abs().max(m[3].abs()).max(sym.abs()).max(tiny);
                    if det.abs() < tiny * scale {
                        det = -tiny * scale;
                    }
                    count += if det < 0.0 {
                        1
                    } else if trace < 0.0 {
                        2
                    } else {
                        0
                    };
                    inv = [m[3] / det, -sym / det, -sym / det, m[0] / det];
                }
                count
            }
        }
    }

    fn norm_cache(&self) -> f64 {
        // cheap bound used only to size the zero-pivot guard
        self.diag.iter().chain(&self.off).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Banded copy of `A - shift` in natural (interleaved) ordering.
    pub fn to_band(&self, shift: f64) -> BandMatrix {
        let b = self.b;
        let bw = 2 * b - 1;
        let mut m = BandMatrix::zeros(self.dim(), bw, bw);
        for i in 0..self.n {
            for r in 0..b {
                for c in 0..b {
                    let v = self.d(i, r, c) - if r == c { shift } else { 0.0 };
                    if v != 0.0 {
                        m.add(i * b + r, i * b + c, v);
                    }
                    if i + 1 < self.n {
                        let o = self.o(i, r, c);
                        if o != 0.0 {
                            m.add(i * b + r, (i + 1) * b + c, o);
                            m.add((i + 1) * b + c, i * b + r, o);
                        }
                    }
                }
            }
        }
        m
    }

    /// Eigenvalue with index `j` (ascending, zero-based) by bisection on Sturm counts.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        while hi - lo > 4.0 * f64::EPSILON * scale {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Lowest `count` eigenpairs with eigenvectors orthonormal in the
    /// Euclidean product of these (weight-conjugated) coordinates.
    pub fn lowest_eigenpairs(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let count = count.min(self.dim());
        let norm = self.norm_estimate().max(f64::MIN_POSITIVE);
        let values: Vec<f64> = (0..count).map(|j| self.eigenvalue(j)).collect();
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for (j, &lambda) in values.iter().enumerate() {
            // members of the same numerical cluster found so far
            let cluster: Vec<usize> = (0..j).filter(|&i| (values[i] - lambda).abs() < 1e-9 * norm).collect();
            let shift = lambda - 1e-10 * norm;
            let lu = self.to_band(shift).factor()?;
            let mut x: Vec<f64> = (0..self.dim())
                .map(|i| 1.0 + 0.5 * ((i * 7919 + 13 * (j + 1)) % 101) as f64 / 101.0)
                .collect();
            for _ in 0..4 {
                for &c in &cluster {
                    orthogonalize(&mut x, &pairs[c].1);
                }
                lu.solve_in_place(&mut x);
                for &c in &cluster {
                    orthogonalize(&mut x, &pairs[c].1);
                }
                let n = dot(&x, &x).sqrt();
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::EigenFailure(format!("inverse iteration broke down at eigenvalue {j}")));
                }
                x.iter_mut().for_each(|v| *v /= n);
            }
            let ax = self.matvec(&x);
            let rayleigh = dot(&ax, &x);
            let resid = ax.iter().zip(&x).map(|(a, v)| (a - rayleigh * v).powi(2)).sum::<f64>().sqrt();
            if resid > 1e-8 * norm {
                return Err(Error::EigenFailure(format!(
                    "eigenpair {j} residual {resid:.3e} exceeds 1e-8·‖A‖"
                )));
            }
            pairs.push((rayleigh, x));
        }
        Ok(pairs)
    }

    /// Number of eigenvalues below `shift` of `A` compressed to the
    /// orthogonal complement of the columns of `constraints`
    /// (Haynsworth: `neg(A - s) + pos(Cᵀ(A - s)⁻¹C) - m`).
    pub fn constrained_count_below(&self, shift: f64, constraints: &[Vec<f64>]) -> Result<usize> {
        let base = self.count_below(shift);
        if constraints.is_empty() {
            return Ok(base);
        }
        let lu: BandLu = self.to_band(shift).factor()?;
        let m = constraints.len();
        let solved: Vec<Vec<f64>> = constraints.iter().map(|c| lu.solve(c)).collect();
        let gram = nalgebra::DMatrix::from_fn(m, m, |a, b| {
            0.5 * (dot(&constraints[a], &solved[b]) + dot(&constraints[b], &solved[a]))
        });
        let eig = gram.symmetric_eigen();
        let positive = eig.eigenvalues.iter().filter(|&&v| v > 0.0).count();
        Ok((base + positive).saturating_sub(m))
    }

    /// Smallest eigenvalue of `A` restricted to the orthogonal complement of
    /// `constraints`.
    pub fn constrained_minimum(&self, constraints: &[Vec<f64>]) -> Result<f64> {
        if constraints.is_empty() {
            return Ok(self.eigenvalue(0));
        }
        let basis = orthonormalize(constraints);
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs());
        while hi - lo > 1e-13 * scale {
            let mid = 0.5 * (lo + hi);
            // an exact eigenvalue at the shift makes the factorization singular
            let count = match self.constrained_count_below(mid, &basis) {
                Ok(c) => c,
                Err(_) => self.constrained_count_below(mid + 1e-12 * scale, &basis)?,
            };
            if count >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(x: &mut [f64], against: &[f64]) {
    let c = dot(x, against);
    x.iter_mut().zip(against).for_each(|(v, a)| *v -= c * a);
}

fn orthonormalize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut x = v.clone();
        for _ in 0..2 {
            for b in &basis {
                orthogonalize(&mut x, b);
            }
        }
        let n = dot(&x, &x).sqrt();
        let scale = dot(v, v).sqrt();
        if n > 1e-10 * scale {
            x.iter_mut().for_each(|c| *c /= n);
            basis.push(x);
        }
    }
    basis
}

/// One harmonic sector of `𝓛₁` or `𝓛₂`, in weight-conjugated coordinates
/// `x̃ = W^{1/2} x`.
#[derive(Clone, Debug)]
pub struct SectorOperator {
    pub k: u32,
    pub block: SectorBlock,
    pub matrix: BlockTridiag,
    /// Largest relative asymmetry of the conjugated stencil before symmetrization.
    pub symmetry_defect: f64,
    base_scale: f64,
    sqrt_w: Vec<f64>,
    grid: std::sync::Arc<crate::grid::RadialGrid>,
}

/// Potentials entering a sector operator.
struct Potentials {
    sigma: f64,
    lambda: f64,
    /// `2σ - 2 sin 2φ` without the `2σ` part
    f_pot: Vec<f64>,
    g_pot: Vec<f64>,
    coupling: Vec<f64>,
}

fn potentials(gs: &GroundState) -> Potentials {
    let p = gs.params;
    let (v, phi) = (gs.v.values(), gs.phi.values());
    let mut f_pot = Vec::with_capacity(v.len());
    let mut g_pot = Vec::with_capacity(v.len());
    let mut coupling = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let (s, c) = (2.0 * phi[i]).sin_cos();
        f_pot.push(-2.0 * s);
        g_pot.push(2.0 * p.q * c + 4.0 * v[i] * v[i] * s);
        coupling.push(-4.0 * v[i] * c);
    }
    Potentials {
        sigma: gs.sigma,
        lambda: p.lambda,
        f_pot,
        g_pot,
        coupling,
    }
}

/// Convergence gate for spectral work on a ground state.
pub const STALE_RESIDUAL: f64 = 1e-6;

/// Discretize sector `k` of `𝓛₁` (`Amplitude`) or `𝓛₂` (`Phase`).
pub fn assemble_sector(gs: &GroundState, k: u32, block: SectorBlock) -> Result<SectorOperator> {
    if !(gs.residual < STALE_RESIDUAL) {
        return Err(Error::StaleGroundState(gs.residual));
    }
    Ok(assemble_unchecked(gs, k, block))
}

fn assemble_unchecked(gs: &GroundState, k: u32, block: SectorBlock) -> SectorOperator {
    let grid = gs.grid().clone();
    let n = grid.len();
    let b = block.block_size();
    let pot = potentials(gs);
    let w = grid.weights();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let centrifugal: Vec<f64> = grid.nodes().iter().map(|r| (k * k) as f64 / (r * r)).collect();
    // stiffness per component: 1 for the amplitude, λ for the angle
    let stiff = |comp: usize| if comp == 0 { 1.0 } else { pot.lambda };

    let mut m = BlockTridiag::zeros(n, b);
    let mut defect = 0.0f64;
    let mut largest = 0.0f64;
    for i in 0..n {
        let (lo, d, up) = grid.neg_laplacian_row(i);
        for comp in 0..b {
            let s = stiff(comp);
            let local = if comp == 0 {
                2.0 * pot.sigma + pot.f_pot[i]
            } else {
                pot.g_pot[i]
            };
            m.diag[(i * b + comp) * b + comp] = s * (d + centrifugal[i]) + local;
            if i + 1 < n {
                // conjugate the stencil: Ã_ij = √w_i A_ij / √w_j
                let upper = sqrt_w[i] * s * up / sqrt_w[i + 1];
                let (lo_next, _, _) = grid.neg_laplacian_row(i + 1);
                let lower = sqrt_w[i + 1] * s * lo_next / sqrt_w[i];
                defect = defect.max((upper - lower).abs());
                largest = largest.max(upper.abs()).max(d.abs() * s);
                m.off[(i * b + comp) * b + comp] = 0.5 * (upper + lower);
            }
            let _ = lo;
        }
        if b == 2 {
            m.diag[i * 4 + 1] = pot.coupling[i];
            m.diag[i * 4 + 2] = pot.coupling[i];
        }
    }
    let base_scale = if k == 0 {
        m.norm_estimate()
    } else {
        assemble_unchecked(gs, 0, block).base_scale
    };
    SectorOperator {
        k,
        block,
        base_scale,
        matrix: m,
        symmetry_defect: if largest > 0.0 { defect / largest } else { 0.0 },
        sqrt_w,
        grid,
    }
}

/// An eigenpair mapped back to radial profiles, normalized in the
/// quadrature `L²` product.
#[derive(Clone, Debug)]
pub struct SectorMode {
    pub value: f64,
    pub f: RadialField,
    /// Angle component for `𝓛₁` sectors.
    pub g: Option<RadialField>,
}

impl SectorOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn to_fields(&self, x: &[f64]) -> Result<(RadialField, Option<RadialField>)> {
        let b = self.matrix.block_size();
        let n = self.grid.len();
        let comp = |c: usize| -> Result<RadialField> {
            RadialField::new(self.grid.clone(), (0..n).map(|i| x[i * b + c] / self.sqrt_w[i]).collect())
        };
        let f = comp(0)?;
        let g = if b == 2 { Some(comp(1)?) } else { None };
        Ok((f, g))
    }

    /// Conjugated coordinates of a perturbation given as radial profiles.
    pub fn from_fields(&self, f: &RadialField, g: Option<&RadialField>) -> Vec<f64> {
        let b = self.matrix.block_size();
        let n = self.grid.len();
        let mut x = vec![0.0; n * b];
        for i in 0..n {
            x[i * b] = self.sqrt_w[i] * f.values()[i];
            if let (2, Some(g)) = (b, g) {
                x[i * b + 1] = self.sqrt_w[i] * g.values()[i];
            }
        }
        x
    }

    /// Conjugated constraint vector for `(z, c) = 0` in `L²`.
    pub fn l2_constraint(&self, f: &RadialField, g: Option<&RadialField>) -> Vec<f64> {
        self.from_fields(f, g)
    }

    /// Conjugated constraint vector for `(z, c) = 0` in the sector's `H¹`
    /// product, whose gradient part includes `k²/r²`.
    pub fn h1_constraint(&self, f: &RadialField, g: Option<&RadialField>) -> Result<Vec<f64>> {
        let k2 = (self.k * self.k) as f64;
        let lift = |h: &RadialField| -> Result<RadialField> {
            let lap = h.laplacian()?;
            let nodes = self.grid.nodes();
            let vals = (0..h.values().len())
                .map(|i| h.values()[i] - lap.values()[i] + k2 * h.values()[i] / (nodes[i] * nodes[i]))
                .collect();
            RadialField::new(self.grid.clone(), vals)
        };
        let f1 = lift(f)?;
        let g1 = match g {
            Some(g) => Some(lift(g)?),
            None => None,
        };
        Ok(self.from_fields(&f1, g1.as_ref()))
    }

    pub fn eigensolve(&self, count: usize) -> Result<Vec<SectorMode>> {
        if count > 10 {
            return Err(Error::InvalidParameter(format!("at most 10 eigenpairs per call, got {count}")));
        }
        self.matrix
            .lowest_eigenpairs(count)?
            .into_iter()
            .map(|(value, x)| {
                let (f, g) = self.to_fields(&x)?;
                Ok(SectorMode { value, f, g })
            })
            .collect()
    }

    /// `‖A x - λx‖ / ‖x‖`-style residual of the operator applied to profiles,
    /// measured in the quadrature `L²` norm.
    pub fn apply_norm_ratio(&self, f: &RadialField, g: Option<&RadialField>) -> f64 {
        let x = self.from_fields(f, g);
        let ax = self.matrix.matvec(&x);
        dot(&ax, &ax).sqrt() / dot(&x, &x).sqrt()
    }

    /// Quadratic form `⟨A z, z⟩` in the quadrature product.
    pub fn quadratic_form(&self, f: &RadialField, g: Option<&RadialField>) -> f64 {
        let x = self.from_fields(f, g);
        dot(&self.matrix.matvec(&x), &x)
    }
}

fn overlap(a: &(RadialField, Option<RadialField>), b: &(RadialField, Option<RadialField>)) -> Result<f64> {
    let ip = |x: &(RadialField, Option<RadialField>), y: &(RadialField, Option<RadialField>)| -> Result<f64> {
        let mut s = x.0.inner(&y.0, InnerProduct::L2)?;
        if let (Some(p), Some(q)) = (&x.1, &y.1) {
            s += p.inner(q, InnerProduct::L2)?;
        }
        Ok(s)
    };
    Ok(ip(a, b)?.abs() / (ip(a, a)? * ip(b, b)?).sqrt())
}

/// Cosine of the angle between a mode and a reference perturbation.
pub fn mode_overlap(mode: &SectorMode, f: &RadialField, g: Option<&RadialField>) -> Result<f64> {
    overlap(&(mode.f.clone(), mode.g.clone()), &(f.clone(), g.cloned()))
}

/// Translation generator `(v', φ')` of the ground state.
pub fn translation_mode(gs: &GroundState) -> (RadialField, RadialField) {
    (gs.v.derivative(), gs.phi.derivative())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub max_k: u32,
    /// Eigenpairs reported per sector.
    pub count: usize,
    /// Kernel tolerance relative to the sector's spectral radius estimate.
    pub kernel_rel_tol: f64,
    pub coercivity_margin: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            max_k: 3,
            count: 6,
            kernel_rel_tol: 1e-6,
            coercivity_margin: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub k: u32,
    pub block: SectorBlock,
    pub eigenvalues: Vec<f64>,
    pub negative_count: usize,
    pub kernel_tol: f64,
    pub kernel_dimension: usize,
    /// Smallest eigenvalue after deflating the sector's admissibility conditions.
    pub deflated_minimum: f64,
    pub constraints: usize,
    pub symmetry_defect: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Coercive,
    NotCoercive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub sectors: Vec<SectorSummary>,
    pub tau: f64,
    /// Smallest deflated eigenvalue of each operator.
    pub tau_amplitude: f64,
    pub tau_phase: f64,
    pub verdict: Verdict,
}

impl SpectrumReport {
    pub fn sector(&self, block: SectorBlock, k: u32) -> Option<&SectorSummary> {
        self.sectors.iter().find(|s| s.block == block && s.k == k)
    }
}

/// Spectral radius bound of the sector's operator without the centrifugal
/// term, shared by all sectors of a block so kernel tolerances do not grow
/// with `k`.
fn kernel_tol(op: &SectorOperator, rel: f64) -> f64 {
    rel * op.base_scale
}

/// Kernel dimension of one sector at a given relative tolerance.
pub fn kernel_dimension(op: &SectorOperator, rel_tol: f64) -> usize {
    let tol = kernel_tol(op, rel_tol);
    op.matrix.count_below(tol) - op.matrix.count_below(-tol)
}

/// Kernel dimensions of `𝓛₁` sectors `0..=max_k`.
pub fn kernel_dimension_scan(gs: &GroundState, max_k: u32, rel_tol: f64) -> Result<Vec<(u32, usize)>> {
    (0..=max_k)
        .map(|k| Ok((k, kernel_dimension(&assemble_sector(gs, k, SectorBlock::Amplitude)?, rel_tol))))
        .collect()
}

/// Deflated spectra of both operators in sectors `0..=max_k`.
pub fn coercivity_probe(gs: &GroundState, opts: &SpectrumOptions) -> Result<SpectrumReport> {
    let mut sectors = Vec::new();
    for block in [SectorBlock::Amplitude, SectorBlock::Phase] {
        for k in 0..=opts.max_k {
            let op = assemble_sector(gs, k, block)?;
            let modes = op.eigensolve(opts.count.min(10))?;
            let tol = kernel_tol(&op, opts.kernel_rel_tol);
            let kernel: Vec<&SectorMode> = modes.iter().filter(|m| m.value.abs() < tol).collect();
            let constraints: Vec<Vec<f64>> = match (block, k) {
                (SectorBlock::Amplitude, 0) => {
                    let zero = RadialField::zeros(gs.grid().clone());
                    let mut c = vec![op.l2_constraint(&gs.v, Some(&zero))];
                    for m in &kernel {
                        c.push(op.h1_constraint(&m.f, m.g.as_ref())?);
                    }
                    c
                }
                (SectorBlock::Amplitude, 1) => {
                    let (dv, dphi) = translation_mode(gs);
                    vec![op.h1_constraint(&dv, Some(&dphi))?]
                }
                (SectorBlock::Phase, 0) => vec![op.h1_constraint(&gs.v, None)?],
                _ => Vec::new(),
            };
            let deflated_minimum = op.matrix.constrained_minimum(&constraints)?;
            sectors.push(SectorSummary {
                k,
                block,
                eigenvalues: modes.iter().map(|m| m.value).collect(),
                negative_count: op.matrix.count_below(-tol),
                kernel_tol: tol,
                kernel_dimension: kernel_dimension(&op, opts.kernel_rel_tol),
                deflated_minimum,
                constraints: constraints.len(),
                symmetry_defect: op.symmetry_defect,
            });
        }
    }
    let min_of = |b: SectorBlock| {
        sectors
            .iter()
            .filter(|s| s.block == b)
            .map(|s| s.deflated_minimum)
            .fold(f64::INFINITY, f64::min)
    };
    let tau_amplitude = min_of(SectorBlock::Amplitude);
    let tau_phase = min_of(SectorBlock::Phase);
    let tau = tau_amplitude.min(tau_phase);
    Ok(SpectrumReport {
        sectors,
        tau,
        tau_amplitude,
        tau_phase,
        verdict: if tau > opts.coercivity_margin {
            Verdict::Coercive
        } else {
            Verdict::NotCoercive
        },
    })
}

/// Rayleigh quotient `|⟨𝓛₁ d, d⟩| / ‖d‖²` of the translation generator
/// `d = (v', φ')` in sector `k = 1`. Zero in the continuum limit; the
/// pointwise residual `‖𝓛₁ d‖` does not shrink because the origin stencil is
/// only consistent in the weak sense.
pub fn translation_defect(gs: &GroundState) -> Result<f64> {
    let op = assemble_sector(gs, 1, SectorBlock::Amplitude)?;
    let (dv, dphi) = translation_mode(gs);
    let x = op.from_fields(&dv, Some(&dphi));
    Ok(op.quadratic_form(&dv, Some(&dphi)).abs() / dot(&x, &x))
}

/// Direct second difference of `2S(v + εη, φ + εϑ)` at `ε = 0`, the oracle
/// for the `k = 0` quadratic form of `𝓛₁`.
pub fn action_second_difference(gs: &GroundState, eta: &RadialField, vartheta: &RadialField, eps: f64) -> Result<f64> {
    let s = |t: f64| -> Result<f64> {
        let u = gs.v.add_scaled(t, eta)?;
        let th = gs.phi.add_scaled(t, vartheta)?;
        Ok(2.0 * crate::energy::evaluate(&u, &th, &gs.params, gs.sigma)?.action)
    };
    Ok((s(eps)? - 2.0 * s(0.0)? + s(-eps)?) / (eps * eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::MediumParams;
    use crate::grid::RadialGrid;
    use crate::groundstate::{GroundState, Provenance};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dense(m: &BlockTridiag) -> DMatrix<f64> {
        DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.entry(i, j))
    }

    fn random_tridiag(n: usize, b: usize, seed: &[f64]) -> BlockTridiag {
        let mut m = BlockTridiag::zeros(n, b);
        for (i, v) in m.diag.iter_mut().enumerate() {
            *v = seed[i % seed.len()] * 3.0;
        }
        if b == 2 {
            for i in 0..n {
                let s = 0.5 * (m.diag[i * 4 + 1] + m.diag[i * 4 + 2]);
                m.diag[i * 4 + 1] = s;
                m.diag[i * 4 + 2] = s;
            }
        }
        for (i, v) in m.off.iter_mut().enumerate() {
            *v = seed[(i * 7 + 3) % seed.len()];
        }
        m
    }

    proptest! {
        #[test]
        fn sturm_counts_match_dense_spectrum(
            n in 2usize..12,
            b in 1usize..3,
            seed in prop::collection::vec(-1.0f64..1.0, 5..20),
            shift in -4.0f64..4.0,
        ) {
            let m = random_tridiag(n, b, &seed);
            let eig = dense(&m).symmetric_eigenvalues();
            prop_assume!(eig.iter().all(|e| (e - shift).abs() > 1e-8));
            let expected = eig.iter().filter(|&&e| e < shift).count();
            prop_assert_eq!(m.count_below(shift), expected);
        }

        #[test]
        fn constrained_minimum_matches_projected_dense(
            n in 3usize..10,
            b in 1usize..3,
            seed in prop::collection::vec(-1.0f64..1.0, 5..20),
            c in prop::collection::vec(-1.0f64..1.0, 20),
        ) {
            let m = random_tridiag(n, b, &seed);
            let dim = m.dim();
            let constraint: Vec<f64> = c[..dim].to_vec();
            let norm = constraint.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(norm > 0.1);
            // dense oracle: basis of the complement via QR of [c | I]
            let a = dense(&m);
            let cvec = nalgebra::DVector::from_column_slice(&constraint) / norm;
            let p = DMatrix::identity(dim, dim) - &cvec * cvec.transpose();
            let projected = &p * &a * &p;
            let eig = projected.symmetric_eigen();
            // drop the eigenvalue belonging to the constraint direction
            let mut vals: Vec<(f64, f64)> = eig.eigenvalues.iter().enumerate()
                .map(|(i, &v)| (v, eig.eigenvectors.column(i).dot(&cvec).abs()))
                .collect();
            vals.retain(|(_, ov)| *ov < 0.5);
            let expected = vals.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
            let got = m.constrained_minimum(&[constraint]).unwrap();
            prop_assert!((got - expected).abs() < 1e-7 * (1.0 + expected.abs()), "{} vs {}", got, expected);
        }
    }

    #[test]
    fn eigenpairs_match_dense_oracle() {
        let seed: Vec<f64> = (0..17).map(|i| ((i * 37 % 17) as f64 / 8.5) - 1.0).collect();
        for b in [1, 2] {
            let m = random_tridiag(30, b, &seed);
            let eig = dense(&m).symmetric_eigenvalues();
            let mut sorted: Vec<f64> = eig.iter().cloned().collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pairs = m.lowest_eigenpairs(6).unwrap();
            for (j, (val, vec)) in pairs.iter().enumerate() {
                assert!((val - sorted[j]).abs() < 1e-10, "{val} vs {}", sorted[j]);
                let n: f64 = vec.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_deflation_reproduces_lowest_eigenvalue() {
        let seed: Vec<f64> = (0..11).map(|i| ((i * 5 % 11) as f64 / 5.5) - 1.0).collect();
        let m = random_tridiag(20, 2, &seed);
        assert_eq!(m.constrained_minimum(&[]).unwrap(), m.eigenvalue(0));
    }

    fn free_state(sigma: f64) -> GroundState {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let z = RadialField::zeros(g);
        GroundState::from_profiles(z.clone(), z, sigma, MediumParams::default(), Provenance::ChargeFlow).unwrap()
    }

    #[test]
    fn free_phase_operator_is_bounded_below_by_two_sigma() {
        let gs = free_state(0.3);
        let op = assemble_sector(&gs, 0, SectorBlock::Phase).unwrap();
        assert!(op.matrix.eigenvalue(0) >= 0.6);
        assert!(op.symmetry_defect < 1e-12);
    }

    #[test]
    fn sectors_differ_by_centrifugal_term() {
        let mut gs = free_state(0.3);
        gs.params = MediumParams::new(2.5, 1.0).unwrap();
        let a0 = assemble_sector(&gs, 0, SectorBlock::Amplitude).unwrap();
        let a1 = assemble_sector(&gs, 1, SectorBlock::Amplitude).unwrap();
        let nodes = gs.grid().nodes();
        for i in 0..nodes.len() {
            let r2 = nodes[i] * nodes[i];
            let df = a1.matrix.entry(2 * i, 2 * i) - a0.matrix.entry(2 * i, 2 * i);
            let dg = a1.matrix.entry(2 * i + 1, 2 * i + 1) - a0.matrix.entry(2 * i + 1, 2 * i + 1);
            assert!((df - 1.0 / r2).abs() < 1e-9);
            assert!((dg - 2.5 / r2).abs() < 1e-9);
            if i + 1 < nodes.len() {
                assert_eq!(a1.matrix.entry(2 * i, 2 * i + 2), a0.matrix.entry(2 * i, 2 * i + 2));
            }
        }
    }

    #[test]
    fn stale_state_rejected() {
        let mut gs = free_state(0.3);
        gs.residual = 1e-3;
        assert!(matches!(
            assemble_sector(&gs, 0, SectorBlock::Phase),
            Err(Error::StaleGroundState(_))
        ));
    }
}
