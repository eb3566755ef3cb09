//! Post-processing of ground states: exponential decay fits, the auxiliary
//! function `w = r^{1/4} v²`, the radial `1/r` bound, and CSV emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InnerProduct, RadialField};
use crate::groundstate::GroundState;

/// Values at or below this magnitude are treated as roundoff.
pub const ROUNDOFF_FLOOR: f64 = 1e-14;
/// Minimum coefficient of determination for a valid fit.
pub const VALID_R_SQUARED: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub field_name: String,
    pub window: (f64, f64),
    /// Fitted `m` in `|f| ≈ C e^{-m r}`.
    pub rate: f64,
    pub log_amplitude: f64,
    pub r_squared: f64,
    pub nodes: usize,
    /// Proof bound the rate is compared against (`√σ` for `v`).
    pub paper_bound: f64,
    pub valid: bool,
}

/// Default fit window `[0.5, 0.8]·r_max`.
pub fn default_window(f: &RadialField) -> (f64, f64) {
    let r = f.grid().r_max();
    (0.5 * r, 0.8 * r)
}

/// Window for fast-decaying profiles: from where `|f|` first drops below
/// `1e-4·max|f|` to where it drops below `1e-10·max|f|` (or `0.8·r_max`).
pub fn adaptive_window(f: &RadialField) -> (f64, f64) {
    let nodes = f.grid().nodes();
    let peak = f.max_abs();
    let first_below = |level: f64| {
        nodes
            .iter()
            .zip(f.values())
            .find(|(_, v)| v.abs() < level * peak)
            .map(|(r, _)| *r)
    };
    let cap = 0.8 * f.grid().r_max();
    let lo = first_below(1e-4).unwrap_or(0.5 * f.grid().r_max()).min(cap);
    let hi = first_below(1e-10).unwrap_or(cap).min(cap);
    (lo, hi)
}

/// Radius where `|f|` first falls to half its maximum.
pub fn half_max_radius(f: &RadialField) -> f64 {
    let peak = f.max_abs();
    f.grid()
        .nodes()
        .iter()
        .zip(f.values())
        .find(|(_, v)| v.abs() <= 0.5 * peak)
        .map(|(r, _)| *r)
        .unwrap_or(f.grid().r_max())
}

/// Least-squares line through `(r, log|f|)` over `window`.
pub fn fit_decay(f: &RadialField, name: &str, window: (f64, f64), paper_bound: f64) -> Result<DecayFit> {
    let (lo, hi) = window;
    let r_max = f.grid().r_max();
    if !(lo >= 0.0 && lo < hi && hi <= r_max) {
        return Err(Error::InvalidParameter(format!(
            "fit window [{lo}, {hi}] is not inside [0, {r_max}]"
        )));
    }
    let half = half_max_radius(f);
    if lo <= half {
        return Err(Error::InvalidParameter(format!(
            "fit window starts at {lo}, inside the half-maximum radius {half}"
        )));
    }
    let pts: Vec<(f64, f64)> = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values())
        .filter(|(r, v)| **r >= lo && **r <= hi && v.abs() > ROUNDOFF_FLOOR)
        .map(|(r, v)| (*r, v.abs().ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::WindowTooSmall(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        field_name: name.to_string(),
        window,
        rate: -slope,
        log_amplitude: intercept,
        r_squared,
        nodes: pts.len(),
        paper_bound,
        valid: r_squared > VALID_R_SQUARED,
    })
}

/// Decay fits of `v` (default window, bound `√σ`) and `φ` (adaptive window,
/// bound `min(2m_v, √(2q/λ))`).
pub fn ground_state_decay(gs: &GroundState) -> Result<(DecayFit, DecayFit)> {
    let v_fit = fit_decay(&gs.v, "v", default_window(&gs.v), gs.sigma.sqrt())?;
    let phi_bound = (2.0 * v_fit.rate).min((2.0 * gs.params.q / gs.params.lambda).sqrt());
    let phi_fit = fit_decay(&gs.phi, "phi", adaptive_window(&gs.phi), phi_bound)?;
    Ok((v_fit, phi_fit))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryRow {
    pub r: f64,
    pub w: f64,
    pub w_rr: f64,
    /// `2σ - 2 sin 2φ - 1/r²`.
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryProbe {
    pub rows: Vec<AuxiliaryRow>,
    /// First radius beyond which the coefficient stays above `σ`.
    pub r0: Option<f64>,
    /// `min (w_rr - σw) / max w` over `r > r0`.
    pub min_margin: f64,
    /// Coefficient at the start of the grid's last decade (`r = 0.9 r_max`).
    pub tail_coefficient: f64,
    pub sigma: f64,
}

/// Tabulate `w = r^{1/4} v²`, its second derivative, and the coefficient
/// `2σ - 2 sin 2φ - 1/r²`.
pub fn auxiliary_w_probe(gs: &GroundState) -> AuxiliaryProbe {
    let r = gs.grid().nodes();
    let n = r.len();
    let w: Vec<f64> = (0..n).map(|i| r[i].powf(0.25) * gs.v.values()[i].powi(2)).collect();
    let sigma = gs.sigma;
    let coefficient: Vec<f64> = (0..n)
        .map(|i| 2.0 * sigma - 2.0 * (2.0 * gs.phi.values()[i]).sin() - 1.0 / (r[i] * r[i]))
        .collect();
    // nonuniform three-point second derivative on interior nodes
    let mut rows = Vec::with_capacity(n.saturating_sub(2));
    for i in 1..n - 1 {
        let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
        let w_rr = 2.0 * (h0 * w[i + 1] - (h0 + h1) * w[i] + h1 * w[i - 1]) / (h0 * h1 * (h0 + h1));
        rows.push(AuxiliaryRow {
            r: r[i],
            w: w[i],
            w_rr,
            coefficient: coefficient[i],
        });
    }
    let last_below = rows.iter().rposition(|row| row.coefficient <= sigma);
    let r0 = match last_below {
        Some(k) if k + 1 < rows.len() => Some(rows[k + 1].r),
        Some(_) => None,
        None => rows.first().map(|row| row.r),
    };
    let w_max = w.iter().cloned().fold(0.0, f64::max);
    let min_margin = match r0 {
        Some(r0) => rows
            .iter()
            .filter(|row| row.r > r0)
            .map(|row| (row.w_rr - sigma * row.w) / w_max)
            .fold(f64::INFINITY, f64::min),
        None => f64::NAN,
    };
    let tail_r = 0.9 * gs.grid().r_max();
    let tail_coefficient = rows
        .iter()
        .find(|row| row.r >= tail_r)
        .map(|row| row.coefficient)
        .unwrap_or(f64::NAN);
    AuxiliaryProbe {
        rows,
        r0,
        min_margin,
        tail_coefficient,
        sigma,
    }
}

/// `max_r r|f(r)| / ‖f‖_{L²}` for a profile with nonincreasing `|f|`.
pub fn radial_bound_check(f: &RadialField) -> Result<f64> {
    let vals = f.values();
    let slack = 1e-12 * f.max_abs();
    if vals.windows(2).any(|p| p[1].abs() > p[0].abs() + slack) {
        return Err(Error::NotDecreasing);
    }
    let norm = f.norm(InnerProduct::L2);
    if norm == 0.0 {
        return Err(Error::InvalidParameter("zero profile".into()));
    }
    let c = f
        .grid()
        .nodes()
        .iter()
        .zip(vals)
        .map(|(r, v)| r * v.abs())
        .fold(0.0, f64::max)
        / norm;
    if !c.is_finite() {
        return Err(Error::NonFiniteField);
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// CSV

/// A numeric table written as CSV with 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} columns, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::CorruptFile("empty CSV".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut table = Self { header, rows: Vec::new() };
        for (k, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::CorruptFile(format!("CSV row {}: {e}", k + 1)))?;
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.render().as_bytes())
    }
}

/// Series available for plotting; absent pieces are skipped.
#[derive(Clone, Debug, Default)]
pub struct PlotData {
    /// `(a, J_a, σ(a))`, `NaN` where no ground state exists.
    pub charge_curve: Vec<(f64, f64, f64)>,
    /// `(σ, c(σ), a(σ))` from fixed-frequency solves.
    pub frequency_curve: Vec<(f64, f64, f64)>,
    /// `(operator, k, index, eigenvalue)` with operator 1 or 2.
    pub spectra: Vec<(u32, u32, usize, f64)>,
    /// `(z, Q, E, orbital distance)`.
    pub trace: Vec<(f64, f64, f64, f64)>,
    pub decay: Vec<DecayFit>,
}

/// Write one CSV per nonempty series into `dir`; returns the written paths.
pub fn emit_plot_data(dir: &Path, data: &PlotData) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, table: CsvTable| -> Result<()> {
        let path = dir.join(name);
        table.write(&path)?;
        written.push(path);
        Ok(())
    };
    if !data.charge_curve.is_empty() {
        let mut t = CsvTable::new(["a", "J", "sigma"]);
        for &(a, j, s) in &data.charge_curve {
            t.push(vec![a, j, s])?;
        }
        emit("charge_curve.csv", t)?;
    }
    if !data.frequency_curve.is_empty() {
        let mut t = CsvTable::new(["sigma", "c", "a"]);
        for &(s, c, a) in &data.frequency_curve {
            t.push(vec![s, c, a])?;
        }
        emit("frequency_curve.csv", t)?;
    }
    if !data.spectra.is_empty() {
        let mut t = CsvTable::new(["operator", "k", "index", "eigenvalue"]);
        for &(op, k, i, e) in &data.spectra {
            t.push(vec![op as f64, k as f64, i as f64, e])?;
        }
        emit("spectra.csv", t)?;
    }
    if !data.trace.is_empty() {
        let mut t = CsvTable::new(["z", "Q", "E", "orbital_distance"]);
        for &(z, q, e, d) in &data.trace {
            t.push(vec![z, q, e, d])?;
        }
        emit("trace.csv", t)?;
    }
    if !data.decay.is_empty() {
        let mut t = CsvTable::new(["field", "r_lo", "r_hi", "rate", "log_amplitude", "r_squared", "bound", "valid"]);
        for (k, d) in data.decay.iter().enumerate() {
            t.push(vec![
                k as f64,
                d.window.0,
                d.window.1,
                d.rate,
                d.log_amplitude,
                d.r_squared,
                d.paper_bound,
                if d.valid { 1.0 } else { 0.0 },
            ])?;
        }
        emit("decay.csv", t)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use proptest::prelude::*;

    #[test]
    fn exact_exponential_rate() {
        let g = RadialGrid::new(20.0, 1000).unwrap();
        let f = RadialField::from_fn(&g, |r| (-2.0 * r).exp());
        let fit = fit_decay(&f, "f", (2.0, 8.0), 1.0).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-3);
        assert!(fit.valid);
    }

    #[test]
    fn roundoff_nodes_are_dropped() {
        let g = RadialGrid::new(40.0, 400).unwrap();
        let f = RadialField::from_fn(&g, |r| (-2.0 * r).exp());
        // e^{-2r} < 1e-14 beyond r ≈ 16
        assert!(matches!(fit_decay(&f, "f", (20.0, 32.0), 1.0), Err(Error::WindowTooSmall(0))));
    }

    #[test]
    fn window_must_clear_the_core() {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let f = RadialField::from_fn(&g, |r| (-r * r).exp());
        assert!(matches!(fit_decay(&f, "f", (0.1, 2.0), 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(fit_decay(&f, "f", (3.0, 25.0), 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn radial_bound_is_scale_free_and_rejects_bumps() {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let f = RadialField::from_fn(&g, |r| 1.0 / (1.0 + (2.0 * (r - 3.0)).exp()));
        let c1 = radial_bound_check(&f).unwrap();
        let c3 = radial_bound_check(&f.scaled(3.0)).unwrap();
        assert!(c1.is_finite() && (c1 - c3).abs() < 1e-12 * c1);
        let ring = RadialField::from_fn(&g, |r| r * (-r).exp());
        assert!(matches!(radial_bound_check(&ring), Err(Error::NotDecreasing)));
    }

    proptest! {
        #[test]
        fn csv_round_trips_to_full_precision(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..20)) {
            let mut t = CsvTable::new(["a", "b", "c"]);
            for r in &rows {
                t.push(r.clone()).unwrap();
            }
            let text = t.render();
            let back = CsvTable::parse(&text).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.render(), text);
            prop_assert_eq!(back.rows.len(), rows.len());
        }
    }

    #[test]
    fn plot_data_emission_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let data = PlotData {
            charge_curve: vec![(3.0, -1e-4, 0.006), (6.0, -0.2, 0.25)],
            trace: vec![(0.0, 3.0, -0.2, 0.0), (0.5, 3.0, -0.2, 1e-9)],
            ..Default::default()
        };
        let first = emit_plot_data(dir.path(), &data).unwrap();
        let bytes: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let again = emit_plot_data(dir.path(), &data).unwrap();
        assert_eq!(first, again);
        for (p, b) in again.iter().zip(&bytes) {
            assert_eq!(&std::fs::read(p).unwrap(), b);
        }
        let parsed = CsvTable::parse(&std::fs::read_to_string(dir.path().join("charge_curve.csv")).unwrap()).unwrap();
        assert_eq!(parsed.column("sigma").unwrap(), vec![0.006, 0.25]);
    }
}
