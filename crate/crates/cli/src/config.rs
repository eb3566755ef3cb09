//! Flat JSON run configurations. A config file is read first, then any flags
//! given on the command line replace the matching keys.

use std::path::{Path, PathBuf};

use nematicon::energy::check_sigma;
use nematicon::evolution::Perturbation;
use nematicon::MediumParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Merge a config file and flag overrides into a typed config.
pub fn resolve<C: DeserializeOwned + Validate>(file: Option<&Path>, overrides: Map<String, Value>) -> Result<C, CliError> {
    let mut doc = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(CliError::Config(format!("{} is not a JSON object", path.display()))),
                Err(e) => return Err(CliError::Config(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    doc.extend(overrides);
    let cfg: C = serde_json::from_value(Value::Object(doc)).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Collect `Some` flag values into an override map.
#[macro_export]
macro_rules! overrides {
    ($($key:literal => $val:expr),* $(,)?) => {{
        let mut m = serde_json::Map::new();
        $(
            if let Some(v) = $val {
                m.insert($key.to_string(), serde_json::to_value(v).expect("flag value serializes"));
            }
        )*
        m
    }};
}

pub trait Validate {
    fn validate(&self) -> Result<(), CliError>;
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {x}")))
    }
}

fn medium(lambda: f64, q: f64) -> Result<MediumParams, CliError> {
    positive("lambda", lambda)?;
    positive("q", q)?;
    Ok(MediumParams { lambda, q })
}

fn radial(r_max: f64, n: usize) -> Result<(), CliError> {
    positive("r_max", r_max)?;
    if n < 16 {
        return Err(CliError::Config(format!("n must be at least 16, got {n}")));
    }
    Ok(())
}

fn sigma(s: f64) -> Result<(), CliError> {
    check_sigma(s).map_err(|_| CliError::Config(format!("sigma = {s} is outside (0, 1); stationary waves require 0 < sigma < 1")))
}

fn d_r_max() -> f64 {
    40.0
}
fn d_n() -> usize {
    2048
}
fn d_one() -> f64 {
    1.0
}
fn d_a() -> f64 {
    6.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleConfig {
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    /// Peak of the Gaussian beam `A e^{-r²/(2w²)}`.
    #[serde(default = "d_one")]
    pub amplitude: f64,
    #[serde(default = "d_width")]
    pub width: f64,
    /// Field file with `u`; replaces the Gaussian when set.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "d_angle_tol")]
    pub tol: f64,
}

fn d_width() -> f64 {
    2.0
}
fn d_angle_tol() -> f64 {
    1e-10
}

impl Validate for AngleConfig {
    fn validate(&self) -> Result<(), CliError> {
        radial(self.r_max, self.n)?;
        medium(self.lambda, self.q)?;
        positive("width", self.width)?;
        positive("tol", self.tol)
    }
}

impl AngleConfig {
    pub fn params(&self) -> MediumParams {
        MediumParams { lambda: self.lambda, q: self.q }
    }
}

/// Where a command gets its ground state from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundConfig {
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    /// Charge `‖u‖²`.
    #[serde(default = "d_a")]
    pub a: f64,
    /// Output directory of an earlier `ground` or `nehari` run; replaces the solve.
    #[serde(default)]
    pub input: Option<PathBuf>,
}

impl Validate for GroundConfig {
    fn validate(&self) -> Result<(), CliError> {
        radial(self.r_max, self.n)?;
        medium(self.lambda, self.q)?;
        positive("a", self.a)
    }
}

impl GroundConfig {
    pub fn params(&self) -> MediumParams {
        MediumParams { lambda: self.lambda, q: self.q }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NehariConfig {
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    pub sigma: f64,
}

impl Validate for NehariConfig {
    fn validate(&self) -> Result<(), CliError> {
        radial(self.r_max, self.n)?;
        medium(self.lambda, self.q)?;
        sigma(self.sigma)
    }
}

impl NehariConfig {
    pub fn params(&self) -> MediumParams {
        MediumParams { lambda: self.lambda, q: self.q }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    #[serde(default = "d_a")]
    pub a: f64,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "d_max_k")]
    pub max_k: u32,
    #[serde(default = "d_count")]
    pub count: usize,
    #[serde(default = "d_kernel_tol")]
    pub kernel_rel_tol: f64,
}

fn d_max_k() -> u32 {
    3
}
fn d_count() -> usize {
    6
}
fn d_kernel_tol() -> f64 {
    1e-6
}

impl Validate for SpectrumConfig {
    fn validate(&self) -> Result<(), CliError> {
        self.ground().validate()?;
        if self.count == 0 || self.count > 10 {
            return Err(CliError::Config(format!("count must be in 1..=10, got {}", self.count)));
        }
        positive("kernel_rel_tol", self.kernel_rel_tol)
    }
}

impl SpectrumConfig {
    pub fn ground(&self) -> GroundConfig {
        GroundConfig {
            r_max: self.r_max,
            n: self.n,
            lambda: self.lambda,
            q: self.q,
            a: self.a,
            input: self.input.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Embedded ground state of charge `a`.
    Ground,
    /// `amplitude · e^{-r²/(2 width²)}`.
    Gaussian,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    #[serde(default = "d_a")]
    pub a: f64,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "d_box")]
    pub box_size: f64,
    #[serde(default = "d_plane_n")]
    pub plane_n: usize,
    #[serde(default = "d_initial")]
    pub initial: InitialState,
    #[serde(default = "d_one")]
    pub amplitude: f64,
    #[serde(default = "d_width")]
    pub width: f64,
    #[serde(default = "d_dz")]
    pub dz: f64,
    #[serde(default = "d_z_end")]
    pub z_end: f64,
    #[serde(default = "d_record")]
    pub record_every: usize,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "d_true")]
    pub coupling: bool,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
}

fn d_box() -> f64 {
    40.0
}
fn d_plane_n() -> usize {
    256
}
fn d_initial() -> InitialState {
    InitialState::Ground
}
fn d_dz() -> f64 {
    0.002
}
fn d_z_end() -> f64 {
    20.0
}
fn d_record() -> usize {
    50
}
fn d_true() -> bool {
    true
}

impl Validate for EvolveConfig {
    fn validate(&self) -> Result<(), CliError> {
        self.ground().validate()?;
        positive("box_size", self.box_size)?;
        if self.plane_n < 8 || !self.plane_n.is_power_of_two() {
            return Err(CliError::Config(format!("plane_n must be a power of two >= 8, got {}", self.plane_n)));
        }
        positive("width", self.width)?;
        positive("dz", self.dz)?;
        if !(self.z_end >= self.dz) {
            return Err(CliError::Config(format!("z_end = {} must be at least dz = {}", self.z_end, self.dz)));
        }
        if self.record_every == 0 {
            return Err(CliError::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

impl EvolveConfig {
    pub fn ground(&self) -> GroundConfig {
        GroundConfig {
            r_max: self.r_max,
            n: self.n,
            lambda: self.lambda,
            q: self.q,
            a: self.a,
            input: self.input.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Fixed-charge solves over `a`.
    Charge,
    /// Fixed-frequency solves over `σ`.
    Sigma,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    #[serde(default = "d_parallelism")]
    pub parallelism: usize,
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
}

fn d_parallelism() -> usize {
    1
}

impl Validate for SweepConfig {
    fn validate(&self) -> Result<(), CliError> {
        radial(self.r_max, self.n)?;
        medium(self.lambda, self.q)?;
        if self.values.is_empty() {
            return Err(CliError::Config("values must not be empty".into()));
        }
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be >= 1".into()));
        }
        for &v in &self.values {
            match self.kind {
                SweepKind::Charge => positive("a", v)?,
                SweepKind::Sigma => sigma(v)?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default = "d_r_max")]
    pub r_max: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_one")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub q: f64,
    #[serde(default = "d_a")]
    pub a: f64,
    #[serde(default)]
    pub input: Option<PathBuf>,
}

impl Validate for DecayConfig {
    fn validate(&self) -> Result<(), CliError> {
        self.ground().validate()
    }
}

impl DecayConfig {
    pub fn ground(&self) -> GroundConfig {
        GroundConfig {
            r_max: self.r_max,
            n: self.n,
            lambda: self.lambda,
            q: self.q,
            a: self.a,
            input: self.input.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut m = Map::new();
        m.insert("sigma".into(), Value::from(0.3));
        m.insert("sigmaa".into(), Value::from(0.3));
        assert!(matches!(resolve::<NehariConfig>(None, m), Err(CliError::Config(_))));
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sigma": 0.3, "n": 512}"#).unwrap();
        let cfg: NehariConfig = resolve(Some(&path), overrides!("sigma" => Some(0.4))).unwrap();
        assert_eq!((cfg.sigma, cfg.n, cfg.r_max), (0.4, 512, 40.0));
    }

    #[test]
    fn physical_ranges_are_enforced() {
        let bad = [
            overrides!("sigma" => Some(1.2)),
            overrides!("sigma" => Some(0.0)),
            overrides!("sigma" => Some(0.5), "lambda" => Some(-1.0)),
        ];
        for m in bad {
            assert!(resolve::<NehariConfig>(None, m).is_err());
        }
        assert!(resolve::<GroundConfig>(None, overrides!("a" => Some(-2.0))).is_err());
        let m = overrides!("kind" => Some("sigma"), "values" => Some(vec![0.2, 1.0]));
        assert!(resolve::<SweepConfig>(None, m).is_err());
    }
}
