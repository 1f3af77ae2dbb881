//! Run configuration shared by the command-line subcommands.
//!
//! Every section has defaults, so `{}` is a valid configuration. Unknown keys
//! are rejected. Individual values can be overridden with `path=value` strings
//! (see [`apply_override`]).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::beat::{BeatKernel, BeatParams};
use crate::constants::{RhodiumParams, RH_TAU0_S};
use crate::error::{Error, Result};
use crate::fitting::{FitConfig, FitParam, ParamBounds};
use crate::lamb_moessbauer::{DisplacementEnsemble, Interpretation};
use crate::lattice::{bragg_angle_solve, LatticeSpec, TriGammaGeometry};
use crate::spectra::Binning;

/// Inputs of the scalar estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Lamb-Mossbauer factor used for the beat time constant.
    pub f_lm: f64,
    /// Coherence length component, m.
    pub xi: f64,
    /// Nuclear attenuation coefficient, 1/m. Defaults to 1 / nuclear depth.
    pub mu_nuclear: Option<f64>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            f_lm: 0.5,
            xi: 50e-6,
            mu_nuclear: None,
        }
    }
}

/// How the tri-gamma geometry is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub channel_axis: [i32; 3],
    pub g_shell_cutoff: u32,
    /// Index into the Bragg solutions sorted by cone angle.
    pub candidate: usize,
    /// Explicit cone half-angle, rad. Bypasses the Bragg solve when set.
    pub theta: Option<f64>,
    /// Azimuth of the first gamma when `theta` is given, rad.
    pub azimuth_offset: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            channel_axis: [1, 1, 1],
            g_shell_cutoff: 4,
            candidate: 0,
            theta: None,
            azimuth_offset: 0.0,
        }
    }
}

/// Rectangular sampling plane for field maps, in units of the lattice constant
/// and working-frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldMapConfig {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub nu: usize,
    pub nv: usize,
}

impl Default for FieldMapConfig {
    fn default() -> Self {
        Self {
            origin: [0.0; 3],
            u: [1.0, 0.0, 0.0],
            v: [0.0, 1.0, 0.0],
            nu: 41,
            nv: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlmConfig {
    pub ensemble: DisplacementEnsemble,
    pub interpretation: Interpretation,
}

impl Default for FlmConfig {
    fn default() -> Self {
        Self {
            ensemble: DisplacementEnsemble::longitudinal(1e-12, 1_000_000, 0),
            interpretation: Interpretation::Coherent,
        }
    }
}

/// Uniform time grid for beat curves, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        // 6-minute cadence over 20 h
        Self {
            start: 0.0,
            step: 360.0,
            count: 201,
        }
    }
}

impl TimeGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.start.is_finite() && self.start >= 0.0) {
            return Err(Error::domain("grid start must be finite and >= 0"));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::domain("grid step must be finite and > 0"));
        }
        Ok((0..self.count).map(|i| self.start + self.step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub binning: Binning,
    /// K-alpha count-rate scale, counts/s.
    pub kalpha_scale: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            binning: Binning {
                width: 360.0,
                horizon: 72_000.0,
            },
            kalpha_scale: 50.0,
        }
    }
}

/// Fit controls; the starting point and fixed values come from the `beat` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub free_params: Vec<FitParam>,
    pub bounds: ParamBounds,
    pub phase_grid: usize,
    pub tau_d_grid: usize,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let base = FitConfig::new(default_beat());
        Self {
            free_params: base.free_params,
            bounds: base.bounds,
            phase_grid: base.phase_grid,
            tau_d_grid: base.tau_d_grid,
            max_iters: base.max_iters,
            tolerance: base.tolerance,
        }
    }
}

/// Output file names. Relative names resolve against `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub gamma: PathBuf,
    pub kalpha: PathBuf,
    pub ratio: PathBuf,
    pub fit: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            gamma: PathBuf::from("gamma.csv"),
            kalpha: PathBuf::from("kalpha.csv"),
            ratio: PathBuf::from("ratio.csv"),
            fit: PathBuf::from("fit.json"),
        }
    }
}

impl OutputConfig {
    pub fn resolve(&self, name: &Path) -> PathBuf {
        self.dir.join(name)
    }
}

fn default_beat() -> BeatParams {
    BeatParams {
        n0: 20.0,
        tau0: RH_TAU0_S,
        tau_d: RH_TAU0_S,
        phi0: 0.3,
        t_pump: 3600.0,
        background: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rhodium: RhodiumParams,
    pub estimate: EstimateConfig,
    pub geometry: GeometryConfig,
    pub fieldmap: FieldMapConfig,
    pub flm: FlmConfig,
    pub beat: BeatParams,
    pub kernel: BeatKernel,
    pub grid: TimeGrid,
    pub simulate: SimulateConfig,
    pub fit: FitSection,
    pub seed: u64,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rhodium: RhodiumParams::default(),
            estimate: EstimateConfig::default(),
            geometry: GeometryConfig::default(),
            fieldmap: FieldMapConfig::default(),
            flm: FlmConfig::default(),
            beat: default_beat(),
            kernel: BeatKernel::default(),
            grid: TimeGrid::default(),
            simulate: SimulateConfig::default(),
            fit: FitSection::default(),
            seed: 0,
            outputs: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses JSON text over the defaults, then applies `path=value`
    /// overrides in order. Sections may be partial.
    pub fn from_json_with(text: &str, overrides: &[String]) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let mut value = serde_json::to_value(Self::default())?;
        merge(&mut value, user);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_json_with(&std::fs::read_to_string(path)?, overrides)
    }

    /// Defaults with overrides applied.
    pub fn with_overrides(overrides: &[String]) -> Result<Self> {
        Self::from_json_with("{}", overrides)
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(
            self.rhodium.lattice_constant,
            self.geometry.channel_axis,
            self.geometry.g_shell_cutoff,
        )
    }

    pub fn wavenumber(&self) -> Result<f64> {
        crate::constants::photon_wavenumber(self.rhodium.gamma_energy)
    }

    /// Geometry from an explicit angle, or the selected Bragg solution.
    pub fn trigamma(&self) -> Result<TriGammaGeometry> {
        let k = self.wavenumber()?;
        if let Some(theta) = self.geometry.theta {
            return TriGammaGeometry::with_azimuth(k, theta, self.geometry.azimuth_offset);
        }
        let candidates = bragg_angle_solve(k, &self.lattice()?)?;
        let n = candidates.len();
        let chosen = candidates.get(self.geometry.candidate).ok_or_else(|| {
            Error::domain(format!(
                "geometry.candidate {} out of range ({n} Bragg solutions)",
                self.geometry.candidate
            ))
        })?;
        chosen.geometry(k)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            initial: self.beat,
            free_params: self.fit.free_params.clone(),
            bounds: self.fit.bounds,
            phase_grid: self.fit.phase_grid,
            tau_d_grid: self.fit.tau_d_grid,
            max_iters: self.fit.max_iters,
            tolerance: self.fit.tolerance,
            kernel: self.kernel,
        }
    }
}

/// Recursively overlays `top` onto `base`; non-object values replace.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value` to a JSON document. The value is parsed as JSON when
/// possible and taken as a string otherwise; missing objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::domain(format!("override `{assignment}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::domain(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::domain(format!("override `{assignment}`: `{key}` is inside a non-object")))?;
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let map = node
        .as_object_mut()
        .ok_or_else(|| Error::domain(format!("override `{assignment}`: parent is not an object")))?;
    map.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json_with("{}", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_with(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json_with(r#"{"beat": {"n0": 1, "bogus": 2}}"#, &[]).is_err());
        assert!(RunConfig::from_json_with(r#"{"colour": 1}"#, &[]).is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = RunConfig::from_json_with("{\n  \"seed\": ,\n}", &[]).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::with_overrides(&[
            "seed=42".into(),
            "beat.tau_d=485.7".into(),
            "simulate.binning.width=60".into(),
            "kernel=bessel_j0_squared".into(),
            "outputs.dir=/tmp/x".into(),
        ])
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.beat.tau_d, 485.7);
        assert_eq!(cfg.simulate.binning.width, 60.0);
        assert_eq!(cfg.kernel, BeatKernel::BesselJ0Squared);
        assert_eq!(cfg.outputs.dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.beat.n0, RunConfig::default().beat.n0);
        assert!(RunConfig::with_overrides(&["seed".into()]).is_err());
        assert!(RunConfig::with_overrides(&["seed.x=1".into()]).is_err());
    }

    #[test]
    fn default_geometry_is_bragg_matched() {
        let cfg = RunConfig::default();
        let geom = cfg.trigamma().unwrap();
        let theta_deg = geom.theta.to_degrees();
        assert!((7.6..7.7).contains(&theta_deg), "{theta_deg}");
        let mut cfg = cfg;
        cfg.geometry.candidate = 99;
        assert!(cfg.trigamma().is_err());
    }

    #[test]
    fn shipped_default_config_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.json");
        RunConfig::load(&path, &[]).unwrap();
    }
}
