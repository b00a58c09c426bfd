//! Scenario files: a TOML description of hull, density, ports, run and steering settings.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub hull: Hull,
    #[serde(default)]
    pub density: Density,
    pub ports: Ports,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub steer: SteerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHull", into = "RawHull")]
pub enum Hull {
    Ellipsoid { axes: [f64; 3] },
    /// `[y₁, radius]` samples, linearly interpolated; the radius must vanish at both ends.
    Revolution { profile: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum HullKind {
    Ellipsoid,
    Revolution,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHull {
    kind: HullKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<Vec<[f64; 2]>>,
}

impl TryFrom<RawHull> for Hull {
    type Error = String;
    fn try_from(r: RawHull) -> Result<Self, String> {
        match (r.kind, r.axes, r.profile) {
            (HullKind::Ellipsoid, Some(axes), None) => Ok(Hull::Ellipsoid { axes }),
            (HullKind::Revolution, None, Some(profile)) => Ok(Hull::Revolution { profile }),
            (HullKind::Ellipsoid, _, _) => Err("an ellipsoid hull takes `axes` and no `profile`".into()),
            (HullKind::Revolution, _, _) => Err("a revolution hull takes `profile` and no `axes`".into()),
        }
    }
}

impl From<Hull> for RawHull {
    fn from(h: Hull) -> Self {
        match h {
            Hull::Ellipsoid { axes } => RawHull { kind: HullKind::Ellipsoid, axes: Some(axes), profile: None },
            Hull::Revolution { profile } => RawHull { kind: HullKind::Revolution, axes: None, profile: Some(profile) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Density {
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub lambda_scale: f64,
}

impl Default for Density {
    fn default() -> Self {
        Self { rho: 1.0, lambda_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ports {
    /// `standard-6`, `standard-4`, `standard-3` or `axial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub custom: Vec<PortSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub name: String,
    pub parity: [i8; 3],
    pub center: [f64; 3],
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Analytic,
    Bem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_refine")]
    pub refine: u32,
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { refine: default_refine(), grid: default_grid(), source: None }
    }
}

/// `w_channel(t) = amplitude·sin(frequency·t + phase)`; channels are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sine {
    pub channel: usize,
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default)]
    pub h0: [f64; 3],
    /// Vector part of the initial attitude quaternion.
    #[serde(default)]
    pub q0: [f64; 3],
    #[serde(default)]
    pub l0: [f64; 3],
    #[serde(default)]
    pub r0: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub control: Vec<Sine>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { horizon: 1.0, dt: default_dt(), sample_dt: None, h0: [0.0; 3], q0: [0.0; 3], l0: [0.0; 3], r0: [0.0; 3], control: Vec::new() }
    }
}

impl RunConfig {
    pub fn sample_dt(&self) -> f64 {
        self.sample_dt.unwrap_or((self.horizon / 100.0).max(self.dt))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerConfig {
    #[serde(default)]
    pub start_h: [f64; 3],
    #[serde(default)]
    pub start_q: [f64; 3],
    #[serde(default)]
    pub start_l: [f64; 3],
    #[serde(default)]
    pub start_r: [f64; 3],
    #[serde(default)]
    pub target_h: [f64; 3],
    #[serde(default)]
    pub target_q: [f64; 3],
    #[serde(default)]
    pub target_l: [f64; 3],
    #[serde(default)]
    pub target_r: [f64; 3],
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_basis")]
    pub basis: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for SteerConfig {
    fn default() -> Self {
        Self {
            start_h: [0.0; 3],
            start_q: [0.0; 3],
            start_l: [0.0; 3],
            start_r: [0.0; 3],
            target_h: [0.0; 3],
            target_q: [0.0; 3],
            target_l: [0.0; 3],
            target_r: [0.0; 3],
            lambda: default_lambda(),
            eta: default_eta(),
            basis: default_basis(),
            steps: default_steps(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn one() -> f64 {
    1.0
}
fn default_refine() -> u32 {
    2
}
fn default_grid() -> [usize; 2] {
    [32, 64]
}
fn default_dt() -> f64 {
    1e-3
}
fn default_lambda() -> f64 {
    uvctl_core::steering::DEFAULT_LAMBDA
}
fn default_eta() -> f64 {
    uvctl_core::steering::DEFAULT_ETA
}
fn default_basis() -> usize {
    uvctl_core::steering::BASIS_SIZE
}
fn default_steps() -> usize {
    uvctl_core::steering::DEFAULT_STEPS
}

fn config(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config(path, format!("must be positive, got {x}")))
    }
}

fn finite(path: &str, xs: &[f64]) -> Result<(), CliError> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(config(path, format!("must be finite, got {x}"))),
        None => Ok(()),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!("{path}: {}", inner.message().trim()))
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match &self.hull {
            Hull::Ellipsoid { axes } => {
                for (k, a) in axes.iter().enumerate() {
                    positive(&format!("hull.axes[{k}]"), *a)?;
                }
            }
            Hull::Revolution { profile } => {
                if profile.len() < 3 {
                    return Err(config("hull.profile", "needs at least 3 samples"));
                }
                for (k, s) in profile.iter().enumerate() {
                    finite(&format!("hull.profile[{k}]"), s)?;
                    if s[1] < 0.0 {
                        return Err(config(&format!("hull.profile[{k}]"), "radius must be non-negative"));
                    }
                    if k > 0 && !(s[0] > profile[k - 1][0]) {
                        return Err(config(&format!("hull.profile[{k}]"), "stations must increase"));
                    }
                }
                if profile[0][1] != 0.0 || profile[profile.len() - 1][1] != 0.0 {
                    return Err(config("hull.profile", "radius must vanish at both ends"));
                }
            }
        }
        positive("density.rho", self.density.rho)?;
        positive("density.lambda_scale", self.density.lambda_scale)?;

        match (&self.ports.preset, self.ports.custom.is_empty()) {
            (Some(_), false) => return Err(config("ports", "give either a preset or custom ports, not both")),
            (None, true) => return Err(config("ports", "no ports given")),
            (Some(p), true) if !["standard-6", "standard-4", "standard-3", "axial"].contains(&p.as_str()) => {
                return Err(config("ports.preset", format!("unknown preset '{p}'")));
            }
            _ => {}
        }
        for (k, p) in self.ports.custom.iter().enumerate() {
            let path = format!("ports.custom[{k}]");
            if p.parity.iter().any(|e| !(-1..=1).contains(e)) {
                return Err(config(&format!("{path}.parity"), "entries must be -1, 0 or 1"));
            }
            finite(&format!("{path}.center"), &p.center)?;
            positive(&format!("{path}.width"), p.width)?;
        }

        if self.mesh.refine > 5 {
            return Err(config("mesh.refine", format!("at most 5, got {}", self.mesh.refine)));
        }
        if self.mesh.grid[0] < 4 || self.mesh.grid[1] < 4 {
            return Err(config("mesh.grid", "needs at least 4 points per direction"));
        }
        if matches!(self.hull, Hull::Revolution { .. }) && self.mesh.source == Some(Source::Analytic) {
            return Err(config("mesh.source", "closed-form potentials exist only for ellipsoids"));
        }

        let run = &self.run;
        positive("run.T", run.horizon)?;
        positive("run.dt", run.dt)?;
        if !(run.dt < run.horizon / 100.0) {
            return Err(config("run.dt", format!("must be below T/100 = {}", run.horizon / 100.0)));
        }
        if let Some(s) = run.sample_dt {
            positive("run.sample_dt", s)?;
        }
        finite("run.h0", &run.h0)?;
        finite("run.l0", &run.l0)?;
        finite("run.r0", &run.r0)?;
        finite("run.q0", &run.q0)?;
        if !(norm(&run.q0) < 1.0) {
            return Err(config("run.q0", "quaternion vector part must have norm below 1"));
        }
        for (k, s) in run.control.iter().enumerate() {
            if s.channel == 0 {
                return Err(config(&format!("run.control[{k}].channel"), "channels are numbered from 1"));
            }
            finite(&format!("run.control[{k}]"), &[s.amplitude, s.frequency, s.phase])?;
        }

        let st = &self.steer;
        for (name, v) in [
            ("start_h", &st.start_h),
            ("start_q", &st.start_q),
            ("start_l", &st.start_l),
            ("start_r", &st.start_r),
            ("target_h", &st.target_h),
            ("target_q", &st.target_q),
            ("target_l", &st.target_l),
            ("target_r", &st.target_r),
        ] {
            finite(&format!("steer.{name}"), v)?;
        }
        positive("steer.lambda", st.lambda)?;
        positive("steer.eta", st.eta)?;
        if st.basis == 0 {
            return Err(config("steer.basis", "must be positive"));
        }
        if st.steps < 10 {
            return Err(config("steer.steps", "needs at least 10 steps"));
        }
        Ok(())
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
