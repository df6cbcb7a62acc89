//! Declarative experiment configuration (TOML).
//!
//! Every physical quantity carries its unit in the key name (`_s`, `_m`,
//! `_v_per_m`). Unknown keys are rejected. Omitted sections take the
//! defaults below, which reproduce the sphere analogue of the reference
//! study.
//!
//! ```toml
//! [run]
//! formulations = ["time-differentiated", "quasi-helmholtz", "calderon"]
//! output_dir = "out"
//!
//! [mesh]
//! source = "icosphere"      # or "file" together with `path`
//! radius_m = 1.0
//! subdivisions = 1
//!
//! [time]
//! dt_s = 5.73e-7
//! extra_steps = 400         # marching length past the pulse when `steps` is absent
//!
//! [sweep]
//! dt_s = [5.73e-9, 5.73e-8, 5.73e-7, 5.73e-6, 5.73e-5, 5.73e-4]
//! subdivisions = [0, 1, 2]
//!
//! [wave]
//! amplitude_v_per_m = 1.0
//! sigma_s = 3.62e-6
//! polarization = [1.0, 0.0, 0.0]
//! direction = [0.0, 0.0, -1.0]
//!
//! [probe]
//! triangle = 0
//! barycentric = [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]
//!
//! [cq]
//! tolerance = 1e-13
//! max_weights = 32
//!
//! [dc]
//! threshold = 1e-8
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::GaussianPlaneWave;
use crate::formulations::{FormulationConfig, FormulationKind};
use crate::mesh::{generate_icosphere, load_mesh, MeshFormat, Point, TriangleMesh};
use crate::operators::QuadratureConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub mesh: MeshSection,
    pub time: TimeSection,
    pub sweep: SweepSection,
    pub wave: WaveSection,
    pub probe: ProbeSection,
    pub cq: CqSection,
    pub quadrature: QuadratureSection,
    pub dc: DcSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub formulations: Vec<String>,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            formulations: FormulationKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshSourceKind {
    Icosphere,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub source: MeshSourceKind,
    pub radius_m: f64,
    pub subdivisions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            source: MeshSourceKind::Icosphere,
            radius_m: 1.0,
            subdivisions: 1,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt_s: f64,
    /// Fixed marching length; when absent the run covers the pulse plus
    /// `extra_steps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub extra_steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt_s: 573e-9,
            steps: None,
            extra_steps: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub dt_s: Vec<f64>,
    pub subdivisions: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            dt_s: (0..6).map(|k| 5.73e-9 * 10f64.powi(k)).collect(),
            subdivisions: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSection {
    pub amplitude_v_per_m: f64,
    pub sigma_s: f64,
    pub polarization: [f64; 3],
    pub direction: [f64; 3],
    /// Pulse centre delay; when absent the field is quiet on the mesh at `t = 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_s: Option<f64>,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self {
            amplitude_v_per_m: 1.0,
            sigma_s: 3620e-9,
            polarization: [1.0, 0.0, 0.0],
            direction: [0.0, 0.0, -1.0],
            delay_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            triangle: 0,
            barycentric: [1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CqSection {
    /// Relative truncation tolerance of the weight sequences.
    pub tolerance: f64,
    pub max_weights: usize,
}

impl Default for CqSection {
    fn default() -> Self {
        let f = FormulationConfig::new(1.0, 1);
        Self {
            tolerance: f.tolerance,
            max_weights: f.max_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub far_degree: usize,
    pub mid_degree: usize,
    pub near_degree: usize,
    pub singular_outer_points: usize,
    pub near_factor: f64,
    pub mid_factor: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadratureConfig::default();
        Self {
            far_degree: q.far_degree,
            mid_degree: q.mid_degree,
            near_degree: q.near_degree,
            singular_outer_points: q.singular_outer_points,
            near_factor: q.near_factor,
            mid_factor: q.mid_factor,
        }
    }
}

impl QuadratureSection {
    pub fn to_config(&self) -> QuadratureConfig {
        QuadratureConfig {
            far_degree: self.far_degree,
            mid_degree: self.mid_degree,
            near_degree: self.near_degree,
            singular_outer_points: self.singular_outer_points,
            near_factor: self.near_factor,
            mid_factor: self.mid_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcSection {
    /// Late-to-peak ratio above which a run is reported unstable.
    pub threshold: f64,
}

impl Default for DcSection {
    fn default() -> Self {
        Self { threshold: 1e-8 }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.formulations()?;
        match self.mesh.source {
            MeshSourceKind::Icosphere => positive("mesh.radius_m", self.mesh.radius_m)?,
            MeshSourceKind::File => {
                let path = self.mesh.path.as_ref().ok_or_else(|| Error::Config("mesh.path is required for file meshes".into()))?;
                MeshFormat::from_path(path)
                    .ok_or_else(|| Error::Config(format!("unknown mesh format for {}", path.display())))?;
            }
        }
        positive("time.dt_s", self.time.dt_s)?;
        if self.time.steps == Some(0) {
            return Err(Error::Config("time.steps must be positive".into()));
        }
        for &dt in &self.sweep.dt_s {
            positive("sweep.dt_s", dt)?;
        }
        self.base_wave()?;
        let b = self.probe.barycentric;
        if b.iter().any(|x| !(-1e-12..=1.0 + 1e-12).contains(x)) || (b.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("probe.barycentric must be non-negative and sum to 1".into()));
        }
        if !(self.cq.tolerance >= 0.0 && self.cq.tolerance < 1.0) || self.cq.max_weights < 2 {
            return Err(Error::Config("cq.tolerance must lie in [0, 1) and cq.max_weights be at least 2".into()));
        }
        self.quadrature.to_config().validate()?;
        positive("dc.threshold", self.dc.threshold)?;
        Ok(())
    }

    pub fn formulations(&self) -> Result<Vec<FormulationKind>> {
        if self.run.formulations.is_empty() {
            return Err(Error::Config("run.formulations is empty".into()));
        }
        self.run
            .formulations
            .iter()
            .map(|n| FormulationKind::parse(n).ok_or_else(|| Error::Config(format!("unknown formulation '{n}'"))))
            .collect()
    }

    /// The configured mesh; icosphere meshes use `subdivisions` unless overridden.
    pub fn build_mesh(&self, subdivisions: Option<usize>) -> Result<TriangleMesh> {
        match self.mesh.source {
            MeshSourceKind::Icosphere => generate_icosphere(self.mesh.radius_m, subdivisions.unwrap_or(self.mesh.subdivisions)),
            MeshSourceKind::File => {
                if subdivisions.is_some() {
                    return Err(Error::Config("refinement sweeps need an icosphere mesh source".into()));
                }
                let path = self.mesh.path.as_ref().expect("validated");
                load_mesh(path, MeshFormat::from_path(path).expect("validated"))
            }
        }
    }

    /// Plane wave for a mesh; the default delay keeps the mesh quiet at `t = 0`.
    pub fn wave_for(&self, mesh: &TriangleMesh) -> Result<GaussianPlaneWave> {
        let dir = Point::from(self.wave.direction);
        let delay = self
            .wave
            .delay_s
            .unwrap_or_else(|| GaussianPlaneWave::quiet_start_delay(self.wave.sigma_s, &dir, mesh));
        self.base_wave().map(|w| GaussianPlaneWave { delay, ..w })
    }

    fn base_wave(&self) -> Result<GaussianPlaneWave> {
        GaussianPlaneWave::new(
            self.wave.amplitude_v_per_m,
            self.wave.sigma_s,
            Point::from(self.wave.polarization),
            Point::from(self.wave.direction),
            self.wave.delay_s.unwrap_or(0.0),
        )
    }

    pub fn formulation_config(&self, dt: f64, steps: usize) -> FormulationConfig {
        FormulationConfig {
            quadrature: self.quadrature.to_config(),
            tolerance: self.cq.tolerance,
            max_weights: self.cq.max_weights,
            ..FormulationConfig::new(dt, steps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.wave.sigma_s, 3620e-9);
        assert_eq!(cfg.time.dt_s, 573e-9);
        assert_eq!(cfg.formulations().unwrap(), FormulationKind::ALL.to_vec());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[time]\ndt_s = 5.72e-7\n[run]\nformulations = [\"calderon\"]\n").unwrap();
        assert_eq!(cfg.time.dt_s, 5.72e-7);
        assert_eq!(cfg.time.extra_steps, 400);
        assert_eq!(cfg.formulations().unwrap(), vec![FormulationKind::Calderon]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        for text in [
            "[time]\ndt = 1e-7\n",
            "[bogus]\nx = 1\n",
            "[time]\ndt_s = -1.0\n",
            "[run]\nformulations = [\"efie\"]\n",
            "[wave]\npolarization = [0.0, 0.0, 1.0]\n",
            "[probe]\nbarycentric = [0.5, 0.5, 0.5]\n",
            "[mesh]\nsource = \"file\"\n",
            "[quadrature]\nnear_factor = 9.0\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn quiet_start_delay_is_applied() {
        let cfg = ExperimentConfig::default();
        let mesh = cfg.build_mesh(Some(0)).unwrap();
        let w = cfg.wave_for(&mesh).unwrap();
        let lead = 1.0 / crate::constants::C0;
        assert!(w.delay >= 8.0 * 3620e-9 && w.delay <= 8.0 * 3620e-9 + lead * (1.0 + 1e-12));
    }
}
