//! Diagnostics and study drivers: condition numbers, current probes, the
//! DC-instability metric and the three sphere studies, with their CSV and
//! manifest outputs.
//!
//! CSV schemas (column order is fixed):
//!
//! ```text
//! cond_vs_dt.csv   dt_s,formulation,cond
//! cond_vs_h.csv    subdivisions,n_s,h_m,inv_h_per_m,formulation,cond
//! probe.csv        step,time_s,formulation,current_a_per_m
//! dc_report.csv    formulation,peak_a_per_m,late_max_a_per_m,rho_dc,threshold,verdict
//! current_<f>.csv  step,stage,time_s,index,coefficient
//! weights_<f>.csv  sequence,j,frobenius,relative
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::basis::BasisSpace;
use crate::config::ExperimentConfig;
use crate::cq::{radau2_tableau, RkTableau, WeightSequence};
use crate::error::{Error, Result};
use crate::excitation::{assemble_rhs_sequence, FieldKind, GaussianPlaneWave};
use crate::formulations::{build_system, zeroth_system_matrix, DiscreteSpaces, FormulationKind, RhsCoupling};
use crate::linalg::{RMat, RVec};
use crate::mesh::{ManifoldReport, Point, TriangleMesh};
use crate::mot::{run, CurrentHistory, RhsInputs};

/// `sigma_max / sigma_min` from a full SVD; `+inf` when singular.
pub fn condition_number(m: &RMat) -> f64 {
    crate::linalg::condition_number(m)
}

/// Point on a carrier triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

impl Probe {
    fn check(&self, mesh: &TriangleMesh) -> Result<()> {
        if self.triangle >= mesh.num_triangles() {
            return Err(Error::Probe(format!(
                "triangle {} of a mesh with {} triangles",
                self.triangle,
                mesh.num_triangles()
            )));
        }
        let b = self.barycentric;
        if b.iter().any(|x| !(-1e-12..=1.0 + 1e-12).contains(x)) || (b.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Probe(format!("barycentric coordinates {b:?} leave the triangle")));
        }
        Ok(())
    }
}

fn last_stage(v: &RVec, dim: usize) -> nalgebra::DVectorView<'_, f64> {
    v.rows(v.len() - dim, dim)
}

/// `|sum_n [J_i]_n f_n(probe)|` per step from the last-stage coefficients.
pub fn probe_current(steps: &[RVec], space: &BasisSpace, probe: &Probe) -> Result<Vec<f64>> {
    probe.check(&space.carrier)?;
    let dim = space.dim();
    let values: Vec<(usize, Point)> = space.local[probe.triangle]
        .iter()
        .map(|(n, _)| (*n, space.evaluate(*n, probe.triangle, probe.barycentric).0))
        .collect();
    Ok(steps
        .iter()
        .map(|v| {
            let x = last_stage(v, dim);
            values.iter().fold(Point::zeros(), |acc, (n, f)| acc + f * x[*n]).norm()
        })
        .collect())
}

/// Same quantity evaluated edge by edge from the textbook RWG formula
/// `+-l / (2A) (r - p_opposite)`, bypassing the cached local expansions.
pub fn probe_current_by_edges(steps: &[RVec], space: &BasisSpace, probe: &Probe) -> Result<Vec<f64>> {
    let mesh = &space.carrier;
    probe.check(mesh)?;
    let t = probe.triangle;
    let tri = mesh.triangles()[t];
    let r = mesh.point_at(t, probe.barycentric);
    let area = mesh.area(t);
    let edge_value = |k: usize| -> Point {
        let e = mesh.edges()[k];
        let sign = if e.plus == t { 1.0 } else { -1.0 };
        let opposite = tri.iter().find(|v| !e.vertices.contains(v)).expect("edge of triangle");
        (r - mesh.vertices()[*opposite]) * (sign * mesh.edge_length(k) / (2.0 * area))
    };
    let own = mesh.triangle_edges(t);
    let mut contributions: Vec<(usize, Point)> = Vec::new();
    for (n, col) in space.coefficients.iter().enumerate() {
        let f = col
            .iter()
            .filter(|(k, _)| own.contains(k))
            .fold(Point::zeros(), |acc, (k, c)| acc + edge_value(*k) * *c);
        if f != Point::zeros() {
            contributions.push((n, f));
        }
    }
    let dim = space.dim();
    Ok(steps
        .iter()
        .map(|v| {
            let x = last_stage(v, dim);
            contributions.iter().fold(Point::zeros(), |acc, (n, f)| acc + f * x[*n]).norm()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcInstabilityReport {
    pub peak: f64,
    /// Largest value over the last tenth of the series.
    pub late_max: f64,
    pub rho_dc: f64,
    pub threshold: f64,
    pub stable: bool,
}

impl DcInstabilityReport {
    pub fn verdict(&self) -> &'static str {
        if self.stable {
            "stable"
        } else {
            "unstable"
        }
    }
}

pub fn dc_metric(series: &[f64], threshold: f64) -> DcInstabilityReport {
    let peak = series.iter().cloned().fold(0.0, f64::max);
    let window = (series.len() / 10).max(1).min(series.len());
    let late_max = series[series.len() - window..].iter().cloned().fold(0.0, f64::max);
    let rho_dc = if peak > 0.0 { late_max / peak } else { 0.0 };
    DcInstabilityReport {
        peak,
        late_max,
        rho_dc,
        threshold,
        stable: rho_dc < threshold,
    }
}

/// Relative L2 distance of `other` from `reference` over the steps where
/// `|reference|` exceeds `fraction` of its peak.
pub fn window_relative_l2(reference: &[f64], other: &[f64], fraction: f64) -> f64 {
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in reference.iter().zip(other) {
        if *a > fraction * peak {
            num += (a - b) * (a - b);
            den += a * a;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Time after which the pulse has left the whole mesh (eight widths past centre).
pub fn pulse_end_time(wave: &GaussianPlaneWave, mesh: &TriangleMesh) -> f64 {
    let last = mesh
        .vertices()
        .iter()
        .map(|v| wave.direction.dot(v))
        .fold(f64::NEG_INFINITY, f64::max);
    wave.delay + 8.0 * wave.sigma + last / wave.speed
}

/// Marching length of a scatter run.
pub fn scatter_steps(cfg: &ExperimentConfig, wave: &GaussianPlaneWave, mesh: &TriangleMesh) -> usize {
    cfg.time
        .steps
        .unwrap_or_else(|| (pulse_end_time(wave, mesh) / cfg.time.dt_s).ceil() as usize + cfg.time.extra_steps)
}

/// Line-buffered CSV file; each row is flushed so partial results survive.
pub struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        self.out.flush()?;
        Ok(())
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Plain `key = value` manifest: tool identity, command, mesh hashes and the
/// full configuration echo.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, mesh_hashes: &[String], seed: u64) -> Result<PathBuf> {
    let path = dir.join("manifest.txt");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "tool = {}", env!("CARGO_PKG_NAME"))?;
    writeln!(w, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "command = {command}")?;
    writeln!(w, "seed = {seed}")?;
    for (i, h) in mesh_hashes.iter().enumerate() {
        writeln!(w, "mesh_hash.{i} = {h}")?;
    }
    let value: toml::Value = toml::from_str(&cfg.to_toml()).map_err(|e| Error::Config(e.to_string()))?;
    let mut pairs = Vec::new();
    flatten("config", &value, &mut pairs);
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(path)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondRow {
    pub dt: f64,
    pub subdivisions: Option<usize>,
    pub n_s: usize,
    pub h: f64,
    pub kind: FormulationKind,
    pub cond: f64,
}

fn cond_row(kind: FormulationKind, spaces: &DiscreteSpaces, tab: &RkTableau, dt: f64, cfg: &ExperimentConfig) -> Result<f64> {
    let w0 = zeroth_system_matrix(kind, spaces, tab, dt, cfg.quadrature.to_config())?;
    Ok(condition_number(&w0))
}

/// Condition number of `W_0` across the configured time steps.
pub fn run_cond_vs_dt(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<CondRow>> {
    let kinds = cfg.formulations()?;
    if cfg.sweep.dt_s.is_empty() {
        return Err(Error::Config("sweep.dt_s is empty".into()));
    }
    prepare_dir(out)?;
    let mesh = Arc::new(cfg.build_mesh(None)?);
    write_manifest(out, "cond-vs-dt", cfg, &[mesh.content_hash()], seed)?;
    let spaces = DiscreteSpaces::new(Arc::clone(&mesh))?;
    let tab = radau2_tableau();
    let h = mesh.report().h_max;
    let mut sink = CsvSink::create(&out.join("cond_vs_dt.csv"), "dt_s,formulation,cond")?;
    let mut rows = Vec::new();
    for &dt in &cfg.sweep.dt_s {
        for &kind in &kinds {
            let cond = cond_row(kind, &spaces, &tab, dt, cfg)?;
            log::info!("dt = {dt:e} s, {kind}: cond = {cond:e}");
            sink.row(&[format!("{dt:e}"), kind.name().into(), format!("{cond:e}")])?;
            rows.push(CondRow {
                dt,
                subdivisions: None,
                n_s: spaces.dim(),
                h,
                kind,
                cond,
            });
        }
    }
    Ok(rows)
}

/// Condition number of `W_0` across icosphere refinements at a fixed step.
pub fn run_cond_vs_h(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<CondRow>> {
    let kinds = cfg.formulations()?;
    if cfg.sweep.subdivisions.is_empty() {
        return Err(Error::Config("sweep.subdivisions is empty".into()));
    }
    prepare_dir(out)?;
    let meshes: Vec<Arc<TriangleMesh>> = cfg
        .sweep
        .subdivisions
        .iter()
        .map(|&s| cfg.build_mesh(Some(s)).map(Arc::new))
        .collect::<Result<_>>()?;
    let hashes: Vec<String> = meshes.iter().map(|m| m.content_hash()).collect();
    write_manifest(out, "cond-vs-h", cfg, &hashes, seed)?;
    let tab = radau2_tableau();
    let dt = cfg.time.dt_s;
    let mut sink = CsvSink::create(&out.join("cond_vs_h.csv"), "subdivisions,n_s,h_m,inv_h_per_m,formulation,cond")?;
    let mut rows = Vec::new();
    for (&sub, mesh) in cfg.sweep.subdivisions.iter().zip(&meshes) {
        let spaces = DiscreteSpaces::new(Arc::clone(mesh))?;
        let h = mesh.report().h_max;
        for &kind in &kinds {
            let cond = cond_row(kind, &spaces, &tab, dt, cfg)?;
            log::info!("subdivisions = {sub}, {kind}: cond = {cond:e}");
            sink.row(&[
                sub.to_string(),
                spaces.dim().to_string(),
                format!("{h:e}"),
                format!("{:e}", 1.0 / h),
                kind.name().into(),
                format!("{cond:e}"),
            ])?;
            rows.push(CondRow {
                dt,
                subdivisions: Some(sub),
                n_s: spaces.dim(),
                h,
                kind,
                cond,
            });
        }
    }
    Ok(rows)
}

pub struct ScatterRun {
    pub kind: FormulationKind,
    pub history: CurrentHistory,
    pub probe: Vec<f64>,
    pub report: DcInstabilityReport,
}

pub struct ScatterOutcome {
    pub dt: f64,
    pub steps: usize,
    pub runs: Vec<ScatterRun>,
}

impl ScatterOutcome {
    pub fn get(&self, kind: FormulationKind) -> Option<&ScatterRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }
}

/// Plane-wave scattering run of every configured formulation.
pub fn run_scatter(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<ScatterOutcome> {
    let kinds = cfg.formulations()?;
    prepare_dir(out)?;
    let mesh = Arc::new(cfg.build_mesh(None)?);
    let hash = mesh.content_hash();
    write_manifest(out, "scatter", cfg, &[hash.clone()], seed)?;
    let probe = Probe {
        triangle: cfg.probe.triangle,
        barycentric: cfg.probe.barycentric,
    };
    probe.check(&mesh)?;
    let spaces = DiscreteSpaces::new(Arc::clone(&mesh))?;
    let tab = radau2_tableau();
    let dt = cfg.time.dt_s;
    let wave = cfg.wave_for(&mesh)?;
    let steps = scatter_steps(cfg, &wave, &mesh);
    let fcfg = cfg.formulation_config(dt, steps);
    let needs_derivative = kinds.contains(&FormulationKind::TimeDifferentiated);
    let needs_value = kinds.iter().any(|k| *k != FormulationKind::TimeDifferentiated);
    let rhs = |kind| assemble_rhs_sequence(&wave, &spaces.rwg, &tab, dt, steps, kind).steps;
    let derivative = needs_derivative.then(|| rhs(FieldKind::Derivative));
    let value = needs_value.then(|| rhs(FieldKind::Value));
    let primitive = needs_value.then(|| rhs(FieldKind::Primitive));
    let inputs = RhsInputs {
        value: value.as_deref(),
        derivative: derivative.as_deref(),
        primitive: primitive.as_deref(),
    };
    let mut probe_sink = CsvSink::create(&out.join("probe.csv"), "step,time_s,formulation,current_a_per_m")?;
    let mut dc_sink = CsvSink::create(
        &out.join("dc_report.csv"),
        "formulation,peak_a_per_m,late_max_a_per_m,rho_dc,threshold,verdict",
    )?;
    let mut runs = Vec::new();
    for kind in kinds {
        let system = build_system(kind, &spaces, &tab, &fcfg)?;
        log::info!("{kind}: {} convolution weights", system.system.n_conv() + 1);
        let coefficients = run(&system, &inputs, steps)?;
        let history = CurrentHistory {
            kind: Some(kind),
            dt,
            stage_nodes: tab.c.to_vec(),
            mesh_hash: hash.clone(),
            dim: spaces.dim(),
            steps: coefficients,
        };
        let series = probe_current(&history.steps, &spaces.rwg, &probe)?;
        let report = dc_metric(&series, cfg.dc.threshold);
        log::info!("{kind}: rho_dc = {:e} ({})", report.rho_dc, report.verdict());
        for (i, j) in series.iter().enumerate() {
            probe_sink.row(&[i.to_string(), format!("{:e}", (i + 1) as f64 * dt), kind.name().into(), format!("{j:e}")])?;
        }
        dc_sink.row(&[
            kind.name().into(),
            format!("{:e}", report.peak),
            format!("{:e}", report.late_max),
            format!("{:e}", report.rho_dc),
            format!("{:e}", report.threshold),
            report.verdict().into(),
        ])?;
        history.write_csv(BufWriter::new(File::create(out.join(format!("current_{}.csv", kind.name())))?))?;
        runs.push(ScatterRun {
            kind,
            history,
            probe: series,
            report,
        });
    }
    Ok(ScatterOutcome { dt, steps, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSummary {
    pub kind: FormulationKind,
    pub sequence: &'static str,
    pub count: usize,
    pub last_relative: f64,
}

/// Decay table and binary dump of every matrix weight sequence.
pub fn run_weights_inspect(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<WeightSummary>> {
    let kinds = cfg.formulations()?;
    prepare_dir(out)?;
    let mesh = Arc::new(cfg.build_mesh(None)?);
    write_manifest(out, "weights-inspect", cfg, &[mesh.content_hash()], seed)?;
    let spaces = DiscreteSpaces::new(Arc::clone(&mesh))?;
    let tab = radau2_tableau();
    let fcfg = cfg.formulation_config(cfg.time.dt_s, cfg.time.steps.unwrap_or(cfg.cq.max_weights));
    let mut summary = Vec::new();
    for kind in kinds {
        let system = build_system(kind, &spaces, &tab, &fcfg)?;
        let mut seqs: Vec<(&'static str, &WeightSequence)> = vec![("system", &system.system)];
        if let RhsCoupling::Calderon { alpha, beta } = &system.coupling {
            seqs.push(("alpha", alpha));
            seqs.push(("beta", beta));
        }
        let mut sink = CsvSink::create(&out.join(format!("weights_{}.csv", kind.name())), "sequence,j,frobenius,relative")?;
        for (name, seq) in seqs {
            let first = seq.decay[0].max(f64::MIN_POSITIVE);
            for (j, d) in seq.decay.iter().enumerate() {
                sink.row(&[name.into(), j.to_string(), format!("{d:e}"), format!("{:e}", d / first)])?;
            }
            seq.write_to(BufWriter::new(File::create(out.join(format!("weights_{}_{name}.bin", kind.name())))?))?;
            summary.push(WeightSummary {
                kind,
                sequence: name,
                count: seq.weights.len(),
                last_relative: seq.decay[seq.weights.len() - 1] / first,
            });
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct MeshInfo {
    pub report: ManifoldReport,
    pub diameter: f64,
    pub signed_volume: f64,
    pub hash: String,
}

impl std::fmt::Display for MeshInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.report)?;
        writeln!(f, "diameter_m = {:e}", self.diameter)?;
        writeln!(f, "signed_volume_m3 = {:e}", self.signed_volume)?;
        writeln!(f, "rwg_functions = {}", self.report.num_edges)?;
        write!(f, "mesh_hash = {}", self.hash)
    }
}

pub fn run_mesh_info(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<MeshInfo> {
    prepare_dir(out)?;
    let mesh = cfg.build_mesh(None)?;
    let info = MeshInfo {
        report: mesh.report(),
        diameter: mesh.diameter(),
        signed_volume: mesh.signed_volume(),
        hash: mesh.content_hash(),
    };
    write_manifest(out, "mesh-info", cfg, &[info.hash.clone()], seed)?;
    std::fs::write(out.join("mesh_info.txt"), format!("{info}\n"))?;
    Ok(info)
}
