use std::path::Path;
use std::process::Command;

use tdefie::config::{ExperimentConfig, MeshSourceKind};
use tdefie::experiments::{self, probe_current, probe_current_by_edges, Probe};
use tdefie::formulations::FormulationKind;
use tdefie::mesh::{generate_icosphere, write_obj};

fn small_config(steps: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        "[run]\nformulations = [\"calderon\", \"quasi-helmholtz\"]\n\
         [mesh]\nsubdivisions = 0\n\
         [time]\nsteps = {steps}\n"
    ))
    .expect("valid config")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tdefie"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn scatter_outputs_are_reproducible() {
    let cfg = small_config(70);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    experiments::run_scatter(&cfg, a.path(), 0).unwrap();
    experiments::run_scatter(&cfg, b.path(), 0).unwrap();
    for name in ["probe.csv", "dc_report.csv", "current_calderon.csv", "current_quasi-helmholtz.csv", "manifest.txt"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name} differs");
    }
}

#[test]
fn probe_paths_agree_on_scatter_output() {
    let cfg = small_config(70);
    let dir = tempfile::tempdir().unwrap();
    let outcome = experiments::run_scatter(&cfg, dir.path(), 0).unwrap();
    let mesh = std::sync::Arc::new(cfg.build_mesh(None).unwrap());
    let spaces = tdefie::formulations::DiscreteSpaces::new(mesh).unwrap();
    let run = outcome.get(FormulationKind::Calderon).unwrap();
    let peak = run.probe.iter().cloned().fold(0.0, f64::max);
    assert!(peak > 0.0);
    for triangle in [0, 7, 19] {
        let probe = Probe {
            triangle,
            barycentric: [0.2, 0.5, 0.3],
        };
        let a = probe_current(&run.history.steps, &spaces.rwg, &probe).unwrap();
        let b = probe_current_by_edges(&run.history.steps, &spaces.rwg, &probe).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * peak.max(x.abs()), "{x} vs {y}");
        }
    }
}

#[test]
fn formulations_agree_before_late_time() {
    let cfg = small_config(90);
    let dir = tempfile::tempdir().unwrap();
    let outcome = experiments::run_scatter(&cfg, dir.path(), 0).unwrap();
    let c = &outcome.get(FormulationKind::Calderon).unwrap().probe;
    let q = &outcome.get(FormulationKind::QuasiHelmholtz).unwrap().probe;
    let d = experiments::window_relative_l2(c, q, 1.0);
    assert!(d < 0.05, "relative distance {d}");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small_config(12);
    let text = cfg.to_toml();
    let back = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(back.to_toml(), text);
    assert_eq!(back.formulations().unwrap(), cfg.formulations().unwrap());
}

#[test]
fn file_mesh_matches_generated_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    let sphere = generate_icosphere(1.0, 1).unwrap();
    let path = dir.path().join("sphere.obj");
    std::fs::write(&path, write_obj(&sphere)).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.mesh.source = MeshSourceKind::File;
    cfg.mesh.path = Some(path);
    cfg.validate().unwrap();
    let info = experiments::run_mesh_info(&cfg, &dir.path().join("out"), 0).unwrap();
    assert_eq!(info.report.num_triangles, sphere.triangles().len());
    assert_eq!(info.hash, sphere.content_hash());
    assert!(cfg.build_mesh(Some(2)).is_err());
}

#[test]
fn cli_reports_success_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = cli(&["mesh-info", "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("triangles = 80"));
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.contains("command = mesh-info"));
    assert!(manifest.contains("seed = 7"));
}

#[test]
fn cli_rejects_bad_configuration_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[mesh]\nradius_m = -1.0\n").unwrap();
    let o = cli(&["mesh-info", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[mesh]\nradius = 1.0\n").unwrap();
    let o = cli(&["mesh-info", "--config", unknown.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let probe = dir.path().join("probe.toml");
    std::fs::write(&probe, "[mesh]\nsubdivisions = 0\n[probe]\ntriangle = 80\n[time]\nsteps = 4\n").unwrap();
    let o = cli(&["scatter", "--config", probe.to_str().unwrap(), "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = cli(&["mesh-info", "--threads", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cli_reports_numerical_failure_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[run]\nformulations = [\"calderon\"]\n[mesh]\nsubdivisions = 0\n[cq]\ntolerance = 1e-300\nmax_weights = 3\n",
    )
    .unwrap();
    let o = cli(&["weights-inspect", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("w").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
