//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Built with `harness = false` so the verdict lines always print.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use tdefie::basis::{assemble_mixed_gram, build_bc_space, build_rwg_space, rotated_pairing, BasisSpace};
use tdefie::config::ExperimentConfig;
use tdefie::constants::C0;
use tdefie::cq::{cq_weights, radau2_tableau, scalar_weights, CqConfig, ScalarSymbol, WeightSequence};
use tdefie::experiments::{pulse_end_time, run_cond_vs_dt, run_cond_vs_h, run_scatter, window_relative_l2, CondRow};
use tdefie::formulations::{build_qh_projectors, build_system, DiscreteSpaces, FormulationConfig, FormulationKind};
use tdefie::linalg::{CMat, RMat, RVec};
use tdefie::mesh::{barycentric_refine, generate_icosphere, Point, TriangleMesh};
use tdefie::mot::march;
use tdefie::operators::{assemble_components, assemble_efie_symbol, assemble_th, QuadratureConfig};

type Outcome = Result<(bool, String), String>;

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sphere(k: usize) -> Arc<TriangleMesh> {
    Arc::new(generate_icosphere(1.0, k).expect("icosphere"))
}

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tdefie-acceptance-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}

/// Convolution quadrature of `s / (s^2 + 1)` (kernel `cos t`) against a
/// Gaussian, compared with a composite Gauss-Legendre evaluation of the
/// convolution integral.
fn criterion_1() -> Outcome {
    let (t0, sigma, end) = (6.0, 1.0, 12.0);
    let g = |t: f64| (-(t - t0).powi(2) / (2.0 * sigma * sigma)).exp();
    let nodes = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let exact = |t: f64| {
        let panels = 400;
        let h = t / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in nodes {
                let u = mid + 0.5 * h * x;
                acc += 0.5 * h * w * (t - u).cos() * g(u);
            }
        }
        acc
    };
    let tab = radau2_tableau();
    let mut errors = Vec::new();
    for k in 0..4 {
        let dt = 0.2 / (1 << k) as f64;
        let steps = (end / dt).round() as usize;
        let w = scalar_weights(|s| s / (s * s + 1.0), &tab, &CqConfig::new(dt, steps)).map_err(err)?;
        let data: Vec<[f64; 2]> = (0..steps)
            .map(|i| [g((i as f64 + tab.c[0]) * dt), g((i as f64 + tab.c[1]) * dt)])
            .collect();
        let mut worst: f64 = 0.0;
        for n in 0..steps {
            let mut y = 0.0;
            for j in 0..=n {
                y += w[j][(1, 0)] * data[n - j][0] + w[j][(1, 1)] * data[n - j][1];
            }
            worst = worst.max((y - exact((n + 1) as f64 * dt)).abs());
        }
        errors.push(worst);
    }
    let rates: Vec<f64> = errors.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
    let overall = (errors[0] / errors[3]).log2() / 3.0;
    Ok((
        overall >= 2.5,
        format!("errors {}, rates {rates:.2?}, overall rate {overall:.2}", sci(&errors)),
    ))
}

fn histogram_baseline_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/calderon_spectrum_histogram.csv")
}

/// Spectrum of the discretised `T o T` at `s = c0 / 1 m` on the 120-edge sphere.
fn criterion_2() -> Outcome {
    let m = sphere(1);
    let r = Arc::new(barycentric_refine(&m));
    let rwg = build_rwg_space(&m);
    let bc = build_bc_space(&r);
    let s = Complex64::new(C0, 0.0);
    let t_rwg = assemble_efie_symbol(s, &rwg, &rwg).map_err(err)?;
    let t_bc = assemble_efie_symbol(s, &bc, &bc).map_err(err)?;
    let gram = assemble_mixed_gram(&rwg, &bc).map_err(err)?;
    let g2_inv = rotated_pairing(&bc, &rwg).map_err(err)?.try_inverse().ok_or("singular pairing")?;
    let c = |a: &RMat| a.map(|v| Complex64::new(v, 0.0));
    let prod = c(&g2_inv) * t_bc * c(&gram.inverse) * t_rwg;
    let eig = prod.map(|z| z.re).complex_eigenvalues();
    let target = Complex64::new(-0.25, 0.0);
    let close = eig.iter().filter(|z| (**z - target).norm() < 0.15).count();
    let frac = close as f64 / eig.len() as f64;

    // histogram of the distance to -1/4
    let edges = [0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.2, 0.3, 0.5, 1.0, f64::INFINITY];
    let mut counts = vec![0usize; edges.len() - 1];
    for z in eig.iter() {
        let d = (*z - target).norm();
        let b = edges.windows(2).position(|w| d >= w[0] && d < w[1]).expect("bins cover [0, inf)");
        counts[b] += 1;
    }
    let mut text = String::from("distance_low,distance_high,count\n");
    for (w, n) in edges.windows(2).zip(&counts) {
        text.push_str(&format!("{},{},{n}\n", w[0], w[1]));
    }
    let path = histogram_baseline_path();
    let regression = match std::fs::read_to_string(&path) {
        Ok(base) => {
            let old: Vec<usize> = base
                .lines()
                .skip(1)
                .filter_map(|l| l.rsplit(',').next()?.parse().ok())
                .collect();
            let moved: usize = old.iter().zip(&counts).map(|(a, b)| a.abs_diff(*b)).sum();
            let ok = old.len() == counts.len() && moved <= eig.len() / 20;
            format!("baseline shift {moved} of {} eigenvalues ({})", eig.len(), if ok { "ok" } else { "regressed" })
        }
        Err(_) => {
            std::fs::create_dir_all(path.parent().expect("parent")).map_err(err)?;
            std::fs::write(&path, &text).map_err(err)?;
            "baseline recorded".to_string()
        }
    };
    let pass = frac >= 0.7 && !regression.ends_with("(regressed)");
    Ok((pass, format!("{:.1}% within 0.15 of -1/4, histogram {counts:?}, {regression}", 100.0 * frac)))
}

fn series(rows: &[CondRow], kind: FormulationKind) -> Vec<f64> {
    rows.iter().filter(|r| r.kind == kind).map(|r| r.cond).collect()
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn criterion_3() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.mesh.subdivisions = 1;
    cfg.sweep.dt_s = (0..6).map(|k| 5.73e-9 * 10f64.powi(k)).collect();
    let rows = run_cond_vs_dt(&cfg, &out_dir("cond-vs-dt"), 0).map_err(err)?;
    let td = series(&rows, FormulationKind::TimeDifferentiated);
    let qh = series(&rows, FormulationKind::QuasiHelmholtz);
    let cal = series(&rows, FormulationKind::Calderon);
    let gain = (td[td.len() - 1] / td[0]).log10();
    let pass = increasing(&td) && gain >= 4.0 && spread(&cal) < 10.0 && spread(&qh) < 10.0;
    Ok((
        pass,
        format!(
            "TD {} ({gain:.1} decades), qH spread {:.2}, Calderon spread {:.2}",
            sci(&td),
            spread(&qh),
            spread(&cal)
        ),
    ))
}

fn criterion_4() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.time.dt_s = 573e-9;
    cfg.sweep.subdivisions = vec![0, 1, 2];
    let rows = run_cond_vs_h(&cfg, &out_dir("cond-vs-h"), 0).map_err(err)?;
    let td = series(&rows, FormulationKind::TimeDifferentiated);
    let qh = series(&rows, FormulationKind::QuasiHelmholtz);
    let cal = series(&rows, FormulationKind::Calderon);
    let bounded = cal.iter().all(|c| *c < 10.0 * cal[0]);
    Ok((
        bounded && increasing(&td) && increasing(&qh),
        format!("N_s 30/120/480: TD {}, qH {}, Calderon {cal:.3?}", sci(&td), sci(&qh)),
    ))
}

/// Shared scatter run for criteria 5 and 6.
fn scatter() -> Result<(tdefie::experiments::ScatterOutcome, usize), String> {
    let mut cfg = ExperimentConfig::default();
    cfg.mesh.subdivisions = 1;
    cfg.time.dt_s = 572e-9;
    cfg.time.extra_steps = 400;
    let mesh = cfg.build_mesh(None).map_err(err)?;
    let wave = cfg.wave_for(&mesh).map_err(err)?;
    let pulse_steps = (pulse_end_time(&wave, &mesh) / cfg.time.dt_s).ceil() as usize;
    let outcome = run_scatter(&cfg, &out_dir("scatter"), 0).map_err(err)?;
    Ok((outcome, pulse_steps))
}

fn criterion_5(run: &tdefie::experiments::ScatterOutcome) -> Outcome {
    let cal = &run.get(FormulationKind::Calderon).ok_or("no Calderon run")?.probe;
    let td = &run.get(FormulationKind::TimeDifferentiated).ok_or("no TD run")?.probe;
    let d = window_relative_l2(cal, td, 0.01);
    Ok((d < 0.05, format!("relative L2 distance {d:.3e} over |j| > 1% of peak")))
}

fn criterion_6(run: &tdefie::experiments::ScatterOutcome, pulse_steps: usize) -> Outcome {
    let rho = |k| run.get(k).map(|r| r.report.rho_dc).ok_or("missing run");
    let td = rho(FormulationKind::TimeDifferentiated)?;
    let qh = rho(FormulationKind::QuasiHelmholtz)?;
    let cal = rho(FormulationKind::Calderon)?;
    let extra = run.steps - pulse_steps;
    Ok((
        extra >= 400 && td > 1e-8 && cal < 1e-12 && qh < 1e-12,
        format!("{extra} steps past the pulse, rho_dc TD {td:.3e}, qH {qh:.3e}, Calderon {cal:.3e}"),
    ))
}

fn max_normal_jump(space: &BasisSpace) -> f64 {
    let mesh = &space.carrier;
    let mut worst: f64 = 0.0;
    for edge in mesh.edges() {
        let [p, q] = edge.vertices;
        let u = (mesh.vertices()[q] - mesh.vertices()[p]).normalize();
        for s in [0.25, 0.5, 0.75] {
            let flux = |t: usize, n: usize| {
                let tri = mesh.triangles()[t];
                let mut b = [0.0; 3];
                b[tri.iter().position(|&v| v == p).expect("vertex")] = 1.0 - s;
                b[tri.iter().position(|&v| v == q).expect("vertex")] = s;
                space.evaluate(n, t, b).0.dot(&u.cross(&mesh.normal(t)))
            };
            for n in 0..space.dim() {
                worst = worst.max((flux(edge.plus, n) - flux(edge.minus, n)).abs());
            }
        }
    }
    worst
}

fn rank(m: &RMat) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|v| **v > 1e-10 * top).count()
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

fn invariant_mesh() -> Result<Vec<String>, String> {
    let mut fails = Vec::new();
    for k in 0..=2 {
        let m = sphere(k);
        let rep = m.report();
        if m.euler_characteristic() != 2 || !rep.is_closed_manifold() || m.signed_volume() <= 0.0 {
            fails.push(format!("icosphere {k} topology/orientation"));
        }
        for e in m.edges() {
            let pos = |t: usize, v: usize| m.triangles()[t].iter().position(|&x| x == v).expect("vertex");
            let [a, b] = e.vertices;
            let forward = |t: usize| (pos(t, a) + 1) % 3 == pos(t, b);
            if !forward(e.plus) || forward(e.minus) {
                fails.push(format!("icosphere {k} edge orientation"));
                break;
            }
        }
    }
    Ok(fails)
}

fn invariant_spaces() -> Result<Vec<String>, String> {
    let mut fails = Vec::new();
    for k in 0..=1 {
        let m = sphere(k);
        let r = Arc::new(barycentric_refine(&m));
        let rwg = build_rwg_space(&m);
        let bc = build_bc_space(&r);
        if max_normal_jump(&rwg) > 1e-12 || max_normal_jump(&bc) > 1e-12 {
            fails.push(format!("normal continuity on subdivision {k}"));
        }
        if rank(&rwg.coefficient_matrix()) != rwg.dim() || rank(&bc.coefficient_matrix()) != bc.dim() {
            fails.push(format!("rank on subdivision {k}"));
        }
        let gram = assemble_mixed_gram(&rwg, &bc).map_err(err)?;
        let gm = rotated_pairing(&rwg, &bc).map_err(err)?;
        let g2 = rotated_pairing(&bc, &rwg).map_err(err)?;
        if (&g2 + gm.transpose()).norm() / gm.norm() > 1e-12 {
            fails.push(format!("gram antisymmetry on subdivision {k}"));
        }
        if gram.condition_number() >= 100.0 {
            fails.push(format!("gram condition {:.1} on subdivision {k}", gram.condition_number()));
        }
    }
    Ok(fails)
}

fn invariant_operators() -> Result<Vec<String>, String> {
    let mut fails = Vec::new();
    let m = sphere(1);
    let rwg = build_rwg_space(&m);
    let s = Complex64::new(1.0e8, 3.0e8);
    let (ts, th) = assemble_components(s, &rwg, &rwg, QuadratureConfig::default()).map_err(err)?;
    if rel(&ts.transpose(), &ts) > 1e-10 || rel(&th.transpose(), &th) > 1e-10 {
        fails.push("operator symmetry".into());
    }
    let loops = build_qh_projectors(&m).map_err(err)?.loops;
    let th_h = assemble_th(s, &rwg, &rwg).map_err(err)?;
    let ratio = (&th_h * loops.map(|v| Complex64::new(v, 0.0))).norm() / th_h.norm();
    if ratio >= 1e-10 {
        fails.push(format!("loop annihilation {ratio:.2e}"));
    }

    // two small bodies 6 m apart: every cross entry against point-source oracles
    let a = generate_icosphere(0.05, 0).map_err(err)?;
    let mut v = a.vertices().to_vec();
    let mut t = a.triangles().to_vec();
    let off = v.len();
    v.extend(a.vertices().iter().map(|p| p + Point::new(6.0, 0.0, 0.0)));
    t.extend(a.triangles().iter().map(|x| x.map(|i| i + off)));
    let pair = Arc::new(TriangleMesh::new(v, t).map_err(err)?);
    let rwg = build_rwg_space(&pair);
    let s = Complex64::new(2.0e8, 1.0e8);
    let (ts, _) = assemble_components(s, &rwg, &rwg, QuadratureConfig::default()).map_err(err)?;
    let integral = |n: usize| {
        let e = pair.edges()[n];
        let mut total = Point::zeros();
        for (tri, sign) in [(e.plus, 1.0), (e.minus, -1.0)] {
            let opp = pair.triangles()[tri].iter().find(|x| !e.vertices.contains(x)).expect("vertex");
            total += (pair.centroid(tri) - pair.vertices()[*opp]) * (sign * pair.edge_length(n) / 2.0);
        }
        (total, (pair.centroid(e.plus) + pair.centroid(e.minus)) * 0.5)
    };
    let half = pair.num_edges() / 2;
    let mut worst: f64 = 0.0;
    for i in 0..half {
        for j in half..pair.num_edges() {
            let (fi, ci) = integral(i);
            let (fj, cj) = integral(j);
            if fi.dot(&fj).abs() > 1e-3 * fi.norm() * fj.norm() {
                let d = (ci - cj).norm();
                let oracle = (-s * d / C0).exp() / (4.0 * PI * d) * fi.dot(&fj);
                worst = worst.max((ts[(i, j)] - oracle).norm() / oracle.norm());
            }
        }
    }
    if worst >= 0.02 {
        fails.push(format!("far-pair oracle {worst:.3}"));
    }
    Ok(fails)
}

fn invariant_cq() -> Result<Vec<String>, String> {
    let mut fails = Vec::new();
    let tab = radau2_tableau();
    let delayed = |s: Complex64| (-s * 0.3).exp() / (s + 20.0);
    let mut full = CqConfig::new(0.1, 64);
    full.full_circle = true;
    let seq = cq_weights(&ScalarSymbol(delayed), &tab, &full).map_err(err)?.remove(0);
    let residue = seq.imag_residue.unwrap_or(f64::INFINITY);
    if residue >= 1e-8 {
        fails.push(format!("realness {residue:.2e}"));
    }
    let cfg = CqConfig::new(0.1, 64);
    let base = scalar_weights(delayed, &tab, &cfg).map_err(err)?;
    let finer = scalar_weights(delayed, &tab, &cfg.with_samples(2 * cfg.samples)).map_err(err)?;
    let alias = base.iter().zip(&finer).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / base[0].norm();
    if alias >= 1e-8 {
        fails.push(format!("aliasing {alias:.2e}"));
    }
    let cfg = CqConfig::new(0.05, 64);
    let f = |s: Complex64| 1.0 / (s + 1.0);
    let g = |s: Complex64| s / (s + 3.0) * (-s * 0.1).exp();
    let wf = scalar_weights(f, &tab, &cfg).map_err(err)?;
    let wg = scalar_weights(g, &tab, &cfg).map_err(err)?;
    let wfg = scalar_weights(|s| f(s) * g(s), &tab, &cfg).map_err(err)?;
    let mut comp: f64 = 0.0;
    for j in 0..64 {
        let acc = (0..=j).fold(RMat::zeros(2, 2), |acc, i| acc + &wf[i] * &wg[j - i]);
        comp = comp.max((acc - &wfg[j]).norm() / wfg[0].norm());
    }
    if comp >= 1e-9 {
        fails.push(format!("composition {comp:.2e}"));
    }
    Ok(fails)
}

fn invariant_mot() -> Result<Vec<String>, String> {
    let mut fails = Vec::new();
    let spaces = DiscreteSpaces::new(sphere(0)).map_err(err)?;
    let tab = radau2_tableau();
    let system = build_system(FormulationKind::Calderon, &spaces, &tab, &FormulationConfig::new(573e-9, 40)).map_err(err)?;
    let w: &WeightSequence = &system.system;
    let n = w.dim();
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut draw = || -> Vec<RVec> { (0..30).map(|_| RVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).collect() };
    let e = draw();
    let f = draw();
    let x = march(w, &e, 30).map_err(err)?;
    let y = march(w, &f, 30).map_err(err)?;
    let sum: Vec<RVec> = e.iter().zip(&f).map(|(a, b)| a * 3.0 - b * 0.7).collect();
    let z = march(w, &sum, 30).map_err(err)?;
    let superposed = x.iter().zip(&y).zip(&z).all(|((a, b), c)| (c - (a * 3.0 - b * 0.7)).norm() <= 1e-10 * c.norm());
    if !superposed {
        fails.push("linearity".into());
    }
    let mut delayed = vec![RVec::zeros(n); 4];
    delayed.extend(e.iter().cloned());
    let xd = march(w, &delayed, 34).map_err(err)?;
    let shift = xd[..4].iter().all(|v| v.norm() == 0.0)
        && x.iter().zip(&xd[4..]).all(|(a, b)| (a - b).norm() <= 1e-10 * a.norm());
    if !shift {
        fails.push("time invariance".into());
    }
    if march(w, &e, 30).map_err(err)? != x {
        fails.push("determinism".into());
    }
    Ok(fails)
}

fn criterion_7() -> Outcome {
    let mut fails = Vec::new();
    for (name, suite) in [
        ("mesh", invariant_mesh as fn() -> Result<Vec<String>, String>),
        ("spaces", invariant_spaces),
        ("operators", invariant_operators),
        ("cq", invariant_cq),
        ("mot", invariant_mot),
    ] {
        for f in suite()? {
            fails.push(format!("{name}: {f}"));
        }
    }
    let detail = if fails.is_empty() {
        "mesh, spaces, operators, cq and mot invariants hold".to_string()
    } else {
        fails.join("; ")
    };
    Ok((fails.is_empty(), detail))
}

fn report(id: usize, name: &str, outcome: Outcome, started: Instant) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok((pass, detail)) => {
            println!("criterion {id} ({name}): {} [{secs:.1} s] {detail}", if pass { "PASS" } else { "FAIL" });
            pass
        }
        Err(e) => {
            println!("criterion {id} ({name}): FAIL [{secs:.1} s] error: {e}");
            false
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and filters from the default harness
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut ok = true;
    let t = Instant::now();
    ok &= report(1, "cq order", criterion_1(), t);
    let t = Instant::now();
    ok &= report(2, "calderon identity", criterion_2(), t);
    let t = Instant::now();
    ok &= report(3, "cond vs time step", criterion_3(), t);
    let t = Instant::now();
    ok &= report(4, "cond vs refinement", criterion_4(), t);
    let t = Instant::now();
    match scatter() {
        Ok((run, pulse_steps)) => {
            ok &= report(5, "solution agreement", criterion_5(&run), t);
            ok &= report(6, "dc stability", criterion_6(&run, pulse_steps), t);
        }
        Err(e) => {
            ok &= report(5, "solution agreement", Err(e.clone()), t);
            ok &= report(6, "dc stability", Err(e), t);
        }
    }
    let t = Instant::now();
    ok &= report(7, "invariant suites", criterion_7(), t);
    println!("acceptance: {}", if ok { "all criteria PASS" } else { "FAILURES present" });
    if !ok {
        std::process::exit(1);
    }
}
