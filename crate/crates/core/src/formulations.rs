//! Symbol pipelines of the three marching schemes and their CQ weights.
//!
//! * time-differentiated: `s T(s) = -(s^2/c0) Ts + c0 Th` on RWG x RWG;
//! * quasi-Helmholtz: `M(s) T(s) M(s)` with `M = a^-1 P_L + a P_S`,
//!   `a = (s D / c0)^(1/2)`, which expands to
//!   `-(1/D) P_L Ts P_L - (s/c0)(P_L Ts P_S + P_S Ts P_L) - (s^2 D/c0^2) P_S Ts P_S + D Th`;
//! * Calderon: `Tcal = (s/c0)^2 Ts' G^-1 Ts - Ts' G^-1 Th - Th' G^-1 Ts` with
//!   right-hand-side operators `Ta = -(s/c0) Ts' G^-1` and `Tb = c0 Th' G^-1`,
//!   primes marking BC x BC matrices and `G` the rotated-RWG/BC gram.
//!
//! Calderon products are evaluated on the barycentric refinement, where both
//! RWG and BC functions are piecewise linear.

use std::sync::Arc;

use num_complex::Complex64;

use crate::basis::{assemble_mixed_gram, build_bc_space, build_rwg_space, BasisSpace, MixedGram};
use crate::constants::C0;
use crate::cq::{
    contour_frequency_bound, cq_weights, truncate_weights, zeroth_weight, CqConfig, OperatorSymbol, RkTableau,
    WeightSequence,
};
use crate::error::{Error, Result};
use crate::linalg::{cmul, crmul, rcmul, CMat, RMat};
use crate::mesh::{barycentric_refine, BarycentricRefinement, TriangleMesh};
use crate::operators::{CarrierGeometry, EfieOperator, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormulationKind {
    TimeDifferentiated,
    QuasiHelmholtz,
    Calderon,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 3] = [Self::TimeDifferentiated, Self::QuasiHelmholtz, Self::Calderon];

    pub fn name(&self) -> &'static str {
        match self {
            Self::TimeDifferentiated => "time-differentiated",
            Self::QuasiHelmholtz => "quasi-helmholtz",
            Self::Calderon => "calderon",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every space a formulation may need on one coarse mesh.
pub struct DiscreteSpaces {
    pub mesh: Arc<TriangleMesh>,
    pub refinement: Arc<BarycentricRefinement>,
    pub rwg: BasisSpace,
    pub bc: BasisSpace,
    /// RWG functions expressed on the refinement.
    pub rwg_fine: BasisSpace,
    pub gram: MixedGram,
}

impl DiscreteSpaces {
    pub fn new(mesh: Arc<TriangleMesh>) -> Result<Self> {
        let refinement = Arc::new(barycentric_refine(&mesh));
        let rwg = build_rwg_space(&mesh);
        let bc = build_bc_space(&refinement);
        let rwg_fine = rwg.lifted(&refinement)?;
        let gram = assemble_mixed_gram(&rwg, &bc)?;
        Ok(Self {
            mesh,
            refinement,
            rwg,
            bc,
            rwg_fine,
            gram,
        })
    }

    pub fn dim(&self) -> usize {
        self.rwg.dim()
    }
}

/// Length-weighted star incidence: `Sigma[m][c] = +-l_m` when edge `m` bounds
/// cell `c`, `+` on the plus cell. `Sigma^T J` is the cell flux balance of the
/// RWG expansion `J`, so its null space is exactly the solenoidal subspace.
pub fn star_incidence(mesh: &TriangleMesh) -> RMat {
    let mut s = RMat::zeros(mesh.num_edges(), mesh.num_triangles());
    for (m, e) in mesh.edges().iter().enumerate() {
        let l = mesh.edge_length(m);
        s[(m, e.plus)] = l;
        s[(m, e.minus)] = -l;
    }
    s
}

#[derive(Debug, Clone)]
pub struct ProjectorPair {
    pub sigma: RMat,
    /// `P_S = Sigma (Sigma^T Sigma)^+ Sigma^T`.
    pub star: RMat,
    /// `P_L = I - P_S`.
    pub loops: RMat,
}

pub fn build_qh_projectors(mesh: &TriangleMesh) -> Result<ProjectorPair> {
    let sigma = star_incidence(mesh);
    let lap = sigma.transpose() * &sigma;
    let eig = lap.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let tol = 1e-10 * top;
    let null = eig.eigenvalues.iter().filter(|v| v.abs() <= tol).count();
    if null != 1 {
        return Err(Error::NullSpace(null));
    }
    let mut pinv = RMat::zeros(lap.nrows(), lap.ncols());
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > tol {
            let v = eig.eigenvectors.column(k);
            pinv += (v * v.transpose()) / lam;
        }
    }
    let star = &sigma * pinv * sigma.transpose();
    let loops = RMat::identity(star.nrows(), star.ncols()) - &star;
    Ok(ProjectorPair { sigma, star, loops })
}

/// `M(s) = a^-1 P_L + a P_S`, `a = (s D / c0)^(1/2)` (principal branch).
pub fn qh_scaling(projectors: &ProjectorPair, diameter: f64, s: Complex64) -> CMat {
    let a = (s * diameter / C0).sqrt();
    projectors.loops.map(|v| v / a) + projectors.star.map(|v| v * a)
}

fn build_operator(
    carrier: &Arc<TriangleMesh>,
    pairs: &[(&BasisSpace, &BasisSpace)],
    quadrature: QuadratureConfig,
) -> Result<EfieOperator> {
    let geometry = Arc::new(CarrierGeometry::new(Arc::clone(carrier), quadrature)?);
    EfieOperator::new(geometry, pairs)
}

/// `s T(s)` on RWG x RWG.
pub struct TimeDiffSymbol {
    op: EfieOperator,
}

impl TimeDiffSymbol {
    pub fn new(spaces: &DiscreteSpaces, quadrature: QuadratureConfig) -> Result<Self> {
        let op = build_operator(&spaces.mesh, &[(&spaces.rwg, &spaces.rwg)], quadrature)?;
        Ok(Self { op })
    }
}

impl OperatorSymbol for TimeDiffSymbol {
    fn dim(&self) -> usize {
        self.op.pair_shape(0).0
    }

    fn evaluate(&self, s: Complex64) -> Result<Vec<CMat>> {
        let c = self.op.components(s)?;
        let (ts, th) = &c[0];
        Ok(vec![ts * (-s * s / C0) + th * Complex64::new(C0, 0.0)])
    }

    fn conjugate_symmetric(&self) -> bool {
        true
    }
}

/// `M(s) T(s) M(s)` in expanded form.
pub struct QuasiHelmholtzSymbol {
    op: EfieOperator,
    projectors: ProjectorPair,
    diameter: f64,
}

impl QuasiHelmholtzSymbol {
    pub fn new(spaces: &DiscreteSpaces, projectors: ProjectorPair, quadrature: QuadratureConfig) -> Result<Self> {
        let op = build_operator(&spaces.mesh, &[(&spaces.rwg, &spaces.rwg)], quadrature)?;
        Ok(Self {
            op,
            projectors,
            diameter: spaces.mesh.diameter(),
        })
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn projectors(&self) -> &ProjectorPair {
        &self.projectors
    }
}

impl OperatorSymbol for QuasiHelmholtzSymbol {
    fn dim(&self) -> usize {
        self.op.pair_shape(0).0
    }

    fn evaluate(&self, s: Complex64) -> Result<Vec<CMat>> {
        let c = self.op.components(s)?;
        let (ts, th) = &c[0];
        let (pl, ps) = (&self.projectors.loops, &self.projectors.star);
        let d = self.diameter;
        let ts_l = crmul(ts, pl);
        let ts_s = crmul(ts, ps);
        let ll = rcmul(pl, &ts_l);
        let cross = rcmul(pl, &ts_s) + rcmul(ps, &ts_l);
        let ss = rcmul(ps, &ts_s);
        Ok(vec![
            ll * Complex64::new(-1.0 / d, 0.0) + cross * (-s / C0) + ss * (-s * s * d / (C0 * C0))
                + th * Complex64::new(d, 0.0),
        ])
    }

    fn conjugate_symmetric(&self) -> bool {
        true
    }
}

/// `Tcal(s)` and optionally the right-hand-side operators `Ta(s)`, `Tb(s)`.
pub struct CalderonSymbol {
    op: EfieOperator,
    gram_inverse: RMat,
    with_rhs: bool,
}

impl CalderonSymbol {
    pub fn new(spaces: &DiscreteSpaces, quadrature: QuadratureConfig, with_rhs: bool) -> Result<Self> {
        let op = build_operator(
            &spaces.refinement.fine,
            &[(&spaces.bc, &spaces.bc), (&spaces.rwg_fine, &spaces.rwg_fine)],
            quadrature,
        )?;
        Ok(Self {
            op,
            gram_inverse: spaces.gram.inverse.clone(),
            with_rhs,
        })
    }

    /// `T'(s) G^-1 T(s)` and the dropped term `(c0/s)^2 Th' G^-1 Th`.
    pub fn full_product(&self, s: Complex64) -> Result<(CMat, CMat)> {
        let c = self.op.components(s)?;
        let ((ts_b, th_b), (ts_r, th_r)) = (&c[0], &c[1]);
        let g = &self.gram_inverse;
        let t_b = ts_b * (-s / C0) + th_b * (C0 / s);
        let t_r = ts_r * (-s / C0) + th_r * (C0 / s);
        let full = cmul(&t_b, &rcmul(g, &t_r));
        let hh = cmul(th_b, &rcmul(g, th_r)) * (C0 * C0 / (s * s));
        Ok((full, hh))
    }
}

impl OperatorSymbol for CalderonSymbol {
    fn dim(&self) -> usize {
        self.op.pair_shape(0).0
    }

    fn outputs(&self) -> usize {
        if self.with_rhs {
            3
        } else {
            1
        }
    }

    fn evaluate(&self, s: Complex64) -> Result<Vec<CMat>> {
        let c = self.op.components(s)?;
        let ((ts_b, th_b), (ts_r, th_r)) = (&c[0], &c[1]);
        let g = &self.gram_inverse;
        let x_s = rcmul(g, ts_r);
        let x_h = rcmul(g, th_r);
        let k = s / C0;
        let tcal = cmul(ts_b, &(&x_s * (k * k) - x_h)) - cmul(th_b, &x_s);
        let mut out = vec![tcal];
        if self.with_rhs {
            out.push(crmul(ts_b, g) * (-k));
            out.push(crmul(th_b, g) * Complex64::new(C0, 0.0));
        }
        Ok(out)
    }

    fn conjugate_symmetric(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulationConfig {
    pub dt: f64,
    pub quadrature: QuadratureConfig,
    /// Relative truncation tolerance of matrix weight sequences.
    pub tolerance: f64,
    /// Leading weights computed before truncation.
    pub max_weights: usize,
    /// Marching length; sizes the scalar quasi-Helmholtz weights.
    pub steps: usize,
}

impl FormulationConfig {
    pub fn new(dt: f64, steps: usize) -> Self {
        Self {
            dt,
            quadrature: QuadratureConfig::default(),
            tolerance: 1e-13,
            max_weights: 32,
            steps,
        }
    }

    fn cq(&self) -> CqConfig {
        CqConfig {
            tolerance: self.tolerance,
            ..CqConfig::new(self.dt, self.max_weights)
        }
    }
}

/// How the tested incident field enters a marching scheme.
#[derive(Debug, Clone)]
pub enum RhsCoupling {
    /// `W * J = E'` with the time derivative of the tested field.
    Derivative,
    /// `W * Y = M E`, `J = M Y`, with `M` applied through scalar stage weights
    /// of `(s D/c0)^(-1/2)` (`minus`) and `(s D/c0)^(1/2)` (`plus`). The loop
    /// part of `M E` is formed as `(c0/D) plus * PL E_prim` so the discrete
    /// derivative cancels the static loop pole exactly.
    QuasiHelmholtz {
        projectors: ProjectorPair,
        diameter: f64,
        minus: Vec<RMat>,
        plus: Vec<RMat>,
    },
    /// `Tcal * J = Ta * E + Tb * E_prim`.
    Calderon { alpha: WeightSequence, beta: WeightSequence },
}

pub struct MotSystem {
    pub kind: FormulationKind,
    pub dim: usize,
    pub dt: f64,
    pub tableau: RkTableau,
    pub system: WeightSequence,
    pub coupling: RhsCoupling,
}

fn prepared_weights<S: OperatorSymbol>(
    symbol: &mut S,
    prepare: impl FnOnce(&mut S, f64) -> bool,
    tableau: &RkTableau,
    cfg: &FormulationConfig,
) -> Result<Vec<WeightSequence>> {
    let cq = cfg.cq();
    let bound = contour_frequency_bound(tableau, &cq)?;
    prepare(symbol, bound);
    cq_weights(symbol, tableau, &cq)?
        .into_iter()
        .map(|w| truncate_weights(w, cfg.tolerance))
        .collect()
}

pub fn build_timediff_system(spaces: &DiscreteSpaces, tableau: &RkTableau, cfg: &FormulationConfig) -> Result<MotSystem> {
    let mut sym = TimeDiffSymbol::new(spaces, cfg.quadrature)?;
    let mut w = prepared_weights(&mut sym, |s, b| s.op.prepare_expansion(b), tableau, cfg)?;
    Ok(MotSystem {
        kind: FormulationKind::TimeDifferentiated,
        dim: spaces.dim(),
        dt: cfg.dt,
        tableau: *tableau,
        system: w.remove(0),
        coupling: RhsCoupling::Derivative,
    })
}

/// Accuracy target of the scalar quasi-Helmholtz weights, which do not decay
/// and are applied over the whole history.
pub const QH_SCALAR_EPSILON: f64 = 1e-24;

pub fn build_qh_system(
    spaces: &DiscreteSpaces,
    projectors: &ProjectorPair,
    tableau: &RkTableau,
    cfg: &FormulationConfig,
) -> Result<MotSystem> {
    let mut sym = QuasiHelmholtzSymbol::new(spaces, projectors.clone(), cfg.quadrature)?;
    let mut w = prepared_weights(&mut sym, |s, b| s.op.prepare_expansion(b), tableau, cfg)?;
    let d = sym.diameter;
    let count = cfg.steps.max(1);
    let scalar = CqConfig {
        samples: (8 * count).max(512).next_power_of_two(),
        ..CqConfig::new(cfg.dt, count)
    }
    .with_epsilon(QH_SCALAR_EPSILON);
    let minus = crate::cq::scalar_weights(|s| (s * d / C0).sqrt().inv(), tableau, &scalar)?;
    let plus = crate::cq::scalar_weights(|s| (s * d / C0).sqrt(), tableau, &scalar)?;
    Ok(MotSystem {
        kind: FormulationKind::QuasiHelmholtz,
        dim: spaces.dim(),
        dt: cfg.dt,
        tableau: *tableau,
        system: w.remove(0),
        coupling: RhsCoupling::QuasiHelmholtz {
            projectors: projectors.clone(),
            diameter: d,
            minus,
            plus,
        },
    })
}

pub fn build_calderon_system(spaces: &DiscreteSpaces, tableau: &RkTableau, cfg: &FormulationConfig) -> Result<MotSystem> {
    let mut sym = CalderonSymbol::new(spaces, cfg.quadrature, true)?;
    let mut w = prepared_weights(&mut sym, |s, b| s.op.prepare_expansion(b), tableau, cfg)?;
    let beta = w.pop().expect("three outputs");
    let alpha = w.pop().expect("three outputs");
    Ok(MotSystem {
        kind: FormulationKind::Calderon,
        dim: spaces.dim(),
        dt: cfg.dt,
        tableau: *tableau,
        system: w.pop().expect("three outputs"),
        coupling: RhsCoupling::Calderon { alpha, beta },
    })
}

pub fn build_system(
    kind: FormulationKind,
    spaces: &DiscreteSpaces,
    tableau: &RkTableau,
    cfg: &FormulationConfig,
) -> Result<MotSystem> {
    match kind {
        FormulationKind::TimeDifferentiated => build_timediff_system(spaces, tableau, cfg),
        FormulationKind::QuasiHelmholtz => {
            let p = build_qh_projectors(&spaces.mesh)?;
            build_qh_system(spaces, &p, tableau, cfg)
        }
        FormulationKind::Calderon => build_calderon_system(spaces, tableau, cfg),
    }
}

/// Step-zero system matrix `W_0 = F(A^-1 / dt)` without any contour sum.
pub fn zeroth_system_matrix(
    kind: FormulationKind,
    spaces: &DiscreteSpaces,
    tableau: &RkTableau,
    dt: f64,
    quadrature: QuadratureConfig,
) -> Result<RMat> {
    let w = match kind {
        FormulationKind::TimeDifferentiated => zeroth_weight(&TimeDiffSymbol::new(spaces, quadrature)?, tableau, dt)?,
        FormulationKind::QuasiHelmholtz => {
            let p = build_qh_projectors(&spaces.mesh)?;
            zeroth_weight(&QuasiHelmholtzSymbol::new(spaces, p, quadrature)?, tableau, dt)?
        }
        FormulationKind::Calderon => zeroth_weight(&CalderonSymbol::new(spaces, quadrature, false)?, tableau, dt)?,
    };
    Ok(w.into_iter().next().expect("one output"))
}

/// Checks `Tcal + (c0/s)^2 Th' G^-1 Th = T' G^-1 T` at `s`; returns the
/// relative identity error and the relative size of the dropped term.
pub fn splitting_residual(symbol: &CalderonSymbol, s: Complex64) -> Result<(f64, f64)> {
    let tcal = symbol.evaluate(s)?.remove(0);
    let (full, hh) = symbol.full_product(s)?;
    let scale = crate::linalg::frobenius_c(&full);
    let err = crate::linalg::frobenius_c(&(tcal + &hh - &full)) / scale;
    Ok((err, crate::linalg::frobenius_c(&hh) / scale))
}
