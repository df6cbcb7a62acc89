//! Gaussian plane-wave excitation and its tested right-hand sides.

use std::f64::consts::PI;

use crate::basis::BasisSpace;
use crate::constants::{C0, ETA0};
use crate::cq::RkTableau;
use crate::error::{Error, Result};
use crate::linalg::RVec;
use crate::mesh::{Point, TriangleMesh};
use crate::quadrature::TriangleRule;

/// Quadrature degree of the tested arrays (same family as the gram rules).
pub const RHS_DEGREE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Value,
    Derivative,
    /// `-int_t^inf e`. It differs from the causal primitive by a uniform
    /// static field, which every operator it feeds annihilates.
    Primitive,
}

/// `e(r, t) = A0 exp(-u^2 / (2 sigma^2)) p`, `u = t - t0 - k.r/c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPlaneWave {
    pub amplitude: f64,
    pub sigma: f64,
    pub polarization: Point,
    pub direction: Point,
    pub delay: f64,
    pub speed: f64,
}

impl GaussianPlaneWave {
    pub fn new(amplitude: f64, sigma: f64, polarization: Point, direction: Point, delay: f64) -> Result<Self> {
        let w = Self {
            amplitude,
            sigma,
            polarization,
            direction,
            delay,
            speed: C0,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.amplitude.is_finite() || !self.delay.is_finite() {
            return Err(Error::Config("pulse width must be positive and all parameters finite".into()));
        }
        for (name, v) in [("polarization", self.polarization), ("direction", self.direction)] {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("{name} must be a unit vector")));
            }
        }
        if self.polarization.dot(&self.direction).abs() > 1e-12 {
            return Err(Error::Config("polarization must be orthogonal to the propagation direction".into()));
        }
        Ok(())
    }

    /// Delay that keeps `u <= -8 sigma` on the whole mesh at `t = 0`.
    pub fn quiet_start_delay(sigma: f64, direction: &Point, mesh: &TriangleMesh) -> f64 {
        let min_proj = mesh
            .vertices()
            .iter()
            .map(|v| direction.dot(v))
            .fold(f64::INFINITY, f64::min);
        8.0 * sigma - min_proj / C0
    }

    /// Retarded time `u` at `r`.
    pub fn retarded(&self, r: &Point, t: f64) -> f64 {
        t - self.delay - self.direction.dot(r) / self.speed
    }

    pub fn eval(&self, r: &Point, t: f64, kind: FieldKind) -> Point {
        self.polarization * self.profile(self.retarded(r, t), kind)
    }

    /// Scalar time profile at retarded time `u`.
    pub fn profile(&self, u: f64, kind: FieldKind) -> f64 {
        let g = self.amplitude * (-u * u / (2.0 * self.sigma * self.sigma)).exp();
        match kind {
            FieldKind::Value => g,
            FieldKind::Derivative => -u / (self.sigma * self.sigma) * g,
            // -int_u^inf: zero after the pulse, so no static field survives
            // into the late-time history
            FieldKind::Primitive => {
                -self.amplitude * self.sigma * (PI / 2.0).sqrt() * libm::erfc(u / (self.sigma * std::f64::consts::SQRT_2))
            }
        }
    }
}

/// Stage-stacked tested arrays `[E_i]_(k, m) = -1/eta0 int f_m . e(r, (i + c_k) dt)`.
#[derive(Debug, Clone)]
pub struct RhsSequence {
    pub kind: FieldKind,
    pub dt: f64,
    pub steps: Vec<RVec>,
}

impl RhsSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.steps.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }
}

struct TestPoint {
    pos: Point,
    /// `(function, weight * f_m(pos))`.
    funcs: Vec<(usize, Point)>,
}

fn test_points(space: &BasisSpace, degree: usize) -> Vec<TestPoint> {
    let mesh = &space.carrier;
    let rule = TriangleRule::with_degree(degree);
    let mut out = Vec::new();
    for t in 0..mesh.num_triangles() {
        if space.local[t].is_empty() {
            continue;
        }
        let corners = mesh.corners(t);
        let area = mesh.area(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let pos = mesh.point_at(t, *b);
            let funcs = space.local[t]
                .iter()
                .map(|(n, c)| {
                    let mut f = Point::zeros();
                    for i in 0..3 {
                        f += (pos - corners[i]) * c[i];
                    }
                    (*n, f * (w * area))
                })
                .collect();
            out.push(TestPoint { pos, funcs });
        }
    }
    out
}

pub fn assemble_rhs_sequence(
    wave: &GaussianPlaneWave,
    space: &BasisSpace,
    tableau: &RkTableau,
    dt: f64,
    n_steps: usize,
    kind: FieldKind,
) -> RhsSequence {
    assemble_with_degree(wave, space, tableau, dt, n_steps, kind, RHS_DEGREE)
}

fn assemble_with_degree(
    wave: &GaussianPlaneWave,
    space: &BasisSpace,
    tableau: &RkTableau,
    dt: f64,
    n_steps: usize,
    kind: FieldKind,
    degree: usize,
) -> RhsSequence {
    let n = space.dim();
    let points = test_points(space, degree);
    let proj: Vec<f64> = points.iter().map(|p| wave.direction.dot(&p.pos) / wave.speed).collect();
    let steps = (0..n_steps)
        .map(|i| {
            let mut v = RVec::zeros(2 * n);
            for (k, ck) in tableau.c.iter().enumerate() {
                let t = (i as f64 + ck) * dt;
                for (p, kr) in points.iter().zip(&proj) {
                    let g = wave.profile(t - wave.delay - kr, kind);
                    if g == 0.0 {
                        continue;
                    }
                    let e = wave.polarization * (-g / ETA0);
                    for (m, f) in &p.funcs {
                        v[k * n + m] += f.dot(&e);
                    }
                }
            }
            v
        })
        .collect();
    RhsSequence { kind, dt, steps }
}
