//! Laplace-domain Galerkin matrices of the EFIE vector and scalar potentials.
//!
//! For spaces `a`, `b` on a common carrier mesh:
//!
//! ```text
//! [Ts]_mn =  int int G(R) f_m(r) . f_n(r') dr' dr
//! [Th]_mn = -int int G(R) div f_m(r) div f_n(r') dr' dr
//! G(R)    =  exp(-s R / c0) / (4 pi R)
//! T(s)    = -(s/c0) Ts + (c0/s) Th
//! ```
//!
//! Raw matrices are assembled once per carrier between its own RWG functions
//! (edge level for `Ts`, triangle level for the scalar kernel) and projected
//! onto the requested spaces through their sparse coefficients. Touching and
//! near pairs use analytic integration of the static `1/R` term plus a smooth
//! numerical remainder; the static part is independent of `s` and computed
//! once per carrier.
//!
//! For small `|s| D / c0` the kernel is expanded as
//! `G = sum_k x^k R^(k-1) / (4 pi k!)`, `x = -s/c0`, so every evaluation on a
//! CQ contour reduces to a short polynomial in `x` with precomputed real
//! coefficient matrices. Both routes share quadrature rules pair by pair.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, Scalar};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{common_carrier, BasisSpace};
use crate::constants::C0;
use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::mesh::{Point, TriangleMesh};
use crate::quadrature::TriangleRule;
use crate::singular::potentials;

const FOUR_PI: f64 = 4.0 * PI;

/// Largest `|s| D / c0` for which the kernel expansion is used.
pub const EXPANSION_RADIUS: f64 = 1.0;

/// Memory budget (bytes) for raw coefficient matrices held during one pass.
const RAW_BUDGET: usize = 768 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Degree of the rule on each triangle of a well-separated pair.
    pub far_degree: usize,
    /// Degree used for separated pairs closer than `mid_factor` circumradii.
    pub mid_degree: usize,
    /// Degree of the rule on each triangle of a near or touching pair.
    pub near_degree: usize,
    /// Gauss points per direction of the edge-graded outer rule used with the
    /// analytically integrated static part.
    pub singular_outer_points: usize,
    /// Pairs with centroid distance below this multiple of the larger
    /// circumradius are near.
    pub near_factor: f64,
    pub mid_factor: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            far_degree: 4,
            mid_degree: 8,
            near_degree: 6,
            singular_outer_points: 10,
            near_factor: 2.5,
            mid_factor: 6.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.far_degree == 0 || self.mid_degree == 0 || self.near_degree == 0 || self.singular_outer_points == 0 {
            return Err(Error::Config("quadrature degrees must be positive".into()));
        }
        if !(self.near_factor > 0.0) || !(self.mid_factor >= self.near_factor) {
            return Err(Error::Config("need 0 < near factor <= mid factor".into()));
        }
        Ok(())
    }

    /// Same configuration with every rule degree doubled.
    pub fn refined(&self) -> Self {
        Self {
            far_degree: 2 * self.far_degree,
            mid_degree: 2 * self.mid_degree,
            near_degree: 2 * self.near_degree,
            singular_outer_points: 2 * self.singular_outer_points,
            ..*self
        }
    }
}

/// Scalar types the pair integrals accumulate in.
pub trait Field:
    Scalar + Copy + Default + Send + Sync + AddAssign + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}

impl<T> Field for T where
    T: Scalar + Copy + Default + Send + Sync + AddAssign + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>
{
}

/// `int int K`, `int int K rho`, `int int K rho'`, `int int K rho.rho'` over a
/// triangle pair, `rho = r - c`, `rho' = r' - c'` relative to the centroids.
#[derive(Debug, Clone, Copy, Default)]
struct PairIntegrals<T> {
    i0: T,
    r: [T; 3],
    rp: [T; 3],
    rr: T,
}

impl<T: Field> PairIntegrals<T> {
    fn add(&mut self, o: &PairIntegrals<T>) {
        self.i0 += o.i0;
        self.rr += o.rr;
        for d in 0..3 {
            self.r[d] += o.r[d];
            self.rp[d] += o.rp[d];
        }
    }

    fn swapped(&self) -> Self {
        Self {
            i0: self.i0,
            r: self.rp,
            rp: self.r,
            rr: self.rr,
        }
    }
}

impl PairIntegrals<f64> {
    fn lift<T: Field>(&self, f: impl Fn(f64) -> T) -> PairIntegrals<T> {
        PairIntegrals {
            i0: f(self.i0),
            r: self.r.map(&f),
            rp: self.rp.map(&f),
            rr: f(self.rr),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct QPoint {
    pos: Point,
    rho: Point,
    w: f64,
}

#[derive(Debug, Clone)]
struct TriangleData {
    centroid: Point,
    /// Corners relative to the centroid.
    q: [Point; 3],
    /// Carrier edges opposite each corner.
    edges: [usize; 3],
    /// Scale of the local RWG half `(r - p_i)` in carrier RWG `edges[i]`.
    scale: [f64; 3],
    circumradius: f64,
    far: Vec<QPoint>,
    mid: Vec<QPoint>,
    near: Vec<QPoint>,
}

fn rule_points(mesh: &TriangleMesh, t: usize, rule: &TriangleRule) -> Vec<QPoint> {
    let c = mesh.centroid(t);
    let a = mesh.area(t);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(b, w)| {
            let pos = mesh.point_at(t, *b);
            QPoint { pos, rho: pos - c, w: w * a }
        })
        .collect()
}

/// Geometry, pair classification and static near-field integrals of a carrier.
pub struct CarrierGeometry {
    mesh: Arc<TriangleMesh>,
    config: QuadratureConfig,
    tris: Vec<TriangleData>,
    /// For each `t`: near partners `t' >= t` with the extracted integrals.
    near: Vec<Vec<(usize, NearStatic)>>,
    diameter: f64,
}

impl CarrierGeometry {
    pub fn new(mesh: Arc<TriangleMesh>, config: QuadratureConfig) -> Result<Self> {
        config.validate()?;
        let far_rule = TriangleRule::with_degree(config.far_degree);
        let mid_rule = TriangleRule::with_degree(config.mid_degree);
        let near_rule = TriangleRule::with_degree(config.near_degree);
        let outer_rule = TriangleRule::graded(config.singular_outer_points);
        let nt = mesh.num_triangles();
        let tris: Vec<TriangleData> = (0..nt)
            .map(|t| {
                let c = mesh.centroid(t);
                let corners = mesh.corners(t);
                let edges = mesh.triangle_edges(t);
                let scale = [0, 1, 2].map(|i| {
                    let e = edges[i];
                    let sign = if mesh.edges()[e].plus == t { 1.0 } else { -1.0 };
                    sign * mesh.edge_length(e) / (2.0 * mesh.area(t))
                });
                TriangleData {
                    centroid: c,
                    q: corners.map(|p| p - c),
                    edges,
                    scale,
                    circumradius: mesh.circumradius(t),
                    far: rule_points(&mesh, t, &far_rule),
                    mid: rule_points(&mesh, t, &mid_rule),
                    near: rule_points(&mesh, t, &near_rule),
                }
            })
            .collect();
        let circ: Vec<f64> = (0..nt).map(|t| mesh.circumradius(t)).collect();
        let near_lists: Vec<Vec<usize>> = (0..nt)
            .into_par_iter()
            .map(|t| {
                let vt = mesh.triangles()[t];
                (t..nt)
                    .filter(|&u| {
                        let touching = mesh.triangles()[u].iter().any(|v| vt.contains(v));
                        let d = (tris[t].centroid - tris[u].centroid).norm();
                        touching || d < config.near_factor * circ[t].max(circ[u])
                    })
                    .collect()
            })
            .collect();
        let near = near_lists
            .into_par_iter()
            .enumerate()
            .map(|(t, list)| {
                let outer = rule_points(&mesh, t, &outer_rule);
                list.into_iter()
                    .map(|u| {
                        let mut s = static_pair(&mesh, &outer, &tris[u], u);
                        if u == t {
                            // exact symmetry of self blocks
                            for p in [&mut s.inverse, &mut s.linear] {
                                for d in 0..3 {
                                    let m = 0.5 * (p.r[d] + p.rp[d]);
                                    p.r[d] = m;
                                    p.rp[d] = m;
                                }
                            }
                        }
                        (u, s)
                    })
                    .collect()
            })
            .collect();
        let diameter = mesh.diameter();
        Ok(Self {
            mesh,
            config,
            tris,
            near,
            diameter,
        })
    }

    pub fn mesh(&self) -> &Arc<TriangleMesh> {
        &self.mesh
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.config
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn is_near(&self, t: usize, u: usize) -> bool {
        let (a, b) = (t.min(u), t.max(u));
        self.near[a].binary_search_by_key(&b, |(v, _)| *v).is_ok()
    }

    fn separated_rules(&self, t: usize, u: usize) -> (&[QPoint], &[QPoint]) {
        let (a, b) = (&self.tris[t], &self.tris[u]);
        let d = (a.centroid - b.centroid).norm();
        if d < self.config.mid_factor * a.circumradius.max(b.circumradius) {
            (&a.mid, &b.mid)
        } else {
            (&a.far, &b.far)
        }
    }

    /// Raw matrices at complex frequency `s`.
    fn raw_direct(&self, s: Complex64) -> Raw<Complex64> {
        let x = s / C0;
        self.assemble_raw(1, |t, u, near, out: &mut [PairIntegrals<Complex64>]| {
            let (a, b) = (&self.tris[t], &self.tris[u]);
            out[0] = match near {
                Some(st) => {
                    let mut acc = integrate(&a.near, &b.near, |r| remainder_kernel(x, r));
                    acc.add(&st.inverse.lift(|v| Complex64::new(v, 0.0)));
                    let half_x2 = 0.5 * x * x;
                    acc.add(&st.linear.lift(|v| half_x2 * v));
                    acc
                }
                None => {
                    let (pa, pb) = self.separated_rules(t, u);
                    integrate(pa, pb, |r| (-x * r).exp() * (1.0 / (FOUR_PI * r)))
                }
            };
        })
        .pop()
        .expect("one channel")
    }

    /// Raw coefficient matrices of `x^k`, `k` in `channels`.
    fn raw_moments(&self, channels: std::ops::Range<usize>) -> Vec<Raw<f64>> {
        let k0 = channels.start;
        let n = channels.len();
        let kmax = channels.end;
        let mut inv_fact = vec![1.0; kmax + 1];
        for k in 1..=kmax {
            inv_fact[k] = inv_fact[k - 1] / k as f64;
        }
        self.assemble_raw(n, |t, u, near, out: &mut [PairIntegrals<f64>]| {
            let (a, b) = (&self.tris[t], &self.tris[u]);
            let (pa, pb) = if near.is_some() { (&a.near[..], &b.near[..]) } else { self.separated_rules(t, u) };
            integrate_channels(pa, pb, out, |r, vals| {
                // R^(k-1), starting at R^0 for k = 1
                let mut pw = 1.0;
                for _ in 1..k0 {
                    pw *= r;
                }
                for (j, v) in vals.iter_mut().enumerate() {
                    let k = k0 + j;
                    *v = if k == 0 { 1.0 / (FOUR_PI * r) } else { pw * inv_fact[k] / FOUR_PI };
                    if k > 0 {
                        pw *= r;
                    }
                    if near.is_some() && (k == 0 || k == 2) {
                        // extracted analytically below
                        *v = 0.0;
                    }
                }
            });
            if let Some(st) = near {
                if k0 == 0 {
                    out[0].add(&st.inverse);
                }
                if (k0..kmax).contains(&2) {
                    out[2 - k0].add(&st.linear.lift(|v| 0.5 * v));
                }
            }
        })
    }

    fn assemble_raw<T: Field>(
        &self,
        channels: usize,
        pair: impl Fn(usize, usize, Option<&NearStatic>, &mut [PairIntegrals<T>]) + Sync,
    ) -> Vec<Raw<T>> {
        let nt = self.mesh.num_triangles();
        let ne = self.mesh.num_edges();
        let mut raws: Vec<Raw<T>> = (0..channels)
            .map(|_| Raw {
                ts: DMatrix::from_element(ne, ne, T::default()),
                g: DMatrix::from_element(nt, nt, T::default()),
            })
            .collect();
        let chunk = 32;
        for start in (0..nt).step_by(chunk) {
            let rows: Vec<Vec<PairIntegrals<T>>> = (start..(start + chunk).min(nt))
                .into_par_iter()
                .map(|t| {
                    let mut row = vec![PairIntegrals::default(); (nt - t) * channels];
                    let near = &self.near[t];
                    let mut ni = 0;
                    for u in t..nt {
                        let st = if ni < near.len() && near[ni].0 == u {
                            ni += 1;
                            Some(&near[ni - 1].1)
                        } else {
                            None
                        };
                        let off = (u - t) * channels;
                        pair(t, u, st, &mut row[off..off + channels]);
                    }
                    row
                })
                .collect();
            for (dt, row) in rows.iter().enumerate() {
                let t = start + dt;
                for u in t..nt {
                    for (ch, raw) in raws.iter_mut().enumerate() {
                        let p = &row[(u - t) * channels + ch];
                        self.scatter(raw, t, u, p);
                        if u != t {
                            self.scatter(raw, u, t, &p.swapped());
                        }
                    }
                }
            }
        }
        raws
    }

    fn scatter<T: Field>(&self, raw: &mut Raw<T>, t: usize, u: usize, p: &PairIntegrals<T>) {
        let (a, b) = (&self.tris[t], &self.tris[u]);
        raw.g[(t, u)] = p.i0;
        for i in 0..3 {
            let qi = a.q[i];
            let ei = a.edges[i];
            for j in 0..3 {
                let qj = b.q[j];
                // (rho - q_i) . (rho' - q'_j)
                let rq = p.r[0] * qj[0] + p.r[1] * qj[1] + p.r[2] * qj[2];
                let qrp = p.rp[0] * qi[0] + p.rp[1] * qi[1] + p.rp[2] * qi[2];
                let k = p.rr - rq - qrp + p.i0 * qi.dot(&qj);
                raw.ts[(ei, b.edges[j])] += k * (a.scale[i] * b.scale[j]);
            }
        }
    }
}

/// Near-pair integrals of the kernels extracted from `G`, `1/(4 pi R)` and
/// `R/(4 pi)`, with analytic inner integration.
#[derive(Debug, Clone, Copy, Default)]
struct NearStatic {
    inverse: PairIntegrals<f64>,
    linear: PairIntegrals<f64>,
}

fn static_pair(mesh: &TriangleMesh, outer: &[QPoint], src: &TriangleData, u: usize) -> NearStatic {
    let corners = mesh.corners(u);
    let mut acc = NearStatic::default();
    for p in outer {
        let pot = potentials(&corners, &p.pos);
        let w = p.w / FOUR_PI;
        for ((i1, iv), out) in [(pot.inverse, &mut acc.inverse), (pot.linear, &mut acc.linear)] {
            // int rho' K = int (r' - r) K + (r - c') int K
            let jp = iv + (p.pos - src.centroid) * i1;
            out.i0 += w * i1;
            out.rr += w * p.rho.dot(&jp);
            for d in 0..3 {
                out.r[d] += w * i1 * p.rho[d];
                out.rp[d] += w * jp[d];
            }
        }
    }
    acc
}

/// `(exp(-x R) - 1 - (x R)^2 / 2) / (4 pi R)`, the part of `G` left after
/// extracting its `1/R` and `R` terms; tends to `-x / (4 pi)` at `R = 0`.
fn remainder_kernel(x: Complex64, r: f64) -> Complex64 {
    let y = x * r;
    let one = Complex64::new(1.0, 0.0);
    // (exp(-y) - 1 - y^2/2) / y
    let phi = if y.norm() < 0.1 {
        // -1 - y^2/6 + y^3/24 - ...
        let mut term = -y * y / 6.0;
        let mut sum = -one + term;
        for k in 4..16 {
            term = -term * y / k as f64;
            sum += term;
        }
        sum
    } else {
        ((-y).exp() - one - y * y * 0.5) / y
    };
    x * phi / FOUR_PI
}

fn integrate<T: Field>(outer: &[QPoint], inner: &[QPoint], kernel: impl Fn(f64) -> T) -> PairIntegrals<T> {
    let mut acc = PairIntegrals::<T>::default();
    for a in outer {
        let mut s0 = T::default();
        let mut s1 = [T::default(); 3];
        for b in inner {
            let r = (a.pos - b.pos).norm();
            let k = kernel(r) * b.w;
            s0 += k;
            for d in 0..3 {
                s1[d] += k * b.rho[d];
            }
        }
        acc.i0 += s0 * a.w;
        acc.rr += (s1[0] * a.rho[0] + s1[1] * a.rho[1] + s1[2] * a.rho[2]) * a.w;
        for d in 0..3 {
            acc.r[d] += s0 * (a.w * a.rho[d]);
            acc.rp[d] += s1[d] * a.w;
        }
    }
    acc
}

fn integrate_channels(
    outer: &[QPoint],
    inner: &[QPoint],
    out: &mut [PairIntegrals<f64>],
    kernel: impl Fn(f64, &mut [f64]),
) {
    let n = out.len();
    let mut vals = vec![0.0; n];
    let mut s0 = vec![0.0; n];
    let mut s1 = vec![[0.0; 3]; n];
    for a in outer {
        s0.iter_mut().for_each(|v| *v = 0.0);
        s1.iter_mut().for_each(|v| *v = [0.0; 3]);
        for b in inner {
            let r = (a.pos - b.pos).norm();
            kernel(r, &mut vals);
            for c in 0..n {
                let k = vals[c] * b.w;
                s0[c] += k;
                for d in 0..3 {
                    s1[c][d] += k * b.rho[d];
                }
            }
        }
        for c in 0..n {
            let o = &mut out[c];
            o.i0 += s0[c] * a.w;
            o.rr += (s1[c][0] * a.rho[0] + s1[c][1] * a.rho[1] + s1[c][2] * a.rho[2]) * a.w;
            for d in 0..3 {
                o.r[d] += s0[c] * a.w * a.rho[d];
                o.rp[d] += s1[c][d] * a.w;
            }
        }
    }
}

/// Carrier-level matrices: `ts` between carrier RWGs, `g` the scalar kernel
/// integrated over triangle pairs.
struct Raw<T: Scalar> {
    ts: DMatrix<T>,
    g: DMatrix<T>,
}

/// Sparse data needed to project raw matrices onto one space.
#[derive(Debug, Clone)]
struct Projector {
    coefficients: Vec<Vec<(usize, f64)>>,
    /// Per function: `(triangle, divergence)`.
    divergence: Vec<Vec<(usize, f64)>>,
}

impl Projector {
    fn new(space: &BasisSpace) -> Self {
        let mut divergence = vec![Vec::new(); space.dim()];
        for (t, list) in space.local.iter().enumerate() {
            for (n, w) in list {
                let d = 2.0 * (w[0] + w[1] + w[2]);
                if d != 0.0 {
                    divergence[*n].push((t, d));
                }
            }
        }
        Self {
            coefficients: space.coefficients.clone(),
            divergence,
        }
    }

    fn dim(&self) -> usize {
        self.coefficients.len()
    }
}

/// `A^T M B` for sparse column lists `A`, `B`.
fn sandwich<T: Field>(m: &DMatrix<T>, a: &[Vec<(usize, f64)>], b: &[Vec<(usize, f64)>], sign: f64) -> DMatrix<T> {
    let rows = m.nrows();
    let mut tmp = DMatrix::from_element(rows, b.len(), T::default());
    for (n, col) in b.iter().enumerate() {
        for &(k, c) in col {
            let src = m.column(k);
            let mut dst = tmp.column_mut(n);
            for i in 0..rows {
                dst[i] += src[i] * c;
            }
        }
    }
    let mut out = DMatrix::from_element(a.len(), b.len(), T::default());
    for n in 0..b.len() {
        let col = tmp.column(n);
        for (m_, list) in a.iter().enumerate() {
            let mut v = T::default();
            for &(k, c) in list {
                v += col[k] * c;
            }
            out[(m_, n)] = v * sign;
        }
    }
    out
}

fn project<T: Field>(raw: &Raw<T>, a: &Projector, b: &Projector) -> (DMatrix<T>, DMatrix<T>) {
    (
        sandwich(&raw.ts, &a.coefficients, &b.coefficients, 1.0),
        sandwich(&raw.g, &a.divergence, &b.divergence, -1.0),
    )
}

/// Potential matrices `(Ts, Th)` of one (test, trial) pair.
pub type Components = (CMat, CMat);

/// Evaluator `s -> (Ts(s), Th(s))` for a fixed list of (test, trial) pairs
/// sharing one carrier mesh.
pub struct EfieOperator {
    geometry: Arc<CarrierGeometry>,
    pairs: Vec<(Projector, Projector)>,
    expansion: Option<Expansion>,
    cache: Mutex<SymbolCache>,
}

struct Expansion {
    /// `|s|` below which the series is used.
    radius: f64,
    /// `terms[p][k] = (Ts_k, Th_k)` for pair `p`.
    terms: Vec<Vec<(RMat, RMat)>>,
}

#[derive(Default)]
struct SymbolCache {
    capacity: usize,
    order: VecDeque<(u64, u64)>,
    map: HashMap<(u64, u64), Arc<Vec<Components>>>,
}

impl EfieOperator {
    /// All spaces must live on the carrier of `geometry`.
    pub fn new(geometry: Arc<CarrierGeometry>, pairs: &[(&BasisSpace, &BasisSpace)]) -> Result<Self> {
        let mut out = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            for sp in [a, b] {
                if !Arc::ptr_eq(&sp.carrier, geometry.mesh()) {
                    return Err(Error::InvalidMesh("space is not defined on the operator carrier".into()));
                }
            }
            out.push((Projector::new(a), Projector::new(b)));
        }
        Ok(Self {
            geometry,
            pairs: out,
            expansion: None,
            cache: Mutex::new(SymbolCache::default()),
        })
    }

    pub fn geometry(&self) -> &Arc<CarrierGeometry> {
        &self.geometry
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair_shape(&self, p: usize) -> (usize, usize) {
        (self.pairs[p].0.dim(), self.pairs[p].1.dim())
    }

    /// Memoize up to `capacity` evaluations.
    pub fn set_cache_capacity(&self, capacity: usize) {
        let mut c = self.cache.lock().expect("cache lock");
        c.capacity = capacity;
        while c.order.len() > capacity {
            if let Some(k) = c.order.pop_front() {
                c.map.remove(&k);
            }
        }
    }

    /// Precomputes the low-frequency expansion if every later evaluation has
    /// `|s| <= s_max` inside its convergence radius. Returns whether it did.
    pub fn prepare_expansion(&mut self, s_max: f64) -> bool {
        let y = s_max * self.geometry.diameter() / C0;
        if !(y <= EXPANSION_RADIUS) {
            return false;
        }
        let order = expansion_order(y);
        self.expansion = Some(self.build_expansion(order, s_max));
        true
    }

    pub fn has_expansion(&self) -> bool {
        self.expansion.is_some()
    }

    fn build_expansion(&self, order: usize, radius: f64) -> Expansion {
        let mesh = self.geometry.mesh();
        let per_channel = 8 * (mesh.num_edges().pow(2) + mesh.num_triangles().pow(2));
        let group = (RAW_BUDGET / per_channel).max(1);
        let mut terms: Vec<Vec<(RMat, RMat)>> = vec![Vec::with_capacity(order + 1); self.pairs.len()];
        let mut k = 0;
        while k <= order {
            let end = (k + group).min(order + 1);
            for raw in self.geometry.raw_moments(k..end) {
                for (p, (a, b)) in self.pairs.iter().enumerate() {
                    terms[p].push(project(&raw, a, b));
                }
            }
            k = end;
        }
        Expansion { radius, terms }
    }

    /// `(Ts(s), Th(s))` for every pair.
    pub fn components(&self, s: Complex64) -> Result<Arc<Vec<Components>>> {
        if !(s.re.is_finite() && s.im.is_finite()) {
            return Err(Error::Symbol(format!("non-finite frequency {s}")));
        }
        let key = (s.re.to_bits(), s.im.to_bits());
        if let Some(v) = self.cache.lock().expect("cache lock").map.get(&key) {
            return Ok(Arc::clone(v));
        }
        let value = Arc::new(self.evaluate(s));
        let mut c = self.cache.lock().expect("cache lock");
        if c.capacity > 0 {
            if c.order.len() >= c.capacity {
                if let Some(k) = c.order.pop_front() {
                    c.map.remove(&k);
                }
            }
            c.order.push_back(key);
            c.map.insert(key, Arc::clone(&value));
        }
        Ok(value)
    }

    fn evaluate(&self, s: Complex64) -> Vec<Components> {
        match &self.expansion {
            Some(exp) if s.norm() <= exp.radius * (1.0 + 1e-12) => {
                let x = -s / C0;
                exp.terms
                    .iter()
                    .map(|terms| {
                        let (n, m) = (terms[0].0.nrows(), terms[0].0.ncols());
                        let mut ts = CMat::zeros(n, m);
                        let mut th = CMat::zeros(n, m);
                        for (ts_k, th_k) in terms.iter().rev() {
                            ts = ts * x + ts_k.map(|v| Complex64::new(v, 0.0));
                            th = th * x + th_k.map(|v| Complex64::new(v, 0.0));
                        }
                        (ts, th)
                    })
                    .collect()
            }
            _ => {
                let raw = self.geometry.raw_direct(s);
                self.pairs.iter().map(|(a, b)| project(&raw, a, b)).collect()
            }
        }
    }
}

/// Smallest `K` with `y^(K+1)/(K+1)! < 1e-17`.
fn expansion_order(y: f64) -> usize {
    let mut term = y;
    let mut k = 1usize;
    while term >= 1e-17 && k < 60 {
        k += 1;
        term *= y / k as f64;
    }
    k - 1
}

fn check_frequency(s: Complex64) -> Result<()> {
    if !(s.re >= 0.0) || !s.im.is_finite() {
        return Err(Error::Symbol(format!("frequency {s} must satisfy Re(s) >= 0")));
    }
    Ok(())
}

fn single_pair(s: Complex64, test: &BasisSpace, trial: &BasisSpace, config: QuadratureConfig) -> Result<Components> {
    check_frequency(s)?;
    let (a, b) = common_carrier(test, trial)?;
    let geometry = Arc::new(CarrierGeometry::new(Arc::clone(&a.carrier), config)?);
    let op = EfieOperator::new(geometry, &[(&a, &b)])?;
    let v = op.components(s)?;
    Ok(v[0].clone())
}

/// Vector-potential matrix with default quadrature.
pub fn assemble_ts(s: Complex64, test: &BasisSpace, trial: &BasisSpace) -> Result<CMat> {
    Ok(single_pair(s, test, trial, QuadratureConfig::default())?.0)
}

/// Scalar-potential matrix with default quadrature.
pub fn assemble_th(s: Complex64, test: &BasisSpace, trial: &BasisSpace) -> Result<CMat> {
    Ok(single_pair(s, test, trial, QuadratureConfig::default())?.1)
}

/// Both potential matrices with an explicit quadrature configuration.
pub fn assemble_components(
    s: Complex64,
    test: &BasisSpace,
    trial: &BasisSpace,
    config: QuadratureConfig,
) -> Result<Components> {
    single_pair(s, test, trial, config)
}

/// `-(s/c0) Ts + (c0/s) Th`.
pub fn combine(s: Complex64, ts: &CMat, th: &CMat) -> CMat {
    ts * (-s / C0) + th * (C0 / s)
}

/// EFIE symbol `T(s)`; `s = 0` is the pole of the scalar potential.
pub fn assemble_efie_symbol(s: Complex64, test: &BasisSpace, trial: &BasisSpace) -> Result<CMat> {
    if s == Complex64::new(0.0, 0.0) {
        return Err(Error::Symbol("s = 0 is a pole of the EFIE symbol".into()));
    }
    let (ts, th) = single_pair(s, test, trial, QuadratureConfig::default())?;
    Ok(combine(s, &ts, &th))
}
