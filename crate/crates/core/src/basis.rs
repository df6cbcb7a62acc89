//! Div-conforming function spaces: RWG on a mesh and Buffa-Christiansen (BC)
//! on its barycentric refinement, plus the mixed gram pairing between them.
//!
//! Every space is stored as sparse coefficients over the RWG functions of a
//! *carrier* mesh (the coarse mesh for RWG, the refined mesh for BC). Carrier
//! RWG `k` with edge `(p, q)`, `p < q`, is `+(l/2A)(r - r_opp)` on its plus
//! triangle and `-(l/2A)(r - r_opp)` on its minus triangle, so that its flux
//! across the edge is `l`, from plus to minus.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, RMat};
use crate::mesh::{BarycentricRefinement, Point, TriangleMesh};
use crate::quadrature::TriangleRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Rwg,
    Bc,
}

#[derive(Debug, Clone)]
pub struct BasisSpace {
    pub kind: BasisKind,
    pub coarse: Arc<TriangleMesh>,
    pub carrier: Arc<TriangleMesh>,
    /// Present whenever the carrier is the refined mesh.
    pub refinement: Option<Arc<BarycentricRefinement>>,
    /// Per function: `(carrier edge, coefficient)`, sorted by edge.
    pub coefficients: Vec<Vec<(usize, f64)>>,
    /// Per carrier triangle: `(function, w)` with `f|_t(r) = sum_i w_i (r - p_i)`,
    /// `p_i` the i-th corner of `t`.
    pub local: Vec<Vec<(usize, [f64; 3])>>,
}

impl BasisSpace {
    fn from_coefficients(
        kind: BasisKind,
        coarse: Arc<TriangleMesh>,
        carrier: Arc<TriangleMesh>,
        refinement: Option<Arc<BarycentricRefinement>>,
        coefficients: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        let local = local_expansions(&carrier, &coefficients);
        Self {
            kind,
            coarse,
            carrier,
            refinement,
            coefficients,
            local,
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// True when the carrier is the refined mesh.
    pub fn on_refinement(&self) -> bool {
        !Arc::ptr_eq(&self.carrier, &self.coarse)
    }

    /// Dense carrier-edges x functions coefficient matrix.
    pub fn coefficient_matrix(&self) -> RMat {
        let mut c = RMat::zeros(self.carrier.num_edges(), self.dim());
        for (n, col) in self.coefficients.iter().enumerate() {
            for &(k, v) in col {
                c[(k, n)] = v;
            }
        }
        c
    }

    /// Value and surface divergence of function `n` at a barycentric point of
    /// carrier triangle `t`; zero outside the support.
    pub fn evaluate(&self, n: usize, t: usize, bary: [f64; 3]) -> (Point, f64) {
        match self.local[t].iter().find(|(m, _)| *m == n) {
            Some((_, w)) => {
                let r = self.carrier.point_at(t, bary);
                let p = self.carrier.corners(t);
                let mut v = Point::zeros();
                for i in 0..3 {
                    v += (r - p[i]) * w[i];
                }
                (v, 2.0 * (w[0] + w[1] + w[2]))
            }
            None => (Point::zeros(), 0.0),
        }
    }

    /// Surface divergence of function `n` on carrier triangle `t`.
    pub fn divergence(&self, n: usize, t: usize) -> f64 {
        self.local[t]
            .iter()
            .find(|(m, _)| *m == n)
            .map_or(0.0, |(_, w)| 2.0 * (w[0] + w[1] + w[2]))
    }

    /// Same functions expressed on the refined mesh.
    pub fn lifted(&self, refinement: &Arc<BarycentricRefinement>) -> Result<BasisSpace> {
        if self.on_refinement() {
            if Arc::ptr_eq(&self.carrier, &refinement.fine) {
                return Ok(self.clone());
            }
            return Err(Error::InvalidMesh("spaces live on different refinements".into()));
        }
        if !Arc::ptr_eq(&self.coarse, &refinement.coarse) {
            return Err(Error::InvalidMesh("refinement of a different mesh".into()));
        }
        let to_fine = coarse_rwg_on_fine(refinement);
        let coefficients = self
            .coefficients
            .iter()
            .map(|col| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for &(k, c) in col {
                    for &(f, v) in &to_fine[k] {
                        *acc.entry(f).or_insert(0.0) += c * v;
                    }
                }
                acc.into_iter().filter(|(_, v)| *v != 0.0).collect()
            })
            .collect();
        Ok(BasisSpace::from_coefficients(
            self.kind,
            Arc::clone(&self.coarse),
            Arc::clone(&refinement.fine),
            Some(Arc::clone(refinement)),
            coefficients,
        ))
    }
}

/// Brings two spaces onto a common carrier mesh.
pub fn common_carrier(a: &BasisSpace, b: &BasisSpace) -> Result<(BasisSpace, BasisSpace)> {
    if Arc::ptr_eq(&a.carrier, &b.carrier) {
        return Ok((a.clone(), b.clone()));
    }
    let refinement = a
        .refinement
        .as_ref()
        .or(b.refinement.as_ref())
        .ok_or_else(|| Error::InvalidMesh("spaces share no carrier mesh".into()))?;
    Ok((a.lifted(refinement)?, b.lifted(refinement)?))
}

fn local_expansions(mesh: &TriangleMesh, coefficients: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, [f64; 3])>> {
    let mut acc: Vec<BTreeMap<usize, [f64; 3]>> = vec![BTreeMap::new(); mesh.num_triangles()];
    for (n, col) in coefficients.iter().enumerate() {
        for &(k, c) in col {
            let edge = mesh.edges()[k];
            let l = mesh.edge_length(k);
            for (t, sign) in [(edge.plus, 1.0), (edge.minus, -1.0)] {
                let i = local_index(mesh, t, k);
                let w = acc[t].entry(n).or_insert([0.0; 3]);
                w[i] += sign * c * l / (2.0 * mesh.area(t));
            }
        }
    }
    acc.into_iter().map(|m| m.into_iter().collect()).collect()
}

fn local_index(mesh: &TriangleMesh, t: usize, edge: usize) -> usize {
    mesh.triangle_edges(t)
        .iter()
        .position(|&e| e == edge)
        .expect("edge belongs to triangle")
}

pub fn build_rwg_space(mesh: &Arc<TriangleMesh>) -> BasisSpace {
    let coefficients = (0..mesh.num_edges()).map(|k| vec![(k, 1.0)]).collect();
    BasisSpace::from_coefficients(BasisKind::Rwg, Arc::clone(mesh), Arc::clone(mesh), None, coefficients)
}

/// Coarse RWG functions on the refined mesh, expressed in fine RWGs.
pub fn rwg_on_fine(refinement: &Arc<BarycentricRefinement>) -> BasisSpace {
    let coefficients = coarse_rwg_on_fine(refinement);
    BasisSpace::from_coefficients(
        BasisKind::Rwg,
        Arc::clone(&refinement.coarse),
        Arc::clone(&refinement.fine),
        Some(Arc::clone(refinement)),
        coefficients,
    )
}

fn coarse_rwg_on_fine(refinement: &BarycentricRefinement) -> Vec<Vec<(usize, f64)>> {
    let coarse = &refinement.coarse;
    let fine = &refinement.fine;
    let mut out = vec![Vec::new(); coarse.num_edges()];
    for (k, edge) in fine.edges().iter().enumerate() {
        let [p, q] = edge.vertices;
        let pv = fine.vertices()[p];
        let qv = fine.vertices()[q];
        let mid = (pv + qv) * 0.5;
        let nu = (qv - pv).normalize().cross(&fine.normal(edge.plus));
        let parents = [refinement.fine_parent[edge.plus], refinement.fine_parent[edge.minus]];
        let mut seen: Vec<usize> = Vec::with_capacity(6);
        for &ct in &parents {
            for ce in coarse.triangle_edges(ct) {
                if seen.contains(&ce) {
                    continue;
                }
                seen.push(ce);
                let v = coarse_rwg_value(coarse, ce, ct, mid).dot(&nu);
                if v.abs() > 1e-14 {
                    out[ce].push((k, v));
                }
            }
        }
    }
    for col in &mut out {
        col.sort_by_key(|&(k, _)| k);
    }
    out
}

fn coarse_rwg_value(mesh: &TriangleMesh, e: usize, t: usize, r: Point) -> Point {
    let edge = mesh.edges()[e];
    let sign = if t == edge.plus {
        1.0
    } else if t == edge.minus {
        -1.0
    } else {
        return Point::zeros();
    };
    let i = local_index(mesh, t, e);
    let p = mesh.vertices()[mesh.triangles()[t][i]];
    (r - p) * (sign * mesh.edge_length(e) / (2.0 * mesh.area(t)))
}

/// Buffa-Christiansen functions, one per coarse edge.
///
/// For coarse edge `(a, b)` the function carries total flux `l_e` from the
/// dual cell of `a` to the dual cell of `b` across the dual edge
/// (centroid - midpoint - centroid). Inside each cell the divergence is
/// `l_e / (2N)` on every one of its `2N` fine triangles (`N` the valence).
pub fn build_bc_space(refinement: &Arc<BarycentricRefinement>) -> BasisSpace {
    let coarse = &refinement.coarse;
    let fine = &refinement.fine;
    let fans = VertexFans::new(fine, coarse.num_vertices());
    let mut coefficients = Vec::with_capacity(coarse.num_edges());
    for (e, edge) in coarse.edges().iter().enumerate() {
        let [a, b] = edge.vertices;
        let le = coarse.edge_length(e);
        let mid = refinement.midpoint_vertex(e);
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let mut push_flux = |source: usize, fe: usize, flux: f64| {
            let sign = if fine.edges()[fe].plus == source { 1.0 } else { -1.0 };
            *acc.entry(fe).or_insert(0.0) += sign * flux / fine.edge_length(fe);
        };
        for (v, orient) in [(a, 1.0), (b, -1.0)] {
            let (spokes, tris) = fans.walk(v, mid);
            let n2 = spokes.len();
            let n = (n2 / 2) as f64;
            for k in 1..n2 {
                let flux = orient * le * (k as f64 - n) / (2.0 * n);
                if flux != 0.0 {
                    let fe = fine.edge_between(v, spokes[k]).expect("radiating edge");
                    push_flux(tris[k - 1], fe, flux);
                }
            }
        }
        for ct in [edge.plus, edge.minus] {
            let g = refinement.centroid_vertex(ct);
            let fe = fine.edge_between(mid, g).expect("dual edge piece");
            let fedge = fine.edges()[fe];
            let source = if fine.triangles()[fedge.plus].contains(&a) { fedge.plus } else { fedge.minus };
            push_flux(source, fe, 0.5 * le);
        }
        coefficients.push(acc.into_iter().filter(|(_, v)| *v != 0.0).collect());
    }
    BasisSpace::from_coefficients(
        BasisKind::Bc,
        Arc::clone(coarse),
        Arc::clone(fine),
        Some(Arc::clone(refinement)),
        coefficients,
    )
}

/// Counter-clockwise fans of fine triangles around coarse vertices.
struct VertexFans {
    /// For vertex `v`: spoke `x` -> (triangle `(v, x, y)`, next spoke `y`).
    next: Vec<HashMap<usize, (usize, usize)>>,
}

impl VertexFans {
    fn new(fine: &TriangleMesh, n_coarse: usize) -> Self {
        let mut next = vec![HashMap::new(); n_coarse];
        for (t, tri) in fine.triangles().iter().enumerate() {
            for i in 0..3 {
                let v = tri[i];
                if v < n_coarse {
                    next[v].insert(tri[(i + 1) % 3], (t, tri[(i + 2) % 3]));
                }
            }
        }
        Self { next }
    }

    /// Spokes `x_0 = start, x_1, ...` and triangles `t_k = (v, x_k, x_{k+1})`.
    fn walk(&self, v: usize, start: usize) -> (Vec<usize>, Vec<usize>) {
        let mut spokes = vec![start];
        let mut tris = Vec::new();
        let mut x = start;
        loop {
            let (t, y) = self.next[v][&x];
            tris.push(t);
            if y == start {
                break;
            }
            spokes.push(y);
            x = y;
        }
        (spokes, tris)
    }
}

/// `[P]_{mn} = integral of (n x f^test_m) . f^trial_n`, exact on the common carrier.
pub fn rotated_pairing(test: &BasisSpace, trial: &BasisSpace) -> Result<RMat> {
    let (test, trial) = common_carrier(test, trial)?;
    let mesh = &test.carrier;
    let rule = TriangleRule::with_degree(2);
    let mut out = RMat::zeros(test.dim(), trial.dim());
    for t in 0..mesh.num_triangles() {
        if test.local[t].is_empty() || trial.local[t].is_empty() {
            continue;
        }
        let p = mesh.corners(t);
        let nrm = mesh.normal(t);
        let area = mesh.area(t);
        // k[i][j] = integral over t of (n x (r - p_i)) . (r - p_j)
        let mut k = [[0.0; 3]; 3];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let r = mesh.point_at(t, *b);
            for i in 0..3 {
                let ri = nrm.cross(&(r - p[i]));
                for j in 0..3 {
                    k[i][j] += area * w * ri.dot(&(r - p[j]));
                }
            }
        }
        for (m, wm) in &test.local[t] {
            for (n, wn) in &trial.local[t] {
                let mut v = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        v += wm[i] * k[i][j] * wn[j];
                    }
                }
                out[(*m, *n)] += v;
            }
        }
    }
    Ok(out)
}

/// Gram between rotated RWG (rows) and BC (columns), with cached solvers.
pub struct MixedGram {
    pub gm: RMat,
    pub inverse: RMat,
    lu: LU<f64, Dyn, Dyn>,
}

impl MixedGram {
    pub fn solve(&self, rhs: &RMat) -> Result<RMat> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("mixed gram".into()))
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.gm)
    }
}

pub fn assemble_mixed_gram(rwg: &BasisSpace, bc: &BasisSpace) -> Result<MixedGram> {
    let gm = rotated_pairing(rwg, bc)?;
    let lu = gm.clone().lu();
    let inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular("mixed gram is not invertible".into()))?;
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("mixed gram is not invertible".into()));
    }
    Ok(MixedGram { gm, inverse, lu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{barycentric_refine, generate_icosphere};

    fn sphere(k: usize) -> Arc<TriangleMesh> {
        Arc::new(generate_icosphere(1.0, k).unwrap())
    }

    fn spaces(k: usize) -> (BasisSpace, BasisSpace, Arc<BarycentricRefinement>) {
        let m = sphere(k);
        let r = Arc::new(barycentric_refine(&m));
        (build_rwg_space(&m), build_bc_space(&r), r)
    }

    #[test]
    fn rwg_dimension_and_divergence() {
        let m = sphere(0);
        let s = build_rwg_space(&m);
        assert_eq!(s.dim(), 30);
        for (n, edge) in m.edges().iter().enumerate() {
            let l = m.edge_length(n);
            let dp = s.divergence(n, edge.plus);
            let dm = s.divergence(n, edge.minus);
            assert!((dp * m.area(edge.plus) - l).abs() < 1e-13);
            assert!((dm + l / m.area(edge.minus)).abs() < 1e-13);
        }
    }

    #[test]
    fn rwg_value_on_right_triangles() {
        // unit right triangles sharing the hypotenuse (1,0,0)-(0,1,0), closed
        // into a tetrahedron so the mesh is valid
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
            Point::new(0.5, 0.5, 1.0),
        ];
        let t = vec![[0, 1, 2], [1, 3, 2], [0, 4, 1], [1, 4, 3], [3, 4, 2], [2, 4, 0]];
        let mesh = Arc::new(TriangleMesh::new(v, t).unwrap());
        let s = build_rwg_space(&mesh);
        let e = mesh.edge_between(1, 2).unwrap();
        let edge = mesh.edges()[e];
        let plus = edge.plus;
        let opp = mesh.triangles()[plus]
            .iter()
            .copied()
            .find(|&x| x != 1 && x != 2)
            .unwrap();
        let c = mesh.centroid(plus);
        let l = 2f64.sqrt();
        let expected = (c - mesh.vertices()[opp]) * (l / (2.0 * 0.5));
        let (got, _) = s.evaluate(e, plus, [1.0 / 3.0; 3]);
        assert!((got - expected).norm() < 1e-14);
    }

    fn normal_jumps(space: &BasisSpace) -> f64 {
        let mesh = &space.carrier;
        let mut worst: f64 = 0.0;
        for edge in mesh.edges() {
            let [p, q] = edge.vertices;
            let (pv, qv) = (mesh.vertices()[p], mesh.vertices()[q]);
            // in-plane normals pointing from plus to minus, one per side
            let u = (qv - pv).normalize();
            let nu_p = u.cross(&mesh.normal(edge.plus));
            let nu_m = u.cross(&mesh.normal(edge.minus));
            for s in [0.1, 0.5, 0.9] {
                let r = pv + (qv - pv) * s;
                for n in 0..space.dim() {
                    let a = value_at_point(space, n, edge.plus, r).dot(&nu_p);
                    let b = value_at_point(space, n, edge.minus, r).dot(&nu_m);
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    fn value_at_point(space: &BasisSpace, n: usize, t: usize, r: Point) -> Point {
        match space.local[t].iter().find(|(m, _)| *m == n) {
            Some((_, w)) => {
                let p = space.carrier.corners(t);
                (0..3).map(|i| (r - p[i]) * w[i]).sum()
            }
            None => Point::zeros(),
        }
    }

    #[test]
    fn rwg_and_bc_are_div_conforming() {
        let (rwg, bc, r) = spaces(0);
        assert!(normal_jumps(&rwg) < 1e-12);
        assert!(normal_jumps(&bc) < 1e-12);
        assert!(normal_jumps(&rwg_on_fine(&r)) < 1e-12);
    }

    #[test]
    fn bc_divergence_integrates_to_zero_and_is_uniform_per_cell() {
        let (_, bc, r) = spaces(1);
        let fine = &r.fine;
        let coarse = &r.coarse;
        for (e, edge) in coarse.edges().iter().enumerate() {
            let total: f64 = (0..fine.num_triangles())
                .map(|t| bc.divergence(e, t) * fine.area(t))
                .sum();
            assert!(total.abs() < 1e-12);
            let le = coarse.edge_length(e);
            let vt = coarse.vertex_triangles();
            for (v, sign) in [(edge.vertices[0], 1.0), (edge.vertices[1], -1.0)] {
                let n = vt[v].len() as f64;
                for t in 0..fine.num_triangles() {
                    if fine.triangles()[t].contains(&v) {
                        let flux = bc.divergence(e, t) * fine.area(t);
                        assert!((flux - sign * le / (2.0 * n)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn bc_has_full_rank_and_local_support() {
        let (_, bc, r) = spaces(0);
        assert_eq!(bc.dim(), 30);
        let sv = bc.coefficient_matrix().singular_values();
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 1e-3, "smallest singular value {min}");
        let vt = r.coarse.vertex_triangles();
        for (e, edge) in r.coarse.edges().iter().enumerate() {
            for t in 0..r.fine.num_triangles() {
                let parent = r.fine_parent[t];
                let near = edge.vertices.iter().any(|&v| vt[v].contains(&parent));
                if !near {
                    assert!(bc.local[t].iter().all(|(n, _)| *n != e));
                    assert_eq!(bc.evaluate(e, t, [0.2, 0.3, 0.5]).0, Point::zeros());
                }
            }
        }
    }

    #[test]
    fn lifted_rwg_matches_coarse_values() {
        let (rwg, _, r) = spaces(1);
        let fine_rwg = rwg_on_fine(&r);
        let bary = [0.2, 0.3, 0.5];
        for t in 0..r.fine.num_triangles() {
            let parent = r.fine_parent[t];
            let x = r.fine.point_at(t, bary);
            for n in 0..rwg.dim() {
                let (fv, fd) = fine_rwg.evaluate(n, t, bary);
                let cv = coarse_rwg_value(&r.coarse, n, parent, x);
                assert!((fv - cv).norm() < 1e-12);
                assert!((fd - rwg.divergence(n, parent)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn gram_is_well_conditioned_and_diagonally_positive() {
        for k in 0..=2 {
            let (rwg, bc, _) = spaces(k);
            let g = assemble_mixed_gram(&rwg, &bc).unwrap();
            let cond = g.condition_number();
            assert!(cond < 100.0, "subdiv {k}: cond {cond}");
            assert!((0..g.gm.nrows()).all(|i| g.gm[(i, i)] > 0.0));
        }
    }

    #[test]
    fn gram_pairing_antisymmetry() {
        let (rwg, bc, _) = spaces(1);
        let gm = rotated_pairing(&rwg, &bc).unwrap();
        let g2 = rotated_pairing(&bc, &rwg).unwrap();
        let err = (&g2 + gm.transpose()).norm() / gm.norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn gram_entries_scale_with_area() {
        let median = |k: usize| {
            let (rwg, bc, _) = spaces(k);
            let g = rotated_pairing(&rwg, &bc).unwrap();
            let mut v: Vec<f64> = g.iter().map(|x| x.abs()).filter(|x| *x > 1e-14).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let ratio = median(1) / median(0);
        assert!((ratio - 0.25).abs() < 0.125, "ratio {ratio}");
    }

    #[test]
    fn gram_solve_roundtrip() {
        use rand::{Rng, SeedableRng};
        let (rwg, bc, _) = spaces(1);
        let g = assemble_mixed_gram(&rwg, &bc).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let x = RMat::from_fn(g.gm.nrows(), 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = g.solve(&x).unwrap();
        assert!((&g.gm * y - &x).norm() / x.norm() < 1e-12);
        assert!((&g.gm * &g.inverse * &x - &x).norm() / x.norm() < 1e-12);
    }
}
