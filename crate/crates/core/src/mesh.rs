//! Closed, consistently oriented triangle surfaces.
//!
//! Edges are numbered in lexicographic order of their sorted vertex pair; that
//! order is the RWG numbering used everywhere downstream. For every edge
//! `(a, b)` with `a < b`, the `plus` triangle traverses it as `a -> b` and the
//! `minus` triangle as `b -> a`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Triangles with area at or below this value (m^2) are degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

/// Subdivision depth cap for generated spheres (20 * 4^7 = 327680 triangles).
pub const MAX_ICOSPHERE_SUBDIVISIONS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Sorted vertex pair, `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Triangle traversing the edge in ascending vertex order.
    pub plus: usize,
    /// Triangle traversing the edge in descending vertex order.
    pub minus: usize,
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<(usize, usize), usize>,
    /// `triangle_edges[t][i]` is the edge opposite local vertex `i`.
    triangle_edges: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds and validates a closed mesh, repairing orientation if needed.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut triangles = triangles;
        check_indices(&vertices, &triangles)?;
        for (index, t) in triangles.iter().enumerate() {
            let area = triangle_area(&vertices, t);
            if area <= MIN_TRIANGLE_AREA {
                return Err(Error::DegenerateTriangle { index, area });
            }
        }
        let incidence = edge_incidence(&triangles);
        for (&(a, b), tris) in &incidence {
            match tris.len() {
                2 => {}
                1 => return Err(Error::OpenBoundary(a, b)),
                n => return Err(Error::NonManifold(a, b, n)),
            }
        }
        orient(&vertices, &mut triangles, &incidence)?;
        Ok(Self::from_oriented(vertices, triangles))
    }

    /// Assumes a valid closed, consistently oriented input.
    fn from_oriented(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        let mut directed: BTreeMap<(usize, usize), (Option<usize>, Option<usize>)> = BTreeMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                let entry = directed.entry((u.min(v), u.max(v))).or_default();
                if u < v {
                    entry.0 = Some(ti);
                } else {
                    entry.1 = Some(ti);
                }
            }
        }
        let mut edges = Vec::with_capacity(directed.len());
        let mut edge_lookup = HashMap::with_capacity(directed.len());
        for (i, (&(a, b), &(plus, minus))) in directed.iter().enumerate() {
            edges.push(Edge {
                vertices: [a, b],
                plus: plus.expect("oriented mesh"),
                minus: minus.expect("oriented mesh"),
            });
            edge_lookup.insert((a, b), i);
        }
        let triangle_edges = triangles
            .iter()
            .map(|t| {
                let mut out = [0; 3];
                for (k, slot) in out.iter_mut().enumerate() {
                    let (u, v) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                    *slot = edge_lookup[&(u.min(v), u.max(v))];
                }
                out
            })
            .collect();
        Self {
            vertices,
            triangles,
            edges,
            edge_lookup,
            triangle_edges,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[t])
    }

    /// Unit outward normal (right-hand rule on the vertex order).
    pub fn normal(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    pub fn circumradius(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let (la, lb, lc) = ((b - c).norm(), (c - a).norm(), (a - b).norm());
        la * lb * lc / (4.0 * self.area(t))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        (self.vertices[a] - self.vertices[b]).norm()
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, p) in self.vertices.iter().enumerate() {
            for q in &self.vertices[i + 1..] {
                d = d.max((p - q).norm());
            }
        }
        d
    }

    /// Point from barycentric coordinates on triangle `t`.
    pub fn point_at(&self, t: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.corners(t);
        a * bary[0] + b * bary[1] + c * bary[2]
    }

    pub fn signed_volume(&self) -> f64 {
        signed_volume(&self.vertices, &self.triangles)
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                out[v].push(ti);
            }
        }
        out
    }

    pub fn report(&self) -> ManifoldReport {
        validate_manifold(&self.vertices, &self.triangles)
    }

    /// SHA-256 over vertex coordinates and triangle indices.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_le_bytes());
            }
        }
        for t in &self.triangles {
            for &i in t {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn check_indices(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<()> {
    for (ti, t) in triangles.iter().enumerate() {
        if t.iter().any(|&i| i >= vertices.len()) {
            return Err(Error::InvalidMesh(format!(
                "triangle {ti} references a missing vertex"
            )));
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(Error::InvalidMesh(format!("triangle {ti} repeats a vertex")));
        }
    }
    if triangles.is_empty() {
        return Err(Error::InvalidMesh("no triangles".into()));
    }
    Ok(())
}

fn triangle_area(vertices: &[Point], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn signed_volume(vertices: &[Point], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| vertices[t[0]].dot(&vertices[t[1]].cross(&vertices[t[2]])) / 6.0)
        .sum()
}

type Incidence = BTreeMap<(usize, usize), Vec<usize>>;

fn edge_incidence(triangles: &[[usize; 3]]) -> Incidence {
    let mut map: Incidence = BTreeMap::new();
    for (ti, t) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (u, v) = (t[k], t[(k + 1) % 3]);
            map.entry((u.min(v), u.max(v))).or_default().push(ti);
        }
    }
    map
}

fn traverses(t: &[usize; 3], u: usize, v: usize) -> bool {
    (0..3).any(|k| t[k] == u && t[(k + 1) % 3] == v)
}

/// BFS flip propagation per connected component, then a global flip of any
/// component with negative enclosed volume.
fn orient(vertices: &[Point], triangles: &mut [[usize; 3]], incidence: &Incidence) -> Result<()> {
    let n = triangles.len();
    let mut neighbours = vec![Vec::new(); n];
    for (&(a, b), tris) in incidence {
        if let [t0, t1] = tris[..] {
            neighbours[t0].push((t1, a, b));
            neighbours[t1].push((t0, a, b));
        }
    }
    let mut visited = vec![false; n];
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let mut component = vec![seed];
        visited[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(t) = queue.pop_front() {
            for &(nb, a, b) in &neighbours[t] {
                let same_direction = traverses(&triangles[t], a, b) == traverses(&triangles[nb], a, b);
                if visited[nb] {
                    if same_direction {
                        return Err(Error::NonOrientable(nb));
                    }
                    continue;
                }
                if same_direction {
                    triangles[nb].swap(1, 2);
                }
                visited[nb] = true;
                component.push(nb);
                queue.push_back(nb);
            }
        }
        let tris: Vec<[usize; 3]> = component.iter().map(|&t| triangles[t]).collect();
        if signed_volume(vertices, &tris) < 0.0 {
            for &t in &component {
                triangles[t].swap(1, 2);
            }
        }
    }
    Ok(())
}

/// Pure diagnostic summary of a triangle soup.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldReport {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_triangles: usize,
    pub euler_characteristic: i64,
    pub components: usize,
    /// Total genus, assuming every component is closed.
    pub genus: i64,
    pub min_area: f64,
    pub max_area: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub degenerate_triangles: Vec<usize>,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
}

impl ManifoldReport {
    pub fn is_closed_manifold(&self) -> bool {
        self.boundary_edges == 0 && self.non_manifold_edges == 0 && self.degenerate_triangles.is_empty()
    }
}

impl fmt::Display for ManifoldReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vertices = {}", self.num_vertices)?;
        writeln!(f, "edges = {}", self.num_edges)?;
        writeln!(f, "triangles = {}", self.num_triangles)?;
        writeln!(f, "euler_characteristic = {}", self.euler_characteristic)?;
        writeln!(f, "components = {}", self.components)?;
        writeln!(f, "genus = {}", self.genus)?;
        writeln!(f, "min_area_m2 = {:e}", self.min_area)?;
        writeln!(f, "max_area_m2 = {:e}", self.max_area)?;
        writeln!(f, "h_min_m = {:e}", self.h_min)?;
        writeln!(f, "h_max_m = {:e}", self.h_max)?;
        writeln!(f, "degenerate_triangles = {}", self.degenerate_triangles.len())?;
        writeln!(f, "boundary_edges = {}", self.boundary_edges)?;
        write!(f, "non_manifold_edges = {}", self.non_manifold_edges)
    }
}

pub fn validate_manifold(vertices: &[Point], triangles: &[[usize; 3]]) -> ManifoldReport {
    let incidence = edge_incidence(triangles);
    let mut degenerate = Vec::new();
    let (mut min_area, mut max_area) = (f64::INFINITY, 0.0f64);
    for (ti, t) in triangles.iter().enumerate() {
        let a = triangle_area(vertices, t);
        if a <= MIN_TRIANGLE_AREA {
            degenerate.push(ti);
        }
        min_area = min_area.min(a);
        max_area = max_area.max(a);
    }
    let (mut h_min, mut h_max) = (f64::INFINITY, 0.0f64);
    let mut boundary_edges = 0;
    let mut non_manifold_edges = 0;
    for (&(a, b), tris) in &incidence {
        let l = (vertices[a] - vertices[b]).norm();
        h_min = h_min.min(l);
        h_max = h_max.max(l);
        match tris.len() {
            1 => boundary_edges += 1,
            2 => {}
            _ => non_manifold_edges += 1,
        }
    }

    // connected components of the triangle adjacency graph
    let mut parent: Vec<usize> = (0..triangles.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for tris in incidence.values() {
        for w in tris.windows(2) {
            let (ra, rb) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let components = (0..triangles.len())
        .filter(|&t| find(&mut parent, t) == t)
        .count();

    let used: std::collections::BTreeSet<usize> = triangles.iter().flatten().copied().collect();
    let num_vertices = used.len();
    let euler = num_vertices as i64 - incidence.len() as i64 + triangles.len() as i64;
    ManifoldReport {
        num_vertices,
        num_edges: incidence.len(),
        num_triangles: triangles.len(),
        euler_characteristic: euler,
        components,
        genus: (2 * components as i64 - euler) / 2,
        min_area,
        max_area,
        h_min,
        h_max,
        degenerate_triangles: degenerate,
        boundary_edges,
        non_manifold_edges,
    }
}

/// Icosahedron subdivided `subdivisions` times and projected onto a sphere.
pub fn generate_icosphere(radius: f64, subdivisions: usize) -> Result<TriangleMesh> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
    }
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(Error::Config(format!(
            "icosphere subdivision depth {subdivisions} exceeds the cap {MAX_ICOSPHERE_SUBDIVISIONS}"
        )));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut vertices: Vec<Point> = raw
        .iter()
        .map(|p| Point::new(p[0], p[1], p[2]).normalize() * radius)
        .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let mut mid = |u: usize, v: usize| -> usize {
                *midpoint.entry((u.min(v), u.max(v))).or_insert_with(|| {
                    let p = ((vertices[u] + vertices[v]) * 0.5).normalize() * radius;
                    vertices.push(p);
                    vertices.len() - 1
                })
            };
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    TriangleMesh::new(vertices, triangles)
}

/// Where a vertex of the barycentric refinement comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexOrigin {
    CoarseVertex(usize),
    EdgeMidpoint(usize),
    Centroid(usize),
}

#[derive(Debug, Clone)]
pub struct BarycentricRefinement {
    pub coarse: Arc<TriangleMesh>,
    pub fine: Arc<TriangleMesh>,
    /// Parent coarse triangle of every fine triangle.
    pub fine_parent: Vec<usize>,
    /// Provenance of every fine vertex.
    pub vertex_origin: Vec<VertexOrigin>,
}

impl BarycentricRefinement {
    pub fn midpoint_vertex(&self, coarse_edge: usize) -> usize {
        self.coarse.num_vertices() + coarse_edge
    }

    pub fn centroid_vertex(&self, coarse_triangle: usize) -> usize {
        self.coarse.num_vertices() + self.coarse.num_edges() + coarse_triangle
    }
}

/// Splits every triangle into six around its centroid. Fine vertices are
/// numbered coarse vertices, then edge midpoints (edge order), then centroids.
pub fn barycentric_refine(mesh: &Arc<TriangleMesh>) -> BarycentricRefinement {
    let (nv, ne, nf) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_triangles());
    let mut vertices = mesh.vertices().to_vec();
    let mut origin: Vec<VertexOrigin> = (0..nv).map(VertexOrigin::CoarseVertex).collect();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let [a, b] = edge.vertices;
        vertices.push((mesh.vertices()[a] + mesh.vertices()[b]) * 0.5);
        origin.push(VertexOrigin::EdgeMidpoint(e));
    }
    for t in 0..nf {
        vertices.push(mesh.centroid(t));
        origin.push(VertexOrigin::Centroid(t));
    }
    let mut triangles = Vec::with_capacity(6 * nf);
    let mut parent = Vec::with_capacity(6 * nf);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = nv + ne + t;
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let m = nv + mesh.edge_between(a, b).expect("edge of triangle");
            triangles.push([a, m, g]);
            triangles.push([m, b, g]);
            parent.push(t);
            parent.push(t);
        }
    }
    BarycentricRefinement {
        coarse: Arc::clone(mesh),
        fine: Arc::new(TriangleMesh::from_oriented(vertices, triangles)),
        fine_parent: parent,
        vertex_origin: origin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    /// Gmsh ASCII 2.2 (`$Nodes` / `$Elements`, element type 2).
    Gmsh,
    /// Wavefront OBJ (`v` / `f` records, 1-based indices).
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "msh" => Some(Self::Gmsh),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)?;
    let (vertices, triangles) = match format {
        MeshFormat::Gmsh => parse_gmsh(&text),
        MeshFormat::Obj => parse_obj(&text),
    }
    .map_err(|msg| Error::Parse {
        path: path.to_path_buf(),
        msg,
    })?;
    TriangleMesh::new(vertices, triangles)
}

type Soup = (Vec<Point>, Vec<[usize; 3]>);

fn parse_f64(tok: Option<&str>, line: usize) -> std::result::Result<f64, String> {
    tok.ok_or_else(|| format!("line {line}: missing value"))?
        .parse()
        .map_err(|e| format!("line {line}: {e}"))
}

fn parse_usize(tok: Option<&str>, line: usize) -> std::result::Result<usize, String> {
    tok.ok_or_else(|| format!("line {line}: missing value"))?
        .parse()
        .map_err(|e| format!("line {line}: {e}"))
}

pub fn parse_gmsh(text: &str) -> std::result::Result<Soup, String> {
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let find = |tag: &str| lines.iter().position(|l| *l == tag);
    if let Some(i) = find("$MeshFormat") {
        let version = lines.get(i + 1).and_then(|l| l.split_whitespace().next()).unwrap_or("");
        if !version.starts_with('2') {
            return Err(format!("unsupported Gmsh version {version}"));
        }
        if lines.get(i + 1).and_then(|l| l.split_whitespace().nth(1)) != Some("0") {
            return Err("only ASCII Gmsh files are supported".into());
        }
    }
    let nodes_at = find("$Nodes").ok_or("missing $Nodes section")?;
    let count = parse_usize(lines.get(nodes_at + 1).copied(), nodes_at + 2)?;
    let mut id_map = HashMap::with_capacity(count);
    let mut vertices = Vec::with_capacity(count);
    for k in 0..count {
        let ln = nodes_at + 2 + k;
        let mut it = lines.get(ln).ok_or("truncated $Nodes")?.split_whitespace();
        let id = parse_usize(it.next(), ln + 1)?;
        let x = parse_f64(it.next(), ln + 1)?;
        let y = parse_f64(it.next(), ln + 1)?;
        let z = parse_f64(it.next(), ln + 1)?;
        id_map.insert(id, vertices.len());
        vertices.push(Point::new(x, y, z));
    }
    let elems_at = find("$Elements").ok_or("missing $Elements section")?;
    let count = parse_usize(lines.get(elems_at + 1).copied(), elems_at + 2)?;
    let mut triangles = Vec::new();
    for k in 0..count {
        let ln = elems_at + 2 + k;
        let toks: Vec<&str> = lines.get(ln).ok_or("truncated $Elements")?.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(format!("line {}: malformed element", ln + 1));
        }
        let kind = parse_usize(Some(toks[1]), ln + 1)?;
        let ntags = parse_usize(Some(toks[2]), ln + 1)?;
        if kind != 2 {
            continue;
        }
        let nodes = &toks[3 + ntags..];
        if nodes.len() != 3 {
            return Err(format!("line {}: triangle needs 3 nodes", ln + 1));
        }
        let mut tri = [0; 3];
        for (slot, tok) in tri.iter_mut().zip(nodes) {
            let id = parse_usize(Some(tok), ln + 1)?;
            *slot = *id_map
                .get(&id)
                .ok_or_else(|| format!("line {}: unknown node {id}", ln + 1))?;
        }
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

pub fn parse_obj(text: &str) -> std::result::Result<Soup, String> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let x = parse_f64(it.next(), ln + 1)?;
                let y = parse_f64(it.next(), ln + 1)?;
                let z = parse_f64(it.next(), ln + 1)?;
                vertices.push(Point::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
                        let n = vertices.len() as i64;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(format!("line {}: vertex index {i} out of range", ln + 1));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<std::result::Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(format!("line {}: only triangular faces are supported", ln + 1));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in mesh.triangles() {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    out
}
