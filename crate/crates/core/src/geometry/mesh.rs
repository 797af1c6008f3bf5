//! Simplicial meshes of annuli and spherical shells.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Annulus,
    Shell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryLabel {
    /// Dirichlet part, observed and damped.
    Gamma0,
    /// Acoustic part.
    Gamma1,
}

impl BoundaryLabel {
    pub fn code(self) -> u8 {
        match self {
            BoundaryLabel::Gamma0 => 0,
            BoundaryLabel::Gamma1 => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(BoundaryLabel::Gamma0),
            1 => Ok(BoundaryLabel::Gamma1),
            _ => Err(Error::Format(format!("unknown boundary label {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFacet {
    /// Vertex indices, oriented so that the facet normal points out of Ω.
    pub vertices: Vec<usize>,
    pub label: BoundaryLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    /// Coordinates; the third component is zero when `dim == 2`.
    pub vertices: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    pub boundary_facets: Vec<BoundaryFacet>,
    /// Largest cell diameter.
    pub h: f64,
}

/// Gradients of the barycentric coordinates of a simplex, together with its
/// measure. Row `a` of the returned matrix is `∇λ_a` (padded to 3D).
pub fn simplex_gradients(pts: &[Point], dim: usize) -> (Vec<Point>, f64) {
    let mut j = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let e = pts[c + 1] - pts[0];
        for r in 0..dim {
            j[(r, c)] = e[r];
        }
    }
    let det = j.determinant();
    let fact = if dim == 2 { 2.0 } else { 6.0 };
    let vol = det / fact;
    let inv = j.try_inverse().unwrap_or_else(|| DMatrix::zeros(dim, dim));
    let mut grads = vec![Point::zeros(); dim + 1];
    for a in 1..=dim {
        for r in 0..dim {
            grads[a][r] = inv[(a - 1, r)];
        }
    }
    let s = grads[1..].iter().fold(Point::zeros(), |acc, g| acc + g);
    grads[0] = -s;
    (grads, vol)
}

/// Unnormalized facet normal with length equal to the facet measure; the
/// sign follows the vertex order.
pub fn facet_area_normal(pts: &[Point], dim: usize) -> Point {
    if dim == 2 {
        let t = pts[1] - pts[0];
        Point::new(t.y, -t.x, 0.0)
    } else {
        0.5 * (pts[1] - pts[0]).cross(&(pts[2] - pts[0]))
    }
}

impl Mesh {
    pub fn point(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn cell_points(&self, c: usize) -> Vec<Point> {
        self.cells[c].iter().map(|&i| self.vertices[i]).collect()
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        simplex_gradients(&self.cell_points(c), self.dim).1
    }

    pub fn cell_centroid(&self, c: usize) -> Point {
        let pts = self.cell_points(c);
        pts.iter().fold(Point::zeros(), |a, p| a + p) / pts.len() as f64
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_measure(c)).sum()
    }

    pub fn facet_points(&self, f: &BoundaryFacet) -> Vec<Point> {
        f.vertices.iter().map(|&i| self.vertices[i]).collect()
    }

    pub fn facet_measure(&self, f: &BoundaryFacet) -> f64 {
        facet_area_normal(&self.facet_points(f), self.dim).norm()
    }

    /// Unit outward normal of a boundary facet.
    pub fn facet_normal(&self, f: &BoundaryFacet) -> Point {
        facet_area_normal(&self.facet_points(f), self.dim).normalize()
    }

    pub fn facet_centroid(&self, f: &BoundaryFacet) -> Point {
        let pts = self.facet_points(f);
        pts.iter().fold(Point::zeros(), |a, p| a + p) / pts.len() as f64
    }

    pub fn boundary_measure(&self, label: Option<BoundaryLabel>) -> f64 {
        self.boundary_facets
            .iter()
            .filter(|f| label.is_none_or(|l| f.label == l))
            .map(|f| self.facet_measure(f))
            .sum()
    }

    /// Sorted, deduplicated vertices carrying `label`.
    pub fn boundary_vertices(&self, label: BoundaryLabel) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_facets
            .iter()
            .filter(|f| f.label == label)
            .flat_map(|f| f.vertices.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn all_boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_facets
            .iter()
            .flat_map(|f| f.vertices.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// For every boundary facet, the cell that owns it.
    pub fn facet_cells(&self) -> Result<Vec<usize>> {
        let mut owner: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for (c, cell) in self.cells.iter().enumerate() {
            for skip in 0..cell.len() {
                let mut key: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                owner.entry(key).or_default().push(c);
            }
        }
        self.boundary_facets
            .iter()
            .map(|f| {
                let mut key = f.vertices.clone();
                key.sort_unstable();
                match owner.get(&key).map(Vec::as_slice) {
                    Some([c]) => Ok(*c),
                    Some(cs) => Err(Error::Mesh(format!(
                        "boundary facet {:?} shared by {} cells",
                        f.vertices,
                        cs.len()
                    ))),
                    None => Err(Error::Mesh(format!("boundary facet {:?} has no cell", f.vertices))),
                }
            })
            .collect()
    }

    /// Checks the structural invariants: positive cell orientation, every
    /// boundary facet owned by exactly one cell, and disjoint labeled parts.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Mesh(format!("unsupported dimension {}", self.dim)));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.len() != self.dim + 1 {
                return Err(Error::Mesh(format!("cell {c} has {} vertices", cell.len())));
            }
            if self.cell_measure(c) <= 0.0 {
                return Err(Error::Mesh(format!("cell {c} is not positively oriented")));
            }
        }
        self.facet_cells()?;
        let g0 = self.boundary_vertices(BoundaryLabel::Gamma0);
        let g1 = self.boundary_vertices(BoundaryLabel::Gamma1);
        if g0.iter().any(|v| g1.binary_search(v).is_ok()) {
            return Err(Error::Mesh("Γ0 and Γ1 share a vertex".into()));
        }
        Ok(())
    }

    fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cell in &self.cells {
            for a in 0..cell.len() {
                for b in a + 1..cell.len() {
                    h = h.max((self.vertices[cell[a]] - self.vertices[cell[b]]).norm());
                }
            }
        }
        h
    }

    /// Writes the native text format. Coordinates carry 17 significant
    /// digits so that reading back reproduces them bit for bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {}",
            self.dim,
            self.vertices.len(),
            self.cells.len(),
            self.boundary_facets.len()
        );
        for p in &self.vertices {
            let coords: Vec<String> = (0..self.dim).map(|k| format!("{:.16e}", p[k])).collect();
            let _ = writeln!(s, "{}", coords.join(" "));
        }
        for c in &self.cells {
            let idx: Vec<String> = c.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{}", idx.join(" "));
        }
        for f in &self.boundary_facets {
            let idx: Vec<String> = f.vertices.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{} {}", idx.join(" "), f.label.code());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("mesh text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("empty input"))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad header")))
            .collect::<Result<_>>()?;
        let [dim, nv, nc, nb] = header[..] else {
            return Err(bad("header needs 4 integers"));
        };
        if dim != 2 && dim != 3 {
            return Err(bad("dimension must be 2 or 3"));
        }
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let vals: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("missing vertex line"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(bad("vertex arity"));
            }
            let mut p = Point::zeros();
            for k in 0..dim {
                p[k] = vals[k];
            }
            vertices.push(p);
        }
        let parse_idx = |l: &str| -> Result<Vec<usize>> {
            l.split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad("bad index")))
                .collect()
        };
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let idx = parse_idx(lines.next().ok_or_else(|| bad("missing cell line"))?)?;
            if idx.len() != dim + 1 || idx.iter().any(|&i| i >= nv) {
                return Err(bad("cell arity or index"));
            }
            cells.push(idx);
        }
        let mut boundary_facets = Vec::with_capacity(nb);
        for _ in 0..nb {
            let mut idx = parse_idx(lines.next().ok_or_else(|| bad("missing facet line"))?)?;
            if idx.len() != dim + 1 {
                return Err(bad("facet arity"));
            }
            let label = BoundaryLabel::from_code(idx.pop().unwrap() as u8)?;
            if idx.iter().any(|&i| i >= nv) {
                return Err(bad("facet index"));
            }
            boundary_facets.push(BoundaryFacet { vertices: idx, label });
        }
        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            boundary_facets,
            h: 0.0,
        };
        mesh.h = mesh.max_edge_length();
        Ok(mesh)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Builds the conforming mesh of an annulus (`d = 2`) or spherical shell
/// (`d = 3`) centred at the origin. `h` is a target size; the returned mesh
/// reports its actual largest cell diameter.
pub fn build_mesh(kind: MeshKind, r_in: f64, r_out: f64, h: f64) -> Result<Mesh> {
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::Parameter(format!(
            "radii must satisfy 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}"
        )));
    }
    if !(h > 0.0 && h <= 0.5 * (r_out - r_in)) {
        return Err(Error::Parameter(format!(
            "mesh size h={h} must lie in (0, (r_out - r_in)/2]"
        )));
    }
    let layers = ((r_out - r_in) / h).ceil() as usize;
    let radii: Vec<f64> = (0..=layers)
        .map(|k| r_in + (r_out - r_in) * k as f64 / layers as f64)
        .collect();
    let (vertices, cells) = match kind {
        MeshKind::Annulus => annulus_cells(&radii, h),
        MeshKind::Shell => shell_cells(&radii, h),
    };
    finish(kind_dim(kind), vertices, cells, 0.5 * (r_in + r_out))
}

/// Disk of radius `r`: a mesh with a single boundary loop, labelled Γ0.
pub fn build_disk(r: f64, h: f64) -> Result<Mesh> {
    if !(r > 0.0 && h > 0.0 && h < r) {
        return Err(Error::Parameter(format!("disk needs 0 < h < r, got r={r}, h={h}")));
    }
    let layers = (r / h).ceil() as usize;
    let mut vertices = vec![Point::zeros()];
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for k in 1..=layers {
        let rk = r * k as f64 / layers as f64;
        let n = ring_count(rk, h);
        let ids: Vec<usize> = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vertices.push(Point::new(rk * th.cos(), rk * th.sin(), 0.0));
                vertices.len() - 1
            })
            .collect();
        rings.push(ids);
    }
    let mut cells = Vec::new();
    let first = &rings[0];
    for i in 0..first.len() {
        cells.push(vec![0, first[i], first[(i + 1) % first.len()]]);
    }
    for k in 0..rings.len() - 1 {
        stitch_rings(&rings[k], &rings[k + 1], &mut cells);
    }
    // every boundary facet ends up on the outer circle, treated as Γ0
    finish(2, vertices, cells, -1.0)
}

fn kind_dim(kind: MeshKind) -> usize {
    match kind {
        MeshKind::Annulus => 2,
        MeshKind::Shell => 3,
    }
}

fn ring_count(r: f64, h: f64) -> usize {
    ((2.0 * std::f64::consts::PI * r / h).ceil() as usize).max(6)
}

fn annulus_cells(radii: &[f64], h: f64) -> (Vec<Point>, Vec<Vec<usize>>) {
    let mut vertices = Vec::new();
    let mut rings = Vec::new();
    for &r in radii {
        let n = ring_count(r, h);
        let ids: Vec<usize> = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vertices.push(Point::new(r * th.cos(), r * th.sin(), 0.0));
                vertices.len() - 1
            })
            .collect();
        rings.push(ids);
    }
    let mut cells = Vec::new();
    for k in 0..rings.len() - 1 {
        stitch_rings(&rings[k], &rings[k + 1], &mut cells);
    }
    (vertices, cells)
}

/// Triangulates the band between two concentric rings whose first points
/// sit at angle zero, advancing along whichever ring has the nearer next
/// point.
fn stitch_rings(inner: &[usize], outer: &[usize], cells: &mut Vec<Vec<usize>>) {
    let (m, n) = (inner.len(), outer.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < m || j < n {
        let next_inner = (i + 1) as f64 / m as f64;
        let next_outer = (j + 1) as f64 / n as f64;
        if i < m && (j == n || next_inner <= next_outer) {
            cells.push(vec![inner[i], inner[(i + 1) % m], outer[j % n]]);
            i += 1;
        } else {
            cells.push(vec![inner[i % m], outer[(j + 1) % n], outer[j]]);
            j += 1;
        }
    }
}

/// Geodesic sphere: icosahedron faces subdivided `freq` times per edge and
/// projected onto the unit sphere.
fn geodesic_sphere(freq: usize) -> (Vec<Point>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let base = [
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
    let faces = [
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
    let corners: Vec<Point> = base.iter().map(|p| Point::new(p[0], p[1], p[2])).collect();
    let mut points: Vec<Point> = Vec::new();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut tris = Vec::new();
    let mut id_of = |p: Point, points: &mut Vec<Point>| -> usize {
        let u = p.normalize();
        let key = [
            (u.x * 1e9).round() as i64,
            (u.y * 1e9).round() as i64,
            (u.z * 1e9).round() as i64,
        ];
        *index.entry(key).or_insert_with(|| {
            points.push(u);
            points.len() - 1
        })
    };
    for f in faces {
        let (a, b, c) = (corners[f[0]], corners[f[1]], corners[f[2]]);
        let mut grid = vec![vec![0usize; freq + 1]; freq + 1];
        for i in 0..=freq {
            for j in 0..=freq - i {
                let k = freq - i - j;
                let p = (a * k as f64 + b * i as f64 + c * j as f64) / freq as f64;
                grid[i][j] = id_of(p, &mut points);
            }
        }
        for i in 0..freq {
            for j in 0..freq - i {
                tris.push([grid[i][j], grid[i + 1][j], grid[i][j + 1]]);
                if j + i + 1 < freq {
                    tris.push([grid[i + 1][j], grid[i + 1][j + 1], grid[i][j + 1]]);
                }
            }
        }
    }
    (points, tris)
}

fn shell_cells(radii: &[f64], h: f64) -> (Vec<Point>, Vec<Vec<usize>>) {
    // icosahedron edge on the unit sphere ≈ 1.0515
    let r_out = *radii.last().unwrap();
    let freq = ((1.0515 * r_out / h).ceil() as usize).max(1);
    let (sphere, tris) = geodesic_sphere(freq);
    let ns = sphere.len();
    let mut vertices = Vec::with_capacity(ns * radii.len());
    for &r in radii {
        vertices.extend(sphere.iter().map(|p| p * r));
    }
    let mut cells = Vec::new();
    for k in 0..radii.len() - 1 {
        for tri in &tris {
            let mut s = *tri;
            s.sort_unstable();
            let b: Vec<usize> = s.iter().map(|&i| k * ns + i).collect();
            let t: Vec<usize> = s.iter().map(|&i| (k + 1) * ns + i).collect();
            // diagonals always join the lower-indexed bottom vertex to the
            // higher-indexed top vertex, so neighbouring prisms agree
            cells.push(vec![b[0], b[1], b[2], t[2]]);
            cells.push(vec![b[0], b[1], t[1], t[2]]);
            cells.push(vec![b[0], t[0], t[1], t[2]]);
        }
    }
    (vertices, cells)
}

/// Orients cells, extracts boundary facets and labels them: facets whose
/// centroid lies inside `r_split` become Γ1, the rest Γ0.
fn finish(dim: usize, vertices: Vec<Point>, mut cells: Vec<Vec<usize>>, r_split: f64) -> Result<Mesh> {
    for cell in cells.iter_mut() {
        let pts: Vec<Point> = cell.iter().map(|&i| vertices[i]).collect();
        let (_, vol) = simplex_gradients(&pts, dim);
        if vol < 0.0 {
            cell.swap(0, 1);
        } else if vol == 0.0 {
            return Err(Error::Mesh("degenerate cell generated".into()));
        }
    }
    let mut count: HashMap<Vec<usize>, (usize, usize, usize)> = HashMap::new();
    for (c, cell) in cells.iter().enumerate() {
        for skip in 0..cell.len() {
            let mut key: Vec<usize> = cell
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != skip)
                .map(|(_, &v)| v)
                .collect();
            key.sort_unstable();
            let e = count.entry(key).or_insert((0, c, cell[skip]));
            e.0 += 1;
        }
    }
    let mut facets: Vec<(Vec<usize>, usize)> = count
        .into_iter()
        .filter(|(_, (n, _, _))| *n == 1)
        .map(|(k, (_, _, opp))| (k, opp))
        .collect();
    facets.sort();
    let mut boundary_facets = Vec::with_capacity(facets.len());
    for (mut verts, opposite) in facets {
        let pts: Vec<Point> = verts.iter().map(|&i| vertices[i]).collect();
        let n = facet_area_normal(&pts, dim);
        if n.dot(&(vertices[opposite] - pts[0])) > 0.0 {
            verts.swap(0, 1);
        }
        let centroid = verts.iter().fold(Point::zeros(), |a, &i| a + vertices[i]) / verts.len() as f64;
        let label = if centroid.norm() < r_split {
            BoundaryLabel::Gamma1
        } else {
            BoundaryLabel::Gamma0
        };
        boundary_facets.push(BoundaryFacet { vertices: verts, label });
    }
    let mut mesh = Mesh {
        dim,
        vertices,
        cells,
        boundary_facets,
        h: 0.0,
    };
    mesh.h = mesh.max_edge_length();
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn annulus_boundary_length_and_area() {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.5).unwrap();
        let len = m.boundary_measure(None);
        assert!((len - 6.0 * PI).abs() / (6.0 * PI) < 0.05, "length {len}");
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.25).unwrap();
        let area = m.total_measure();
        assert!((area - 3.0 * PI).abs() / (3.0 * PI) < 0.02, "area {area}");
    }

    #[test]
    fn annulus_has_two_loops() {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.5).unwrap();
        let g0 = m.boundary_vertices(BoundaryLabel::Gamma0);
        let g1 = m.boundary_vertices(BoundaryLabel::Gamma1);
        assert!(!g0.is_empty() && !g1.is_empty());
        for &v in &g0 {
            assert!((m.vertices[v].norm() - 2.0).abs() < 1e-12);
        }
        for &v in &g1 {
            assert!((m.vertices[v].norm() - 1.0).abs() < 1e-12);
        }
        // closed loops: as many facets as vertices
        let n0 = m.boundary_facets.iter().filter(|f| f.label == BoundaryLabel::Gamma0).count();
        assert_eq!(n0, g0.len());
    }

    #[test]
    fn outward_normals_are_radial() {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.25).unwrap();
        for f in &m.boundary_facets {
            let n = m.facet_normal(f);
            let c = m.facet_centroid(f);
            let radial = n.dot(&c.normalize());
            match f.label {
                BoundaryLabel::Gamma0 => assert!(radial > 0.99),
                BoundaryLabel::Gamma1 => assert!(radial < -0.99),
            }
        }
    }

    #[test]
    fn invalid_radii_rejected() {
        assert!(matches!(
            build_mesh(MeshKind::Annulus, 2.0, 1.0, 0.1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.51),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn shell_is_valid_and_measures_volume() {
        let m = build_mesh(MeshKind::Shell, 1.0, 2.0, 0.45).unwrap();
        assert_eq!(m.dim, 3);
        let vol = m.total_measure();
        let exact = 4.0 / 3.0 * PI * 7.0;
        assert!((vol - exact).abs() / exact < 0.06, "vol {vol} vs {exact}");
        let a1 = m.boundary_measure(Some(BoundaryLabel::Gamma1));
        assert!((a1 - 4.0 * PI).abs() / (4.0 * PI) < 0.06, "inner area {a1}");
    }

    #[test]
    fn disk_is_single_loop() {
        let m = build_disk(1.0, 0.25).unwrap();
        assert!(m.boundary_vertices(BoundaryLabel::Gamma1).is_empty());
        assert!((m.total_measure() - PI).abs() < 0.05);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let m = build_mesh(MeshKind::Annulus, 1.0, 2.0, 0.5).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.vertices.len(), m.vertices.len());
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.boundary_facets, m.boundary_facets);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn from_text_rejects_garbage() {
        assert!(Mesh::from_text("").is_err());
        assert!(Mesh::from_text("2 1 0 0\n0.0\n").is_err());
        assert!(Mesh::from_text("4 0 0 0\n").is_err());
    }
}
