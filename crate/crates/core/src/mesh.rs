//! Oriented triangulations of polygonal domains and uniform red refinement.
//!
//! Edges carry a global orientation from the lower to the higher vertex
//! index. The unit normal of an edge is its tangent rotated clockwise, so a
//! counterclockwise triangle whose induced traversal of an edge agrees with
//! the global orientation sees the global normal as its outward normal. That
//! agreement is the incidence sign stored per (triangle, local edge).

use std::collections::HashMap;
use std::io::{self, Write};

use thiserror::Error;

pub type Point = [f64; 2];

/// Signed area below this (relative to the squared longest edge) is treated
/// as degenerate.
const DEGENERACY_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {triangle} is degenerate or clockwise (signed area {area:e})")]
    Degenerate { triangle: usize, area: f64 },
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("edge ({0}, {1}) has the same orientation in both adjacent triangles")]
    InconsistentOrientation(usize, usize),
}

/// Local edge `i` of a triangle is the edge opposite its local vertex `i`,
/// traversed counterclockwise.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    incidence: Vec<[f64; 3]>,
    edge_triangles: Vec<[Option<usize>; 2]>,
    boundary_edges: Vec<usize>,
    level: usize,
    h: f64,
}

impl SimplicialMesh {
    /// Builds a mesh from counterclockwise triangles. Edges are numbered in
    /// order of first appearance while sweeping the triangles.
    pub fn from_triangles(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        level: usize,
    ) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        triangle: t,
                        vertex: v,
                        count: vertices.len(),
                    });
                }
            }
            let p = tri.map(|v| vertices[v]);
            let area = signed_area(p[0], p[1], p[2]);
            let scale = (0..3)
                .map(|i| dist2(p[i], p[(i + 1) % 3]))
                .fold(0.0, f64::max);
            if !(area > DEGENERACY_TOL * scale) {
                return Err(MeshError::Degenerate { triangle: t, area });
            }
        }

        let mut lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_triangles: Vec<[Option<usize>; 2]> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        let mut incidence = Vec::with_capacity(triangles.len());

        for (t, tri) in triangles.iter().enumerate() {
            let mut local_edges = [0usize; 3];
            let mut signs = [0.0; 3];
            for (i, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
                let (from, to) = (tri[a], tri[b]);
                let key = [from.min(to), from.max(to)];
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_triangles.push([None, None]);
                    edges.len() - 1
                });
                let slot = &mut edge_triangles[e];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(MeshError::NonManifold(key[0], key[1]));
                }
                local_edges[i] = e;
                signs[i] = if from < to { 1.0 } else { -1.0 };
            }
            triangle_edges.push(local_edges);
            incidence.push(signs);
        }

        let mut boundary_edges = Vec::new();
        for (e, slot) in edge_triangles.iter().enumerate() {
            match *slot {
                [Some(_), None] => boundary_edges.push(e),
                [Some(t0), Some(t1)] => {
                    let s0 = sign_of(&triangle_edges[t0], &incidence[t0], e);
                    let s1 = sign_of(&triangle_edges[t1], &incidence[t1], e);
                    if s0 == s1 {
                        return Err(MeshError::InconsistentOrientation(edges[e][0], edges[e][1]));
                    }
                }
                _ => unreachable!("every edge is created with one triangle"),
            }
        }

        let h = edges
            .iter()
            .map(|&[a, b]| dist2(vertices[a], vertices[b]).sqrt())
            .fold(0.0, f64::max);

        Ok(Self {
            vertices,
            triangles,
            edges,
            triangle_edges,
            incidence,
            edge_triangles,
            boundary_edges,
            level,
            h,
        })
    }

    /// The unit square split along the diagonal (0,0)-(1,1).
    pub fn unit_square() -> Self {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let triangles = vec![[0, 1, 2], [0, 2, 3]];
        Self::from_triangles(vertices, triangles, 0).expect("unit square is a valid mesh")
    }

    /// `unit_square()` refined `level` times.
    pub fn unit_square_refined(level: usize) -> Self {
        (0..level).fold(Self::unit_square(), |m, _| m.refine_uniform())
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints. Midpoint of edge `e` gets vertex index
    /// `V + e`.
    pub fn refine_uniform(&self) -> Self {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.edges.iter().map(|&[a, b]| midpoint(self.vertices[a], self.vertices[b])));

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (tri, edges) in self.triangles.iter().zip(&self.triangle_edges) {
            let [a, b, c] = *tri;
            // midpoints opposite a, b, c
            let [ma, mb, mc] = edges.map(|e| nv + e);
            triangles.push([a, mc, mb]);
            triangles.push([mc, b, ma]);
            triangles.push([mb, ma, c]);
            triangles.push([ma, mb, mc]);
        }
        Self::from_triangles(vertices, triangles, self.level + 1)
            .expect("refinement of a valid mesh is valid")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge indices of the three local edges of `t`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    /// +1 where the triangle's counterclockwise traversal of a local edge
    /// matches the global edge orientation, -1 otherwise.
    pub fn incidence(&self, t: usize) -> [f64; 3] {
        self.incidence[t]
    }

    pub fn edge_triangles(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_triangles[e]
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary_edges
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_triangles[e][1].is_none()
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

    pub fn level(&self) -> usize {
        self.level
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_geometry(&self, t: usize) -> TriangleGeometry {
        let [p0, p1, p2] = self.triangle_vertices(t);
        TriangleGeometry::from_vertices(p0, p1, p2).expect("mesh triangles are non-degenerate")
    }

    /// Unit normal of edge `e` under its global orientation.
    pub fn edge_normal(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = dist2(pa, pb).sqrt();
        [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist2(self.vertices[a], self.vertices[b]).sqrt()
    }

    /// Plain-text dump: a header line with the counts, then one line per
    /// vertex (`v index x y`), edge (`e index a b boundary`) and triangle
    /// (`t index a b c e0 e1 e2 s0 s1 s2`).
    pub fn write_triangle_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# level {} h {} vertices {} edges {} triangles {}",
            self.level,
            self.h,
            self.vertices.len(),
            self.edges.len(),
            self.triangles.len()
        )?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "v {i} {} {}", p[0], p[1])?;
        }
        for (i, e) in self.edges.iter().enumerate() {
            writeln!(w, "e {i} {} {} {}", e[0], e[1], u8::from(self.is_boundary_edge(i)))?;
        }
        for (i, (t, (es, ss))) in self
            .triangles
            .iter()
            .zip(self.triangle_edges.iter().zip(&self.incidence))
            .enumerate()
        {
            writeln!(
                w,
                "t {i} {} {} {} {} {} {} {} {} {}",
                t[0], t[1], t[2], es[0], es[1], es[2], ss[0], ss[1], ss[2]
            )?;
        }
        Ok(())
    }
}

fn sign_of(edges: &[usize; 3], signs: &[f64; 3], e: usize) -> f64 {
    let i = edges.iter().position(|&x| x == e).expect("edge belongs to triangle");
    signs[i]
}

/// Affine data of one triangle, mapped from the reference triangle
/// {(0,0), (1,0), (0,1)} by `x = p0 + J x_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub origin: Point,
    /// Columns are `p1 - p0` and `p2 - p0`; stored row-major.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub area: f64,
    /// Length of local edge `i` (opposite vertex `i`).
    pub edge_lengths: [f64; 3],
    /// Outward unit normal of local edge `i`.
    pub outward_normals: [Point; 3],
}

impl TriangleGeometry {
    pub fn from_vertices(p0: Point, p1: Point, p2: Point) -> Result<Self, MeshError> {
        let jacobian = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        let p = [p0, p1, p2];
        let scale = (0..3).map(|i| dist2(p[i], p[(i + 1) % 3])).fold(0.0, f64::max);
        if !(det > 2.0 * DEGENERACY_TOL * scale) {
            return Err(MeshError::Degenerate { triangle: 0, area: det / 2.0 });
        }
        let mut edge_lengths = [0.0; 3];
        let mut outward_normals = [[0.0; 2]; 3];
        for (i, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
            let (pa, pb) = (p[a], p[b]);
            let len = dist2(pa, pb).sqrt();
            edge_lengths[i] = len;
            outward_normals[i] = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        }
        Ok(Self {
            origin: p0,
            jacobian,
            det,
            area: det / 2.0,
            edge_lengths,
            outward_normals,
        })
    }

    pub fn map(&self, xi: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    /// Contravariant Piola push-forward `J v / det J`.
    pub fn piola(&self, v: Point) -> Point {
        let j = &self.jacobian;
        [
            (j[0][0] * v[0] + j[0][1] * v[1]) / self.det,
            (j[1][0] * v[0] + j[1][1] * v[1]) / self.det,
        ]
    }

    /// Inverse Piola pull-back `det J · J^{-1} w`.
    pub fn piola_inverse(&self, w: Point) -> Point {
        let j = &self.jacobian;
        [j[1][1] * w[0] - j[0][1] * w[1], -j[1][0] * w[0] + j[0][0] * w[1]]
    }
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}
