//! Closed polygonal curves and their single-curve discrete geometry.
//!
//! Indexing is zero-based and periodic. Edge `i` runs from vertex `i - 1` to
//! vertex `i` (edge 0 closes the polygon from the last vertex), so vertex `i`
//! sits between edges `i` and `i + 1`. Edge quantities (`r`, `t`, `n`, `kappa`)
//! and vertex quantities (`phi`, `T`, `N`) follow this convention throughout
//! the crate.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::{FlowError, Result};

/// A point (or vector) of the plane.
pub type Point = Vector2<f64>;

/// Rotation by a quarter turn counterclockwise.
#[inline]
pub fn rot90(v: &Point) -> Point {
    Point::new(-v.y, v.x)
}

/// z-component of the planar cross product.
#[inline]
pub fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed angle turning `a` into `b`, in `(-pi, pi]`.
#[inline]
pub fn signed_angle(a: &Point, b: &Point) -> f64 {
    cross(a, b).atan2(a.dot(b))
}

#[inline]
pub(crate) fn prev(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

#[inline]
pub(crate) fn next(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

/// Closed, counterclockwise polygon with `N >= 3` vertices and no zero-length edge.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalCurve {
    vertices: Vec<Point>,
}

impl PolygonalCurve {
    /// Validates vertex count, finiteness, edge lengths and orientation.
    ///
    /// Clockwise input is rejected rather than reversed.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let curve = Self::with_any_orientation(vertices)?;
        let area = curve.signed_area();
        if area <= 0.0 {
            return Err(FlowError::Clockwise(area));
        }
        Ok(curve)
    }

    /// Same checks as [`PolygonalCurve::new`] except orientation.
    pub fn with_any_orientation(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(FlowError::TooFewVertices(n));
        }
        if let Some(i) = vertices.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(FlowError::NonFinite(i));
        }
        for i in 0..n {
            if vertices[i] == vertices[prev(i, n)] {
                return Err(FlowError::DegenerateEdge(i));
            }
        }
        Ok(Self { vertices })
    }

    /// Rebuilds a curve from interleaved `[x0, y0, x1, y1, ...]` coordinates.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(FlowError::InvalidParameter(format!(
                "odd coordinate count {}",
                coords.len()
            )));
        }
        Self::new(coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// Regular polygon inscribed in the circle of radius `radius` about `center`,
    /// first vertex at angle `phase`.
    pub fn regular(n: usize, radius: f64, center: Point, phase: f64) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|k| {
                    let a = phase + 2.0 * PI * k as f64 / n as f64;
                    center + radius * Point::new(a.cos(), a.sin())
                })
                .collect(),
        )
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i % self.len()]
    }

    pub fn into_vertices(self) -> Vec<Point> {
        self.vertices
    }

    /// Edge vector `X_i - X_{i-1}`.
    #[inline]
    pub fn edge(&self, i: usize) -> Point {
        let n = self.len();
        self.vertices[i] - self.vertices[prev(i, n)]
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.edge(i).norm()).collect()
    }

    /// Midpoint of edge `i`.
    pub fn edge_midpoint(&self, i: usize) -> Point {
        let n = self.len();
        (self.vertices[i] + self.vertices[prev(i, n)]) * 0.5
    }

    /// Total length, the sum of the edge lengths.
    pub fn length(&self) -> f64 {
        (0..self.len()).map(|i| self.edge(i).norm()).sum()
    }

    /// Shoelace area, positive for counterclockwise curves.
    pub fn signed_area(&self) -> f64 {
        let n = self.len();
        0.5 * (0..n)
            .map(|i| cross(&self.vertices[prev(i, n)], &self.vertices[i]))
            .sum::<f64>()
    }

    /// Largest deviation `max_i |r_i - L/N|` of the edge lengths from uniform.
    pub fn uniformity(&self) -> f64 {
        let r = self.edge_lengths();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|ri| (ri - mean).abs()).fold(0.0, f64::max)
    }

    pub fn translated(&self, shift: Point) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| p + shift).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| p * factor).collect(),
        }
    }

    /// Even-odd point-in-polygon test. Points on the boundary count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        let n = self.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[prev(i, n)];
            let b = self.vertices[i];
            if point_on_segment(p, &a, &b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// O(N^2) check that no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.len();
        for i in 0..n {
            let (a0, a1) = (self.vertices[prev(i, n)], self.vertices[i]);
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (b0, b1) = (self.vertices[prev(j, n)], self.vertices[j]);
                if segments_intersect(&a0, &a1, &b0, &b1) {
                    return false;
                }
            }
        }
        true
    }
}

/// Shoelace area of the polygon.
pub fn enclosed_area(curve: &PolygonalCurve) -> f64 {
    curve.signed_area()
}

/// Sum of the edge lengths.
pub fn length(curve: &PolygonalCurve) -> f64 {
    curve.length()
}

fn point_on_segment(p: &Point, a: &Point, b: &Point) -> bool {
    let ab = b - a;
    let ap = p - a;
    cross(&ab, &ap).abs() <= 1e-14 * ab.norm_squared().max(1.0)
        && ap.dot(&ab) >= 0.0
        && ap.dot(&ab) <= ab.norm_squared()
}

fn segments_intersect(a0: &Point, a1: &Point, b0: &Point, b1: &Point) -> bool {
    let d1 = cross(&(a1 - a0), &(b0 - a0));
    let d2 = cross(&(a1 - a0), &(b1 - a0));
    let d3 = cross(&(b1 - b0), &(a0 - b0));
    let d4 = cross(&(b1 - b0), &(a1 - b0));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && point_on_segment(b0, a0, a1))
        || (d2 == 0.0 && point_on_segment(b1, a0, a1))
        || (d3 == 0.0 && point_on_segment(a0, b0, b1))
        || (d4 == 0.0 && point_on_segment(a1, b0, b1))
}

/// Edge lengths, unit tangents, outward normals, turning angles and curvatures.
#[derive(Debug, Clone)]
pub struct EdgeFrame {
    pub r: Vec<f64>,
    pub t: Vec<Point>,
    /// Outward normal `n_i = -J t_i`.
    pub n: Vec<Point>,
    /// Turning angle at vertex `i`, from `t_i` to `t_{i+1}`, in `(-pi, pi)`.
    pub phi: Vec<f64>,
    /// `kappa_i = (tan(phi_i/2) + tan(phi_{i-1}/2)) / r_i`.
    pub kappa: Vec<f64>,
}

impl EdgeFrame {
    pub fn new(curve: &PolygonalCurve) -> Result<Self> {
        let n = curve.len();
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for i in 0..n {
            let e = curve.edge(i);
            let len = e.norm();
            if len <= 0.0 || !len.is_finite() {
                return Err(FlowError::DegenerateEdge(i));
            }
            r.push(len);
            t.push(e / len);
        }
        let normals = t.iter().map(|ti| -rot90(ti)).collect();
        let mut phi = Vec::with_capacity(n);
        for i in 0..n {
            let a = signed_angle(&t[i], &t[next(i, n)]);
            if a.abs() >= PI {
                return Err(FlowError::AngleOverflow(i));
            }
            phi.push(a);
        }
        let half_tan: Vec<f64> = phi.iter().map(|p| (0.5 * p).tan()).collect();
        let kappa = (0..n)
            .map(|i| (half_tan[i] + half_tan[prev(i, n)]) / r[i])
            .collect();
        Ok(Self {
            r,
            t,
            n: normals,
            phi,
            kappa,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.r.iter().sum()
    }

    /// Length-weighted mean `<f> = sum f_i r_i / L`.
    pub fn average(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.r).map(|(fi, ri)| fi * ri).sum::<f64>() / self.total_length()
    }
}

/// Unit tangent and outward normal at the vertices.
#[derive(Debug, Clone)]
pub struct VertexFrame {
    pub phi: Vec<f64>,
    /// `T_i`: `t_i` rotated by `phi_i / 2`.
    pub tangent: Vec<Point>,
    /// `N_i = -J T_i`.
    pub normal: Vec<Point>,
}

impl VertexFrame {
    pub fn new(edges: &EdgeFrame) -> Result<Self> {
        let n = edges.len();
        let mut tangent = Vec::with_capacity(n);
        for i in 0..n {
            let half = 0.5 * edges.phi[i];
            if half.cos() <= 0.0 {
                return Err(FlowError::Cusp(i));
            }
            let (s, c) = half.sin_cos();
            let ti = edges.t[i];
            tangent.push(Point::new(c * ti.x - s * ti.y, s * ti.x + c * ti.y));
        }
        let normal = tangent.iter().map(|tv| -rot90(tv)).collect();
        Ok(Self {
            phi: edges.phi.clone(),
            tangent,
            normal,
        })
    }

    /// The average operator `(f_i + f_{i+1}) / (2 cos(phi_i / 2))` taking edge
    /// values to vertex values.
    pub fn average(&self, f: &[f64]) -> Vec<f64> {
        let n = self.phi.len();
        (0..n)
            .map(|i| (f[i] + f[next(i, n)]) / (2.0 * (0.5 * self.phi[i]).cos()))
            .collect()
    }
}

/// Edge and vertex frames of a single curve.
pub fn frames(curve: &PolygonalCurve) -> Result<(EdgeFrame, VertexFrame)> {
    let edges = EdgeFrame::new(curve)?;
    let vertices = VertexFrame::new(&edges)?;
    Ok((edges, vertices))
}
