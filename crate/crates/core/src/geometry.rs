//! Simplices, facet normals, barycentric coordinates and the vertex cones
//! `C(x)` used by the invariance conditions.
//!
//! Facet `j` is the facet opposite vertex `j`; facet 0 is always the exit
//! facet. Normals are unit length and point out of the simplex.

use nalgebra::{DMatrix, DVector};

use crate::error::{ReachError, Result};

/// Relative rank tolerance for the affine-independence test.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Default tolerance for membership and cone tests on unit normals.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Simplex {
    vertices: Vec<DVector<f64>>,
    normals: Vec<DVector<f64>>,
    /// Rows are the gradients of the barycentric coordinates.
    gradients: DMatrix<f64>,
}

impl Simplex {
    /// Builds a simplex from `n + 1` points of `ℝⁿ`. Vertex order is kept;
    /// facet 0 (opposite the first vertex) is the exit facet.
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let count = vertices.len();
        if count < 2 {
            return Err(ReachError::DegenerateSimplex(format!(
                "need at least 2 vertices, got {count}"
            )));
        }
        let n = count - 1;
        if let Some(bad) = vertices.iter().find(|v| v.len() != n) {
            return Err(ReachError::DimensionMismatch(format!(
                "{count} vertices require points of dimension {n}, got {}",
                bad.len()
            )));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(ReachError::DegenerateSimplex(
                "non-finite vertex coordinate".into(),
            ));
        }

        let edges = edge_matrix(&vertices);
        let sv = crate::polylin::singular_values(&edges);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smax <= 0.0 || smin <= DEGENERACY_TOL * smax {
            return Err(ReachError::DegenerateSimplex(format!(
                "edge matrix singular values {smin:.3e} / {smax:.3e}"
            )));
        }
        let inv = edges.try_inverse().ok_or_else(|| {
            ReachError::DegenerateSimplex("edge matrix is not invertible".into())
        })?;

        // λ_i = row_{i-1}(E⁻¹)·(x − v₀) for i ≥ 1 and λ₀ = 1 − Σ λ_i.
        let mut gradients = DMatrix::zeros(n + 1, n);
        for i in 1..=n {
            gradients.set_row(i, &inv.row(i - 1));
        }
        let sum = inv.row_sum();
        gradients.set_row(0, &(-sum));

        let normals = (0..=n)
            .map(|j| {
                let g: DVector<f64> = gradients.row(j).transpose();
                -&g / g.norm()
            })
            .collect();

        Ok(Simplex {
            vertices,
            normals,
            gradients,
        })
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &DVector<f64> {
        &self.vertices[i]
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.normals
    }

    /// Outward unit normal of facet `j`.
    pub fn normal(&self, j: usize) -> &DVector<f64> {
        &self.normals[j]
    }

    pub fn exit_normal(&self) -> &DVector<f64> {
        &self.normals[0]
    }

    pub fn exit_index(&self) -> usize {
        0
    }

    pub fn barycentric(&self, x: &DVector<f64>) -> Vec<f64> {
        let rel = x - &self.vertices[0];
        let mut lambda: Vec<f64> = (&self.gradients * rel).iter().copied().collect();
        lambda[0] += 1.0;
        lambda
    }

    pub fn min_barycentric(&self, x: &DVector<f64>) -> f64 {
        self.barycentric(x)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.min_barycentric(x) >= -tol
    }

    pub fn point_from_barycentric(&self, lambda: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for (l, v) in lambda.iter().zip(&self.vertices) {
            x.axpy(*l, v, 1.0);
        }
        x
    }

    pub fn centroid(&self) -> DVector<f64> {
        let w = 1.0 / self.vertices.len() as f64;
        self.point_from_barycentric(&vec![w; self.vertices.len()])
    }

    pub fn volume(&self) -> f64 {
        let det = edge_matrix(&self.vertices).determinant().abs();
        det / factorial(self.dim())
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// The cone `C(x)`: constraints `h_j·y ≤ 0` for every non-exit facet
    /// containing `x`.
    pub fn cone_at(&self, x: &DVector<f64>, tol: f64) -> Result<Cone> {
        let lambda = self.barycentric(x);
        let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(ReachError::PointOutsideSimplex {
                min_coordinate: min,
            });
        }
        let active: Vec<usize> = (1..=self.dim())
            .filter(|&j| lambda[j].abs() <= tol)
            .collect();
        let anchor = (0..=self.dim()).find(|&i| (lambda[i] - 1.0).abs() <= tol);
        Ok(self.cone_from_active(anchor, active))
    }

    /// `C(v_i)`: every facet in `{1..n}` except facet `i` contains `v_i`.
    pub fn vertex_cone(&self, i: usize) -> Cone {
        let active = (1..=self.dim()).filter(|&j| j != i).collect();
        self.cone_from_active(Some(i), active)
    }

    /// `cone(S) = C(v0)`.
    pub fn tangent_cone(&self) -> Cone {
        self.vertex_cone(0)
    }

    fn cone_from_active(&self, anchor: Option<usize>, active: Vec<usize>) -> Cone {
        let normals = active.iter().map(|&j| self.normals[j].clone()).collect();
        Cone {
            anchor,
            active,
            normals,
        }
    }

    pub fn face(&self, indices: &[usize]) -> Result<Face> {
        Face::new(indices, self.vertices.len())
    }

    /// Facet indices `j ≥ 1` whose facet contains vertex `i`.
    pub fn facets_containing_vertex(&self, i: usize) -> impl Iterator<Item = usize> {
        (1..=self.dim()).filter(move |&j| j != i)
    }
}

fn edge_matrix(vertices: &[DVector<f64>]) -> DMatrix<f64> {
    let n = vertices.len() - 1;
    DMatrix::from_fn(n, n, |r, c| vertices[c + 1][r] - vertices[0][r])
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A polyhedral cone `{y : h_j·y ≤ 0 for the active facets}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub anchor: Option<usize>,
    pub active: Vec<usize>,
    pub normals: Vec<DVector<f64>>,
}

impl Cone {
    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.normals.iter().all(|h| h.dot(y) <= tol)
    }

    /// Largest constraint value `max_j h_j·y` (`-∞` for an unconstrained cone).
    pub fn max_violation(&self, y: &DVector<f64>) -> f64 {
        self.normals
            .iter()
            .map(|h| h.dot(y))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn in_cone(cone: &Cone, y: &DVector<f64>, tol: f64) -> bool {
    cone.contains(y, tol)
}

/// A face of a simplex, identified by a sorted vertex subset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Face {
    vertex_indices: Vec<usize>,
}

impl Face {
    pub fn new(indices: &[usize], vertex_count: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(ReachError::EmptyIndexSet);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= vertex_count) {
            return Err(ReachError::VertexOutOfRange {
                index: bad,
                count: vertex_count,
            });
        }
        let mut vertex_indices = indices.to_vec();
        vertex_indices.sort_unstable();
        vertex_indices.dedup();
        Ok(Face { vertex_indices })
    }

    pub fn vertex_indices(&self) -> &[usize] {
        &self.vertex_indices
    }

    /// Affine dimension κ.
    pub fn dim(&self) -> usize {
        self.vertex_indices.len() - 1
    }

    pub fn contains_vertex(&self, i: usize) -> bool {
        self.vertex_indices.binary_search(&i).is_ok()
    }
}
