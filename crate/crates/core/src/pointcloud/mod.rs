//! Integer-grid point clouds, PLY I/O and synthetic test shapes.

mod ply;
mod shapes;

pub use ply::{read_ply, read_ply_with, write_ply, PlyReadOptions};
pub use shapes::{gen_shape, ShapeKind, Surface};

use std::collections::HashSet;

use crate::{Error, Result};

/// Voxel coordinate `(i, j, k)` on a `2^b` grid.
pub type Point = [u32; 3];

pub const DEFAULT_PRECISION: u32 = 9;
/// Coordinates must stay exactly representable in a PLY `float`.
pub const MAX_PRECISION: u32 = 24;

const NORMAL_TOLERANCE: f64 = 1e-6;

/// Deduplicated voxelized point cloud with bit precision `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    precision_b: u32,
    normals: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    /// Builds a cloud, dropping repeated points (first occurrence wins).
    pub fn new(points: Vec<Point>, precision_b: u32) -> Result<Self> {
        Self::build(points, precision_b, None)
    }

    pub fn with_normals(points: Vec<Point>, normals: Vec<[f64; 3]>, precision_b: u32) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        Self::build(points, precision_b, Some(normals))
    }

    pub fn empty(precision_b: u32) -> Self {
        PointCloud {
            points: Vec::new(),
            precision_b,
            normals: None,
        }
    }

    fn build(points: Vec<Point>, precision_b: u32, normals: Option<Vec<[f64; 3]>>) -> Result<Self> {
        if precision_b == 0 || precision_b > MAX_PRECISION {
            return Err(Error::Config(format!(
                "precision {precision_b} outside 1..={MAX_PRECISION}"
            )));
        }
        let max = (1u32 << precision_b) - 1;
        if let Some(p) = points.iter().find(|p| p.iter().any(|&c| c > max)) {
            return Err(Error::InvalidArgument(format!(
                "point {p:?} outside grid of precision {precision_b}"
            )));
        }
        if let Some(ns) = &normals {
            if let Some(n) = ns.iter().find(|n| (norm(n) - 1.0).abs() > NORMAL_TOLERANCE) {
                return Err(Error::InvalidArgument(format!("normal {n:?} is not unit length")));
            }
        }
        let mut seen = HashSet::with_capacity(points.len());
        let mut keep_points = Vec::with_capacity(points.len());
        let mut keep_normals = normals.as_ref().map(|n| Vec::with_capacity(n.len()));
        for (idx, p) in points.into_iter().enumerate() {
            if seen.insert(p) {
                keep_points.push(p);
                if let (Some(out), Some(src)) = (keep_normals.as_mut(), normals.as_ref()) {
                    out.push(src[idx]);
                }
            }
        }
        Ok(PointCloud {
            points: keep_points,
            precision_b,
            normals: keep_normals,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[[f64; 3]]> {
        self.normals.as_deref()
    }

    pub fn precision_b(&self) -> u32 {
        self.precision_b
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid side `2^b`.
    pub fn grid_side(&self) -> u32 {
        1 << self.precision_b
    }

    /// Replaces (or attaches) normals; must align with the points.
    pub fn set_normals(&mut self, normals: Vec<[f64; 3]>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::Shape(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(n) = normals.iter().find(|n| (norm(n) - 1.0).abs() > NORMAL_TOLERANCE) {
            return Err(Error::InvalidArgument(format!("normal {n:?} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    /// Points in ascending lexicographic order, for set comparisons.
    pub fn sorted_points(&self) -> Vec<Point> {
        let mut pts = self.points.clone();
        pts.sort_unstable();
        pts
    }

    /// Sub-cloud of the points whose indices are listed, normals included.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            precision_b: self.precision_b,
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
