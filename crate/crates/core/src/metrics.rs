//! Geometry distortion between point clouds: point-to-point (D1) and
//! point-to-plane (D2) mean squared error and their PSNR.

use std::collections::BinaryHeap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::pointcloud::{Point, PointCloud};
use crate::{Error, Result};

/// Default neighborhood size for normal estimation.
pub const DEFAULT_NORMAL_K: usize = 16;

fn sq_dist(a: Point, b: Point) -> u64 {
    (0..3)
        .map(|i| {
            let d = a[i].abs_diff(b[i]) as u64;
            d * d
        })
        .sum()
}

/// Exact k-d tree over integer points. Among equidistant candidates the
/// lexicographically smallest point wins.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point>,
    /// Permutation of point indices; each subrange is a subtree whose root is
    /// its middle element.
    order: Vec<usize>,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    dist: u64,
    point: Point,
    index: usize,
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        KdTree {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index into the original point slice and squared distance.
    pub fn nearest(&self, q: Point) -> Option<(usize, u64)> {
        let mut best: Option<Candidate> = None;
        self.search_nearest(q, 0, self.order.len(), 0, &mut best);
        best.map(|c| (c.index, c.dist))
    }

    fn search_nearest(&self, q: Point, lo: usize, hi: usize, depth: usize, best: &mut Option<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = self.points[idx];
        let c = Candidate {
            dist: sq_dist(q, p),
            point: p,
            index: idx,
        };
        if best.as_ref().is_none_or(|b| c < *b) {
            *best = Some(c);
        }
        let axis = depth % 3;
        let (near, far) = if q[axis] < p[axis] {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_nearest(q, near.0, near.1, depth + 1, best);
        let plane = q[axis].abs_diff(p[axis]) as u64;
        if best.as_ref().is_none_or(|b| plane * plane <= b.dist) {
            self.search_nearest(q, far.0, far.1, depth + 1, best);
        }
    }

    /// The `k` nearest points (fewer if the tree is smaller), closest first.
    pub fn k_nearest(&self, q: Point, k: usize) -> Vec<(usize, u64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search_k(q, k, 0, self.order.len(), 0, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist)).collect()
    }

    fn search_k(&self, q: Point, k: usize, lo: usize, hi: usize, depth: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = self.points[idx];
        let c = Candidate {
            dist: sq_dist(q, p),
            point: p,
            index: idx,
        };
        if heap.len() < k {
            heap.push(c);
        } else if heap.peek().is_some_and(|w| c < *w) {
            heap.pop();
            heap.push(c);
        }
        let axis = depth % 3;
        let (near, far) = if q[axis] < p[axis] {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_k(q, k, near.0, near.1, depth + 1, heap);
        let plane = q[axis].abs_diff(p[axis]) as u64;
        if heap.len() < k || heap.peek().is_some_and(|w| plane * plane <= w.dist) {
            self.search_k(q, k, far.0, far.1, depth + 1, heap);
        }
    }
}

fn build(points: &[Point], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// Nearest point of `target` to `query` and the squared distance.
pub fn nearest_neighbor(query: Point, target: &PointCloud) -> Result<(Point, u64)> {
    let tree = KdTree::new(target.points());
    let (i, d) = tree
        .nearest(query)
        .ok_or_else(|| Error::InvalidArgument("nearest neighbor in an empty cloud".into()))?;
    Ok((target.points()[i], d))
}

/// Sum of squared point-to-point and point-to-plane errors from each point
/// of `a` to its nearest neighbor in `b`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSums {
    pub c2c: f64,
    pub c2p: f64,
    pub count: usize,
}

impl ErrorSums {
    pub fn add(&mut self, other: &ErrorSums) {
        self.c2c += other.c2c;
        self.c2p += other.c2p;
        self.count += other.count;
    }

    pub fn mse_c2c(&self) -> f64 {
        self.c2c / self.count as f64
    }

    pub fn mse_c2p(&self) -> f64 {
        self.c2p / self.count as f64
    }
}

/// Error sums from `a` to `b`; `normals` (aligned with `a`) enable the
/// point-to-plane term.
pub fn error_sums(a: &[Point], normals: Option<&[[f64; 3]]>, b: &[Point]) -> Result<ErrorSums> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("distortion needs two non-empty clouds".into()));
    }
    if normals.is_some_and(|n| n.len() != a.len()) {
        return Err(Error::Shape("normals do not match the points".into()));
    }
    let tree = KdTree::new(b);
    let mut sums = ErrorSums {
        count: a.len(),
        ..ErrorSums::default()
    };
    for (j, &p) in a.iter().enumerate() {
        let (i, d) = tree.nearest(p).expect("non-empty");
        sums.c2c += d as f64;
        if let Some(n) = normals {
            let q = b[i];
            let e: f64 = (0..3).map(|k| (q[k] as f64 - p[k] as f64) * n[j][k]).sum();
            sums.c2p += e * e;
        }
    }
    Ok(sums)
}

/// Mean squared point-to-point error from `a` to `b`.
pub fn mse_c2c(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(error_sums(a.points(), None, b.points())?.mse_c2c())
}

/// Mean squared point-to-plane error from `a` (which carries normals) to `b`.
pub fn mse_c2p(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let normals = a
        .normals()
        .ok_or_else(|| Error::InvalidArgument("point-to-plane error needs normals".into()))?;
    Ok(error_sums(a.points(), Some(normals), b.points())?.mse_c2p())
}

/// Unit normals from the covariance of each point's `k` nearest neighbors
/// (the point included), oriented away from the cloud centroid.
pub fn estimate_normals(pc: &PointCloud, k: usize) -> Result<Vec<[f64; 3]>> {
    if k < 3 || pc.len() < k {
        return Err(Error::InvalidArgument(format!(
            "normal estimation needs k >= 3 and at least k points (k = {k}, {} points)",
            pc.len()
        )));
    }
    let pts = pc.points();
    let tree = KdTree::new(pts);
    let to_v = |p: Point| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
    let centroid = pts.iter().fold(Vector3::zeros(), |acc, &p| acc + to_v(p)) / pts.len() as f64;
    let mut out = Vec::with_capacity(pts.len());
    for &p in pts {
        let nb = tree.k_nearest(p, k);
        let mean = nb.iter().fold(Vector3::zeros(), |acc, &(i, _)| acc + to_v(pts[i])) / nb.len() as f64;
        let mut cov = Matrix3::zeros();
        for &(i, _) in &nb {
            let d = to_v(pts[i]) - mean;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let (min_i, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("three eigenvalues");
        let mut n: Vector3<f64> = eig.eigenvectors.column(min_i).into_owned();
        n /= n.norm();
        let outward = n.dot(&(to_v(p) - centroid));
        let flip = if outward.abs() > 1e-9 {
            outward < 0.0
        } else {
            n.iter().find(|c| c.abs() > 1e-12).is_some_and(|&c| c < 0.0)
        };
        if flip {
            n = -n;
        }
        out.push([n[0], n[1], n[2]]);
    }
    Ok(out)
}

/// Peak value `sqrt(3) * (2^b - 1)` squared.
pub fn peak_squared(precision_b: u32) -> f64 {
    let m = (2f64).powi(precision_b as i32) - 1.0;
    3.0 * m * m
}

/// `10 log10(peak^2 / mse)`; zero error gives `+inf`.
pub fn psnr(mse: f64, precision_b: u32) -> Result<f64> {
    if mse.is_nan() || mse < 0.0 {
        return Err(Error::InvalidArgument(format!("mse {mse} is negative or NaN")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak_squared(precision_b) / mse).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Averaged over the points of the first (original) cloud.
    AToB,
    BToA,
    /// The worse of the two directions.
    SymmetricMax,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::AToB => "a_to_b",
            Direction::BToA => "b_to_a",
            Direction::SymmetricMax => "symmetric_max",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a_to_b" => Ok(Direction::AToB),
            "b_to_a" => Ok(Direction::BToA),
            "symmetric_max" => Ok(Direction::SymmetricMax),
            _ => Err(Error::Config(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub mse_c2c: f64,
    pub mse_c2p: f64,
    pub psnr_d1: f64,
    pub psnr_d2: f64,
    pub direction: Direction,
}

impl QualityReport {
    pub fn from_mse(mse_c2c: f64, mse_c2p: f64, precision_b: u32, direction: Direction) -> Result<Self> {
        Ok(QualityReport {
            mse_c2c,
            mse_c2p,
            psnr_d1: psnr(mse_c2c, precision_b)?,
            psnr_d2: psnr(mse_c2p, precision_b)?,
            direction,
        })
    }
}

/// Distortion of `b` against `a`. The cloud the errors are averaged over
/// must carry normals (both for [`Direction::SymmetricMax`]).
pub fn quality(a: &PointCloud, b: &PointCloud, direction: Direction) -> Result<QualityReport> {
    let one = |x: &PointCloud, y: &PointCloud| -> Result<(f64, f64)> { Ok((mse_c2c(x, y)?, mse_c2p(x, y)?)) };
    let (c2c, c2p) = match direction {
        Direction::AToB => one(a, b)?,
        Direction::BToA => one(b, a)?,
        Direction::SymmetricMax => {
            let (ab1, ab2) = one(a, b)?;
            let (ba1, ba2) = one(b, a)?;
            (ab1.max(ba1), ab2.max(ba2))
        }
    };
    QualityReport::from_mse(c2c, c2p, a.precision_b(), direction)
}
