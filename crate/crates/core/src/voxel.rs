//! Cube partitioning of point clouds and top-k binarization.
//!
//! A cube at index `(i_c, j_c, k_c)` covers global voxels
//! `W * (i_c, j_c, k_c) + [0, W)^3`. Occupancy is stored flattened with
//! `(i, j, k)` in row-major order, so flat index order is lexicographic
//! `(i, j, k)` order.

use std::collections::BTreeMap;

use crate::pointcloud::{Point, PointCloud};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cube {
    index: [u32; 3],
    side: usize,
    occupancy: Vec<bool>,
    k_occupied: usize,
}

impl Cube {
    pub fn new(index: [u32; 3], side: usize, occupancy: Vec<bool>) -> Result<Self> {
        if side == 0 || occupancy.len() != side * side * side {
            return Err(Error::Shape(format!(
                "occupancy of length {} for cube side {side}",
                occupancy.len()
            )));
        }
        let k_occupied = occupancy.iter().filter(|&&b| b).count();
        Ok(Cube {
            index,
            side,
            occupancy,
            k_occupied,
        })
    }

    pub fn from_local_points(index: [u32; 3], side: usize, local: &[[usize; 3]]) -> Result<Self> {
        let mut occ = vec![false; side * side * side];
        for p in local {
            if p.iter().any(|&c| c >= side) {
                return Err(Error::InvalidArgument(format!(
                    "local point {p:?} outside cube side {side}"
                )));
            }
            occ[(p[0] * side + p[1]) * side + p[2]] = true;
        }
        Cube::new(index, side, occ)
    }

    pub fn index(&self) -> [u32; 3] {
        self.index
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn k_occupied(&self) -> usize {
        self.k_occupied
    }

    pub fn volume(&self) -> usize {
        self.occupancy.len()
    }

    /// Same cube position with a different occupancy pattern.
    pub fn with_occupancy(&self, occupancy: Vec<bool>) -> Result<Cube> {
        Cube::new(self.index, self.side, occupancy)
    }

    pub fn local_points(&self) -> Vec<[usize; 3]> {
        let w = self.side;
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(f, _)| [f / (w * w), (f / w) % w, f % w])
            .collect()
    }

    /// Occupied voxels in global coordinates.
    pub fn global_points(&self) -> Vec<Point> {
        let w = self.side as u32;
        let origin = self.index.map(|c| c * w);
        self.local_points()
            .into_iter()
            .map(|l| {
                [
                    origin[0] + l[0] as u32,
                    origin[1] + l[1] as u32,
                    origin[2] + l[2] as u32,
                ]
            })
            .collect()
    }

    /// Occupancy as 0/1 values, the codec input.
    pub fn as_values<T: num_traits::Float>(&self) -> Vec<T> {
        self.occupancy
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect()
    }

    /// Intersection over union of occupied voxels; 1 when both are empty.
    pub fn iou(&self, other: &Cube) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.occupancy.iter().zip(&other.occupancy) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Splits a cloud into non-empty `side^3` cubes sorted by index.
pub fn partition(pc: &PointCloud, side: usize) -> Result<Vec<Cube>> {
    let grid = pc.grid_side() as usize;
    if side == 0 || !side.is_power_of_two() || side > grid {
        return Err(Error::Config(format!(
            "cube side {side} does not divide grid side {grid}"
        )));
    }
    let w = side as u32;
    let mut groups: BTreeMap<[u32; 3], Vec<[usize; 3]>> = BTreeMap::new();
    for p in pc.points() {
        let cube = p.map(|c| c / w);
        let local = [0, 1, 2].map(|a| (p[a] - w * cube[a]) as usize);
        groups.entry(cube).or_default().push(local);
    }
    groups
        .into_iter()
        .map(|(index, local)| Cube::from_local_points(index, side, &local))
        .collect()
}

/// Reassembles cubes into a cloud of precision `precision_b`.
pub fn merge(cubes: &[Cube], precision_b: u32) -> Result<PointCloud> {
    let mut seen = std::collections::HashSet::with_capacity(cubes.len());
    let mut points = Vec::new();
    for c in cubes {
        if !seen.insert(c.index) {
            return Err(Error::InvalidArgument(format!("duplicate cube index {:?}", c.index)));
        }
        points.extend(c.global_points());
    }
    PointCloud::new(points, precision_b)
}

/// Marks the `k` largest probabilities; ties prefer the lower flat index.
pub fn binarize_topk(probabilities: &[f64], k: usize) -> Result<Vec<bool>> {
    let n = probabilities.len();
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {n} voxels")));
    }
    let mut out = vec![false; n];
    if k == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let cmp = |&a: &usize, &b: &usize| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b));
    if k < n {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    for &i in &order[..k] {
        out[i] = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{gen_shape, ShapeKind};

    #[test]
    fn partition_matches_local_coordinate_arithmetic() {
        let pc = PointCloud::new(vec![[65, 2, 130]], 9).unwrap();
        let cubes = partition(&pc, 64).unwrap();
        assert_eq!(cubes.len(), 1);
        assert_eq!(cubes[0].index(), [1, 0, 2]);
        assert_eq!(cubes[0].local_points(), vec![[1, 2, 2]]);
        assert_eq!(cubes[0].k_occupied(), 1);

        let origin = PointCloud::new(vec![[0, 0, 0]], 9).unwrap();
        let c = partition(&origin, 16).unwrap();
        assert_eq!(c[0].index(), [0, 0, 0]);
        assert_eq!(c[0].local_points(), vec![[0, 0, 0]]);
    }

    #[test]
    fn merge_inverts_the_arithmetic() {
        let cube = Cube::from_local_points([1, 0, 2], 64, &[[1, 2, 2]]).unwrap();
        let pc = merge(&[cube], 9).unwrap();
        assert_eq!(pc.points(), &[[65, 2, 130]]);
        assert!(merge(&[], 9).unwrap().is_empty());
    }

    #[test]
    fn merge_rejects_duplicate_indices() {
        let a = Cube::from_local_points([0, 0, 0], 4, &[[0, 0, 0]]).unwrap();
        assert!(merge(&[a.clone(), a], 4).is_err());
    }

    #[test]
    fn partition_rejects_bad_sides() {
        let pc = PointCloud::new(vec![[1, 1, 1]], 4).unwrap();
        assert!(partition(&pc, 12).is_err());
        assert!(partition(&pc, 32).is_err());
        assert!(partition(&pc, 0).is_err());
        assert!(partition(&pc, 16).is_ok());
    }

    #[test]
    fn sphere_round_trip_and_sorted_output() {
        let pc = gen_shape(ShapeKind::Sphere, 5000, 9, 7).unwrap();
        let cubes = partition(&pc, 16).unwrap();
        assert!(cubes.windows(2).all(|w| w[0].index() < w[1].index()));
        assert!(cubes.len() <= 32usize.pow(3));
        let back = merge(&cubes, 9).unwrap();
        assert_eq!(back.sorted_points(), pc.sorted_points());
    }

    #[test]
    fn topk_examples() {
        assert_eq!(binarize_topk(&[0.9, 0.2, 0.6], 2).unwrap(), vec![true, false, true]);
        assert_eq!(binarize_topk(&[0.9, 0.2, 0.6], 0).unwrap(), vec![false; 3]);
        assert_eq!(binarize_topk(&[0.5, 0.5, 0.5], 2).unwrap(), vec![true, true, false]);
        assert!(binarize_topk(&[0.5], 2).is_err());
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let mut rng = crate::seed::rng(42);
        use rand::Rng;
        let probs: Vec<f64> = (0..512).map(|_| (rng.random_range(0..64) as f64) / 64.0).collect();
        // Oracle: stable sort of indices by descending probability.
        let mut idx: Vec<usize> = (0..512).collect();
        idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap());
        let mut expected = vec![false; 512];
        for &i in &idx[..37] {
            expected[i] = true;
        }
        assert_eq!(binarize_topk(&probs, 37).unwrap(), expected);
    }

    #[test]
    fn iou_of_identical_and_disjoint() {
        let a = Cube::from_local_points([0, 0, 0], 2, &[[0, 0, 0]]).unwrap();
        let b = Cube::from_local_points([0, 0, 0], 2, &[[1, 1, 1]]).unwrap();
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b), 0.0);
    }
}
