use pcsc::metrics::{estimate_normals, mse_c2c, mse_c2p, nearest_neighbor, psnr, quality, Direction, KdTree};
use pcsc::pointcloud::{Point, PointCloud};
use pcsc::seed;
use rand::Rng;

fn cloud(points: Vec<Point>, b: u32) -> PointCloud {
    PointCloud::new(points, b).unwrap()
}

fn random_points(n: usize, side: u32, rng: &mut impl Rng) -> Vec<Point> {
    (0..n)
        .map(|_| {
            [
                rng.random_range(0..side),
                rng.random_range(0..side),
                rng.random_range(0..side),
            ]
        })
        .collect()
}

fn d2(a: Point, b: Point) -> u64 {
    (0..3).map(|i| (a[i] as i64 - b[i] as i64).pow(2) as u64).sum()
}

/// Scan oracle: smallest distance, then lexicographically smallest point.
fn brute_nearest(q: Point, target: &[Point]) -> (Point, u64) {
    target
        .iter()
        .map(|&p| (d2(q, p), p))
        .min()
        .map(|(d, p)| (p, d))
        .unwrap()
}

fn unit_normals(n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            let v: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.1..1.0),
            ];
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / l, v[1] / l, v[2] / l]
        })
        .collect()
}

#[test]
fn nearest_neighbor_examples() {
    let t = cloud(vec![[1, 0, 0], [0, 2, 0]], 4);
    assert_eq!(nearest_neighbor([0, 0, 0], &t).unwrap(), ([1, 0, 0], 1));
    assert_eq!(nearest_neighbor([0, 2, 0], &t).unwrap(), ([0, 2, 0], 0));
    assert!(nearest_neighbor([0, 0, 0], &PointCloud::empty(4)).is_err());
    // Equidistant candidates resolve to the lexicographically smallest.
    let tie = cloud(vec![[2, 1, 1], [0, 1, 1], [1, 1, 0], [1, 2, 1]], 3);
    assert_eq!(nearest_neighbor([1, 1, 1], &tie).unwrap(), ([0, 1, 1], 1));
}

#[test]
fn kd_tree_matches_brute_force() {
    let mut rng = seed::rng(21);
    for (n, side) in [(1, 4), (7, 3), (400, 16), (500, 64)] {
        let target = cloud(random_points(n, side, &mut rng), 6);
        let pts = target.points().to_vec();
        for q in random_points(500, side, &mut rng) {
            assert_eq!(
                nearest_neighbor(q, &target).unwrap(),
                brute_nearest(q, &pts),
                "n={n} q={q:?}"
            );
        }
    }
}

#[test]
fn k_nearest_matches_sorted_scan() {
    let mut rng = seed::rng(22);
    let pts = cloud(random_points(300, 8, &mut rng), 3).points().to_vec();
    let tree = KdTree::new(&pts);
    for q in random_points(100, 8, &mut rng) {
        let mut all: Vec<(u64, Point)> = pts.iter().map(|&p| (d2(q, p), p)).collect();
        all.sort();
        let got: Vec<(u64, Point)> = tree.k_nearest(q, 16).into_iter().map(|(i, d)| (d, pts[i])).collect();
        assert_eq!(got, all[..16].to_vec());
    }
}

#[test]
fn mse_examples() {
    let a = cloud(vec![[0, 0, 0]], 4);
    let b = cloud(vec![[1, 0, 0]], 4);
    assert_eq!(mse_c2c(&a, &b).unwrap(), 1.0);
    assert_eq!(mse_c2c(&a, &a).unwrap(), 0.0);
    assert!(mse_c2c(&a, &PointCloud::empty(4)).is_err());
    let an = PointCloud::with_normals(vec![[0, 0, 0]], vec![[0.0, 0.0, 1.0]], 4).unwrap();
    assert_eq!(mse_c2p(&an, &b).unwrap(), 0.0);
    assert_eq!(mse_c2p(&an, &an).unwrap(), 0.0);
    assert!(mse_c2p(&a, &b).is_err());
}

#[test]
fn distortions_match_double_loops() {
    let mut rng = seed::rng(23);
    for _ in 0..5 {
        let a0 = cloud(random_points(300, 32, &mut rng), 5);
        let normals = unit_normals(a0.len(), &mut rng);
        let a = PointCloud::with_normals(a0.points().to_vec(), normals.clone(), 5).unwrap();
        let b = cloud(random_points(250, 32, &mut rng), 5);
        let (mut c2c, mut c2p) = (0.0, 0.0);
        for (j, &p) in a.points().iter().enumerate() {
            let (q, d) = brute_nearest(p, b.points());
            c2c += d as f64;
            let e: f64 = (0..3).map(|k| (q[k] as f64 - p[k] as f64) * normals[j][k]).sum();
            c2p += e * e;
        }
        let n = a.len() as f64;
        assert!((mse_c2c(&a, &b).unwrap() - c2c / n).abs() < 1e-9);
        assert!((mse_c2p(&a, &b).unwrap() - c2p / n).abs() < 1e-9);
        let r = quality(&a, &b, Direction::AToB).unwrap();
        assert_eq!(r.psnr_d1, psnr(c2c / n, 5).unwrap());
        assert_eq!(r.psnr_d2, psnr(c2p / n, 5).unwrap());
        assert!(r.mse_c2p <= r.mse_c2c + 1e-12);
    }
}

#[test]
fn direction_changes_the_denominator() {
    let a = PointCloud::with_normals(vec![[0, 0, 0], [0, 0, 4]], vec![[1.0, 0.0, 0.0]; 2], 4).unwrap();
    let b = PointCloud::with_normals(vec![[0, 0, 1]], vec![[1.0, 0.0, 0.0]], 4).unwrap();
    let ab = quality(&a, &b, Direction::AToB).unwrap();
    let ba = quality(&a, &b, Direction::BToA).unwrap();
    let sym = quality(&a, &b, Direction::SymmetricMax).unwrap();
    assert_eq!(ab.mse_c2c, (1.0 + 9.0) / 2.0);
    assert_eq!(ba.mse_c2c, 1.0);
    assert_eq!(sym.mse_c2c, 5.0);
}

#[test]
fn psnr_examples() {
    assert_eq!(psnr(0.0, 10).unwrap(), f64::INFINITY);
    let p2 = 3.0 * 1023.0f64.powi(2);
    assert!(psnr(p2, 10).unwrap().abs() < 1e-12);
    assert!((psnr(1.0, 10).unwrap() - 64.97).abs() < 0.005);
    assert!(psnr(-1.0, 10).is_err());
    let a = PointCloud::with_normals(vec![[1, 2, 3]], vec![[0.0, 1.0, 0.0]], 4).unwrap();
    let r = quality(&a, &a, Direction::SymmetricMax).unwrap();
    assert_eq!((r.psnr_d1, r.psnr_d2), (f64::INFINITY, f64::INFINITY));
}

#[test]
fn planar_normals_are_vertical() {
    let pts: Vec<Point> = (0..10).flat_map(|x| (0..10).map(move |y| [x, y, 5])).collect();
    for n in estimate_normals(&cloud(pts, 4), 8).unwrap() {
        assert!((n[2].abs() - 1.0).abs() < 1e-6, "{n:?}");
    }
}

#[test]
fn sphere_normals_are_radial() {
    let (c, r) = (256.0, 200.0);
    let mut pts = Vec::new();
    for i in 0..4000 {
        // Fibonacci sphere.
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / 4000.0;
        let t = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let s = (1.0 - z * z).sqrt();
        pts.push([
            (c + r * s * t.cos()).round() as u32,
            (c + r * s * t.sin()).round() as u32,
            (c + r * z).round() as u32,
        ]);
    }
    let pc = cloud(pts, 9);
    let normals = estimate_normals(&pc, 16).unwrap();
    let good = pc
        .points()
        .iter()
        .zip(&normals)
        .filter(|(p, n)| {
            let d = [p[0] as f64 - c, p[1] as f64 - c, p[2] as f64 - c];
            let l = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let cos = (d[0] * n[0] + d[1] * n[1] + d[2] * n[2]) / l;
            cos > 5f64.to_radians().cos()
        })
        .count();
    assert!(good as f64 >= 0.95 * pc.len() as f64, "{good} of {}", pc.len());
}

#[test]
fn colinear_neighborhood_gives_orthogonal_normal() {
    let pts: Vec<Point> = (0..12).map(|i| [i, 3, 3]).collect();
    for n in estimate_normals(&cloud(pts, 4), 4).unwrap() {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        assert!((len - 1.0).abs() < 1e-9);
        assert!(n[0].abs() < 1e-9);
    }
}

#[test]
fn normal_estimation_needs_enough_points() {
    assert!(estimate_normals(&cloud(vec![[0, 0, 0], [1, 1, 1]], 4), 3).is_err());
    assert!(estimate_normals(&cloud(vec![[0, 0, 0], [1, 1, 1], [2, 0, 1]], 4), 2).is_err());
}
