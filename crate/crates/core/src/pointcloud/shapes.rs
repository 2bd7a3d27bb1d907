//! Deterministic synthetic surfaces sampled onto the voxel grid.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Point, PointCloud};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Box,
    Torus,
    Blob,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Torus, ShapeKind::Blob];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Torus => "torus",
            ShapeKind::Blob => "blob",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ShapeKind::Sphere => 1,
            ShapeKind::Box => 2,
            ShapeKind::Torus => 3,
            ShapeKind::Blob => 4,
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown shape kind '{s}'")))
    }
}

type Mat3 = [[f64; 3]; 3];

/// Analytic surface in continuous grid coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half: [f64; 3],
        rotation: Mat3,
    },
    Torus {
        center: [f64; 3],
        major: f64,
        minor: f64,
        rotation: Mat3,
    },
    /// Star-shaped surface `r(u) = radius * (1 + sum a_i sin(f_i . u + p_i))`.
    Blob {
        center: [f64; 3],
        radius: f64,
        harmonics: Vec<([f64; 3], f64, f64)>,
    },
}

impl Surface {
    /// Surface parameters for `kind` on a `2^b` grid, varied by `seed`.
    pub fn for_kind(kind: ShapeKind, precision_b: u32, seed: u64) -> Surface {
        let side = (1u64 << precision_b) as f64;
        let mut rng = seed::rng(seed::derive(seed, kind.tag()));
        let mid = (side - 1.0) / 2.0;
        let jitter = 0.03 * side;
        let center = [
            mid + rng.random_range(-jitter..=jitter),
            mid + rng.random_range(-jitter..=jitter),
            mid + rng.random_range(-jitter..=jitter),
        ];
        // Everything stays within 0.44 * side of the center.
        match kind {
            ShapeKind::Sphere => Surface::Sphere {
                center,
                radius: side * rng.random_range(0.30..0.42),
            },
            ShapeKind::Box => {
                let rotation = random_rotation(&mut rng);
                let half = [
                    side * rng.random_range(0.14..0.25),
                    side * rng.random_range(0.14..0.25),
                    side * rng.random_range(0.14..0.25),
                ];
                Surface::Box { center, half, rotation }
            }
            ShapeKind::Torus => {
                let minor = side * rng.random_range(0.08..0.13);
                let major = side * rng.random_range(0.22..0.30);
                Surface::Torus {
                    center,
                    major,
                    minor,
                    rotation: random_rotation(&mut rng),
                }
            }
            ShapeKind::Blob => {
                let harmonics = (0..3)
                    .map(|_| {
                        let f = [
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                        ];
                        (f, rng.random_range(0.04..0.10), rng.random_range(0.0..2.0 * PI))
                    })
                    .collect();
                Surface::Blob {
                    center,
                    radius: side * rng.random_range(0.26..0.33),
                    harmonics,
                }
            }
        }
    }

    /// Draws `n` points uniformly (by area, except the blob) on the surface.
    pub fn sample_continuous(&self, n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = seed::rng(seed::derive(seed, 0xC10D));
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Samples and quantizes onto the grid (rounded, clamped, deduplicated).
    pub fn sample(&self, n: usize, precision_b: u32, seed: u64) -> Result<PointCloud> {
        let max = ((1u64 << precision_b) - 1) as f64;
        let pts: Vec<Point> = self
            .sample_continuous(n, seed)
            .into_iter()
            .map(|p| p.map(|c| (c + 0.5).floor().clamp(0.0, max) as u32))
            .collect();
        PointCloud::new(pts, precision_b)
    }

    fn sample_one<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match self {
            Surface::Sphere { center, radius } => {
                let u = unit_vector(rng);
                add(*center, scale(u, *radius))
            }
            Surface::Box { center, half, rotation } => {
                let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 0;
                while axis < 2 && pick >= areas[axis] {
                    pick -= areas[axis];
                    axis += 1;
                }
                let mut local = [0.0; 3];
                for (k, l) in local.iter_mut().enumerate() {
                    *l = if k == axis {
                        if rng.random_bool(0.5) {
                            half[k]
                        } else {
                            -half[k]
                        }
                    } else {
                        rng.random_range(-half[k]..=half[k])
                    };
                }
                add(*center, mat_vec(rotation, local))
            }
            Surface::Torus {
                center,
                major,
                minor,
                rotation,
            } => {
                let u = rng.random_range(0.0..2.0 * PI);
                // Area element is proportional to (R + r cos v).
                let v = loop {
                    let v = rng.random_range(0.0..2.0 * PI);
                    let accept = (major + minor * v.cos()) / (major + minor);
                    if rng.random_range(0.0..1.0) < accept {
                        break v;
                    }
                };
                let ring = major + minor * v.cos();
                let local = [ring * u.cos(), ring * u.sin(), minor * v.sin()];
                add(*center, mat_vec(rotation, local))
            }
            Surface::Blob {
                center,
                radius,
                harmonics,
            } => {
                let u = unit_vector(rng);
                add(*center, scale(u, blob_radius(*radius, harmonics, u)))
            }
        }
    }

    /// Unsigned distance from `p` to the surface (exact for sphere and
    /// torus, exact for the box, radial for the blob).
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        match self {
            Surface::Sphere { center, radius } => (norm(sub(p, *center)) - radius).abs(),
            Surface::Box { center, half, rotation } => {
                let local = mat_t_vec(rotation, sub(p, *center));
                let q: Vec<f64> = (0..3).map(|k| local[k].abs() - half[k]).collect();
                let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = q.iter().cloned().fold(f64::MIN, f64::max).min(0.0);
                if outside > 0.0 {
                    outside
                } else {
                    -inside
                }
            }
            Surface::Torus {
                center,
                major,
                minor,
                rotation,
            } => {
                let l = mat_t_vec(rotation, sub(p, *center));
                let ring = (l[0] * l[0] + l[1] * l[1]).sqrt() - major;
                ((ring * ring + l[2] * l[2]).sqrt() - minor).abs()
            }
            Surface::Blob {
                center,
                radius,
                harmonics,
            } => {
                let d = sub(p, *center);
                let r = norm(d);
                if r == 0.0 {
                    return *radius;
                }
                (r - blob_radius(*radius, harmonics, scale(d, 1.0 / r))).abs()
            }
        }
    }
}

/// Samples `n_points` on the seeded surface of `kind` and voxelizes them.
pub fn gen_shape(kind: ShapeKind, n_points: usize, precision_b: u32, seed: u64) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be at least 1".into()));
    }
    Surface::for_kind(kind, precision_b, seed).sample(n_points, precision_b, seed)
}

fn blob_radius(radius: f64, harmonics: &[([f64; 3], f64, f64)], u: [f64; 3]) -> f64 {
    let bump: f64 = harmonics
        .iter()
        .map(|(f, a, phase)| a * (f[0] * u[0] + f[1] * u[1] + f[2] * u[2] + phase).sin())
        .sum();
    radius * (1.0 + bump)
}

fn unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = norm(v);
        if n > 1e-9 {
            return scale(v, 1.0 / n);
        }
    }
}

fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    let q: [f64; 4] = loop {
        let q: [f64; 4] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            break q.map(|v| v / n);
        }
    };
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

fn mat_t_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|c| m[0][c] * v[0] + m[1][c] * v[1] + m[2][c] * v[2])
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}
