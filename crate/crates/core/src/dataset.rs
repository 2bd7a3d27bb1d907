//! Deterministic synthetic corpora built from analytic surfaces.

use std::collections::HashMap;

use crate::pipeline::EvalCube;
use crate::pointcloud::{PointCloud, ShapeKind, Surface};
use crate::{seed, Error, Result};

/// Recipe for one synthetic cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CloudSpec {
    pub kind: ShapeKind,
    /// Selects the surface (position, size, orientation, harmonics).
    pub surface_seed: u64,
    /// Selects the sample points on it.
    pub sample_seed: u64,
    pub points: usize,
    pub precision_b: u32,
}

impl CloudSpec {
    pub fn generate(&self) -> Result<PointCloud> {
        if self.points == 0 {
            return Err(Error::InvalidArgument("a cloud needs at least one point".into()));
        }
        Surface::for_kind(self.kind, self.precision_b, self.surface_seed).sample(
            self.points,
            self.precision_b,
            self.sample_seed,
        )
    }

    /// Another surface of the same kind, the second user of a pair.
    pub fn partner(&self, salt: u64) -> CloudSpec {
        CloudSpec {
            surface_seed: seed::derive_all(self.surface_seed, &[0x7717, salt]),
            sample_seed: seed::derive_all(self.sample_seed, &[0x7717, salt]),
            ..*self
        }
    }

    /// File stem such as `sphere_003`.
    pub fn name(&self, index: usize) -> String {
        format!("{}_{index:03}", self.kind.name())
    }
}

/// `count` clouds cycling through `kinds`.
pub fn corpus(kinds: &[ShapeKind], count: usize, points: usize, precision_b: u32, base_seed: u64) -> Vec<CloudSpec> {
    (0..count)
        .map(|i| CloudSpec {
            kind: kinds[i % kinds.len()],
            surface_seed: seed::derive_all(base_seed, &[i as u64, 0]),
            sample_seed: seed::derive_all(base_seed, &[i as u64, 1]),
            points,
            precision_b,
        })
        .collect()
}

/// Cubes of `a` and `b` that sit at the same cube index, in `a`'s order.
pub fn pair_by_index(a: &[EvalCube], b: &[EvalCube]) -> Vec<(EvalCube, EvalCube)> {
    let by_index: HashMap<[u32; 3], &EvalCube> = b.iter().map(|c| (c.cube.index(), c)).collect();
    a.iter()
        .filter_map(|c| by_index.get(&c.cube.index()).map(|d| (c.clone(), (*d).clone())))
        .collect()
}

/// Evenly spaced picks of at most `max` items, preserving order.
pub fn spread<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    (0..max).map(|i| items[i * items.len() / max].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_cycles_kinds() {
        let a = corpus(&ShapeKind::ALL, 6, 100, 6, 7);
        assert_eq!(a, corpus(&ShapeKind::ALL, 6, 100, 6, 7));
        assert_eq!(a[4].kind, ShapeKind::ALL[0]);
        assert_ne!(a[0].surface_seed, a[4].surface_seed);
        assert_eq!(a[0].generate().unwrap(), a[0].generate().unwrap());
    }

    #[test]
    fn partner_keeps_the_kind_only() {
        let a = corpus(&[ShapeKind::Torus], 1, 1000, 6, 1)[0];
        let t = a.partner(0);
        assert_eq!((t.kind, t.points), (a.kind, a.points));
        assert_ne!(t.surface_seed, a.surface_seed);
        assert_ne!(t.sample_seed, a.sample_seed);
    }

    #[test]
    fn spread_picks() {
        assert_eq!(spread(&[1, 2, 3], 5), vec![1, 2, 3]);
        assert_eq!(spread(&[0, 1, 2, 3, 4, 5], 3), vec![0, 2, 4]);
    }
}
