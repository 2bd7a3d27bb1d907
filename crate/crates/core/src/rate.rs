//! Rate control by dropping the least important latent entries.
//!
//! The transmitter ranks latent entries, zeroes the lowest-ranked fraction
//! with a binary mask, and sends only the kept entries. The mask travels as
//! error-free side information; the receiver zero-pads back to full length.

use std::str::FromStr;

use rand::Rng;

use crate::codec::{Codec, LatentVector};
use crate::tensornet::Scalar;
use crate::voxel::Cube;
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ImportanceMethod {
    /// `|y_i|`.
    Value,
    /// `|dl/dy_i|` from a local decode at the transmitter.
    Grad,
    /// `|dl/dy_i * y_i|`, the first-order change of the loss when `y_i` is zeroed.
    GradValue,
    /// Seeded uniform scores.
    Random,
    /// `-|y_i|`: drops the largest entries first.
    LargeValueBaseline,
}

impl ImportanceMethod {
    pub const ALL: [ImportanceMethod; 5] = [
        ImportanceMethod::Value,
        ImportanceMethod::Grad,
        ImportanceMethod::GradValue,
        ImportanceMethod::Random,
        ImportanceMethod::LargeValueBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImportanceMethod::Value => "value",
            ImportanceMethod::Grad => "grad",
            ImportanceMethod::GradValue => "grad_value",
            ImportanceMethod::Random => "random",
            ImportanceMethod::LargeValueBaseline => "large_value",
        }
    }

    pub fn needs_gradient(self) -> bool {
        matches!(self, ImportanceMethod::Grad | ImportanceMethod::GradValue)
    }
}

impl FromStr for ImportanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ImportanceMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown importance method {s:?}")))
    }
}

/// What the transmitter knows besides the latent.
pub struct ImportanceContext<'a, T: Scalar = f32> {
    /// Codec and source cube, needed by the gradient methods.
    pub model: Option<(&'a Codec<T>, &'a Cube)>,
    pub zeta: f64,
    /// Average gradients over each latent channel and broadcast.
    pub per_channel: bool,
    /// Seed for [`ImportanceMethod::Random`].
    pub seed: u64,
}

impl<T: Scalar> Default for ImportanceContext<'_, T> {
    fn default() -> Self {
        ImportanceContext {
            model: None,
            zeta: crate::codec::DEFAULT_ZETA,
            per_channel: false,
            seed: 0,
        }
    }
}

fn channel_average(g: &[f64], channels: usize) -> Vec<f64> {
    let plane = g.len() / channels;
    let mut out = Vec::with_capacity(g.len());
    for c in 0..channels {
        let mean = g[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64;
        out.extend(std::iter::repeat_n(mean, plane));
    }
    out
}

/// Importance score per latent entry; higher means more important.
pub fn importance<T: Scalar>(
    y: &LatentVector,
    method: ImportanceMethod,
    ctx: &ImportanceContext<'_, T>,
) -> Result<Vec<f64>> {
    match method {
        ImportanceMethod::Value => Ok(y.values.iter().map(|v| v.abs()).collect()),
        ImportanceMethod::LargeValueBaseline => Ok(y.values.iter().map(|v| -v.abs()).collect()),
        ImportanceMethod::Random => {
            let mut rng = seed::rng(ctx.seed);
            Ok((0..y.len()).map(|_| rng.random::<f64>()).collect())
        }
        ImportanceMethod::Grad | ImportanceMethod::GradValue => {
            let (codec, cube) = ctx.model.ok_or_else(|| {
                Error::InvalidArgument(format!("{} importance needs the codec and cube", method.name()))
            })?;
            let mut g = codec.latent_gradient(y, cube, ctx.zeta)?;
            if ctx.per_channel {
                g = channel_average(&g, y.layout[0]);
            }
            Ok(if method == ImportanceMethod::Grad {
                g.iter().map(|v| v.abs()).collect()
            } else {
                g.iter().zip(&y.values).map(|(g, v)| (g * v).abs()).collect()
            })
        }
    }
}

/// Binary keep mask over a latent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RateMask {
    bits: Vec<bool>,
    kept: usize,
}

impl RateMask {
    pub fn new(bits: Vec<bool>) -> Self {
        let kept = bits.iter().filter(|&&b| b).count();
        RateMask { bits, kept }
    }

    pub fn all(len: usize) -> Self {
        RateMask::new(vec![true; len])
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// `u32` little-endian length, then the bits LSB-first, zero padded to a
    /// whole byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.bits.len() as u32).to_le_bytes().to_vec();
        for chunk in self.bits.chunks(8) {
            out.push(chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b as u8) << i));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::parse(bytes.len(), "mask length prefix truncated"));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        let body = &bytes[4..];
        if body.len() != len.div_ceil(8) {
            return Err(Error::parse(
                4,
                format!(
                    "mask of {len} bits needs {} bytes, found {}",
                    len.div_ceil(8),
                    body.len()
                ),
            ));
        }
        let bits = (0..len).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(RateMask::new(bits))
    }
}

/// Zeroes the `floor(L * drop_ratio)` lowest scores; among equal scores the
/// lower index is dropped first.
pub fn build_mask(scores: &[f64], drop_ratio: f64) -> Result<RateMask> {
    if !(0.0..1.0).contains(&drop_ratio) {
        return Err(Error::InvalidArgument(format!(
            "drop ratio {drop_ratio} outside [0, 1)"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("importance scores must be finite".into()));
    }
    let drop = drop_count(scores.len(), drop_ratio);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if drop > 0 && drop < order.len() {
        order.select_nth_unstable_by(drop - 1, |&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    }
    let mut bits = vec![true; scores.len()];
    for &i in &order[..drop] {
        bits[i] = false;
    }
    Ok(RateMask::new(bits))
}

/// Entries dropped at `drop_ratio`; the epsilon absorbs representation error
/// in ratios such as `0.3`.
pub fn drop_count(len: usize, drop_ratio: f64) -> usize {
    ((len as f64 * drop_ratio + 1e-9).floor() as usize).min(len)
}

/// Kept entries of `y` in their original order.
pub fn apply_mask(y: &[f64], mask: &RateMask) -> Result<Vec<f64>> {
    if y.len() != mask.len() {
        return Err(Error::Shape(format!("{} values for a mask of {}", y.len(), mask.len())));
    }
    Ok(y.iter().zip(&mask.bits).filter(|(_, &b)| b).map(|(&v, _)| v).collect())
}

/// Zero-pads the received entries back to the full latent length.
pub fn recover(z_hat: &[f64], mask: &RateMask) -> Result<Vec<f64>> {
    if z_hat.len() != mask.kept {
        return Err(Error::Shape(format!(
            "{} received values for {} kept entries",
            z_hat.len(),
            mask.kept
        )));
    }
    let mut it = z_hat.iter();
    Ok(mask
        .bits
        .iter()
        .map(|&b| if b { *it.next().expect("counted") } else { 0.0 })
        .collect())
}

/// Channel bandwidth ratio: transmitted values over cube voxels.
pub fn cbr(kept: usize, side: usize) -> Result<f64> {
    let e = side * side * side;
    if kept >= e {
        return Err(Error::InvalidArgument(format!(
            "{kept} symbols is not below the source size {e}"
        )));
    }
    Ok(kept as f64 / e as f64)
}
