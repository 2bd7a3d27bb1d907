//! Single-user transmission of one cube: encode, rank, mask, send, recover,
//! decode and score.

use std::collections::HashMap;

use crate::channel::{self, ChannelConfig, ChannelKind, DigitalConfig};
use crate::codec::{Codec, LatentVector};
use crate::metrics::{self, ErrorSums};
use crate::pointcloud::{Point, PointCloud};
use crate::rate::{self, ImportanceContext, ImportanceMethod, RateMask};
use crate::voxel::{partition, Cube};
use crate::{seed, Error, Result};

/// A cube plus the reference needed to score its reconstruction: its global
/// points and their normals, estimated on the whole parent cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCube {
    pub cube: Cube,
    pub points: Vec<Point>,
    pub normals: Vec<[f64; 3]>,
    pub precision_b: u32,
}

impl EvalCube {
    /// Partitions `pc` and attaches normals estimated with `normal_k` neighbors.
    pub fn from_cloud(pc: &PointCloud, side: usize, normal_k: usize) -> Result<Vec<EvalCube>> {
        let normals = metrics::estimate_normals(pc, normal_k)?;
        let lookup: HashMap<Point, [f64; 3]> = pc.points().iter().copied().zip(normals).collect();
        partition(pc, side)?
            .into_iter()
            .map(|cube| {
                let points = cube.global_points();
                let normals = points.iter().map(|p| lookup[p]).collect();
                Ok(EvalCube {
                    cube,
                    points,
                    normals,
                    precision_b: pc.precision_b(),
                })
            })
            .collect()
    }

    /// Error sums from the reference points to the reconstruction.
    pub fn errors(&self, reconstruction: &Cube) -> Result<ErrorSums> {
        if reconstruction.index() != self.cube.index() || reconstruction.side() != self.cube.side() {
            return Err(Error::Shape("reconstruction does not cover the same cube".into()));
        }
        metrics::error_sums(&self.points, Some(&self.normals), &reconstruction.global_points())
    }
}

/// PSNR D1 and D2 of pooled error sums.
pub fn pooled_psnr(sums: &ErrorSums, precision_b: u32) -> Result<(f64, f64)> {
    if sums.count == 0 {
        return Err(Error::InvalidArgument("no points were scored".into()));
    }
    Ok((
        metrics::psnr(sums.mse_c2c(), precision_b)?,
        metrics::psnr(sums.mse_c2p(), precision_b)?,
    ))
}

/// Seed of the channel draw for one cube and repetition.
pub fn channel_seed(base: u64, cube: usize, repetition: usize) -> u64 {
    seed::derive_all(base, &[cube as u64, repetition as u64])
}

/// How latents cross the channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Analog symbols, power normalized, with the scale as side information.
    Jscc(ChannelConfig),
    /// Quantize, channel code and modulate.
    Digital(ChannelConfig, DigitalConfig),
}

/// Sends real values over `ch` with power normalization around it. A
/// noiseless link returns the input untouched.
pub fn send_analog(values: &[f64], ch: &ChannelConfig) -> Result<Vec<f64>> {
    ch.validate()?;
    if ch.noise_variance() == 0.0 && (ch.kind == ChannelKind::Awgn || ch.csi) {
        return Ok(values.to_vec());
    }
    let (normed, scale) = channel::normalize_power(values);
    Ok(channel::transmit(&normed, ch)?.into_iter().map(|v| v * scale).collect())
}

impl Scheme {
    pub fn send(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            Scheme::Jscc(ch) => send_analog(values, ch),
            Scheme::Digital(ch, d) => channel::digital_transmit(values, ch, d),
        }
    }

    pub fn channel(&self) -> &ChannelConfig {
        match self {
            Scheme::Jscc(ch) | Scheme::Digital(ch, _) => ch,
        }
    }

    pub fn with_seed(self, seed: u64) -> Scheme {
        match self {
            Scheme::Jscc(ch) => Scheme::Jscc(ch.with_seed(seed)),
            Scheme::Digital(ch, d) => Scheme::Digital(ch.with_seed(seed), d),
        }
    }
}

/// Rate control settings at the transmitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateControl {
    pub method: ImportanceMethod,
    pub drop_ratio: f64,
    pub per_channel: bool,
    pub zeta: f64,
}

impl Default for RateControl {
    fn default() -> Self {
        RateControl {
            method: ImportanceMethod::Value,
            drop_ratio: 0.0,
            per_channel: false,
            zeta: crate::codec::DEFAULT_ZETA,
        }
    }
}

/// Outcome of one transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub mask: RateMask,
    pub received: LatentVector,
    pub reconstruction: Cube,
}

/// Runs the full single-user chain for one cube. `seed` drives the channel;
/// random importance scores use a seed derived from it.
pub fn transmit_cube(
    codec: &Codec<f32>,
    cube: &Cube,
    rate_control: &RateControl,
    scheme: &Scheme,
    seed: u64,
) -> Result<Transmission> {
    let y = codec.encode(cube)?;
    let mask = if rate_control.drop_ratio == 0.0 {
        RateMask::all(y.len())
    } else {
        let ctx = ImportanceContext {
            model: Some((codec, cube)),
            zeta: rate_control.zeta,
            per_channel: rate_control.per_channel,
            seed: seed::derive(seed, 0x7a4d),
        };
        let scores = rate::importance(&y, rate_control.method, &ctx)?;
        rate::build_mask(&scores, rate_control.drop_ratio)?
    };
    let z = rate::apply_mask(&y.values, &mask)?;
    let z_hat = scheme.with_seed(seed).send(&z)?;
    let received = y.with_values(rate::recover(&z_hat, &mask)?)?;
    let reconstruction = codec.reconstruct(&received, cube.k_occupied(), cube.index())?;
    Ok(Transmission {
        mask,
        received,
        reconstruction,
    })
}
