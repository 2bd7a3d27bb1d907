//! Two-user model division multiple access.
//!
//! Both users' latents come from the same codec. The entries where they
//! differ least form the shared part: it is superposed (`S1 + S2`), sent
//! once, and each user takes half of what arrives. The rest is sent per user.
//! Sending `(2 - sor) * L` values instead of `2 L` is the bandwidth saving.
//!
//! Shared-index agreement is genie-aided: the simulator sees both latents.
//! The uplink therefore computes exactly what the downlink does.

use crate::channel::ChannelConfig;
use crate::codec::{Codec, LatentVector};
use crate::pipeline::send_analog;
use crate::voxel::Cube;
use crate::{seed, Error, Result};

/// Threshold below which two latent entries count as the same.
pub const DEFAULT_SHARED_THRESHOLD: f64 = 0.001;

fn check_sor(sor: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&sor) {
        return Err(Error::InvalidArgument(format!("sor {sor} outside [0, 1]")));
    }
    Ok(())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "latent lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `|S1 - S2|` elementwise.
pub fn sigma(s1: &[f64], s2: &[f64]) -> Result<Vec<f64>> {
    check_lengths(s1, s2)?;
    Ok(s1.iter().zip(s2).map(|(a, b)| (a - b).abs()).collect())
}

/// Indices ordered by ascending `sigma`, lower index first among ties.
fn sigma_order(sigma: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]).then(a.cmp(&b)));
    order
}

pub fn shared_len(len: usize, sor: f64) -> usize {
    ((len as f64 * sor + 1e-9).floor() as usize).min(len)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdmaFrame {
    pub len: usize,
    pub sor: f64,
    /// Ascending.
    pub shared_indices: Vec<usize>,
    /// Ascending complement of `shared_indices`.
    pub personal_indices: Vec<usize>,
    /// `S1 + S2` over `shared_indices`.
    pub shared: Vec<f64>,
    pub personal1: Vec<f64>,
    pub personal2: Vec<f64>,
}

impl MdmaFrame {
    /// Values on the air: one shared slot plus two personal slots.
    pub fn transmitted_len(&self) -> usize {
        self.shared.len() + self.personal1.len() + self.personal2.len()
    }

    /// Rebuilds a full latent from a shared part and a personal part.
    pub fn merge(&self, shared: &[f64], personal: &[f64]) -> Result<Vec<f64>> {
        if shared.len() != self.shared_indices.len() || personal.len() != self.personal_indices.len() {
            return Err(Error::Shape("parts do not match the frame".into()));
        }
        let mut out = vec![0.0; self.len];
        for (&i, &v) in self.shared_indices.iter().zip(shared) {
            out[i] = v;
        }
        for (&i, &v) in self.personal_indices.iter().zip(personal) {
            out[i] = v;
        }
        Ok(out)
    }
}

/// Picks the `floor(L * sor)` entries with the smallest `|S1 - S2|` as the
/// shared part and superposes them.
pub fn split_shared(s1: &[f64], s2: &[f64], sor: f64) -> Result<MdmaFrame> {
    check_sor(sor)?;
    let sg = sigma(s1, s2)?;
    let n = shared_len(s1.len(), sor);
    let mut shared_indices = sigma_order(&sg)[..n].to_vec();
    shared_indices.sort_unstable();
    let mut is_shared = vec![false; s1.len()];
    for &i in &shared_indices {
        is_shared[i] = true;
    }
    let personal_indices: Vec<usize> = (0..s1.len()).filter(|&i| !is_shared[i]).collect();
    Ok(MdmaFrame {
        len: s1.len(),
        sor,
        shared: shared_indices.iter().map(|&i| s1[i] + s2[i]).collect(),
        personal1: personal_indices.iter().map(|&i| s1[i]).collect(),
        personal2: personal_indices.iter().map(|&i| s2[i]).collect(),
        shared_indices,
        personal_indices,
    })
}

/// Each user's estimate of its shared part: half the received superposition.
pub fn extract_shared(received: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let half: Vec<f64> = received.iter().map(|v| 0.5 * v).collect();
    (half.clone(), half)
}

/// Entries whose users differ by less than `threshold`.
pub fn shared_count(s1: &[f64], s2: &[f64], threshold: f64) -> Result<usize> {
    Ok(sigma(s1, s2)?.iter().filter(|&&d| d < threshold).count())
}

/// The `sigma` value at rank `floor(L * sor)` of the ascending order,
/// clamped to the largest.
pub fn sigma_at_sor(s1: &[f64], s2: &[f64], sor: f64) -> Result<f64> {
    check_sor(sor)?;
    let mut sg = sigma(s1, s2)?;
    if sg.is_empty() {
        return Err(Error::InvalidArgument("empty latents".into()));
    }
    sg.sort_by(f64::total_cmp);
    Ok(sg[shared_len(sg.len(), sor).min(sg.len() - 1)])
}

/// Fraction of the two-user orthogonal bandwidth in use.
pub fn occupancy(sor: f64) -> f64 {
    (2.0 - sor) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SorMetrics {
    /// Shared fraction of the latent, in `[0, 1]`.
    pub sor_fraction: f64,
    /// Shared symbols over all symbols of both users, in `[0, 0.5]`.
    pub sor_symbols: f64,
    pub feasibility: f64,
}

/// `R_c / R_s`.
pub fn feasibility(rate_common: f64, rate_semantic: f64) -> f64 {
    rate_common / rate_semantic
}

impl SorMetrics {
    pub fn new(sor: f64, rate_common: f64, rate_semantic: f64) -> Self {
        SorMetrics {
            sor_fraction: sor,
            sor_symbols: sor / 2.0,
            feasibility: feasibility(rate_common, rate_semantic),
        }
    }
}

/// Per-run diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct MdmaDiagnostics {
    pub sor: f64,
    pub shared_symbols: usize,
    pub transmitted_symbols: usize,
    pub occupancy: f64,
    pub sigma_at_sor: f64,
    pub sigma_mean: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdmaOutcome {
    pub received1: LatentVector,
    pub received2: LatentVector,
    pub reconstruction1: Cube,
    pub reconstruction2: Cube,
    pub diagnostics: MdmaDiagnostics,
}

/// Channel seeds: shared slot `derive(seed, 0)`, user `i` `derive(seed, i)`.
/// User `i` at `sor = 0` therefore matches a single-user run with seed
/// `derive(seed, i)`.
pub fn slot_seed(seed: u64, slot: u64) -> u64 {
    seed::derive(seed, slot)
}

/// Sends an already split frame; returns each user's received latent values.
pub fn transmit_frame(frame: &MdmaFrame, ch: &ChannelConfig, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let shared = send_analog(&frame.shared, &ch.with_seed(slot_seed(seed, 0)))?;
    let p1 = send_analog(&frame.personal1, &ch.with_seed(slot_seed(seed, 1)))?;
    let p2 = send_analog(&frame.personal2, &ch.with_seed(slot_seed(seed, 2)))?;
    let (h1, h2) = extract_shared(&shared);
    Ok((frame.merge(&h1, &p1)?, frame.merge(&h2, &p2)?))
}

/// Base station to two users.
pub fn downlink(
    codec: &Codec<f32>,
    x1: &Cube,
    x2: &Cube,
    sor: f64,
    ch: &ChannelConfig,
    seed: u64,
) -> Result<MdmaOutcome> {
    let s1 = codec.encode(x1)?;
    let s2 = codec.encode(x2)?;
    let frame = split_shared(&s1.values, &s2.values, sor)?;
    let (r1, r2) = transmit_frame(&frame, ch, seed)?;
    let received1 = s1.with_values(r1)?;
    let received2 = s2.with_values(r2)?;
    let sg = sigma(&s1.values, &s2.values)?;
    let diagnostics = MdmaDiagnostics {
        sor,
        shared_symbols: frame.shared.len(),
        transmitted_symbols: frame.transmitted_len(),
        occupancy: occupancy(sor),
        sigma_at_sor: sigma_at_sor(&s1.values, &s2.values, sor)?,
        sigma_mean: sg.iter().sum::<f64>() / sg.len().max(1) as f64,
        sigma_max: sg.iter().copied().fold(0.0, f64::max),
    };
    Ok(MdmaOutcome {
        reconstruction1: codec.reconstruct(&received1, x1.k_occupied(), x1.index())?,
        reconstruction2: codec.reconstruct(&received2, x2.k_occupied(), x2.index())?,
        received1,
        received2,
        diagnostics,
    })
}

/// Two users to the base station: the shared parts superpose in the air in
/// slot one, personal parts follow in slot two. With a genie-aided shared
/// set this is the same computation as [`downlink`].
pub fn uplink(
    codec: &Codec<f32>,
    x1: &Cube,
    x2: &Cube,
    sor: f64,
    ch: &ChannelConfig,
    seed: u64,
) -> Result<MdmaOutcome> {
    downlink(codec, x1, x2, sor, ch, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extraction_halves() {
        assert_eq!(extract_shared(&[4.0, -2.0]), (vec![2.0, -1.0], vec![2.0, -1.0]));
        assert_eq!(extract_shared(&[0.0]).0, vec![0.0]);
    }

    #[test]
    fn occupancy_endpoints() {
        assert_eq!(occupancy(0.0), 1.0);
        assert_eq!(occupancy(1.0), 0.5);
    }

    #[test]
    fn shared_count_examples() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(shared_count(&a, &a, DEFAULT_SHARED_THRESHOLD).unwrap(), 3);
        let b: Vec<f64> = a.iter().map(|v| v + 0.002).collect();
        assert_eq!(shared_count(&a, &b, DEFAULT_SHARED_THRESHOLD).unwrap(), 0);
        assert!(shared_count(&a, &b[..2], 0.1).is_err());
    }

    #[test]
    fn split_degenerate_cases() {
        let s1 = [1.0, 2.0, 3.0, 4.0];
        let f = split_shared(&s1, &s1, 0.5).unwrap();
        assert_eq!(f.shared_indices, vec![0, 1]);
        let (r1, r2) = transmit_frame(&f, &ChannelConfig::awgn(f64::INFINITY, 0), 3).unwrap();
        assert_eq!(r1, s1);
        assert_eq!(r2, s1);
        let f0 = split_shared(&s1, &[0.0; 4], 0.0).unwrap();
        assert!(f0.shared.is_empty());
        assert_eq!(f0.transmitted_len(), 8);
        assert!(split_shared(&s1, &s1, 1.5).is_err());
    }

    #[test]
    fn sigma_at_sor_endpoints() {
        let s1 = [0.0, 0.0, 0.0, 0.0];
        let s2 = [0.5, -2.0, 0.1, 1.0];
        assert_eq!(sigma_at_sor(&s1, &s2, 0.0).unwrap(), 0.1);
        assert_eq!(sigma_at_sor(&s1, &s2, 1.0).unwrap(), 2.0);
        assert_eq!(sigma_at_sor(&s1, &s2, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn sor_metrics() {
        let m = SorMetrics::new(0.6, 2.0, 4.0);
        assert_eq!(m.sor_symbols, 0.3);
        assert_eq!(m.feasibility, 0.5);
    }
}
