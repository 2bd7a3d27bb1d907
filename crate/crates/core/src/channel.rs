//! Physical channels, power normalization and a separate source/channel
//! coded digital baseline.
//!
//! Real sequences are carried two values per complex symbol. A real sequence
//! with unit mean square maps to unit-power complex symbols, and the noise per
//! real component after unpacking has variance `10^(-snr_db / 10)`, so the SNR
//! measured on the real sequence equals the configured SNR.

use std::f64::consts::SQRT_2;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        }
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            _ => Err(Error::Config(format!("unknown channel kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
    /// One fading coefficient per transmission instead of per symbol.
    pub block_fading: bool,
    /// Zero-forcing equalization with perfect channel knowledge. Without it
    /// the receiver sees `h * z + n`.
    pub csi: bool,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        ChannelConfig {
            kind: ChannelKind::Awgn,
            snr_db,
            seed,
            block_fading: true,
            csi: true,
        }
    }

    pub fn rayleigh(snr_db: f64, seed: u64) -> Self {
        ChannelConfig {
            kind: ChannelKind::Rayleigh,
            ..ChannelConfig::awgn(snr_db, seed)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ChannelConfig { seed, ..self }
    }

    pub fn with_snr(self, snr_db: f64) -> Self {
        ChannelConfig { snr_db, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("snr_db {} is not usable", self.snr_db)));
        }
        Ok(())
    }

    /// Complex noise variance per unit-power symbol.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }
}

/// Scales `z` to unit mean square. The returned scale undoes it; an all-zero
/// (or empty) input passes through with scale 1.
pub fn normalize_power(z: &[f64]) -> (Vec<f64>, f64) {
    if z.is_empty() {
        return (Vec::new(), 1.0);
    }
    let ms = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    if ms == 0.0 {
        return (z.to_vec(), 1.0);
    }
    let scale = ms.sqrt();
    (z.iter().map(|v| v / scale).collect(), scale)
}

type Complex = (f64, f64);

fn cn<R: Rng>(rng: &mut R, variance: f64) -> Complex {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (re * s, im * s)
}

fn cmul(a: Complex, b: Complex) -> Complex {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cdiv(a: Complex, b: Complex) -> Complex {
    let d = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
}

/// Passes unit-power complex symbols through the configured channel in place.
fn apply_channel(symbols: &mut [Complex], cfg: &ChannelConfig) -> Result<()> {
    cfg.validate()?;
    let var = cfg.noise_variance();
    let mut rng = seed::rng(cfg.seed);
    match cfg.kind {
        ChannelKind::Awgn => {
            if var > 0.0 {
                for s in symbols.iter_mut() {
                    let n = cn(&mut rng, var);
                    *s = (s.0 + n.0, s.1 + n.1);
                }
            }
        }
        ChannelKind::Rayleigh => {
            let mut h = cn(&mut rng, 1.0);
            for (i, s) in symbols.iter_mut().enumerate() {
                if !cfg.block_fading && i > 0 {
                    h = cn(&mut rng, 1.0);
                }
                let n = if var > 0.0 { cn(&mut rng, var) } else { (0.0, 0.0) };
                *s = if cfg.csi {
                    let e = cdiv(n, h);
                    (s.0 + e.0, s.1 + e.1)
                } else {
                    let r = cmul(h, *s);
                    (r.0 + n.0, r.1 + n.1)
                };
            }
        }
    }
    Ok(())
}

/// Sends a real sequence over the channel, two reals per complex symbol.
pub fn transmit(z: &[f64], cfg: &ChannelConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.snr_db == f64::INFINITY && (cfg.kind == ChannelKind::Awgn || cfg.csi) {
        return Ok(z.to_vec());
    }
    let mut symbols: Vec<Complex> = z
        .chunks(2)
        .map(|c| (c[0] / SQRT_2, c.get(1).copied().unwrap_or(0.0) / SQRT_2))
        .collect();
    apply_channel(&mut symbols, cfg)?;
    let mut out: Vec<f64> = symbols.iter().flat_map(|s| [s.0 * SQRT_2, s.1 * SQRT_2]).collect();
    out.truncate(z.len());
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
        }
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            _ => Err(Error::Config(format!("unknown modulation {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelCode {
    None,
    Hamming74,
}

impl ChannelCode {
    pub fn name(self) -> &'static str {
        match self {
            ChannelCode::None => "none",
            ChannelCode::Hamming74 => "hamming74",
        }
    }
}

impl FromStr for ChannelCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ChannelCode::None),
            "hamming74" | "hamming" => Ok(ChannelCode::Hamming74),
            _ => Err(Error::Config(format!("unknown channel code {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DigitalConfig {
    pub bits_per_value: u32,
    pub modulation: Modulation,
    pub code: ChannelCode,
}

impl Default for DigitalConfig {
    fn default() -> Self {
        DigitalConfig {
            bits_per_value: 8,
            modulation: Modulation::Qam16,
            code: ChannelCode::Hamming74,
        }
    }
}

/// Systematic Hamming(7,4): `[d1 d2 d3 d4 p1 p2 p3]`.
pub fn hamming74_encode(bits: &[bool]) -> Vec<bool> {
    let mut out = Vec::with_capacity(bits.len().div_ceil(4) * 7);
    for chunk in bits.chunks(4) {
        let mut d = [false; 4];
        d[..chunk.len()].copy_from_slice(chunk);
        out.extend_from_slice(&d);
        out.push(d[0] ^ d[1] ^ d[3]);
        out.push(d[0] ^ d[2] ^ d[3]);
        out.push(d[1] ^ d[2] ^ d[3]);
    }
    out
}

/// Decodes 7-bit blocks, correcting up to one flipped bit per block. Returns
/// four data bits per block.
pub fn hamming74_decode(code: &[bool]) -> Result<Vec<bool>> {
    if !code.len().is_multiple_of(7) {
        return Err(Error::InvalidArgument(format!(
            "Hamming(7,4) input length {} is not a multiple of 7",
            code.len()
        )));
    }
    // Syndrome bit pattern of each position in the block.
    const COLUMNS: [u8; 7] = [0b011, 0b101, 0b110, 0b111, 0b001, 0b010, 0b100];
    let mut out = Vec::with_capacity(code.len() / 7 * 4);
    for block in code.chunks(7) {
        let mut b = [false; 7];
        b.copy_from_slice(block);
        let s1 = b[0] ^ b[1] ^ b[3] ^ b[4];
        let s2 = b[0] ^ b[2] ^ b[3] ^ b[5];
        let s3 = b[1] ^ b[2] ^ b[3] ^ b[6];
        let syndrome = (s1 as u8) | (s2 as u8) << 1 | (s3 as u8) << 2;
        if let Some(pos) = COLUMNS.iter().position(|&c| c == syndrome) {
            b[pos] = !b[pos];
        }
        out.extend_from_slice(&b[..4]);
    }
    Ok(out)
}

/// Gray-coded 4-PAM level for two bits, unnormalized (`-3, -1, 1, 3`).
fn pam4(b0: bool, b1: bool) -> f64 {
    match (b0, b1) {
        (false, false) => -3.0,
        (false, true) => -1.0,
        (true, true) => 1.0,
        (true, false) => 3.0,
    }
}

fn pam4_decide(v: f64) -> (bool, bool) {
    if v < -2.0 {
        (false, false)
    } else if v < 0.0 {
        (false, true)
    } else if v < 2.0 {
        (true, true)
    } else {
        (true, false)
    }
}

/// Maps bits to unit average power symbols; the tail is zero padded.
pub fn modulate(bits: &[bool], m: Modulation) -> Vec<(f64, f64)> {
    let k = m.bits_per_symbol();
    let bit = |chunk: &[bool], i: usize| chunk.get(i).copied().unwrap_or(false);
    let level = |b: bool| if b { -1.0 } else { 1.0 };
    bits.chunks(k)
        .map(|c| match m {
            Modulation::Bpsk => (level(bit(c, 0)), 0.0),
            Modulation::Qpsk => (level(bit(c, 0)) / SQRT_2, level(bit(c, 1)) / SQRT_2),
            Modulation::Qam16 => {
                let s = 10f64.sqrt();
                (pam4(bit(c, 0), bit(c, 1)) / s, pam4(bit(c, 2), bit(c, 3)) / s)
            }
        })
        .collect()
}

/// Hard-decision demodulation; returns `bits_per_symbol` bits per symbol.
pub fn demodulate(symbols: &[(f64, f64)], m: Modulation) -> Vec<bool> {
    let mut out = Vec::with_capacity(symbols.len() * m.bits_per_symbol());
    for &(re, im) in symbols {
        match m {
            Modulation::Bpsk => out.push(re < 0.0),
            Modulation::Qpsk => {
                out.push(re < 0.0);
                out.push(im < 0.0);
            }
            Modulation::Qam16 => {
                let s = 10f64.sqrt();
                let (a, b) = pam4_decide(re * s);
                let (c, d) = pam4_decide(im * s);
                out.extend([a, b, c, d]);
            }
        }
    }
    out
}

/// Sends bits through modulation and the channel; returns the hard decisions.
pub fn transmit_bits(bits: &[bool], m: Modulation, cfg: &ChannelConfig) -> Result<Vec<bool>> {
    let mut symbols = modulate(bits, m);
    apply_channel(&mut symbols, cfg)?;
    let mut out = demodulate(&symbols, m);
    out.truncate(bits.len());
    Ok(out)
}

/// Uniform scalar quantization over the observed range, then channel coding,
/// modulation, the channel, hard decisions, decoding and dequantization. The
/// range is side information and arrives intact.
pub fn digital_transmit(y: &[f64], cfg: &ChannelConfig, digital: &DigitalConfig) -> Result<Vec<f64>> {
    let b = digital.bits_per_value;
    if !(2..=16).contains(&b) {
        return Err(Error::InvalidArgument(format!("bits_per_value {b} outside [2, 16]")));
    }
    if y.is_empty() {
        return Ok(Vec::new());
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let levels = (1u32 << b) - 1;
    let step = (hi - lo) / levels as f64;
    let codes: Vec<u32> = y
        .iter()
        .map(|&v| {
            if step > 0.0 {
                ((v - lo) / step).round().clamp(0.0, levels as f64) as u32
            } else {
                0
            }
        })
        .collect();
    let mut bits = Vec::with_capacity(codes.len() * b as usize);
    for &c in &codes {
        for i in (0..b).rev() {
            bits.push(c >> i & 1 == 1);
        }
    }
    let coded = match digital.code {
        ChannelCode::None => bits.clone(),
        ChannelCode::Hamming74 => hamming74_encode(&bits),
    };
    let received = transmit_bits(&coded, digital.modulation, cfg)?;
    let mut decoded = match digital.code {
        ChannelCode::None => received,
        ChannelCode::Hamming74 => hamming74_decode(&received)?,
    };
    decoded.truncate(bits.len());
    Ok(decoded
        .chunks(b as usize)
        .map(|c| {
            let code = c.iter().fold(0u32, |acc, &bit| acc << 1 | bit as u32);
            lo + code as f64 * step
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_power(&[2.0, 2.0]), (vec![1.0, 1.0], 2.0));
        assert_eq!(normalize_power(&[1.0, -1.0]), (vec![1.0, -1.0], 1.0));
        assert_eq!(normalize_power(&[0.0, 0.0]), (vec![0.0, 0.0], 1.0));
    }

    #[test]
    fn infinite_snr_is_exact() {
        let z = [0.3, -1.2, 2.0];
        assert_eq!(transmit(&z, &ChannelConfig::awgn(f64::INFINITY, 1)).unwrap(), z);
        assert_eq!(transmit(&z, &ChannelConfig::rayleigh(f64::INFINITY, 1)).unwrap(), z);
    }

    #[test]
    fn odd_length_is_preserved() {
        let z = [0.3, -1.2, 2.0];
        assert_eq!(transmit(&z, &ChannelConfig::awgn(5.0, 3)).unwrap().len(), 3);
    }

    #[test]
    fn nan_snr_rejected() {
        assert!(transmit(&[1.0], &ChannelConfig::awgn(f64::NAN, 1)).is_err());
    }

    #[test]
    fn rayleigh_without_csi_scales_by_h() {
        let cfg = ChannelConfig {
            csi: false,
            ..ChannelConfig::rayleigh(f64::INFINITY, 9)
        };
        let a = transmit(&[1.0, 0.0], &cfg).unwrap();
        let b = transmit(&[2.0, 0.0], &cfg).unwrap();
        assert!((b[0] - 2.0 * a[0]).abs() < 1e-12 && (b[1] - 2.0 * a[1]).abs() < 1e-12);
        assert!(a != vec![1.0, 0.0]);
    }

    #[test]
    fn hamming_corrects_every_single_flip() {
        for word in 0..16u8 {
            let data: Vec<bool> = (0..4).map(|i| word >> i & 1 == 1).collect();
            let code = hamming74_encode(&data);
            assert_eq!(hamming74_decode(&code).unwrap(), data);
            for flip in 0..7 {
                let mut c = code.clone();
                c[flip] = !c[flip];
                assert_eq!(hamming74_decode(&c).unwrap(), data, "word {word} flip {flip}");
            }
        }
    }

    #[test]
    fn modulation_round_trips_without_noise() {
        let bits: Vec<bool> = (0..37).map(|i| (i * 7) % 3 == 0).collect();
        for m in [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16] {
            let out = transmit_bits(&bits, m, &ChannelConfig::awgn(f64::INFINITY, 0)).unwrap();
            assert_eq!(out, bits, "{m:?}");
            let syms = modulate(&bits, m);
            let p = syms.iter().map(|s| s.0 * s.0 + s.1 * s.1).sum::<f64>() / syms.len() as f64;
            if m != Modulation::Qam16 {
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
        let all: Vec<bool> = (0..64).map(|i| (i / 4) >> (3 - i % 4) & 1 == 1).collect();
        let syms = modulate(&all, Modulation::Qam16);
        let p = syms.iter().map(|s| s.0 * s.0 + s.1 * s.1).sum::<f64>() / 16.0;
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_digital_is_quantization_only() {
        let y: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 / 17.0 - 2.0).collect();
        let d = DigitalConfig::default();
        let out = digital_transmit(&y, &ChannelConfig::awgn(f64::INFINITY, 1), &d).unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let half = (hi - lo) / 255.0 / 2.0;
        for (a, b) in y.iter().zip(&out) {
            assert!((a - b).abs() <= half + 1e-12);
        }
        assert!(digital_transmit(
            &y,
            &ChannelConfig::awgn(1.0, 1),
            &DigitalConfig { bits_per_value: 1, ..d }
        )
        .is_err());
    }
}
