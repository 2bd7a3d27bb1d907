//! Experiment sweeps producing plot-ready rows.
//!
//! Every cell pools squared errors over all cubes and repetitions before
//! converting to PSNR, so a cell with some perfect reconstructions still
//! gets a finite value. Channel seeds depend only on the cube (or pair) and
//! repetition, never on the cell, so cells differ only in what they vary.

use crate::channel::{ChannelConfig, DigitalConfig};
use crate::codec::Codec;
use crate::exec::Exec;
use crate::metrics::ErrorSums;
use crate::pipeline::{channel_seed, pooled_psnr, transmit_cube, EvalCube, RateControl, Scheme};
use crate::rate::{self, ImportanceMethod};
use crate::{mdma, Error, Result};

fn precision(cubes: &[EvalCube]) -> Result<u32> {
    cubes
        .first()
        .map(|c| c.precision_b)
        .ok_or_else(|| Error::InvalidArgument("no evaluation cubes".into()))
}

/// Pooled error sums of single-user transmissions of every cube.
pub fn evaluate(
    codec: &Codec<f32>,
    cubes: &[EvalCube],
    rate_control: &RateControl,
    scheme: &Scheme,
    repetitions: usize,
    base_seed: u64,
) -> Result<ErrorSums> {
    let mut sums = ErrorSums::default();
    for (i, ec) in cubes.iter().enumerate() {
        for r in 0..repetitions {
            let t = transmit_cube(codec, &ec.cube, rate_control, scheme, channel_seed(base_seed, i, r))?;
            sums.add(&ec.errors(&t.reconstruction)?);
        }
    }
    Ok(sums)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub method: ImportanceMethod,
    pub drop_ratio: f64,
    pub cbr: f64,
    pub psnr_d1: f64,
    pub psnr_d2: f64,
}

#[derive(Clone, Debug)]
pub struct RateSweep {
    pub methods: Vec<ImportanceMethod>,
    pub drop_ratios: Vec<f64>,
    pub channel: ChannelConfig,
    pub per_channel: bool,
    pub repetitions: usize,
    pub seed: u64,
}

/// One row per `(method, drop ratio)`, methods outermost.
pub fn rate_sweep(codec: &Codec<f32>, cubes: &[EvalCube], sweep: &RateSweep, exec: Exec) -> Result<Vec<RateRow>> {
    let b = precision(cubes)?;
    let cells: Vec<(ImportanceMethod, f64)> = sweep
        .methods
        .iter()
        .flat_map(|&m| sweep.drop_ratios.iter().map(move |&r| (m, r)))
        .collect();
    let len = codec.latent_len();
    let side = codec.config().side;
    exec.try_map(&cells, |&(method, drop_ratio)| {
        let rc = RateControl {
            method,
            drop_ratio,
            per_channel: sweep.per_channel,
            ..RateControl::default()
        };
        let sums = evaluate(
            codec,
            cubes,
            &rc,
            &Scheme::Jscc(sweep.channel),
            sweep.repetitions,
            sweep.seed,
        )?;
        let (psnr_d1, psnr_d2) = pooled_psnr(&sums, b)?;
        Ok(RateRow {
            method,
            drop_ratio,
            cbr: rate::cbr(len - rate::drop_count(len, drop_ratio), side)?,
            psnr_d1,
            psnr_d2,
        })
    })
}

/// A named transmission scheme whose SNR is set per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    pub name: String,
    pub scheme: Scheme,
}

impl SchemeSpec {
    /// Analog AWGN, analog Rayleigh, and 16-QAM with Hamming(7,4) over AWGN.
    pub fn defaults() -> Vec<SchemeSpec> {
        vec![
            SchemeSpec {
                name: "jscc_awgn".into(),
                scheme: Scheme::Jscc(ChannelConfig::awgn(0.0, 0)),
            },
            SchemeSpec {
                name: "jscc_rayleigh".into(),
                scheme: Scheme::Jscc(ChannelConfig::rayleigh(0.0, 0)),
            },
            SchemeSpec {
                name: "digital_awgn".into(),
                scheme: Scheme::Digital(ChannelConfig::awgn(0.0, 0), DigitalConfig::default()),
            },
        ]
    }

    fn at_snr(&self, snr_db: f64) -> Scheme {
        match self.scheme {
            Scheme::Jscc(ch) => Scheme::Jscc(ch.with_snr(snr_db)),
            Scheme::Digital(ch, d) => Scheme::Digital(ch.with_snr(snr_db), d),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnrRow {
    pub scheme: String,
    pub snr_db: f64,
    pub psnr_d1: f64,
    pub psnr_d2: f64,
}

/// One row per `(scheme, snr)`, schemes outermost, without rate control.
pub fn snr_sweep(
    codec: &Codec<f32>,
    cubes: &[EvalCube],
    schemes: &[SchemeSpec],
    snr_grid_db: &[f64],
    repetitions: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SnrRow>> {
    let b = precision(cubes)?;
    let cells: Vec<(usize, f64)> = (0..schemes.len())
        .flat_map(|s| snr_grid_db.iter().map(move |&v| (s, v)))
        .collect();
    exec.try_map(&cells, |&(s, snr_db)| {
        let scheme = schemes[s].at_snr(snr_db);
        let sums = evaluate(codec, cubes, &RateControl::default(), &scheme, repetitions, seed)?;
        let (psnr_d1, psnr_d2) = pooled_psnr(&sums, b)?;
        Ok(SnrRow {
            scheme: schemes[s].name.clone(),
            snr_db,
            psnr_d1,
            psnr_d2,
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdmaRow {
    pub sor: f64,
    pub snr_db: f64,
    /// 1 or 2.
    pub user: u8,
    pub psnr_d1: f64,
    pub psnr_d2: f64,
    pub occupancy: f64,
    /// Mean over pairs.
    pub sigma_at_sor: f64,
}

/// Two rows (one per user) per `(sor, snr)`, `sor` outermost.
pub fn mdma_sweep(
    codec: &Codec<f32>,
    pairs: &[(EvalCube, EvalCube)],
    sor_grid: &[f64],
    snr_grid_db: &[f64],
    repetitions: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<MdmaRow>> {
    let b = pairs
        .first()
        .map(|p| p.0.precision_b)
        .ok_or_else(|| Error::InvalidArgument("no evaluation pairs".into()))?;
    let cells: Vec<(f64, f64)> = sor_grid
        .iter()
        .flat_map(|&s| snr_grid_db.iter().map(move |&v| (s, v)))
        .collect();
    let rows = exec.try_map(&cells, |&(sor, snr_db)| -> Result<[MdmaRow; 2]> {
        let ch = ChannelConfig::awgn(snr_db, 0);
        let mut sums = [ErrorSums::default(); 2];
        let mut sigma = 0.0;
        for (p, (a, c)) in pairs.iter().enumerate() {
            for r in 0..repetitions {
                let out = mdma::downlink(codec, &a.cube, &c.cube, sor, &ch, channel_seed(seed, p, r))?;
                sums[0].add(&a.errors(&out.reconstruction1)?);
                sums[1].add(&c.errors(&out.reconstruction2)?);
                if r == 0 {
                    sigma += out.diagnostics.sigma_at_sor;
                }
            }
        }
        let sigma_at_sor = sigma / pairs.len() as f64;
        let row = |user: u8, s: &ErrorSums| -> Result<MdmaRow> {
            let (psnr_d1, psnr_d2) = pooled_psnr(s, b)?;
            Ok(MdmaRow {
                sor,
                snr_db,
                user,
                psnr_d1,
                psnr_d2,
                occupancy: mdma::occupancy(sor),
                sigma_at_sor,
            })
        };
        Ok([row(1, &sums[0])?, row(2, &sums[1])?])
    })?;
    Ok(rows.into_iter().flatten().collect())
}
