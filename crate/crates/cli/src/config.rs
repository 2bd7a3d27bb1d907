//! Experiment configuration, read from TOML. Every section and key is
//! optional; unknown keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcsc::channel::{ChannelCode, ChannelConfig, ChannelKind, DigitalConfig, Modulation};
use pcsc::codec::{CodecConfig, TrainConfig};
use pcsc::metrics::Direction;
use pcsc::pipeline::Scheme;
use pcsc::pointcloud::ShapeKind;
use pcsc::rate::ImportanceMethod;
use pcsc::sweep::SchemeSpec;
use pcsc::{seed, Exec};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Seed streams split off the top-level seed.
pub mod streams {
    pub const TRAIN_CORPUS: u64 = 1;
    pub const TEST_CORPUS: u64 = 2;
    pub const CODEC_INIT: u64 = 3;
    pub const TRAINING: u64 = 4;
    /// Shared by the rate and SNR sweeps so their common cells agree.
    pub const EVAL: u64 = 5;
    pub const MDMA_SWEEP: u64 = 6;
    pub const SSE: u64 = 7;
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
    pub parallel: bool,
    pub dataset: DatasetSection,
    pub codec: CodecSection,
    pub train: TrainSection,
    pub rate_sweep: RateSweepSection,
    pub snr_sweep: SnrSweepSection,
    pub mdma_sweep: MdmaSweepSection,
    pub sse: SseSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            parallel: true,
            dataset: DatasetSection::default(),
            codec: CodecSection::default(),
            train: TrainSection::default(),
            rate_sweep: RateSweepSection::default(),
            snr_sweep: SnrSweepSection::default(),
            mdma_sweep: MdmaSweepSection::default(),
            sse: SseSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Synthetic shape kinds, cycled over the clouds.
    pub kinds: Vec<String>,
    pub train_clouds: usize,
    pub test_clouds: usize,
    pub points: usize,
    pub precision_b: u32,
    /// Cubes with fewer occupied voxels are skipped.
    pub min_points: usize,
    pub max_train_cubes: usize,
    pub max_test_cubes: usize,
    pub max_pairs: usize,
    pub normal_k: usize,
    /// Read clouds from a manifest written by `gen-data` instead of
    /// generating them in memory.
    pub manifest: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            kinds: ShapeKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            train_clouds: 16,
            test_clouds: 4,
            points: 40_000,
            precision_b: 6,
            min_points: 16,
            max_train_cubes: 512,
            max_test_cubes: 24,
            max_pairs: 10,
            normal_k: pcsc::metrics::DEFAULT_NORMAL_K,
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSection {
    pub side: usize,
    pub widths: [usize; 3],
    pub blocks_per_stage: usize,
    pub latent_channels: usize,
}

impl Default for CodecSection {
    fn default() -> Self {
        let c = CodecConfig::default();
        CodecSection {
            side: c.side,
            widths: c.widths,
            blocks_per_stage: c.blocks_per_stage,
            latent_channels: c.latent_channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub zeta: f64,
    /// `awgn`, `rayleigh` or `none`.
    pub channel: String,
    pub snr_db: f64,
    pub max_steps: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            zeta: t.zeta,
            channel: "awgn".into(),
            snr_db: 10.0,
            max_steps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSweepSection {
    pub methods: Vec<String>,
    pub drop_ratios: Vec<f64>,
    pub channel: String,
    pub snr_db: f64,
    pub per_channel: bool,
    pub repetitions: usize,
}

impl Default for RateSweepSection {
    fn default() -> Self {
        RateSweepSection {
            methods: ImportanceMethod::ALL.iter().map(|m| m.name().to_string()).collect(),
            drop_ratios: (0..10).map(|i| i as f64 / 10.0).collect(),
            channel: "awgn".into(),
            snr_db: 10.0,
            per_channel: false,
            repetitions: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DigitalSection {
    pub bits_per_value: u32,
    pub modulation: String,
    pub code: String,
}

impl Default for DigitalSection {
    fn default() -> Self {
        let d = DigitalConfig::default();
        DigitalSection {
            bits_per_value: d.bits_per_value,
            modulation: d.modulation.name().into(),
            code: d.code.name().into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrSweepSection {
    /// `jscc_awgn`, `jscc_rayleigh`, `jscc_rayleigh_nocsi`, `digital_awgn`,
    /// `digital_rayleigh`.
    pub schemes: Vec<String>,
    pub snr_db: Vec<f64>,
    pub repetitions: usize,
    pub digital: DigitalSection,
}

impl Default for SnrSweepSection {
    fn default() -> Self {
        SnrSweepSection {
            schemes: SchemeSpec::defaults().into_iter().map(|s| s.name).collect(),
            snr_db: (-2..=14).map(f64::from).collect(),
            repetitions: 1,
            digital: DigitalSection::default(),
        }
    }
}

fn sor_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdmaSweepSection {
    pub sor: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub repetitions: usize,
}

impl Default for MdmaSweepSection {
    fn default() -> Self {
        MdmaSweepSection {
            sor: sor_grid(),
            snr_db: vec![10.0],
            repetitions: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SseQuery {
    pub snr_db: f64,
    pub g_th: f64,
    pub phi_th: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SseSection {
    pub sor: Vec<f64>,
    pub snr_db: Vec<f64>,
    /// Channel seeds per cell.
    pub repetitions: usize,
    /// Semantic information per latent symbol, `I / L`.
    pub i_over_l: f64,
    pub queries: Vec<SseQuery>,
}

impl Default for SseSection {
    fn default() -> Self {
        SseSection {
            sor: sor_grid(),
            snr_db: (0..=7).map(|i| 2.0 * i as f64).collect(),
            repetitions: 3,
            i_over_l: 1.0,
            queries: vec![
                SseQuery {
                    snr_db: 10.0,
                    g_th: 20.0,
                    phi_th: 10.0,
                },
                SseQuery {
                    snr_db: 10.0,
                    g_th: f64::INFINITY,
                    phi_th: 0.0,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `a_to_b`, `b_to_a` or `symmetric_max`.
    pub direction: String,
    pub normal_k: usize,
    /// Grid precision for PLY files without a `precision_b` comment.
    pub precision_b: u32,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            direction: Direction::SymmetricMax.name().into(),
            normal_k: pcsc::metrics::DEFAULT_NORMAL_K,
            precision_b: pcsc::pointcloud::DEFAULT_PRECISION,
        }
    }
}

fn parse<T: FromStr<Err = pcsc::Error>>(what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|e: pcsc::Error| CliError::Config(format!("{what}: {e}")))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn in_unit(what: &str, v: &[f64], upper_open: bool) -> Result<()> {
    check(!v.is_empty(), || format!("{what} is empty"))?;
    for &x in v {
        let ok = if upper_open {
            (0.0..1.0).contains(&x)
        } else {
            (0.0..=1.0).contains(&x)
        };
        check(ok, || {
            format!("{what}: {x} outside [0, 1{}", if upper_open { ")" } else { "]" })
        })?;
    }
    Ok(())
}

fn ascending(what: &str, v: &[f64]) -> Result<()> {
    check(!v.is_empty(), || format!("{what} is empty"))?;
    check(
        v.iter().all(|x| !x.is_nan()) && v.windows(2).all(|w| w[0] < w[1]),
        || format!("{what} must be strictly ascending"),
    )
}

fn channel(kind: &str, snr_db: f64) -> Result<ChannelConfig> {
    let k: ChannelKind = parse("channel", kind)?;
    let ch = match k {
        ChannelKind::Awgn => ChannelConfig::awgn(snr_db, 0),
        ChannelKind::Rayleigh => ChannelConfig::rayleigh(snr_db, 0),
    };
    ch.validate()?;
    Ok(ch)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| CliError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Serial
        }
    }

    pub fn stream(&self, stream: u64) -> u64 {
        seed::derive(self.seed, stream)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    pub fn shape_kinds(&self) -> Result<Vec<ShapeKind>> {
        check(!self.dataset.kinds.is_empty(), || "dataset.kinds is empty".into())?;
        self.dataset.kinds.iter().map(|k| parse("dataset.kinds", k)).collect()
    }

    pub fn codec_config(&self) -> Result<CodecConfig> {
        let c = CodecConfig {
            side: self.codec.side,
            widths: self.codec.widths,
            blocks_per_stage: self.codec.blocks_per_stage,
            latent_channels: self.codec.latent_channels,
            seed: self.stream(streams::CODEC_INIT),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        check(t.epochs > 0, || "train.epochs must be positive".into())?;
        check(t.batch_size > 0, || "train.batch_size must be positive".into())?;
        check(t.lr.is_finite() && t.lr >= 0.0, || {
            "train.lr must be finite and non-negative".into()
        })?;
        check(t.zeta.is_finite() && t.zeta > 0.0, || {
            "train.zeta must be positive".into()
        })?;
        let ch = match t.channel.as_str() {
            "none" => None,
            kind => Some(channel(kind, t.snr_db)?),
        };
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            zeta: t.zeta,
            channel: ch,
            seed: self.stream(streams::TRAINING),
            max_steps: t.max_steps,
        })
    }

    pub fn rate_methods(&self) -> Result<Vec<ImportanceMethod>> {
        check(!self.rate_sweep.methods.is_empty(), || {
            "rate_sweep.methods is empty".into()
        })?;
        self.rate_sweep
            .methods
            .iter()
            .map(|m| parse("rate_sweep.methods", m))
            .collect()
    }

    pub fn rate_channel(&self) -> Result<ChannelConfig> {
        channel(&self.rate_sweep.channel, self.rate_sweep.snr_db)
    }

    pub fn digital(&self) -> Result<DigitalConfig> {
        let d = &self.snr_sweep.digital;
        check((2..=16).contains(&d.bits_per_value), || {
            "snr_sweep.digital.bits_per_value must lie in [2, 16]".into()
        })?;
        Ok(DigitalConfig {
            bits_per_value: d.bits_per_value,
            modulation: parse::<Modulation>("snr_sweep.digital.modulation", &d.modulation)?,
            code: parse::<ChannelCode>("snr_sweep.digital.code", &d.code)?,
        })
    }

    pub fn schemes(&self) -> Result<Vec<SchemeSpec>> {
        check(!self.snr_sweep.schemes.is_empty(), || {
            "snr_sweep.schemes is empty".into()
        })?;
        let digital = self.digital()?;
        self.snr_sweep
            .schemes
            .iter()
            .map(|name| {
                let scheme = match name.as_str() {
                    "jscc_awgn" => Scheme::Jscc(ChannelConfig::awgn(0.0, 0)),
                    "jscc_rayleigh" => Scheme::Jscc(ChannelConfig::rayleigh(0.0, 0)),
                    "jscc_rayleigh_nocsi" => Scheme::Jscc(ChannelConfig {
                        csi: false,
                        ..ChannelConfig::rayleigh(0.0, 0)
                    }),
                    "digital_awgn" => Scheme::Digital(ChannelConfig::awgn(0.0, 0), digital),
                    "digital_rayleigh" => Scheme::Digital(ChannelConfig::rayleigh(0.0, 0), digital),
                    other => return Err(CliError::Config(format!("snr_sweep.schemes: unknown scheme {other:?}"))),
                };
                Ok(SchemeSpec {
                    name: name.clone(),
                    scheme,
                })
            })
            .collect()
    }

    pub fn direction(&self) -> Result<Direction> {
        parse("eval.direction", &self.eval.direction)
    }

    /// Checks everything that does not need the file system.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        self.shape_kinds()?;
        check(d.points > 0, || "dataset.points must be positive".into())?;
        check(d.train_clouds > 0 && d.test_clouds > 0, || {
            "dataset.train_clouds and dataset.test_clouds must be positive".into()
        })?;
        check((1..=pcsc::pointcloud::MAX_PRECISION).contains(&d.precision_b), || {
            format!("dataset.precision_b {} outside 1..=24", d.precision_b)
        })?;
        check(d.max_train_cubes > 0 && d.max_test_cubes > 0 && d.max_pairs > 0, || {
            "dataset cube limits must be positive".into()
        })?;
        check(d.normal_k >= 3, || "dataset.normal_k must be at least 3".into())?;
        let codec = self.codec_config()?;
        check(codec.side.is_power_of_two(), || {
            format!("codec.side {} is not a power of two", codec.side)
        })?;
        check((1u64 << d.precision_b) >= codec.side as u64, || {
            format!(
                "codec.side {} exceeds the grid of precision {}",
                codec.side, d.precision_b
            )
        })?;
        self.train_config()?;
        self.rate_methods()?;
        self.rate_channel()?;
        in_unit("rate_sweep.drop_ratios", &self.rate_sweep.drop_ratios, true)?;
        check(self.rate_sweep.repetitions > 0, || {
            "rate_sweep.repetitions must be positive".into()
        })?;
        self.schemes()?;
        check(!self.snr_sweep.snr_db.is_empty(), || "snr_sweep.snr_db is empty".into())?;
        check(
            self.snr_sweep
                .snr_db
                .iter()
                .all(|v| !v.is_nan() && *v != f64::NEG_INFINITY),
            || "snr_sweep.snr_db must be numbers or inf".into(),
        )?;
        check(self.snr_sweep.repetitions > 0, || {
            "snr_sweep.repetitions must be positive".into()
        })?;
        in_unit("mdma_sweep.sor", &self.mdma_sweep.sor, false)?;
        check(!self.mdma_sweep.snr_db.is_empty(), || {
            "mdma_sweep.snr_db is empty".into()
        })?;
        check(self.mdma_sweep.repetitions > 0, || {
            "mdma_sweep.repetitions must be positive".into()
        })?;
        in_unit("sse.sor", &self.sse.sor, false)?;
        ascending("sse.sor", &self.sse.sor)?;
        ascending("sse.snr_db", &self.sse.snr_db)?;
        check(self.sse.repetitions > 0, || "sse.repetitions must be positive".into())?;
        check(self.sse.i_over_l > 0.0, || "sse.i_over_l must be positive".into())?;
        self.direction()?;
        check(self.eval.normal_k >= 3, || "eval.normal_k must be at least 3".into())?;
        Ok(())
    }
}
