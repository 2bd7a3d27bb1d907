//! Voxel-cube joint source-channel encoder and decoder plus training.
//!
//! Encoder: `conv(1 -> w0)`, then three stages of VRN blocks separated by two
//! stride-2 convolutions (`w0 -> w1 -> w2`), then `conv(w2 -> w0)` and
//! `conv(w0 -> latent)`. The decoder mirrors it: `conv(latent -> w0)`,
//! `conv(w0 -> w2)`, VRN stages separated by stride-2 transposed convolutions,
//! and a final `conv(w0 -> 1)` producing occupancy logits. All kernels are
//! 3x3x3 except the 1x1x1 convolutions inside the VRN bottleneck path.
//!
//! A VRN block uses pre-activation (ReLU before each convolution). With input
//! width `c`, the basic path is `3x3x3 (c -> c/2)`, `3x3x3 (c/2 -> c/2)` and
//! the bottleneck path is `1x1x1 (c -> c/4)`, `3x3x3 (c/4 -> c/4)`,
//! `1x1x1 (c/4 -> c/2)`. The two paths are concatenated and added to the
//! input.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::channel::{self, ChannelConfig};
use crate::exec::Exec;
use crate::tensornet::{
    adam_step, load_checkpoint, save_checkpoint, AdamConfig, AdamState, Gradients, ParamStore, Scalar, Shape, Tape, Var,
};
use crate::voxel::{binarize_topk, Cube};
use crate::{seed, Error, Result};

/// Imbalance weight of the empty-voxel term in the loss.
pub const DEFAULT_ZETA: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodecConfig {
    /// Cube side `W`.
    pub side: usize,
    /// Channel widths of the three resolution stages.
    pub widths: [usize; 3],
    pub blocks_per_stage: usize,
    pub latent_channels: usize,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            side: 16,
            widths: [8, 16, 32],
            blocks_per_stage: 1,
            latent_channels: 4,
            seed: 1,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || !self.side.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "cube side {} must be a positive multiple of 4",
                self.side
            )));
        }
        if self.widths.iter().any(|&w| w == 0 || w % 4 != 0) {
            return Err(Error::Config(format!(
                "stage widths {:?} must be positive multiples of 4",
                self.widths
            )));
        }
        if self.latent_channels == 0 {
            return Err(Error::Config("latent_channels must be positive".into()));
        }
        Ok(())
    }

    pub fn latent_side(&self) -> usize {
        self.side / 4
    }

    /// `[channels, depth, height, width]` of the latent.
    pub fn latent_layout(&self) -> [usize; 4] {
        let s = self.latent_side();
        [self.latent_channels, s, s, s]
    }

    pub fn latent_len(&self) -> usize {
        self.latent_layout().iter().product()
    }

    fn to_block(&self) -> Vec<u8> {
        let [a, b, c] = self.widths;
        format!(
            "side={}\nwidths={a},{b},{c}\nblocks_per_stage={}\nlatent_channels={}\nseed={}\n",
            self.side, self.blocks_per_stage, self.latent_channels, self.seed
        )
        .into_bytes()
    }

    fn from_block(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
        let mut fields = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad config line {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Checkpoint(format!("config block lacks {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("config value {k} is not an integer")))
        };
        let widths: Vec<usize> = get("widths")?
            .split(',')
            .map(|w| w.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Checkpoint("bad widths".into()))?;
        let widths: [usize; 3] = widths
            .try_into()
            .map_err(|_| Error::Checkpoint("widths must list three stages".into()))?;
        let cfg = CodecConfig {
            side: num("side")? as usize,
            widths,
            blocks_per_stage: num("blocks_per_stage")? as usize,
            latent_channels: num("latent_channels")? as usize,
            seed: num("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flattened encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector {
    pub values: Vec<f64>,
    /// `[channels, depth, height, width]`.
    pub layout: [usize; 4],
}

impl LatentVector {
    pub fn new(values: Vec<f64>, layout: [usize; 4]) -> Result<Self> {
        if values.len() != layout.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} latent values for layout {layout:?}",
                values.len()
            )));
        }
        Ok(LatentVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        LatentVector::new(values, self.layout)
    }

    fn shape(&self) -> Shape {
        let [c, d, h, w] = self.layout;
        [1, c, d, h, w]
    }
}

struct LayerSpec {
    name: String,
    c_in: usize,
    c_out: usize,
    k: usize,
    transpose: bool,
    gain: f64,
}

fn vrn_specs(prefix: &str, c: usize, out: &mut Vec<LayerSpec>) {
    let mut push = |suffix: &str, c_in, c_out, k| {
        out.push(LayerSpec {
            name: format!("{prefix}.{suffix}"),
            c_in,
            c_out,
            k,
            transpose: false,
            gain: 1.0,
        })
    };
    push("basic1", c, c / 2, 3);
    push("basic2", c / 2, c / 2, 3);
    push("neck1", c, c / 4, 1);
    push("neck2", c / 4, c / 4, 3);
    push("neck3", c / 4, c / 2, 1);
}

fn architecture(cfg: &CodecConfig) -> Vec<LayerSpec> {
    let [w0, w1, w2] = cfg.widths;
    let n = cfg.blocks_per_stage;
    let mut specs = Vec::new();
    let conv = |name: &str, c_in, c_out, transpose, gain| LayerSpec {
        name: name.to_string(),
        c_in,
        c_out,
        k: 3,
        transpose,
        gain,
    };
    specs.push(conv("enc.in", 1, w0, false, 1.0));
    for (stage, w) in [w0, w1, w2].into_iter().enumerate() {
        if stage > 0 {
            let prev = cfg.widths[stage - 1];
            specs.push(conv(&format!("enc.down{stage}"), prev, w, false, 1.0));
        }
        for i in 0..n {
            vrn_specs(&format!("enc.s{stage}.vrn{i}"), w, &mut specs);
        }
    }
    specs.push(conv("enc.mix", w2, w0, false, 1.0));
    specs.push(conv("enc.out", w0, cfg.latent_channels, false, 1.0));

    specs.push(conv("dec.in", cfg.latent_channels, w0, false, 1.0));
    specs.push(conv("dec.expand", w0, w2, false, 1.0));
    for (stage, w) in [w2, w1, w0].into_iter().enumerate() {
        if stage > 0 {
            let prev = [w2, w1, w0][stage - 1];
            specs.push(conv(&format!("dec.up{stage}"), prev, w, true, 1.0));
        }
        for i in 0..n {
            vrn_specs(&format!("dec.s{stage}.vrn{i}"), w, &mut specs);
        }
    }
    // Small output weights keep initial probabilities near one half.
    specs.push(conv("dec.out", w0, 1, false, 0.1));
    specs
}

/// Encoder/decoder parameters for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Codec<T = f32> {
    config: CodecConfig,
    params: ParamStore<T>,
    index: HashMap<String, usize>,
}

struct Graph<'a, T> {
    tape: &'a mut Tape<T>,
    vars: &'a [Var],
    index: &'a HashMap<String, usize>,
}

impl<T: Scalar> Graph<'_, T> {
    fn param(&self, name: &str) -> Var {
        self.vars[self.index[name]]
    }

    fn conv(&mut self, x: Var, layer: &str, stride: usize) -> Result<Var> {
        let w = self.param(&format!("{layer}.w"));
        let b = self.param(&format!("{layer}.b"));
        let pad = self.tape.shape(w)[2] / 2;
        self.tape.conv3d(x, w, Some(b), stride, pad)
    }

    fn conv_t(&mut self, x: Var, layer: &str) -> Result<Var> {
        let w = self.param(&format!("{layer}.w"));
        let b = self.param(&format!("{layer}.b"));
        self.tape.conv_transpose3d(x, w, Some(b), 2, 1)
    }

    fn relu_conv(&mut self, x: Var, layer: &str) -> Result<Var> {
        let r = self.tape.relu(x)?;
        self.conv(r, layer, 1)
    }

    fn vrn(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let r = self.tape.relu(x)?;
        let a = self.conv(r, &format!("{prefix}.basic1"), 1)?;
        let a = self.relu_conv(a, &format!("{prefix}.basic2"))?;
        let b = self.conv(r, &format!("{prefix}.neck1"), 1)?;
        let b = self.relu_conv(b, &format!("{prefix}.neck2"))?;
        let b = self.relu_conv(b, &format!("{prefix}.neck3"))?;
        let cat = self.tape.concat_channels(&[a, b])?;
        self.tape.add(cat, x)
    }

    fn encoder(&mut self, cfg: &CodecConfig, x: Var) -> Result<Var> {
        let mut h = self.conv(x, "enc.in", 1)?;
        for stage in 0..3 {
            if stage > 0 {
                h = self.conv(h, &format!("enc.down{stage}"), 2)?;
            }
            for i in 0..cfg.blocks_per_stage {
                h = self.vrn(h, &format!("enc.s{stage}.vrn{i}"))?;
            }
        }
        let h = self.relu_conv(h, "enc.mix")?;
        self.relu_conv(h, "enc.out")
    }

    fn decoder(&mut self, cfg: &CodecConfig, y: Var) -> Result<Var> {
        let h = self.conv(y, "dec.in", 1)?;
        let mut h = self.relu_conv(h, "dec.expand")?;
        for stage in 0..3 {
            if stage > 0 {
                h = self.conv_t(h, &format!("dec.up{stage}"))?;
            }
            for i in 0..cfg.blocks_per_stage {
                h = self.vrn(h, &format!("dec.s{stage}.vrn{i}"))?;
            }
        }
        self.relu_conv(h, "dec.out")
    }
}

fn build_index<T>(params: &ParamStore<T>) -> HashMap<String, usize>
where
    T: Scalar,
{
    params
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), i))
        .collect()
}

impl<T: Scalar> Codec<T> {
    /// Fresh model with fan-in scaled uniform weights and zero biases.
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(config.seed, 0x1417));
        let mut params = ParamStore::new();
        for l in architecture(&config) {
            let k3 = l.k * l.k * l.k;
            let shape = if l.transpose {
                [l.c_in, l.c_out, l.k, l.k, l.k]
            } else {
                [l.c_out, l.c_in, l.k, l.k, l.k]
            };
            params.push_he_uniform(format!("{}.w", l.name), shape, l.c_in * k3, l.gain, &mut rng)?;
            params.push_zeros(format!("{}.b", l.name), [l.c_out, 1, 1, 1, 1])?;
        }
        let index = build_index(&params);
        Ok(Codec { config, params, index })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Replaces the parameters; names and shapes must match the architecture.
    pub fn set_params(&mut self, params: ParamStore<T>) -> Result<()> {
        let fresh = Codec::<T>::new(self.config.clone())?;
        if fresh.params.len() != params.len()
            || fresh
                .params
                .params()
                .iter()
                .zip(params.params())
                .any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(Error::Checkpoint(
                "parameters do not match the codec architecture".into(),
            ));
        }
        self.params = params;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Codec<U> {
        Codec {
            config: self.config.clone(),
            params: self.params.cast(),
            index: self.index.clone(),
        }
    }

    pub fn latent_len(&self) -> usize {
        self.config.latent_len()
    }

    fn cube_input(&self, tape: &mut Tape<T>, cube: &Cube) -> Result<Var> {
        let w = self.config.side;
        if cube.side() != w {
            return Err(Error::Shape(format!("cube side {} but codec expects {w}", cube.side())));
        }
        tape.constant([1, 1, w, w, w], cube.as_values())
    }

    fn graph<'a>(&'a self, tape: &'a mut Tape<T>, vars: &'a [Var]) -> Graph<'a, T> {
        Graph {
            tape,
            vars,
            index: &self.index,
        }
    }

    pub fn encode(&self, cube: &Cube) -> Result<LatentVector> {
        let mut tape = Tape::new();
        let vars = self.params.bind_with(&mut tape, false);
        let x = self.cube_input(&mut tape, cube)?;
        let y = self.graph(&mut tape, &vars).encoder(&self.config, x)?;
        LatentVector::new(
            tape.value(y).iter().map(|v| v.f64()).collect(),
            self.config.latent_layout(),
        )
    }

    fn latent_input(&self, tape: &mut Tape<T>, latent: &LatentVector, requires_grad: bool) -> Result<Var> {
        if latent.layout != self.config.latent_layout() {
            return Err(Error::Shape(format!(
                "latent layout {:?} but codec expects {:?}",
                latent.layout,
                self.config.latent_layout()
            )));
        }
        let values = latent.values.iter().map(|&v| T::of(v)).collect();
        let t = crate::tensornet::DiffTensor::new(latent.shape(), values, requires_grad)?;
        Ok(tape.leaf(t))
    }

    /// Occupancy logits in cube order.
    pub fn decode(&self, latent: &LatentVector) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind_with(&mut tape, false);
        let y = self.latent_input(&mut tape, latent, false)?;
        let z = self.graph(&mut tape, &vars).decoder(&self.config, y)?;
        Ok(tape.value(z).iter().map(|v| v.f64()).collect())
    }

    /// Sigmoid of the decoder logits.
    pub fn decode_probabilities(&self, latent: &LatentVector) -> Result<Vec<f64>> {
        Ok(self
            .decode(latent)?
            .into_iter()
            .map(|z| 1.0 / (1.0 + (-z).exp()))
            .collect())
    }

    /// Decodes and keeps the `k` most probable voxels.
    pub fn reconstruct(&self, latent: &LatentVector, k: usize, index: [u32; 3]) -> Result<Cube> {
        let p = self.decode_probabilities(latent)?;
        Cube::new(index, self.config.side, binarize_topk(&p, k)?)
    }

    /// `d loss / d latent` where the loss is the decoded reconstruction of
    /// `latent` scored against `cube`.
    pub fn latent_gradient(&self, latent: &LatentVector, cube: &Cube, zeta: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind_with(&mut tape, false);
        let y = self.latent_input(&mut tape, latent, true)?;
        let z = self.graph(&mut tape, &vars).decoder(&self.config, y)?;
        if cube.side() != self.config.side {
            return Err(Error::Shape("cube side does not match codec".into()));
        }
        let loss = tape.wbce(z, cube.occupancy(), zeta)?;
        tape.backward(loss)?;
        Ok(tape
            .grad(y)
            .map(|g| g.iter().map(|v| v.f64()).collect())
            .unwrap_or_else(|| vec![0.0; latent.len()]))
    }

    /// Loss and parameter gradients for one cube. With a channel, the latent
    /// is perturbed by a fixed noise draw scaled to its current power.
    pub fn loss_and_gradients(
        &self,
        cube: &Cube,
        noise: Option<&ChannelConfig>,
        zeta: f64,
    ) -> Result<(f64, Gradients<T>)> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let x = self.cube_input(&mut tape, cube)?;
        let mut y = self.graph(&mut tape, &vars).encoder(&self.config, x)?;
        if let Some(ch) = noise {
            y = add_channel_noise(&mut tape, y, ch)?;
        }
        let z = self.graph(&mut tape, &vars).decoder(&self.config, y)?;
        let loss = tape.wbce(z, cube.occupancy(), zeta)?;
        tape.backward(loss)?;
        let value = tape.value(loss)[0].f64();
        Ok((value, self.params.gradients(&tape, &vars)?))
    }
}

impl<T: Scalar> Codec<T> {
    /// Noiseless loss for `cube` together with the ReLU activation pattern
    /// of the whole forward pass.
    pub fn loss_probe(&self, cube: &Cube, zeta: f64) -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars = self.params.bind_with(&mut tape, false);
        let x = self.cube_input(&mut tape, cube)?;
        let y = self.graph(&mut tape, &vars).encoder(&self.config, x)?;
        let z = self.graph(&mut tape, &vars).decoder(&self.config, y)?;
        let loss = tape.wbce(z, cube.occupancy(), zeta)?;
        Ok((tape.value(loss)[0].f64(), tape.activation_pattern()))
    }
}

/// `channel(z) - z` for the unit-power version `z` of `y`: the noise in
/// normalized units.
fn unit_noise<T: Scalar>(y: &[T], ch: &ChannelConfig) -> Result<Vec<T>> {
    let yv: Vec<f64> = y.iter().map(|v| v.f64()).collect();
    let (normed, _) = channel::normalize_power(&yv);
    let received = channel::transmit(&normed, ch)?;
    Ok(received.iter().zip(&normed).map(|(r, n)| T::of(r - n)).collect())
}

/// `y + rms(y) * n`. The noise scale stays in the graph: with a constant
/// scale, growing the latent would look like a free SNR gain.
fn add_channel_noise<T: Scalar>(tape: &mut Tape<T>, y: Var, ch: &ChannelConfig) -> Result<Var> {
    if tape.value(y).iter().all(|v| v.is_zero()) {
        return Ok(y);
    }
    let n = tape.constant(tape.shape(y), unit_noise(tape.value(y), ch)?)?;
    let len = tape.value(y).len();
    let sq = tape.mul(y, y)?;
    let total = tape.sum(sq)?;
    let ms = tape.scale(total, T::of(1.0 / len as f64))?;
    let rms = tape.sqrt(ms)?;
    let scaled = tape.scale_by(n, rms)?;
    tape.add(y, scaled)
}

impl Codec<f32> {
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        save_checkpoint(w, &self.config.to_block(), &self.params)
    }

    pub fn load(r: &mut impl Read) -> Result<Self> {
        let (block, params) = load_checkpoint(r)?;
        let mut codec = Codec::new(CodecConfig::from_block(&block)?)?;
        codec.set_params(params)?;
        Ok(codec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub zeta: f64,
    /// Channel simulated during training; `None` trains noiselessly.
    pub channel: Option<ChannelConfig>,
    /// Shuffling and noise seed.
    pub seed: u64,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            zeta: DEFAULT_ZETA,
            channel: Some(ChannelConfig::awgn(10.0, 0)),
            seed: 1,
            max_steps: None,
        }
    }
}

/// Optimizer state for stepwise training.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    adam: AdamState,
    step: u64,
}

impl Trainer {
    pub fn new<T: Scalar>(codec: &Codec<T>, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(ch) = &config.channel {
            ch.validate()?;
        }
        let adam = AdamState::new(
            &codec.params,
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
        );
        Ok(Trainer { config, adam, step: 0 })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One optimizer step on the mean loss of `batch`; returns that loss.
    pub fn step<T: Scalar>(&mut self, codec: &mut Codec<T>, batch: &[&Cube], exec: Exec) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let step = self.step;
        let cfg = &self.config;
        let results = exec.try_map_range(batch.len(), |i| {
            let ch = cfg
                .channel
                .map(|c| c.with_seed(seed::derive_all(cfg.seed, &[step, i as u64])));
            codec.loss_and_gradients(batch[i], ch.as_ref(), cfg.zeta)
        })?;
        let mut total = Gradients {
            grads: vec![None; codec.params.len()],
        };
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            total.accumulate(g)?;
        }
        let inv = 1.0 / batch.len() as f64;
        total.scale(T::of(inv));
        adam_step(&mut codec.params, &total, &mut self.adam)?;
        self.step += 1;
        Ok(loss * inv)
    }
}

/// Trains for the configured epochs over shuffled batches; calls `on_step`
/// with `(step, loss)` and returns the per-step loss history.
pub fn train_with<T: Scalar>(
    codec: &mut Codec<T>,
    data: &[Cube],
    config: &TrainConfig,
    exec: Exec,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut trainer = Trainer::new(codec, config.clone())?;
    let mut rng = seed::rng(seed::derive(config.seed, 0x5417));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();
    let limit = config.max_steps.unwrap_or(usize::MAX);
    'epochs: for _ in 0..config.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(config.batch_size) {
            if history.len() >= limit {
                break 'epochs;
            }
            let batch: Vec<&Cube> = chunk.iter().map(|&i| &data[i]).collect();
            let loss = trainer.step(codec, &batch, exec)?;
            on_step(history.len(), loss);
            history.push(loss);
        }
    }
    Ok(history)
}

pub fn train<T: Scalar>(codec: &mut Codec<T>, data: &[Cube], config: &TrainConfig, exec: Exec) -> Result<Vec<f64>> {
    train_with(codec, data, config, exec, |_, _| {})
}
