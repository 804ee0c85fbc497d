//! Convolutional U-net mask estimator.
//!
//! The network maps standardized beamformer features `[features][time][freq]`
//! to a ratio mask `[time][freq]`. Encoder blocks are two
//! conv-batchnorm-ReLU units followed by spatial dropout and, except for the
//! central block, max pooling along frequency. Decoder blocks upsample
//! frequency with a stride-2 transposed convolution, concatenate the encoder
//! output of the same depth (tapped before pooling) and apply two more units.
//! A final 1×1 convolution and a sigmoid produce the mask. Time resolution is
//! never reduced.
//!
//! When `dilated` is set, the second convolution of every block is dilated
//! along frequency with the rate of its depth.

pub mod checkpoint;
pub mod infer;
pub mod layers;
pub mod nadam;
pub mod tensor;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::{FeatureStats, FeatureTensor};
use crate::error::{Error, Result};
use crate::masks::Mask;
use layers::{BatchNormCache, ConvGeom};
pub use nadam::{Nadam, NadamState};
pub use tensor::{Scalar, Shape, Tensor};

/// Batch-norm running-statistics momentum.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    /// Encoder blocks, the central one included.
    pub depth: usize,
    /// Filters of the first block; doubled at every encoder block.
    pub base_filters: usize,
    /// Convolution kernel as `(time, freq)`.
    pub kernel: (usize, usize),
    pub pool_freq: usize,
    pub dilated: bool,
    /// Frequency dilation per encoder depth, used when `dilated` is set.
    pub dilation_schedule: Vec<usize>,
    pub input_features: usize,
    pub seq_frames: usize,
    pub freq_bins_net: usize,
    pub dropout: f64,
    pub precision: Precision,
}

fn doubling(depth: usize) -> Vec<usize> {
    (0..depth).map(|i| 1 << i).collect()
}

impl UNetConfig {
    /// Five blocks, 16 base filters, 40 frames × 512 bins.
    pub fn paper() -> Self {
        Self {
            depth: 5,
            base_filters: 16,
            kernel: (3, 3),
            pool_freq: 2,
            dilated: true,
            dilation_schedule: doubling(5),
            input_features: 4,
            seq_frames: 40,
            freq_bins_net: 512,
            dropout: 0.05,
            precision: Precision::Single,
        }
    }

    /// Desk-scale network: three blocks, 4 base filters, 16 frames × 64 bins.
    pub fn toy() -> Self {
        Self {
            depth: 3,
            base_filters: 4,
            dilation_schedule: doubling(3),
            input_features: 3,
            seq_frames: 16,
            freq_bins_net: 64,
            ..Self::paper()
        }
    }

    /// Same geometry with the dilation switched on or off.
    pub fn with_dilation(&self, dilated: bool) -> Self {
        Self {
            dilated,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth == 0 || self.base_filters == 0 {
            return bad("depth and base_filters must be positive".into());
        }
        if self.kernel.0 % 2 == 0 || self.kernel.1 % 2 == 0 {
            return bad(format!("kernel {:?} must have odd sizes", self.kernel));
        }
        if self.pool_freq < 2 {
            return bad("pool_freq must be at least 2".into());
        }
        if !(3..=4).contains(&self.input_features) {
            return bad(format!("input_features must be 3 or 4, got {}", self.input_features));
        }
        if self.seq_frames == 0 {
            return bad("seq_frames must be positive".into());
        }
        let reduction = self.pool_freq.pow(self.depth as u32 - 1);
        if self.freq_bins_net == 0 || self.freq_bins_net % reduction != 0 {
            return bad(format!(
                "freq_bins_net {} not divisible by {reduction}",
                self.freq_bins_net
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.dilation_schedule.len() != self.depth
            || self.dilation_schedule.first() != Some(&1)
            || self.dilation_schedule.windows(2).any(|w| w[1] != 2 * w[0])
        {
            return bad(format!(
                "dilation_schedule {:?} must start at 1 and double over {} blocks",
                self.dilation_schedule, self.depth
            ));
        }
        Ok(())
    }

    /// Frequency dilation of the second convolution at each depth.
    pub fn dilation_rates(&self) -> Vec<usize> {
        if self.dilated {
            self.dilation_schedule.clone()
        } else {
            vec![1; self.depth]
        }
    }

    pub fn filters(&self, depth: usize) -> usize {
        self.base_filters << depth
    }
}

/// A trainable tensor and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// A non-trainable tensor such as batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct ConvUnit {
    geom: ConvGeom,
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    first: ConvUnit,
    second: ConvUnit,
}

#[derive(Debug, Clone, Copy)]
struct UpUnit {
    w: usize,
    b: usize,
    out_channels: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<Block>,
    /// Ordered from the deepest decoder block to the shallowest.
    decoder: Vec<(UpUnit, Block)>,
    head: ConvGeom,
    head_w: usize,
    head_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat updates and dropout seeded by `seed`.
    /// Activations are recorded for [`UNetModel::backward`].
    Train { seed: u64 },
    /// Running statistics, no dropout.
    Infer,
}

#[derive(Debug, Clone)]
struct UnitTape<T> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    output: Tensor<T>,
}

#[derive(Debug, Clone)]
struct BlockTape<T> {
    first: UnitTape<T>,
    second: UnitTape<T>,
    dropout: Vec<T>,
    pool: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
struct DecoderTape<T> {
    up_input: Tensor<T>,
    block: BlockTape<T>,
}

#[derive(Debug, Clone)]
struct Tape<T> {
    encoder: Vec<BlockTape<T>>,
    decoder: Vec<DecoderTape<T>>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Scalar> Tape<T> {
    /// Fingerprint of every ReLU sign and pooling decision.
    fn pattern(&self) -> Vec<u8> {
        let mut bits = Vec::new();
        let mut block = |b: &BlockTape<T>| {
            for u in [&b.first, &b.second] {
                bits.extend(u.output.data().iter().map(|&v| u8::from(v > T::zero())));
            }
            if let Some(p) = &b.pool {
                bits.extend_from_slice(p);
            }
        };
        self.encoder.iter().for_each(&mut block);
        self.decoder.iter().for_each(|d| block(&d.block));
        bits
    }
}

/// One traced layer output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub layer: String,
    pub shape: Shape,
}

#[derive(Debug, Clone)]
pub struct UNetModel<T = f32> {
    config: UNetConfig,
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    layout: Layout,
    pub optimizer: NadamState<T>,
    pub feature_stats: Option<FeatureStats>,
    tape: Option<Tape<T>>,
}

struct Builder<T> {
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<T> {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let len = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![T::zero(); len],
            Init::Ones => vec![T::one(); len],
            Init::FanIn(fan_in) => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..len)
                    .map(|_| T::of(self.rng.random_range(-bound..bound)))
                    .collect()
            }
        };
        self.params.push(Param {
            name,
            shape,
            grad: vec![T::zero(); len],
            value,
        });
        self.params.len() - 1
    }

    fn buffer(&mut self, name: String, len: usize, value: f64) -> usize {
        self.buffers.push(Buffer {
            name,
            shape: vec![len],
            value: vec![T::of(value); len],
        });
        self.buffers.len() - 1
    }

    fn unit(&mut self, prefix: &str, geom: ConvGeom) -> ConvUnit {
        let fan_in = geom.in_channels * geom.kernel_t * geom.kernel_f;
        let c = geom.out_channels;
        ConvUnit {
            geom,
            w: self.param(
                format!("{prefix}.conv.weight"),
                vec![c, geom.in_channels, geom.kernel_t, geom.kernel_f],
                Init::FanIn(fan_in),
            ),
            b: self.param(format!("{prefix}.conv.bias"), vec![c], Init::Zeros),
            gamma: self.param(format!("{prefix}.bn.gamma"), vec![c], Init::Ones),
            beta: self.param(format!("{prefix}.bn.beta"), vec![c], Init::Zeros),
            mean: self.buffer(format!("{prefix}.bn.running_mean"), c, 0.0),
            var: self.buffer(format!("{prefix}.bn.running_var"), c, 1.0),
        }
    }

    fn block(&mut self, prefix: &str, cfg: &UNetConfig, in_c: usize, out_c: usize, dil: usize) -> Block {
        let geom = |i, d| ConvGeom {
            in_channels: i,
            out_channels: out_c,
            kernel_t: cfg.kernel.0,
            kernel_f: cfg.kernel.1,
            dilation_f: d,
        };
        Block {
            first: self.unit(&format!("{prefix}.unit1"), geom(in_c, 1)),
            second: self.unit(&format!("{prefix}.unit2"), geom(out_c, dil)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    FanIn(usize),
}

impl<T: Scalar> UNetModel<T> {
    /// Seeded initialization: fan-in scaled uniform kernels, zero biases,
    /// unit batch-norm scales.
    pub fn build(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            params: Vec::new(),
            buffers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let rates = config.dilation_rates();
        let mut encoder = Vec::with_capacity(config.depth);
        let mut in_c = config.input_features;
        for (d, &rate) in rates.iter().enumerate() {
            let out_c = config.filters(d);
            encoder.push(b.block(&format!("enc{d}"), &config, in_c, out_c, rate));
            in_c = out_c;
        }
        let mut decoder = Vec::with_capacity(config.depth - 1);
        for d in (0..config.depth - 1).rev() {
            let out_c = config.filters(d);
            let up = UpUnit {
                w: b.param(
                    format!("dec{d}.up.weight"),
                    vec![in_c, out_c, config.pool_freq],
                    Init::FanIn(in_c),
                ),
                b: b.param(format!("dec{d}.up.bias"), vec![out_c], Init::Zeros),
                out_channels: out_c,
            };
            let block = b.block(&format!("dec{d}"), &config, 2 * out_c, out_c, rates[d]);
            decoder.push((up, block));
            in_c = out_c;
        }
        let head = ConvGeom {
            in_channels: in_c,
            out_channels: 1,
            kernel_t: 1,
            kernel_f: 1,
            dilation_f: 1,
        };
        let head_w = b.param("head.weight".into(), vec![1, in_c, 1, 1], Init::FanIn(in_c));
        let head_b = b.param("head.bias".into(), vec![1], Init::Zeros);
        let optimizer = NadamState::new(&b.params);
        Ok(Self {
            config,
            params: b.params,
            buffers: b.buffers,
            layout: Layout {
                encoder,
                decoder,
                head,
                head_w,
                head_b,
            },
            optimizer,
            feature_stats: None,
            tape: None,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    /// Trainable scalar count.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Applies `nadam` to every parameter with the stored gradients.
    pub fn nadam_step(&mut self, nadam: &Nadam) -> Result<()> {
        nadam.step(&mut self.params, &mut self.optimizer)
    }

    /// Same model in another precision, without a recorded forward pass.
    pub fn cast<U: Scalar>(&self) -> UNetModel<U> {
        let conv = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::of(x.to_f64().expect("finite"))).collect() };
        UNetModel {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: conv(&p.value),
                    grad: conv(&p.grad),
                })
                .collect(),
            buffers: self
                .buffers
                .iter()
                .map(|b| Buffer {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    value: conv(&b.value),
                })
                .collect(),
            layout: self.layout.clone(),
            optimizer: self.optimizer.cast(),
            feature_stats: self.feature_stats.clone(),
            tape: None,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let c = &self.config;
        let [n, ch, t, f] = x.shape();
        if n == 0 || ch != c.input_features || t != c.seq_frames || f != c.freq_bins_net {
            return Err(Error::Shape(format!(
                "network input {:?}, expected [N, {}, {}, {}]",
                x.shape(),
                c.input_features,
                c.seq_frames,
                c.freq_bins_net
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    /// Runs the network on `[N][features][seq_frames][freq_bins_net]`.
    ///
    /// Train mode records the activations needed by [`Self::backward`] and
    /// updates the batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        match mode {
            Mode::Infer => {
                self.tape = None;
                self.run_infer(x, None)
            }
            Mode::Train { seed } => {
                let tape = self.run_train(x, seed)?;
                let y = tape.output.clone();
                self.tape = Some(tape);
                Ok(y)
            }
        }
    }

    /// Inference-mode forward pass; never mutates the model.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.run_infer(x, None)
    }

    /// Layer-by-layer output shapes of an inference pass on zeros.
    pub fn shape_trace(&self, batch: usize) -> Result<Vec<TraceEntry>> {
        let c = &self.config;
        let x = Tensor::zeros([batch, c.input_features, c.seq_frames, c.freq_bins_net]);
        let mut trace = vec![TraceEntry {
            layer: "input".into(),
            shape: x.shape(),
        }];
        self.run_infer(&x, Some(&mut trace))?;
        Ok(trace)
    }

    /// Single-sample inference on a feature tensor, returned as a mask.
    pub fn predict_mask(&self, features: &FeatureTensor) -> Result<Mask> {
        let x = Tensor::from_vec(
            [1, features.channels(), features.frames(), features.bins()],
            features.data().iter().map(|&v| T::of(f64::from(v))).collect(),
        )?;
        let y = self.predict(&x)?;
        Mask::new(
            y.frames(),
            y.bins(),
            y.data().iter().map(|v| v.to_f32().expect("finite")).collect(),
        )
    }

    fn unit_infer(&self, u: &ConvUnit, x: &Tensor<T>) -> Result<Tensor<T>> {
        let p = &self.params;
        let y = layers::conv2d(x, &p[u.w].value, &p[u.b].value, &u.geom)?;
        let y = layers::batch_norm_infer(
            &y,
            &p[u.gamma].value,
            &p[u.beta].value,
            &self.buffers[u.mean].value,
            &self.buffers[u.var].value,
            BN_EPS,
        );
        Ok(layers::relu(&y))
    }

    fn run_infer(&self, x: &Tensor<T>, mut trace: Option<&mut Vec<TraceEntry>>) -> Result<Tensor<T>> {
        let mut log = |name: String, t: &Tensor<T>| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceEntry {
                    layer: name,
                    shape: t.shape(),
                });
            }
        };
        let depth = self.config.depth;
        let mut skips = Vec::with_capacity(depth);
        let mut h = x.clone();
        for (d, blk) in self.layout.encoder.iter().enumerate() {
            h = self.unit_infer(&blk.first, &h)?;
            log(format!("enc{d}.unit1"), &h);
            h = self.unit_infer(&blk.second, &h)?;
            log(format!("enc{d}.unit2"), &h);
            if d + 1 < depth {
                let (pooled, _) = layers::max_pool_freq(&h, self.config.pool_freq)?;
                skips.push(h);
                h = pooled;
                log(format!("enc{d}.pool"), &h);
            }
        }
        for (k, (up, blk)) in self.layout.decoder.iter().enumerate() {
            let d = depth - 2 - k;
            let p = &self.params;
            h = layers::up_conv_freq(&h, &p[up.w].value, &p[up.b].value, up.out_channels, self.config.pool_freq)?;
            log(format!("dec{d}.up"), &h);
            h = Tensor::concat_channels(&h, &skips[d])?;
            log(format!("dec{d}.concat"), &h);
            h = self.unit_infer(&blk.first, &h)?;
            log(format!("dec{d}.unit1"), &h);
            h = self.unit_infer(&blk.second, &h)?;
            log(format!("dec{d}.unit2"), &h);
        }
        let p = &self.params;
        let y = layers::conv2d(&h, &p[self.layout.head_w].value, &p[self.layout.head_b].value, &self.layout.head)?;
        let y = layers::sigmoid(&y);
        log("head".into(), &y);
        Ok(y)
    }

    fn unit_train(&mut self, u: &ConvUnit, x: &Tensor<T>) -> Result<UnitTape<T>> {
        let p = &self.params;
        let z = layers::conv2d(x, &p[u.w].value, &p[u.b].value, &u.geom)?;
        let (y, bn) = layers::batch_norm_train(&z, &p[u.gamma].value, &p[u.beta].value, BN_EPS);
        let m = T::of(BN_MOMENTUM);
        let one_m = T::one() - m;
        for (r, &b) in self.buffers[u.mean].value.iter_mut().zip(&bn.mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in self.buffers[u.var].value.iter_mut().zip(&bn.var) {
            *r = m * *r + one_m * b;
        }
        Ok(UnitTape {
            input: x.clone(),
            bn,
            output: layers::relu(&y),
        })
    }

    fn block_train(&mut self, blk: &Block, x: &Tensor<T>, rng: &mut ChaCha8Rng) -> Result<(Tensor<T>, BlockTape<T>)> {
        let first = self.unit_train(&blk.first, x)?;
        let second = self.unit_train(&blk.second, &first.output)?;
        let h = &second.output;
        let dropout = layers::dropout_mask(h.batch(), h.channels(), self.config.dropout, rng);
        let out = layers::scale_planes(h, &dropout);
        Ok((
            out,
            BlockTape {
                first,
                second,
                dropout,
                pool: None,
            },
        ))
    }

    fn run_train(&mut self, x: &Tensor<T>, seed: u64) -> Result<Tape<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = self.config.depth;
        let layout = self.layout.clone();
        let mut skips = Vec::with_capacity(depth);
        let mut enc_tapes = Vec::with_capacity(depth);
        let mut h = x.clone();
        for (d, blk) in layout.encoder.iter().enumerate() {
            let (out, mut tape) = self.block_train(blk, &h, &mut rng)?;
            if d + 1 < depth {
                let (pooled, arg) = layers::max_pool_freq(&out, self.config.pool_freq)?;
                tape.pool = Some(arg);
                skips.push(out);
                h = pooled;
            } else {
                h = out;
            }
            enc_tapes.push(tape);
        }
        let mut dec_tapes = Vec::with_capacity(depth - 1);
        for (k, (up, blk)) in layout.decoder.iter().enumerate() {
            let d = depth - 2 - k;
            let p = &self.params;
            let u = layers::up_conv_freq(&h, &p[up.w].value, &p[up.b].value, up.out_channels, self.config.pool_freq)?;
            let cat = Tensor::concat_channels(&u, &skips[d])?;
            let (out, tape) = self.block_train(blk, &cat, &mut rng)?;
            dec_tapes.push(DecoderTape { up_input: h, block: tape });
            h = out;
        }
        let p = &self.params;
        let z = layers::conv2d(&h, &p[layout.head_w].value, &p[layout.head_b].value, &layout.head)?;
        let output = layers::sigmoid(&z);
        Ok(Tape {
            encoder: enc_tapes,
            decoder: dec_tapes,
            head_input: h,
            output,
        })
    }

    fn accumulate(&mut self, idx: usize, g: &[T]) {
        for (a, &b) in self.params[idx].grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    fn unit_backward(&mut self, u: &ConvUnit, tape: &UnitTape<T>, gy: &Tensor<T>) -> Tensor<T> {
        let g = layers::relu_backward(&tape.output, gy);
        let (g, ggamma, gbeta) = layers::batch_norm_backward(&tape.bn, &self.params[u.gamma].value, &g);
        self.accumulate(u.gamma, &ggamma);
        self.accumulate(u.beta, &gbeta);
        let (gx, gw, gb) = layers::conv2d_backward(&tape.input, &self.params[u.w].value, &g, &u.geom);
        self.accumulate(u.w, &gw);
        self.accumulate(u.b, &gb);
        gx
    }

    fn block_backward(&mut self, blk: &Block, tape: &BlockTape<T>, gy: &Tensor<T>) -> Tensor<T> {
        let g = layers::scale_planes(gy, &tape.dropout);
        let g = self.unit_backward(&blk.second, &tape.second, &g);
        self.unit_backward(&blk.first, &tape.first, &g)
    }

    /// Mean-squared-error loss against `target` (`[N][1][T][F]`) and the
    /// gradient of every parameter, stored in [`Param::grad`]. Consumes the
    /// activations recorded by the last train-mode forward pass.
    pub fn backward(&mut self, target: &Tensor<T>) -> Result<T> {
        let tape = self.tape.take().ok_or(Error::NoRecordedForward)?;
        let (loss, g) = layers::mse_loss(&tape.output, target)?;
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|v| *v = T::zero());
        }
        let layout = self.layout.clone();
        let depth = self.config.depth;
        let factor = self.config.pool_freq;

        let g = layers::sigmoid_backward(&tape.output, &g);
        let (mut gh, gw, gb) = layers::conv2d_backward(&tape.head_input, &self.params[layout.head_w].value, &g, &layout.head);
        self.accumulate(layout.head_w, &gw);
        self.accumulate(layout.head_b, &gb);

        let mut gskips: Vec<Option<Tensor<T>>> = vec![None; depth];
        for (k, ((up, blk), dt)) in layout.decoder.iter().zip(&tape.decoder).enumerate().rev() {
            let d = depth - 2 - k;
            let gcat = self.block_backward(blk, &dt.block, &gh);
            let (gu, gskip) = gcat.split_channels(up.out_channels);
            gskips[d] = Some(gskip);
            let (gx, gw, gb) = layers::up_conv_freq_backward(&dt.up_input, &self.params[up.w].value, &gu, factor);
            self.accumulate(up.w, &gw);
            self.accumulate(up.b, &gb);
            gh = gx;
        }
        for (d, (blk, et)) in layout.encoder.iter().zip(&tape.encoder).enumerate().rev() {
            let mut gout = match &et.pool {
                Some(arg) => layers::max_pool_freq_backward(&gh, arg, factor),
                None => gh,
            };
            if let Some(gs) = gskips[d].take() {
                for (a, &b) in gout.data_mut().iter_mut().zip(gs.data()) {
                    *a += b;
                }
            }
            gh = self.block_backward(blk, et, &gout);
        }
        Ok(loss)
    }

    /// ReLU signs and pooling winners of the recorded forward pass.
    pub fn activation_pattern(&self) -> Option<Vec<u8>> {
        self.tape.as_ref().map(Tape::pattern)
    }
}
