use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::nn::ops::{
    conv_backward_sample, conv_forward_sample, maxpool2_backward_sample, maxpool2_sample,
    upsample_concat_backward_sample, upsample_concat_sample, Activation, ConvGeom, Padding,
};
use crate::nn::{Scalar, Tensor};

/// A per-pixel prediction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TreeMask,
    PixelHeight,
    AuxMask,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::TreeMask, Task::PixelHeight, Task::AuxMask];

    pub fn name(self) -> &'static str {
        match self {
            Task::TreeMask => "tree_mask",
            Task::PixelHeight => "pixel_height",
            Task::AuxMask => "aux_mask",
        }
    }

    pub fn is_mask(self) -> bool {
        !matches!(self, Task::PixelHeight)
    }

    pub fn head_activation(self) -> Activation {
        if self.is_mask() {
            Activation::Sigmoid
        } else {
            Activation::Linear
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One decoder feeding a 1×1 head per task.
    FullyShared,
    /// Shared encoder, one decoder per task.
    PartiallyShared,
    SingleTask(Task),
}

impl Variant {
    /// Short name used on the command line and in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::FullyShared => "fully-shared",
            Variant::PartiallyShared => "partially-shared",
            Variant::SingleTask(Task::TreeMask) => "tree-mask",
            Variant::SingleTask(Task::PixelHeight) => "pixel-height",
            Variant::SingleTask(Task::AuxMask) => "aux-mask",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = CanopyError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        [
            Variant::FullyShared,
            Variant::PartiallyShared,
            Variant::SingleTask(Task::TreeMask),
            Variant::SingleTask(Task::PixelHeight),
            Variant::SingleTask(Task::AuxMask),
        ]
        .into_iter()
        .find(|v| v.slug() == norm)
        .ok_or_else(|| {
            CanopyError::Config(format!(
                "unknown variant '{s}' (expected fully-shared, partially-shared, tree-mask, pixel-height or aux-mask)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub variant: Variant,
    pub tasks: Vec<Task>,
    pub in_bands: usize,
    /// Number of 2×2 poolings; the encoder has `depth + 1` levels.
    pub depth: usize,
    pub base_channels: usize,
}

impl UNetConfig {
    pub fn new(variant: Variant, in_bands: usize, depth: usize, base_channels: usize) -> Self {
        let tasks = match variant {
            Variant::SingleTask(t) => vec![t],
            _ => Task::ALL.to_vec(),
        };
        Self {
            variant,
            tasks,
            in_bands,
            depth,
            base_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_bands == 0 || self.base_channels == 0 {
            return Err(CanopyError::Config(
                "in_bands and base_channels must be positive".into(),
            ));
        }
        if self.depth > 8 {
            return Err(CanopyError::Config(format!("depth {} is too large", self.depth)));
        }
        let mut sorted = self.tasks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.tasks.len() || sorted.is_empty() {
            return Err(CanopyError::Config(format!(
                "tasks must be a non-empty set, got {:?}",
                self.tasks
            )));
        }
        if let Variant::SingleTask(t) = self.variant {
            if self.tasks != [t] {
                return Err(CanopyError::Config(format!(
                    "single-task model for {t} cannot list tasks {:?}",
                    self.tasks
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial dimensions must survive `depth` halvings.
    pub fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.depth;
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return Err(CanopyError::Shape(format!(
                "{h}x{w} input is not divisible by 2^{} = {f}",
                self.depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvSpec {
    /// Index of the kernel; the bias follows at `weight + 1`.
    weight: usize,
    cin: usize,
    cout: usize,
    k: usize,
    act: Activation,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    conv0: ConvSpec,
    conv1: ConvSpec,
}

#[derive(Debug, Clone)]
struct Head {
    task: Task,
    decoder: usize,
    conv: ConvSpec,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<Block>,
    /// `decoders[d][l]` upsamples from level `l + 1` to level `l`.
    decoders: Vec<Vec<Block>>,
    heads: Vec<Head>,
    shapes: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl Layout {
    fn build(cfg: &UNetConfig) -> Self {
        let mut layout = Layout {
            encoder: Vec::new(),
            decoders: Vec::new(),
            heads: Vec::new(),
            shapes: Vec::new(),
            names: Vec::new(),
        };
        let relu = Activation::Relu;
        for l in 0..=cfg.depth {
            let cin = if l == 0 { cfg.in_bands } else { cfg.channels(l - 1) };
            let c = cfg.channels(l);
            let block = Block {
                conv0: layout.conv(&format!("enc{l}.conv0"), cin, c, 3, relu),
                conv1: layout.conv(&format!("enc{l}.conv1"), c, c, 3, relu),
            };
            layout.encoder.push(block);
        }
        let decoder_names: Vec<String> = match cfg.variant {
            Variant::PartiallyShared => cfg.tasks.iter().map(|t| format!("dec.{t}")).collect(),
            _ => vec!["dec".to_string()],
        };
        for prefix in &decoder_names {
            let mut levels = Vec::new();
            for l in 0..cfg.depth {
                let c = cfg.channels(l);
                let cin = cfg.channels(l + 1) + c;
                levels.push(Block {
                    conv0: layout.conv(&format!("{prefix}{l}.conv0"), cin, c, 3, relu),
                    conv1: layout.conv(&format!("{prefix}{l}.conv1"), c, c, 3, relu),
                });
            }
            layout.decoders.push(levels);
        }
        for (i, &task) in cfg.tasks.iter().enumerate() {
            let decoder = if decoder_names.len() > 1 { i } else { 0 };
            let conv = layout.conv(
                &format!("head.{task}"),
                cfg.channels(0),
                1,
                1,
                task.head_activation(),
            );
            layout.heads.push(Head {
                task,
                decoder,
                conv,
            });
        }
        layout
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, act: Activation) -> ConvSpec {
        let weight = self.shapes.len();
        self.shapes.push(vec![cout, cin, k, k]);
        self.names.push(format!("{name}.weight"));
        self.shapes.push(vec![cout]);
        self.names.push(format!("{name}.bias"));
        ConvSpec {
            weight,
            cin,
            cout,
            k,
            act,
        }
    }
}

/// Activations of one sample kept for the backward pass.
pub struct SampleCache<T> {
    h: usize,
    w: usize,
    input: Vec<T>,
    /// Post-activation outputs of both convs at each encoder level.
    enc: Vec<[Vec<T>; 2]>,
    /// Pooled output of levels `0..depth` and its argmax routing.
    pooled: Vec<(Vec<T>, Vec<u32>)>,
    dec: Vec<Vec<DecoderLevel<T>>>,
    outputs: Vec<Vec<T>>,
}

struct DecoderLevel<T> {
    concat: Vec<T>,
    a0: Vec<T>,
    a1: Vec<T>,
}

impl<T: Scalar> SampleCache<T> {
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }
}

/// UNet encoder-decoder with one or more per-pixel heads.
#[derive(Debug, Clone)]
pub struct UNetModel<T = f32> {
    config: UNetConfig,
    params: Vec<Tensor<T>>,
    layout: Layout,
}

impl<T: Scalar> UNetModel<T> {
    /// He-normal kernels, zero biases, reproducible from `seed`.
    pub fn init(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::build(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout
            .shapes
            .iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                let data = (0..shape.iter().product::<usize>())
                    .map(|_| T::from_f64(normal.sample(&mut rng)))
                    .collect();
                Tensor::from_vec(shape, data).expect("shape product")
            })
            .collect();
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Assemble a model from stored parameters, checking every shape.
    pub fn from_params(config: UNetConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::build(&config);
        if params.len() != layout.shapes.len() {
            return Err(CanopyError::Shape(format!(
                "expected {} parameter tensors, got {}",
                layout.shapes.len(),
                params.len()
            )));
        }
        for ((p, s), name) in params.iter().zip(&layout.shapes).zip(&layout.names) {
            if p.shape() != s.as_slice() {
                return Err(CanopyError::Shape(format!(
                    "{name}: expected shape {s:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn tasks(&self) -> &[Task] {
        &self.config.tasks
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.layout.names
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Zeroed tensors shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> UNetModel<U> {
        UNetModel {
            config: self.config.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Predict every configured task for a `(B, in_bands, H, W)` batch.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<BTreeMap<Task, Tensor<T>>> {
        let (b, c, h, w) = batch.dims4()?;
        self.check_input(c, h, w)?;
        let len = c * h * w;
        let per_sample: Vec<Vec<Vec<T>>> = (0..b)
            .into_par_iter()
            .map(|i| {
                let cache = self.forward_unchecked(&batch.data()[i * len..(i + 1) * len], h, w);
                cache.outputs
            })
            .collect();
        let mut out = BTreeMap::new();
        for (k, &task) in self.config.tasks.iter().enumerate() {
            let data: Vec<T> = per_sample.iter().flat_map(|s| s[k].iter().copied()).collect();
            out.insert(task, Tensor::from_vec(&[b, 1, h, w], data)?);
        }
        Ok(out)
    }

    fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.config.in_bands {
            return Err(CanopyError::Shape(format!(
                "model expects {} bands, input has {c}",
                self.config.in_bands
            )));
        }
        self.config.check_spatial(h, w)
    }

    /// Forward pass of one `in_bands × h × w` sample, keeping activations.
    pub fn forward_sample(&self, x: &[T], h: usize, w: usize) -> Result<SampleCache<T>> {
        if x.len() != self.config.in_bands * h * w {
            return Err(CanopyError::Shape(format!(
                "sample has {} values, expected {}x{h}x{w}",
                x.len(),
                self.config.in_bands
            )));
        }
        self.check_input(self.config.in_bands, h, w)?;
        Ok(self.forward_unchecked(x, h, w))
    }

    /// Head output of `task` from a cached forward pass.
    pub fn output<'a>(&self, cache: &'a SampleCache<T>, task: Task) -> Option<&'a [T]> {
        self.config
            .tasks
            .iter()
            .position(|&t| t == task)
            .map(|k| cache.outputs[k].as_slice())
    }

    fn run_conv(&self, spec: &ConvSpec, x: &[T], h: usize, w: usize, scratch: &mut Vec<T>) -> Vec<T> {
        let g = ConvGeom::new(spec.cin, h, w, spec.cout, spec.k, 1, Padding::Same)
            .expect("layout is consistent");
        let mut out = vec![T::zero(); spec.cout * h * w];
        conv_forward_sample(
            x,
            self.params[spec.weight].data(),
            self.params[spec.weight + 1].data(),
            &g,
            &mut out,
            scratch,
        );
        spec.act.apply_in_place(&mut out);
        debug_assert!(out.iter().all(|v| v.is_finite()), "non-finite activation");
        out
    }

    fn forward_unchecked(&self, x: &[T], h: usize, w: usize) -> SampleCache<T> {
        let depth = self.config.depth;
        let mut scratch = Vec::new();
        let mut enc: Vec<[Vec<T>; 2]> = Vec::with_capacity(depth + 1);
        let mut pooled: Vec<(Vec<T>, Vec<u32>)> = Vec::with_capacity(depth);
        for (l, block) in self.layout.encoder.iter().enumerate() {
            let (hl, wl) = (h >> l, w >> l);
            let input = if l == 0 { x } else { &pooled[l - 1].0 };
            let a0 = self.run_conv(&block.conv0, input, hl, wl, &mut scratch);
            let a1 = self.run_conv(&block.conv1, &a0, hl, wl, &mut scratch);
            if l < depth {
                pooled.push(maxpool2_sample(&a1, block.conv1.cout, hl, wl));
            }
            enc.push([a0, a1]);
        }
        let mut dec = Vec::with_capacity(self.layout.decoders.len());
        for levels in &self.layout.decoders {
            let mut cached: Vec<Option<DecoderLevel<T>>> = (0..depth).map(|_| None).collect();
            for l in (0..depth).rev() {
                let (hl, wl) = (h >> l, w >> l);
                let below: &[T] = match cached.get(l + 1) {
                    Some(Some(d)) => &d.a1,
                    _ => &enc[depth][1],
                };
                let concat = upsample_concat_sample(
                    below,
                    self.config.channels(l + 1),
                    hl / 2,
                    wl / 2,
                    &enc[l][1],
                );
                let a0 = self.run_conv(&levels[l].conv0, &concat, hl, wl, &mut scratch);
                let a1 = self.run_conv(&levels[l].conv1, &a0, hl, wl, &mut scratch);
                cached[l] = Some(DecoderLevel { concat, a0, a1 });
            }
            dec.push(cached.into_iter().map(|d| d.expect("every level ran")).collect());
        }
        let outputs = self
            .layout
            .heads
            .iter()
            .map(|head| {
                let feat = self.decoder_output(&enc, &dec, head.decoder);
                self.run_conv(&head.conv, feat, h, w, &mut scratch)
            })
            .collect();
        SampleCache {
            h,
            w,
            input: x.to_vec(),
            enc,
            pooled,
            dec,
            outputs,
        }
    }

    fn decoder_output<'a>(
        &self,
        enc: &'a [[Vec<T>; 2]],
        dec: &'a [Vec<DecoderLevel<T>>],
        d: usize,
    ) -> &'a [T] {
        match dec[d].first() {
            Some(level) => &level.a1,
            None => &enc[0][1],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn back_conv(
        &self,
        spec: &ConvSpec,
        x: &[T],
        out: &[T],
        mut dout: Vec<T>,
        h: usize,
        w: usize,
        need_dx: bool,
        grads: &mut [Tensor<T>],
        scratch: &mut Vec<T>,
    ) -> Vec<T> {
        let g = ConvGeom::new(spec.cin, h, w, spec.cout, spec.k, 1, Padding::Same)
            .expect("layout is consistent");
        spec.act.backward_in_place(out, &mut dout);
        let mut dx = if need_dx {
            vec![T::zero(); spec.cin * h * w]
        } else {
            Vec::new()
        };
        let (lo, hi) = grads.split_at_mut(spec.weight + 1);
        conv_backward_sample(
            x,
            self.params[spec.weight].data(),
            &dout,
            &g,
            need_dx.then_some(dx.as_mut_slice()),
            lo[spec.weight].data_mut(),
            hi[0].data_mut(),
            scratch,
        );
        dx
    }

    /// Accumulate parameter gradients of one sample into `grads`, given the
    /// loss gradient with respect to each head output. Tasks missing from
    /// `d_outputs` contribute nothing.
    pub fn backward_sample(
        &self,
        cache: &SampleCache<T>,
        d_outputs: &BTreeMap<Task, Vec<T>>,
        grads: &mut [Tensor<T>],
    ) -> Result<()> {
        let depth = self.config.depth;
        let (h, w) = (cache.h, cache.w);
        let mut scratch = Vec::new();
        let zeros = |c: usize, l: usize| vec![T::zero(); c * (h >> l) * (w >> l)];

        // Gradient flowing into each decoder's final feature map.
        let mut d_feat: Vec<Option<Vec<T>>> = vec![None; self.layout.decoders.len()];
        for (k, head) in self.layout.heads.iter().enumerate() {
            let Some(d) = d_outputs.get(&head.task) else {
                continue;
            };
            if d.len() != h * w {
                return Err(CanopyError::Shape(format!(
                    "{} gradient has {} values, expected {}",
                    head.task,
                    d.len(),
                    h * w
                )));
            }
            let feat = self.decoder_output(&cache.enc, &cache.dec, head.decoder);
            let dx = self.back_conv(
                &head.conv,
                feat,
                &cache.outputs[k],
                d.clone(),
                h,
                w,
                true,
                grads,
                &mut scratch,
            );
            match &mut d_feat[head.decoder] {
                Some(acc) => acc.iter_mut().zip(&dx).for_each(|(a, &b)| *a += b),
                slot => *slot = Some(dx),
            }
        }

        // Gradients w.r.t. each encoder level's final activation.
        let mut d_enc: Vec<Vec<T>> = (0..=depth)
            .map(|l| zeros(self.config.channels(l), l))
            .collect();
        for (d, levels) in self.layout.decoders.iter().enumerate() {
            let Some(mut grad) = d_feat[d].take() else {
                continue;
            };
            if depth == 0 {
                add_into(&mut d_enc[0], &grad);
                continue;
            }
            for (l, block) in levels.iter().enumerate() {
                let (hl, wl) = (h >> l, w >> l);
                let lvl = &cache.dec[d][l];
                let d_a0 = self.back_conv(
                    &block.conv1, &lvl.a0, &lvl.a1, grad, hl, wl, true, grads, &mut scratch,
                );
                let d_concat = self.back_conv(
                    &block.conv0, &lvl.concat, &lvl.a0, d_a0, hl, wl, true, grads, &mut scratch,
                );
                grad = upsample_concat_backward_sample(
                    &d_concat,
                    self.config.channels(l + 1),
                    hl / 2,
                    wl / 2,
                    &mut d_enc[l],
                );
            }
            add_into(&mut d_enc[depth], &grad);
        }

        for l in (0..=depth).rev() {
            let (hl, wl) = (h >> l, w >> l);
            let block = &self.layout.encoder[l];
            let [a0, a1] = &cache.enc[l];
            let grad = std::mem::take(&mut d_enc[l]);
            let d_a0 = self.back_conv(&block.conv1, a0, a1, grad, hl, wl, true, grads, &mut scratch);
            let input: &[T] = if l == 0 { &cache.input } else { &cache.pooled[l - 1].0 };
            let d_in = self.back_conv(
                &block.conv0, input, a0, d_a0, hl, wl, l > 0, grads, &mut scratch,
            );
            if l > 0 {
                maxpool2_backward_sample(&d_in, &cache.pooled[l - 1].1, &mut d_enc[l - 1]);
            }
        }
        Ok(())
    }
}

fn add_into<T: Scalar>(acc: &mut [T], v: &[T]) {
    acc.iter_mut().zip(v).for_each(|(a, &b)| *a += b);
}
