//! The U-Net graph: construction, forward pass and backward pass.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{ConvKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::group_shift::{apply_permutation, build_permutation, invert_permutation, GroupShiftConfig, PermutationTable};
use crate::layers::{
    avgpool2_backward, avgpool2_forward, conv3_backward, conv3_forward, norm_backward, norm_forward,
    pointwise_backward, pointwise_forward, relu_backward_inplace, upsample2_backward, upsample2_forward,
    Conv3Params, NormCache, NormParams, PointwiseConvParams,
};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};

#[derive(Clone, Debug, PartialEq)]
pub enum ConvLayer<T> {
    Pointwise(PointwiseConvParams<T>),
    Conv3(Conv3Params<T>),
}

impl<T: Scalar> ConvLayer<T> {
    pub fn kind(&self) -> ConvKind {
        match self {
            ConvLayer::Pointwise(_) => ConvKind::Pointwise,
            ConvLayer::Conv3(_) => ConvKind::Conv3,
        }
    }

    pub fn channels(&self) -> (usize, usize) {
        match self {
            ConvLayer::Pointwise(p) => (p.c_in, p.c_out),
            ConvLayer::Conv3(p) => (p.c_in, p.c_out),
        }
    }

    fn forward(&self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        match self {
            ConvLayer::Pointwise(p) => pointwise_forward(x, p),
            ConvLayer::Conv3(p) => conv3_forward(x, p),
        }
    }

    /// Returns (input grad, weight grad, bias grad).
    fn backward(&self, x: &VolumeTensor<T>, g: &VolumeTensor<T>) -> Result<(VolumeTensor<T>, Vec<T>, Vec<T>)> {
        match self {
            ConvLayer::Pointwise(p) => pointwise_backward(x, p, g).map(|r| (r.input, r.weight, r.bias)),
            ConvLayer::Conv3(p) => conv3_backward(x, p, g).map(|r| (r.input, r.weight, r.bias)),
        }
    }

    fn weight(&self) -> &[T] {
        match self {
            ConvLayer::Pointwise(p) => &p.weight,
            ConvLayer::Conv3(p) => &p.weight,
        }
    }

    fn bias(&self) -> &[T] {
        match self {
            ConvLayer::Pointwise(p) => &p.bias,
            ConvLayer::Conv3(p) => &p.bias,
        }
    }

}

/// Convolution → normalisation → ReLU.
#[derive(Clone, Debug)]
pub struct ConvUnit<T> {
    pub name: String,
    pub conv: ConvLayer<T>,
    pub norm: NormParams<T>,
}

/// A group shift bound to one feature-map shape.
#[derive(Clone, Debug)]
pub struct ShiftLayer {
    pub name: String,
    pub cfg: GroupShiftConfig,
    /// Per-sample dims the tables were built for.
    pub dims: Shape5,
    pub table: Arc<PermutationTable>,
    pub inverse: Arc<PermutationTable>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockOp {
    Conv(usize),
    Shift(usize),
}

/// Where a layer sits, for reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Encoder,
    Decoder,
    Head,
}

/// One entry of the flattened layer listing used by the profiler.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub side: Side,
    /// Stage index (0-based); spatial dims are the input dims divided by `2^stage`.
    pub stage: usize,
    pub kind: LayerKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv { kind: ConvKind, c_in: usize, c_out: usize },
    Norm { channels: usize },
    Relu { channels: usize },
    Shift { channels: usize, cfg: GroupShiftConfig },
    /// Pools from `stage - 1` into `stage`.
    AvgPool { channels: usize },
    /// Upsamples from `stage + 1` into `stage`.
    Upsample { channels: usize },
    Concat { channels: usize },
}

#[derive(Clone, Debug)]
enum OpCache<T> {
    Conv {
        input: VolumeTensor<T>,
        norm: NormCache<T>,
        output: VolumeTensor<T>,
    },
    Shift,
}

#[derive(Clone, Debug)]
struct Tape<T> {
    enc: Vec<Vec<OpCache<T>>>,
    dec: Vec<Vec<OpCache<T>>>,
    enc_out_shapes: Vec<Shape5>,
    head_input: VolumeTensor<T>,
    batch: usize,
}

/// Gradients from one backward pass, aligned with [`Network::parameters`].
#[derive(Clone, Debug)]
pub struct NetworkGrads<T> {
    pub params: Vec<Vec<T>>,
    pub input: VolumeTensor<T>,
}

impl<T: Scalar> NetworkGrads<T> {
    pub fn scale(&mut self, f: T) {
        for p in &mut self.params {
            p.iter_mut().for_each(|v| *v *= f);
        }
        self.input.data_mut().iter_mut().for_each(|v| *v *= f);
    }
}

/// A tiny 3D U-Net: encoder blocks with average pooling in between, decoder
/// blocks with nearest upsampling and skip concatenation, and a pointwise
/// classification head.
#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    input_dims: Shape5,
    units: Vec<ConvUnit<T>>,
    shifts: Vec<ShiftLayer>,
    encoder: Vec<Vec<BlockOp>>,
    /// Indexed by stage, `0..stages-1`.
    decoder: Vec<Vec<BlockOp>>,
    /// Optional shift after the upsampling that feeds decoder stage `s`.
    up_shift: Vec<Option<usize>>,
    head: PointwiseConvParams<T>,
    tape: Option<Tape<T>>,
}

struct Builder<'a, T> {
    rng: ChaCha8Rng,
    units: Vec<ConvUnit<T>>,
    shifts: Vec<ShiftLayer>,
    tables: HashMap<(Shape5, GroupShiftConfig), (Arc<PermutationTable>, Arc<PermutationTable>)>,
    spec: &'a NetworkSpec,
}

impl<T: Scalar> Builder<'_, T> {
    fn conv(&mut self, name: String, kind: ConvKind, c_in: usize, c_out: usize) -> usize {
        let conv = match kind {
            ConvKind::Pointwise => ConvLayer::Pointwise(PointwiseConvParams::init(c_in, c_out, &mut self.rng)),
            ConvKind::Conv3 => ConvLayer::Conv3(Conv3Params::init(c_in, c_out, &mut self.rng)),
        };
        self.units.push(ConvUnit { name, conv, norm: NormParams::new(c_out) });
        self.units.len() - 1
    }

    fn shift(&mut self, name: String, stage: usize, dims: Shape5) -> Result<usize> {
        let groups = self.spec.stages[stage].groups;
        let cfg = GroupShiftConfig::from_fraction(groups, dims.c, self.spec.shift_fraction.0)
            .and_then(|cfg| cfg.bind(dims).map(|_| cfg))
            .map_err(|e| {
                let msg = match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                };
                Error::Config(format!("stage {} ({name}, dims {dims}): {msg}", stage + 1))
            })?;
        let (table, inverse) = self
            .tables
            .entry((dims, cfg))
            .or_insert_with(|| {
                let t = build_permutation(&cfg, dims).expect("config already bound");
                let inv = invert_permutation(&t);
                (Arc::new(t), Arc::new(inv))
            })
            .clone();
        self.shifts.push(ShiftLayer { name, cfg, dims, table, inverse });
        Ok(self.shifts.len() - 1)
    }

    fn block(&mut self, prefix: &str, stage: usize, c_in: usize, dims: Shape5, with_shift: bool) -> Result<Vec<BlockOp>> {
        let st = self.spec.stages[stage];
        let (after_first, after_second) = if with_shift { self.spec.insert.after_conv() } else { (false, false) };
        let mut ops = Vec::new();
        ops.push(BlockOp::Conv(self.conv(format!("{prefix}.conv1"), st.conv, c_in, st.channels)));
        if after_first {
            ops.push(BlockOp::Shift(self.shift(format!("{prefix}.gs1"), stage, dims.with_channels(st.channels))?));
        }
        ops.push(BlockOp::Conv(self.conv(format!("{prefix}.conv2"), st.conv, st.channels, st.channels)));
        if after_second {
            ops.push(BlockOp::Shift(self.shift(format!("{prefix}.gs2"), stage, dims.with_channels(st.channels))?));
        }
        Ok(ops)
    }
}

/// Per-sample spatial dims at every stage, checking divisibility.
pub(crate) fn stage_dims(spec: &NetworkSpec, input: Shape5) -> Result<Vec<Shape5>> {
    let stages = spec.stages.len();
    let factor = 1usize << (stages - 1);
    for (axis, extent) in [("D", input.d), ("H", input.h), ("W", input.w)] {
        if extent % factor != 0 {
            return Err(Error::Config(format!(
                "input axis {axis} = {extent} not divisible by {factor} ({} poolings)",
                stages - 1
            )));
        }
    }
    Ok((0..stages)
        .map(|s| input.with_batch(1).with_spatial(input.d >> s, input.h >> s, input.w >> s))
        .collect())
}

/// Builds a network for per-sample input dims `(1, D, H, W, in_channels)`,
/// initialising parameters from `seed`.
pub fn build_network<T: Scalar>(spec: &NetworkSpec, input_dims: Shape5, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    let input_dims = input_dims.with_batch(1);
    if input_dims.c != spec.in_channels {
        return Err(Error::shape(format!(
            "input has {} channels, spec expects {}",
            input_dims.c, spec.in_channels
        )));
    }
    let dims = stage_dims(spec, input_dims)?;
    let stages = spec.stages.len();
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        units: Vec::new(),
        shifts: Vec::new(),
        tables: HashMap::new(),
        spec,
    };

    let mut encoder = Vec::with_capacity(stages);
    let mut c_in = spec.in_channels;
    for s in 0..stages {
        encoder.push(b.block(&format!("enc{}", s + 1), s, c_in, dims[s], spec.placement.encoder())?);
        c_in = spec.stages[s].channels;
    }

    let mut decoder = vec![Vec::new(); stages - 1];
    let mut up_shift = vec![None; stages - 1];
    let mut below = spec.stages[stages - 1].channels;
    for s in (0..stages - 1).rev() {
        if spec.insert.up_shift() && spec.placement.decoder() {
            up_shift[s] = Some(b.shift(format!("up{}.gs", s + 1), s, dims[s].with_channels(below))?);
        }
        let skip = spec.stages[s].channels;
        decoder[s] = b.block(&format!("dec{}", s + 1), s, skip + below, dims[s], spec.placement.decoder())?;
        below = spec.stages[s].channels;
    }

    let head = PointwiseConvParams::init(spec.stages[0].channels, spec.num_classes, &mut b.rng);
    Ok(Network {
        spec: spec.clone(),
        input_dims,
        units: b.units,
        shifts: b.shifts,
        encoder,
        decoder,
        up_shift,
        head,
        tape: None,
    })
}

impl<T: Scalar> Network<T> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Per-sample input dims (`N = 1`).
    pub fn input_dims(&self) -> Shape5 {
        self.input_dims
    }

    pub fn units(&self) -> &[ConvUnit<T>] {
        &self.units
    }

    pub fn shifts(&self) -> &[ShiftLayer] {
        &self.shifts
    }

    pub fn head(&self) -> &PointwiseConvParams<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut PointwiseConvParams<T> {
        &mut self.head
    }

    /// Named parameter slices, in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::with_capacity(self.units.len() * 4 + 2);
        for u in &self.units {
            out.push((format!("{}.weight", u.name), u.conv.weight()));
            out.push((format!("{}.bias", u.name), u.conv.bias()));
            out.push((format!("{}.norm.scale", u.name), &u.norm.scale[..]));
            out.push((format!("{}.norm.shift", u.name), &u.norm.shift[..]));
        }
        out.push(("head.weight".to_string(), &self.head.weight[..]));
        out.push(("head.bias".to_string(), &self.head.bias[..]));
        out
    }

    /// Mutable parameter slices in the same order as [`Self::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(self.units.len() * 4 + 2);
        for u in &mut self.units {
            let ConvUnit { conv, norm, .. } = u;
            match conv {
                ConvLayer::Pointwise(p) => {
                    out.push(&mut p.weight[..]);
                    out.push(&mut p.bias[..]);
                }
                ConvLayer::Conv3(p) => {
                    out.push(&mut p.weight[..]);
                    out.push(&mut p.bias[..]);
                }
            }
            out.push(&mut norm.scale[..]);
            out.push(&mut norm.shift[..]);
        }
        out.push(&mut self.head.weight[..]);
        out.push(&mut self.head.bias[..]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    /// Replaces all parameters, in [`Self::parameters`] order.
    pub fn load_parameters(&mut self, values: &[Vec<T>]) -> Result<()> {
        let slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(Error::shape(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (i, (slot, v)) in slots.into_iter().zip(values).enumerate() {
            if slot.len() != v.len() {
                return Err(Error::shape(format!(
                    "parameter {i}: expected {} values, got {}",
                    slot.len(),
                    v.len()
                )));
            }
            slot.copy_from_slice(v);
        }
        Ok(())
    }

    /// Flattened layer listing in execution order.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        let stages = self.spec.stages.len();
        for s in 0..stages {
            if s > 0 {
                out.push(LayerInfo {
                    name: format!("pool{}", s + 1),
                    side: Side::Encoder,
                    stage: s,
                    kind: LayerKind::AvgPool { channels: self.spec.stages[s - 1].channels },
                });
            }
            self.block_layers(&self.encoder[s], Side::Encoder, s, &mut out);
        }
        for s in (0..stages - 1).rev() {
            let below = self.spec.stages[s + 1].channels;
            out.push(LayerInfo {
                name: format!("up{}", s + 1),
                side: Side::Decoder,
                stage: s,
                kind: LayerKind::Upsample { channels: below },
            });
            if let Some(i) = self.up_shift[s] {
                let sh = &self.shifts[i];
                out.push(LayerInfo {
                    name: sh.name.clone(),
                    side: Side::Decoder,
                    stage: s,
                    kind: LayerKind::Shift { channels: sh.dims.c, cfg: sh.cfg },
                });
            }
            out.push(LayerInfo {
                name: format!("cat{}", s + 1),
                side: Side::Decoder,
                stage: s,
                kind: LayerKind::Concat { channels: below + self.spec.stages[s].channels },
            });
            self.block_layers(&self.decoder[s], Side::Decoder, s, &mut out);
        }
        out.push(LayerInfo {
            name: "head".into(),
            side: Side::Head,
            stage: 0,
            kind: LayerKind::Conv { kind: ConvKind::Pointwise, c_in: self.head.c_in, c_out: self.head.c_out },
        });
        out
    }

    fn block_layers(&self, ops: &[BlockOp], side: Side, stage: usize, out: &mut Vec<LayerInfo>) {
        for op in ops {
            match *op {
                BlockOp::Conv(u) => {
                    let unit = &self.units[u];
                    let (c_in, c_out) = unit.conv.channels();
                    out.push(LayerInfo {
                        name: unit.name.clone(),
                        side,
                        stage,
                        kind: LayerKind::Conv { kind: unit.conv.kind(), c_in, c_out },
                    });
                    out.push(LayerInfo {
                        name: format!("{}.norm", unit.name),
                        side,
                        stage,
                        kind: LayerKind::Norm { channels: c_out },
                    });
                    out.push(LayerInfo {
                        name: format!("{}.relu", unit.name),
                        side,
                        stage,
                        kind: LayerKind::Relu { channels: c_out },
                    });
                }
                BlockOp::Shift(i) => {
                    let sh = &self.shifts[i];
                    out.push(LayerInfo {
                        name: sh.name.clone(),
                        side,
                        stage,
                        kind: LayerKind::Shift { channels: sh.dims.c, cfg: sh.cfg },
                    });
                }
            }
        }
    }

    fn check_input(&self, x: &VolumeTensor<T>) -> Result<()> {
        if x.shape().with_batch(1) != self.input_dims {
            return Err(Error::shape(format!(
                "network built for per-sample dims {}, got {}",
                self.input_dims,
                x.shape()
            )));
        }
        Ok(())
    }

    fn run_block(&self, ops: &[BlockOp], mut h: VolumeTensor<T>, tape: Option<&mut Vec<OpCache<T>>>) -> Result<VolumeTensor<T>> {
        let mut tape = tape;
        for op in ops {
            match *op {
                BlockOp::Conv(u) => {
                    let unit = &self.units[u];
                    let pre = unit.conv.forward(&h)?;
                    let (normed, cache) = norm_forward(&pre, &unit.norm)?;
                    drop(pre);
                    let out = normed.relu();
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(OpCache::Conv { input: h, norm: cache, output: out.clone() });
                    }
                    h = out;
                }
                BlockOp::Shift(i) => {
                    h = apply_permutation(&h, &self.shifts[i].table)?;
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(OpCache::Shift);
                    }
                }
            }
        }
        Ok(h)
    }

    fn run(&self, x: &VolumeTensor<T>, record: bool) -> Result<(VolumeTensor<T>, Option<Tape<T>>)> {
        self.check_input(x)?;
        let stages = self.spec.stages.len();
        let mut tape = Tape {
            enc: vec![Vec::new(); stages],
            dec: vec![Vec::new(); stages.saturating_sub(1)],
            enc_out_shapes: Vec::with_capacity(stages),
            head_input: VolumeTensor::zeros(Shape5 { n: 1, d: 1, h: 1, w: 1, c: 1 }),
            batch: x.shape().n,
        };
        let mut skips: Vec<VolumeTensor<T>> = Vec::with_capacity(stages);
        let mut h = x.clone();
        for s in 0..stages {
            if s > 0 {
                h = avgpool2_forward(&h)?;
            }
            h = self.run_block(&self.encoder[s], h, record.then_some(&mut tape.enc[s]))?;
            tape.enc_out_shapes.push(h.shape());
            if s + 1 < stages {
                skips.push(h.clone());
            }
        }
        for s in (0..stages - 1).rev() {
            h = upsample2_forward(&h);
            if let Some(i) = self.up_shift[s] {
                h = apply_permutation(&h, &self.shifts[i].table)?;
            }
            let skip = skips.pop().expect("one skip per decoder stage");
            h = skip.concat_channels(&h)?;
            drop(skip);
            h = self.run_block(&self.decoder[s], h, record.then_some(&mut tape.dec[s]))?;
        }
        let logits = pointwise_forward(&h, &self.head)?;
        if record {
            tape.head_input = h;
            Ok((logits, Some(tape)))
        } else {
            Ok((logits, None))
        }
    }

    /// Inference: no activations are retained.
    pub fn predict(&self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        self.run(x, false).map(|(y, _)| y)
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward(&mut self, x: &VolumeTensor<T>) -> Result<VolumeTensor<T>> {
        let (y, tape) = self.run(x, true)?;
        self.tape = tape;
        Ok(y)
    }

    /// Drops retained activations.
    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    fn block_backward(
        &self,
        ops: &[BlockOp],
        caches: &[OpCache<T>],
        mut g: VolumeTensor<T>,
        grads: &mut [Vec<T>],
    ) -> Result<VolumeTensor<T>> {
        for (op, cache) in ops.iter().zip(caches).rev() {
            match (*op, cache) {
                (BlockOp::Conv(u), OpCache::Conv { input, norm, output }) => {
                    let unit = &self.units[u];
                    relu_backward_inplace(g.data_mut(), output.data());
                    let ng = norm_backward(norm, &unit.norm, &g)?;
                    let (gx, gw, gb) = unit.conv.backward(input, &ng.input)?;
                    accumulate(&mut grads[4 * u], &gw);
                    accumulate(&mut grads[4 * u + 1], &gb);
                    accumulate(&mut grads[4 * u + 2], &ng.scale);
                    accumulate(&mut grads[4 * u + 3], &ng.shift);
                    g = gx;
                }
                (BlockOp::Shift(i), OpCache::Shift) => {
                    g = apply_permutation(&g, &self.shifts[i].inverse)?;
                }
                _ => return Err(Error::State("tape does not match network topology".into())),
            }
        }
        Ok(g)
    }

    /// Back-propagates `grad_logits` through the last [`Self::forward`].
    /// The retained activations are consumed.
    pub fn backward(&mut self, grad_logits: &VolumeTensor<T>) -> Result<NetworkGrads<T>> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward".into()))?;
        let expected = self.input_dims.with_batch(tape.batch).with_channels(self.spec.num_classes);
        if grad_logits.shape() != expected {
            return Err(Error::shape(format!(
                "logit gradient {} does not match {expected}",
                grad_logits.shape()
            )));
        }
        let mut grads: Vec<Vec<T>> = self.parameters().iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
        let nh = grads.len() - 2;

        let head = pointwise_backward(&tape.head_input, &self.head, grad_logits)?;
        grads[nh] = head.weight;
        grads[nh + 1] = head.bias;
        let mut g = head.input;

        let stages = self.spec.stages.len();
        let mut skip_grads: Vec<Option<VolumeTensor<T>>> = vec![None; stages];
        for s in 0..stages - 1 {
            g = self.block_backward(&self.decoder[s], &tape.dec[s], g, &mut grads)?;
            let (g_skip, mut g_up) = g.split_channels(self.spec.stages[s].channels)?;
            skip_grads[s] = Some(g_skip);
            if let Some(i) = self.up_shift[s] {
                g_up = apply_permutation(&g_up, &self.shifts[i].inverse)?;
            }
            g = upsample2_backward(&g_up)?;
        }
        for s in (0..stages).rev() {
            if let Some(extra) = skip_grads[s].take() {
                g.add_assign(&extra)?;
            }
            g = self.block_backward(&self.encoder[s], &tape.enc[s], g, &mut grads)?;
            if s > 0 {
                g = avgpool2_backward(&g, tape.enc_out_shapes[s - 1])?;
            }
        }
        Ok(NetworkGrads { params: grads, input: g })
    }
}

fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
