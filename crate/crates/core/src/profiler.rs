//! Exact parameter and FLOP accounting.
//!
//! Convention: one multiply-accumulate is 2 FLOPs. A convolution costs
//! `2·D·H·W·C_in·C_out·k` per sample (`k` = 1 or 27, bias adds excluded),
//! normalisation and ReLU cost 1 FLOP per element, average pooling 1 FLOP
//! per input element. Group shift, upsampling and concatenation are pure
//! data movement: 0 FLOPs; shifts additionally report the bytes they move.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{build_network, ConvKind, LayerKind, Network, NetworkSpec, Side};
use crate::scalar::Scalar;
use crate::tensor::Shape5;

/// Element size assumed for the moved-bytes column.
pub const MOVED_ELEMENT_BYTES: u64 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub name: String,
    pub kind: String,
    pub params: u64,
    /// Convolution weights without biases; 0 for other layers.
    pub weights: u64,
    pub flops: u64,
    pub moved_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostTotals {
    pub params: u64,
    pub flops: u64,
    /// FLOPs of the convolutions inside conv blocks (the pointwise head,
    /// which never changes kind, is excluded).
    pub conv_flops: u64,
    /// Weights (no biases) of the convolutions inside conv blocks.
    pub conv_weights: u64,
    pub moved_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub input: [usize; 5],
    pub rows: Vec<CostRow>,
    pub totals: CostTotals,
}

impl CostReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# MAC = 2 FLOPs\nlayer,kind,params,flops,moved_bytes\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.name, r.kind, r.params, r.flops, r.moved_bytes));
        }
        let t = &self.totals;
        out.push_str(&format!("total,,{},{},{}\n", t.params, t.flops, t.moved_bytes));
        out
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<[String; 5]> = vec![["layer".into(), "kind".into(), "params".into(), "FLOPs".into(), "moved bytes".into()]];
        let t = &self.totals;
        for r in self.rows.iter().map(|r| (r.name.as_str(), r.kind.as_str(), r.params, r.flops, r.moved_bytes)).chain([("total", "", t.params, t.flops, t.moved_bytes)]) {
            rows.push([r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string(), r.4.to_string()]);
        }
        let widths: Vec<usize> = (0..5).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
        let mut out = format!("input {:?}, MAC = 2 FLOPs\n", self.input);
        for r in rows {
            let line = format!(
                "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
                r[0], r[1], r[2], r[3], r[4],
                w0 = widths[0], w1 = widths[1], w2 = widths[2], w3 = widths[3], w4 = widths[4]
            );
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

pub fn conv_params(kind: ConvKind, c_in: usize, c_out: usize) -> u64 {
    (kernel_volume(kind) * c_in * c_out + c_out) as u64
}

pub fn conv_flops(kind: ConvKind, voxels: usize, c_in: usize, c_out: usize) -> u64 {
    2 * (voxels * c_in * c_out * kernel_volume(kind)) as u64
}

fn kernel_volume(kind: ConvKind) -> usize {
    match kind {
        ConvKind::Pointwise => 1,
        ConvKind::Conv3 => 27,
    }
}

fn kind_name(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv { kind: ConvKind::Pointwise, .. } => "conv1x1x1",
        LayerKind::Conv { kind: ConvKind::Conv3, .. } => "conv3x3x3",
        LayerKind::Norm { .. } => "norm",
        LayerKind::Relu { .. } => "relu",
        LayerKind::Shift { .. } => "group_shift",
        LayerKind::AvgPool { .. } => "avgpool",
        LayerKind::Upsample { .. } => "upsample",
        LayerKind::Concat { .. } => "concat",
    }
}

/// Per-layer parameter counts (FLOP columns left at zero).
pub fn count_params<T: Scalar>(net: &Network<T>) -> CostReport {
    let mut report = count_flops(net, net.input_dims());
    for r in &mut report.rows {
        r.flops = 0;
        r.moved_bytes = 0;
    }
    report.totals = CostTotals { params: report.totals.params, conv_weights: report.totals.conv_weights, ..Default::default() };
    report
}

/// Per-layer parameters and FLOPs for an input of `input` dims (the batch
/// size multiplies every FLOP count; spatial dims may differ from the ones
/// the network was built for as long as they survive the poolings).
pub fn count_flops<T: Scalar>(net: &Network<T>, input: Shape5) -> CostReport {
    let mut rows = Vec::new();
    let mut totals = CostTotals::default();
    for layer in net.layers() {
        let f = 1usize << layer.stage;
        let voxels = input.n * (input.d / f) * (input.h / f) * (input.w / f);
        let weights = match layer.kind {
            LayerKind::Conv { kind, c_in, c_out } => (kernel_volume(kind) * c_in * c_out) as u64,
            _ => 0,
        };
        let (params, flops, moved) = match layer.kind {
            LayerKind::Conv { kind, c_in, c_out } => {
                let fl = conv_flops(kind, voxels, c_in, c_out);
                if layer.side != Side::Head {
                    totals.conv_flops += fl;
                    totals.conv_weights += weights;
                }
                (conv_params(kind, c_in, c_out), fl, 0)
            }
            LayerKind::Norm { channels } => (2 * channels as u64, (voxels * channels) as u64, 0),
            LayerKind::Relu { channels } => (0, (voxels * channels) as u64, 0),
            LayerKind::AvgPool { channels } => (0, (8 * voxels * channels) as u64, 0),
            LayerKind::Shift { cfg, .. } => {
                // channel group 0 stays in place
                let relocated = cfg.shifted - cfg.channels_per_group.min(cfg.shifted);
                (0, 0, (voxels * relocated) as u64 * MOVED_ELEMENT_BYTES)
            }
            LayerKind::Upsample { .. } | LayerKind::Concat { .. } => (0, 0, 0),
        };
        totals.params += params;
        totals.flops += flops;
        totals.moved_bytes += moved;
        rows.push(CostRow {
            name: layer.name,
            kind: kind_name(&layer.kind).to_string(),
            params,
            weights,
            flops,
            moved_bytes: moved,
        });
    }
    CostReport { input: input.to_array(), rows, totals }
}

/// Side-by-side costs of a spec built with pointwise convolutions and with
/// 3×3×3 convolutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pointwise: CostReport,
    pub conv3: CostReport,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

impl Comparison {
    pub fn param_ratio(&self) -> f64 {
        ratio(self.conv3.totals.params, self.pointwise.totals.params)
    }

    pub fn conv_weight_ratio(&self) -> f64 {
        ratio(self.conv3.totals.conv_weights, self.pointwise.totals.conv_weights)
    }

    pub fn conv_flop_ratio(&self) -> f64 {
        ratio(self.conv3.totals.conv_flops, self.pointwise.totals.conv_flops)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "# MAC = 2 FLOPs\nlayer,kind,params_pointwise,params_conv3,param_ratio,weight_ratio,flops_pointwise,flops_conv3,flop_ratio,moved_bytes\n",
        );
        for (a, b) in self.pointwise.rows.iter().zip(&self.conv3.rows) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                a.name,
                a.kind.replace("conv1x1x1", "conv"),
                a.params,
                b.params,
                fmt_ratio(ratio(b.params, a.params)),
                fmt_ratio(ratio(b.weights, a.weights)),
                a.flops,
                b.flops,
                fmt_ratio(ratio(b.flops, a.flops)),
                a.moved_bytes
            ));
        }
        let (a, b) = (&self.pointwise.totals, &self.conv3.totals);
        out.push_str(&format!(
            "total,,{},{},{},{},{},{},{},{}\n",
            a.params,
            b.params,
            fmt_ratio(self.param_ratio()),
            fmt_ratio(self.conv_weight_ratio()),
            a.flops,
            b.flops,
            fmt_ratio(ratio(b.flops, a.flops)),
            a.moved_bytes
        ));
        out
    }

    pub fn to_table(&self) -> String {
        let mut rows = vec![[
            "layer".to_string(),
            "params(1x1x1)".into(),
            "params(3x3x3)".into(),
            "ratio".into(),
            "FLOPs(1x1x1)".into(),
            "FLOPs(3x3x3)".into(),
            "ratio".into(),
        ]];
        let (a, b) = (&self.pointwise.totals, &self.conv3.totals);
        for (label, pa, pb, fa, fb) in [
            ("block convs", a.conv_weights, b.conv_weights, a.conv_flops, b.conv_flops),
            ("all layers", a.params, b.params, a.flops, b.flops),
        ] {
            rows.push([
                label.to_string(),
                pa.to_string(),
                pb.to_string(),
                fmt_ratio(ratio(pb, pa)),
                fa.to_string(),
                fb.to_string(),
                fmt_ratio(ratio(fb, fa)),
            ]);
        }
        let widths: Vec<usize> = (0..7).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
        let mut out = format!("input {:?}, MAC = 2 FLOPs\n", self.pointwise.input);
        for r in rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn fmt_ratio(r: f64) -> String {
    if r.is_nan() {
        String::new()
    } else {
        format!("{r:.4}")
    }
}

/// Builds `spec` with pointwise and with 3×3×3 convolutions and profiles
/// both at `input`.
pub fn compare_report(spec: &NetworkSpec, input: Shape5) -> Result<Comparison> {
    let pw = build_network::<f32>(&spec.with_conv(ConvKind::Pointwise), input, 0)?;
    let c3 = build_network::<f32>(&spec.with_conv(ConvKind::Conv3), input, 0)?;
    Ok(Comparison { pointwise: count_flops(&pw, input), conv3: count_flops(&c3, input) })
}
