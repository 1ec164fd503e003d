//! The size-routed localization network: three distinct input branches, a
//! shared trunk, and two spatial softmax heads (14x14 ROI, 7x7 center).
//!
//! Routing: a 448 patch runs its own branch down to 224 resolution and then
//! joins the shared trunk; a 224 patch runs its branch at full resolution and
//! enters the same trunk point; a 56 patch runs its entry convolution and
//! joins the trunk at the 56-resolution stage. Everything from the first
//! shared layer onward uses the same parameter objects for every route, so
//! gradients exist only for the active branch plus the touched trunk
//! sections.

mod checkpoint;
mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use ndarray::{Array1, Array3, Array4, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SizeClass;
use crate::grid::ProbMatrix;
use crate::image::ImageBuf;
use crate::loss::{self, LossConfig};
use crate::mask::LocalizationTargets;

use layers::{
    channel_mean, channel_mean_backward, conv_backward, conv_forward, maxpool2_backward,
    maxpool2_forward, out_side, spatial_softmax, spatial_softmax_backward,
};

/// Channel plan for every stage of the network.
///
/// Join constraints: the last 224-branch width must equal the 448-branch
/// downsampler width (both feed the shared reduce section), and the last
/// 56-branch width must equal the last reduce width (both feed the trunk).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WidthConfig {
    /// 3x3 convolutions at 448 resolution (448 branch).
    pub s448_convs: Vec<usize>,
    /// Output width of the 2x2 stride-2 conv closing the 448 branch.
    pub s448_down: usize,
    /// 3x3 convolutions at 224 resolution (224 branch).
    pub s224_convs: Vec<usize>,
    /// Shared section reducing 224 -> 56 with max-pools between convs.
    pub reduce_convs: Vec<usize>,
    /// 3x3 convolutions at 56 resolution (56 branch entry).
    pub s56_convs: Vec<usize>,
    /// Shared trunk 56 -> 14 with two max-pools.
    pub trunk_convs: Vec<usize>,
    /// Output width of the 2x2 stride-2 conv producing the 7x7 head input.
    pub tail_channels: usize,
}

impl Default for WidthConfig {
    fn default() -> Self {
        Self {
            s448_convs: vec![16, 16],
            s448_down: 32,
            s224_convs: vec![32, 32],
            reduce_convs: vec![32, 32],
            s56_convs: vec![32],
            trunk_convs: vec![64; 6],
            tail_channels: 64,
        }
    }
}

impl WidthConfig {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("s448_convs", &self.s448_convs),
            ("s224_convs", &self.s224_convs),
            ("reduce_convs", &self.reduce_convs),
            ("s56_convs", &self.s56_convs),
            ("trunk_convs", &self.trunk_convs),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} must not be empty")));
            }
            if list.contains(&0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} contains a zero width"
                )));
            }
        }
        if self.s448_down == 0 || self.tail_channels == 0 {
            return Err(Error::InvalidConfig("zero channel width".into()));
        }
        let s224_out = *self.s224_convs.last().unwrap();
        if s224_out != self.s448_down {
            return Err(Error::InvalidConfig(format!(
                "stage output != next stage input: 224-branch ends at {s224_out} channels but \
                 the 448-branch downsampler feeds the shared section {} channels",
                self.s448_down
            )));
        }
        let s56_out = *self.s56_convs.last().unwrap();
        let reduce_out = *self.reduce_convs.last().unwrap();
        if s56_out != reduce_out {
            return Err(Error::InvalidConfig(format!(
                "stage output != next stage input: 56-branch ends at {s56_out} channels but \
                 the trunk expects {reduce_out}"
            )));
        }
        Ok(())
    }
}

/// Weights and bias of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `[out_ch, in_ch, k, k]`
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvParams {
    fn zeros(spec: &ConvSpec) -> Self {
        Self {
            weight: Array4::zeros((spec.out_ch, spec.in_ch, spec.k, spec.k)),
            bias: Array1::zeros(spec.out_ch),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shared parameters: the 224->56 reduce section, the 56->14 trunk core and
/// the 14->7 center tail.
#[derive(Debug, Clone, PartialEq)]
pub struct TrunkParams {
    pub reduce: Vec<ConvParams>,
    pub main: Vec<ConvParams>,
    pub tail: ConvParams,
}

/// Full model: three disjoint branch parameter sets plus the shared trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub width: WidthConfig,
    pub version_tag: String,
    pub s448: Vec<ConvParams>,
    pub s224: Vec<ConvParams>,
    pub s56: Vec<ConvParams>,
    pub trunk: TrunkParams,
}

/// The two head distributions for one patch.
#[derive(Debug, Clone)]
pub struct LocalizationOutput {
    /// 14x14 ROI probabilities.
    pub roi_probs: ProbMatrix,
    /// 7x7 center probabilities.
    pub center_probs: ProbMatrix,
}

/// Gradients for one input: the active branch plus the touched trunk
/// sections. Inactive branches have no entry at all, and `reduce` is `None`
/// for 56-class inputs, which never touch the reduce section.
#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub size_class: SizeClass,
    pub branch: Vec<ConvParams>,
    pub reduce: Option<Vec<ConvParams>>,
    pub main: Vec<ConvParams>,
    pub tail: ConvParams,
}

/// One layer of a route, for structural inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanLayer {
    /// Convolution with an optional rectified-linear nonlinearity.
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        relu: bool,
    },
    MaxPool2,
    ChannelMean,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
}

impl ConvSpec {
    fn conv3(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            k: 3,
            stride: 1,
            pad: 1,
            relu: true,
        }
    }

    fn down2(in_ch: usize, out_ch: usize, relu: bool) -> Self {
        Self {
            in_ch,
            out_ch,
            k: 2,
            stride: 2,
            pad: 0,
            relu,
        }
    }
}

fn chain3(widths: &[usize], mut in_ch: usize) -> Vec<ConvSpec> {
    let mut specs = Vec::with_capacity(widths.len());
    for &w in widths {
        specs.push(ConvSpec::conv3(in_ch, w));
        in_ch = w;
    }
    specs
}

pub(crate) struct SegmentSpecs {
    pub s448: Vec<ConvSpec>,
    pub s224: Vec<ConvSpec>,
    pub s56: Vec<ConvSpec>,
    pub reduce: Vec<ConvSpec>,
    pub main: Vec<ConvSpec>,
    pub tail: ConvSpec,
    /// Convolutions before the first pool in the reduce section.
    pub reduce_split: usize,
    /// Convolutions before the first and second pool in the trunk core.
    pub main_splits: (usize, usize),
}

pub(crate) fn segment_specs(width: &WidthConfig) -> SegmentSpecs {
    let mut s448 = chain3(&width.s448_convs, 3);
    s448.push(ConvSpec::down2(
        *width.s448_convs.last().unwrap(),
        width.s448_down,
        true,
    ));
    let s224 = chain3(&width.s224_convs, 3);
    let s56 = chain3(&width.s56_convs, 3);
    let reduce = chain3(&width.reduce_convs, width.s448_down);
    let mut main = chain3(&width.trunk_convs, *width.reduce_convs.last().unwrap());
    // The final trunk convolution feeds the ROI head directly; no relu.
    main.last_mut().unwrap().relu = false;
    let tail = ConvSpec::down2(
        *width.trunk_convs.last().unwrap(),
        width.tail_channels,
        false,
    );

    let m = reduce.len();
    let n = main.len();
    SegmentSpecs {
        s448,
        s224,
        s56,
        reduce,
        main,
        tail,
        reduce_split: m.div_ceil(2),
        main_splits: (n.div_ceil(3), (2 * n).div_ceil(3)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Seg {
    Branch,
    Reduce,
    Main,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum RouteStep {
    Conv { seg: Seg, idx: usize },
    Pool,
}

/// The backbone schedule for one size class, ending at the 14x14 feature
/// map the heads read.
pub(crate) fn route_steps(specs: &SegmentSpecs, size_class: SizeClass) -> Vec<RouteStep> {
    let mut steps = Vec::new();
    let branch_len = match size_class {
        SizeClass::S448 => specs.s448.len(),
        SizeClass::S224 => specs.s224.len(),
        SizeClass::S56 => specs.s56.len(),
    };
    for idx in 0..branch_len {
        steps.push(RouteStep::Conv {
            seg: Seg::Branch,
            idx,
        });
    }
    if size_class != SizeClass::S56 {
        for idx in 0..specs.reduce.len() {
            if idx == specs.reduce_split {
                steps.push(RouteStep::Pool);
            }
            steps.push(RouteStep::Conv {
                seg: Seg::Reduce,
                idx,
            });
        }
        steps.push(RouteStep::Pool);
        if specs.reduce_split == specs.reduce.len() {
            steps.push(RouteStep::Pool);
        }
    }
    let (b1, b2) = specs.main_splits;
    for idx in 0..specs.main.len() {
        if idx == b1 {
            steps.push(RouteStep::Pool);
        }
        if idx == b2 && b2 != b1 {
            steps.push(RouteStep::Pool);
        }
        steps.push(RouteStep::Conv {
            seg: Seg::Main,
            idx,
        });
    }
    if b1 == specs.main.len() {
        steps.push(RouteStep::Pool);
    }
    if b2 == specs.main.len() || b2 == b1 {
        steps.push(RouteStep::Pool);
    }
    steps
}

impl ModelParameters {
    pub fn branch(&self, size_class: SizeClass) -> &[ConvParams] {
        match size_class {
            SizeClass::S448 => &self.s448,
            SizeClass::S224 => &self.s224,
            SizeClass::S56 => &self.s56,
        }
    }

    fn branch_mut(&mut self, size_class: SizeClass) -> &mut Vec<ConvParams> {
        match size_class {
            SizeClass::S448 => &mut self.s448,
            SizeClass::S224 => &mut self.s224,
            SizeClass::S56 => &mut self.s56,
        }
    }

    fn conv(&self, size_class: SizeClass, seg: Seg, idx: usize) -> &ConvParams {
        match seg {
            Seg::Branch => &self.branch(size_class)[idx],
            Seg::Reduce => &self.trunk.reduce[idx],
            Seg::Main => &self.trunk.main[idx],
        }
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, p)| p.len()).sum()
    }

    /// Canonical `(name, tensors)` listing, used by checkpoints.
    pub fn tensors(&self) -> Vec<(String, &ConvParams)> {
        fn seg<'a>(name: &str, convs: &'a [ConvParams], out: &mut Vec<(String, &'a ConvParams)>) {
            for (i, c) in convs.iter().enumerate() {
                out.push((format!("{name}.{i}"), c));
            }
        }
        let mut out = Vec::new();
        seg("s448", &self.s448, &mut out);
        seg("s224", &self.s224, &mut out);
        seg("s56", &self.s56, &mut out);
        seg("reduce", &self.trunk.reduce, &mut out);
        seg("main", &self.trunk.main, &mut out);
        out.push(("tail".to_string(), &self.trunk.tail));
        out
    }

    /// Layer listing of one route including both heads.
    pub fn route_plan(&self, size_class: SizeClass) -> Vec<PlanLayer> {
        let specs = segment_specs(&self.width);
        let mut plan = Vec::new();
        for step in route_steps(&specs, size_class) {
            plan.push(match step {
                RouteStep::Conv { seg, idx } => {
                    let s = match seg {
                        Seg::Branch => match size_class {
                            SizeClass::S448 => &specs.s448[idx],
                            SizeClass::S224 => &specs.s224[idx],
                            SizeClass::S56 => &specs.s56[idx],
                        },
                        Seg::Reduce => &specs.reduce[idx],
                        Seg::Main => &specs.main[idx],
                    };
                    PlanLayer::Conv {
                        in_ch: s.in_ch,
                        out_ch: s.out_ch,
                        kernel: s.k,
                        stride: s.stride,
                        relu: s.relu,
                    }
                }
                RouteStep::Pool => PlanLayer::MaxPool2,
            });
        }
        plan.push(PlanLayer::ChannelMean);
        plan.push(PlanLayer::Softmax);
        plan.push(PlanLayer::Conv {
            in_ch: specs.tail.in_ch,
            out_ch: specs.tail.out_ch,
            kernel: specs.tail.k,
            stride: specs.tail.stride,
            relu: specs.tail.relu,
        });
        plan.push(PlanLayer::ChannelMean);
        plan.push(PlanLayer::Softmax);
        plan
    }

    /// SGD update from one gradient set: only the gradient's branch and the
    /// touched trunk sections move.
    pub fn apply_sgd(&mut self, grads: &ModelGradients, learning_rate: f64) -> Result<()> {
        let apply = |p: &mut ConvParams, g: &ConvParams| -> Result<()> {
            if p.weight.dim() != g.weight.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient shape {:?} vs parameter shape {:?}",
                    g.weight.dim(),
                    p.weight.dim()
                )));
            }
            p.weight.scaled_add(-learning_rate, &g.weight);
            p.bias.scaled_add(-learning_rate, &g.bias);
            Ok(())
        };
        let branch = self.branch_mut(grads.size_class);
        if branch.len() != grads.branch.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} branch gradients vs {} branch convolutions",
                grads.branch.len(),
                branch.len()
            )));
        }
        for (p, g) in branch.iter_mut().zip(&grads.branch) {
            apply(p, g)?;
        }
        if let Some(reduce) = &grads.reduce {
            for (p, g) in self.trunk.reduce.iter_mut().zip(reduce) {
                apply(p, g)?;
            }
        }
        for (p, g) in self.trunk.main.iter_mut().zip(&grads.main) {
            apply(p, g)?;
        }
        apply(&mut self.trunk.tail, &grads.tail)
    }
}

/// Deterministic parameter initialization: zero biases and normal weights
/// with per-layer variance `2 / fan_in`.
pub fn init_parameters(rng_seed: u64, width: &WidthConfig) -> Result<ModelParameters> {
    width.validate()?;
    let specs = segment_specs(width);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sample_seg = |seg: &[ConvSpec]| -> Vec<ConvParams> {
        seg.iter()
            .map(|s| {
                let std = (2.0 / (s.in_ch * s.k * s.k) as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("valid stddev");
                ConvParams {
                    weight: Array4::from_shape_fn((s.out_ch, s.in_ch, s.k, s.k), |_| {
                        dist.sample(&mut rng)
                    }),
                    bias: Array1::zeros(s.out_ch),
                }
            })
            .collect()
    };
    let s448 = sample_seg(&specs.s448);
    let s224 = sample_seg(&specs.s224);
    let s56 = sample_seg(&specs.s56);
    let reduce = sample_seg(&specs.reduce);
    let main = sample_seg(&specs.main);
    let tail = sample_seg(std::slice::from_ref(&specs.tail)).pop().unwrap();
    Ok(ModelParameters {
        width: width.clone(),
        version_tag: format!("init-seed-{rng_seed}"),
        s448,
        s224,
        s56,
        trunk: TrunkParams { reduce, main, tail },
    })
}

enum StepRecord {
    Conv,
    Pool {
        arg: Array3<u8>,
        in_h: usize,
        in_w: usize,
    },
}

struct ForwardPass {
    output: LocalizationOutput,
    backbone_out: Array3<f64>,
    tail_out: Array3<f64>,
    /// Input of each backbone step, present only when recording.
    inputs: Vec<Array3<f64>>,
    records: Vec<StepRecord>,
}

fn check_patch(patch: &ImageBuf, size_class: SizeClass) -> Result<()> {
    let side = size_class.side();
    if patch.width() != side || patch.height() != side {
        return Err(Error::ShapeMismatch(format!(
            "patch is {}x{} but size class {size_class} expects {side}x{side}",
            patch.width(),
            patch.height()
        )));
    }
    Ok(())
}

fn run_forward(
    params: &ModelParameters,
    patch: &ImageBuf,
    size_class: SizeClass,
    record: bool,
) -> Result<ForwardPass> {
    check_patch(patch, size_class)?;
    let specs = segment_specs(&params.width);
    let steps = route_steps(&specs, size_class);

    let mut inputs: Vec<Array3<f64>> = Vec::new();
    let mut records: Vec<StepRecord> = Vec::new();
    let mut cur: Array3<f64> = patch.data().clone();
    for step in &steps {
        let (next, rec) = match *step {
            RouteStep::Conv { seg, idx } => {
                let spec = match seg {
                    Seg::Branch => match size_class {
                        SizeClass::S448 => specs.s448[idx],
                        SizeClass::S224 => specs.s224[idx],
                        SizeClass::S56 => specs.s56[idx],
                    },
                    Seg::Reduce => specs.reduce[idx],
                    Seg::Main => specs.main[idx],
                };
                let p = params.conv(size_class, seg, idx);
                let mut out = conv_forward(&cur, &p.weight, &p.bias, spec.stride, spec.pad);
                if spec.relu {
                    out.mapv_inplace(|v| v.max(0.0));
                }
                (out, StepRecord::Conv)
            }
            RouteStep::Pool => {
                let (_, in_h, in_w) = cur.dim();
                let (y, arg) = maxpool2_forward(&cur);
                (y, StepRecord::Pool { arg, in_h, in_w })
            }
        };
        let prev = std::mem::replace(&mut cur, next);
        if record {
            inputs.push(prev);
            records.push(rec);
        }
    }
    let backbone_out = cur;
    debug_assert_eq!(backbone_out.dim().1, 14);

    // A very peaked softmax can round to exactly 0 or 1 in f64; nudge such
    // entries back inside the open interval the heads guarantee.
    let open_unit = |mut m: ndarray::Array2<f64>| {
        m.mapv_inplace(|v| v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
        m
    };
    let z1 = channel_mean(&backbone_out);
    let p1 = open_unit(spatial_softmax(&z1));
    let tail = &params.trunk.tail;
    let tail_out = conv_forward(
        &backbone_out,
        &tail.weight,
        &tail.bias,
        specs.tail.stride,
        specs.tail.pad,
    );
    let z2 = channel_mean(&tail_out);
    let p2 = open_unit(spatial_softmax(&z2));

    let output = LocalizationOutput {
        roi_probs: ProbMatrix::new(p1)?,
        center_probs: ProbMatrix::new(p2)?,
    };
    Ok(ForwardPass {
        output,
        backbone_out,
        tail_out,
        inputs,
        records,
    })
}

/// Runs one patch through its route and returns the two head distributions.
pub fn forward(
    params: &ModelParameters,
    patch: &ImageBuf,
    size_class: SizeClass,
) -> Result<LocalizationOutput> {
    run_forward(params, patch, size_class, false).map(|p| p.output)
}

fn relu_gate(mut grad: Array3<f64>, output: &Array3<f64>) -> Array3<f64> {
    Zip::from(&mut grad).and(output).for_each(|g, &o| {
        if o <= 0.0 {
            *g = 0.0;
        }
    });
    grad
}

/// Loss and parameter gradients for one sample. Gradients cover only the
/// active branch and the trunk sections on the route.
pub fn gradient(
    params: &ModelParameters,
    patch: &ImageBuf,
    size_class: SizeClass,
    targets: &LocalizationTargets,
    loss_cfg: &LossConfig,
) -> Result<(f64, ModelGradients)> {
    let pass = run_forward(params, patch, size_class, true)?;
    let loss_value = loss::loss(&pass.output, targets, loss_cfg)?;
    let (g1, g2) = loss::loss_gradient(&pass.output, targets, loss_cfg)?;

    let specs = segment_specs(&params.width);
    let steps = route_steps(&specs, size_class);
    let branch_specs = match size_class {
        SizeClass::S448 => &specs.s448,
        SizeClass::S224 => &specs.s224,
        SizeClass::S56 => &specs.s56,
    };

    let mut branch_grads: Vec<ConvParams> = branch_specs.iter().map(ConvParams::zeros).collect();
    let mut reduce_grads: Option<Vec<ConvParams>> = (size_class != SizeClass::S56)
        .then(|| specs.reduce.iter().map(ConvParams::zeros).collect());
    let mut main_grads: Vec<ConvParams> = specs.main.iter().map(ConvParams::zeros).collect();

    // Head gradients down to the 14x14 feature map.
    let dz1 = spatial_softmax_backward(pass.output.roi_probs.cells(), &g1);
    let dz2 = spatial_softmax_backward(pass.output.center_probs.cells(), &g2);
    let main_ch = pass.backbone_out.dim().0;
    let tail_ch = pass.tail_out.dim().0;
    let d_tail_pre = channel_mean_backward(&dz2, tail_ch);
    let tail = &params.trunk.tail;
    let (tail_dw, tail_db, d_back_from_tail) = conv_backward(
        &pass.backbone_out,
        &tail.weight,
        &d_tail_pre,
        specs.tail.stride,
        specs.tail.pad,
        true,
    );
    let mut dcur = channel_mean_backward(&dz1, main_ch) + d_back_from_tail.unwrap();

    // Walk the backbone in reverse.
    for i in (0..steps.len()).rev() {
        let step_output = if i + 1 < steps.len() {
            &pass.inputs[i + 1]
        } else {
            &pass.backbone_out
        };
        let step_input = &pass.inputs[i];
        match (steps[i], &pass.records[i]) {
            (RouteStep::Conv { seg, idx }, StepRecord::Conv) => {
                let spec = match seg {
                    Seg::Branch => branch_specs[idx],
                    Seg::Reduce => specs.reduce[idx],
                    Seg::Main => specs.main[idx],
                };
                let dpre = if spec.relu {
                    relu_gate(dcur, step_output)
                } else {
                    dcur
                };
                let p = params.conv(size_class, seg, idx);
                let need_dx = i > 0;
                let (dw, db, dx) =
                    conv_backward(step_input, &p.weight, &dpre, spec.stride, spec.pad, need_dx);
                let slot = match seg {
                    Seg::Branch => &mut branch_grads[idx],
                    Seg::Reduce => &mut reduce_grads.as_mut().unwrap()[idx],
                    Seg::Main => &mut main_grads[idx],
                };
                slot.weight = dw;
                slot.bias = db;
                dcur = match dx {
                    Some(d) => d,
                    None => break,
                };
            }
            (RouteStep::Pool, StepRecord::Pool { arg, in_h, in_w }) => {
                dcur = maxpool2_backward(&dcur, arg, *in_h, *in_w);
            }
            _ => unreachable!("tape out of sync with route"),
        }
    }

    Ok((
        loss_value,
        ModelGradients {
            size_class,
            branch: branch_grads,
            reduce: reduce_grads,
            main: main_grads,
            tail: ConvParams {
                weight: tail_dw,
                bias: tail_db,
            },
        },
    ))
}

/// Spatial side lengths a route passes through, mostly a sanity hook for
/// tests.
pub fn route_resolutions(width: &WidthConfig, size_class: SizeClass) -> Vec<usize> {
    let specs = segment_specs(width);
    let mut side = size_class.side();
    let mut sides = vec![side];
    for step in route_steps(&specs, size_class) {
        side = match step {
            RouteStep::Conv { seg, idx } => {
                let s = match seg {
                    Seg::Branch => match size_class {
                        SizeClass::S448 => specs.s448[idx],
                        SizeClass::S224 => specs.s224[idx],
                        SizeClass::S56 => specs.s56[idx],
                    },
                    Seg::Reduce => specs.reduce[idx],
                    Seg::Main => specs.main[idx],
                };
                out_side(side, s.k, s.stride, s.pad)
            }
            RouteStep::Pool => side / 2,
        };
        sides.push(side);
    }
    sides
}
