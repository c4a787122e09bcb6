//! Network assembly, audits, and the checkpoint codec.
//!
//! The architecture is a chain of correlation blocks. Each block runs a
//! densely connected series of 3x3 spatial convolutions in spatial mode,
//! reshapes to angular mode, and applies angular convolution(s) whose first
//! layer consumes the block's spatial features concatenated with the outputs
//! of all preceding blocks (angular dense connections) and the raw input
//! (image connections), newest features first, raw input last. A bottleneck
//! aggregates the final angular-dense stream in spatial mode, and a valid
//! angular convolution with a kernel covering the whole input view grid
//! shrinks the angular extent to 1x1 while emitting one output channel per
//! reconstructed view.
//!
//! [`build_plan`] derives the exact layer shapes and wiring from a
//! [`NetworkConfig`]; everything else (initialization, forward passes,
//! parameter and MAC audits, checkpoints) reads shapes from the plan, so
//! there is a single source of truth for the topology.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{self, CodecError};
use crate::tape::{NodeId, Tape, TapeError};
use crate::tensor::{
    concat_channels, conv2d, Activation, ConvKernel, Mode, ModeTensor, Padding, Real, TensorError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("input shape ({u}, {v}, ..., {c}) does not match config ({eu}, {ev}, ..., 1)")]
    InputShapeMismatch {
        u: usize,
        v: usize,
        c: usize,
        eu: usize,
        ev: usize,
    },
    #[error("spatial extents ({w}, {h}) are smaller than the {kernel}x{kernel} spatial kernels")]
    SpatialTooSmall { w: usize, h: usize, kernel: usize },
    #[error("model has {got} layers, plan expects {expected}")]
    LayerCountMismatch { got: usize, expected: usize },
}

/// Bottleneck kernel choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottleneckKernel {
    K1x1,
    K3x3,
}

impl BottleneckKernel {
    pub fn extent(self) -> usize {
        match self {
            BottleneckKernel::K1x1 => 1,
            BottleneckKernel::K3x3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BottleneckKernel::K1x1 => "1x1",
            BottleneckKernel::K3x3 => "3x3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1x1" => Some(BottleneckKernel::K1x1),
            "3x3" => Some(BottleneckKernel::K3x3),
            _ => None,
        }
    }
}

/// All architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Input angular extents (views along each axis of the sparse grid).
    pub u0: usize,
    pub v0: usize,
    /// Number of reconstructed views (output channels of the head).
    pub n_out: usize,
    /// Correlation blocks.
    pub n_cb: usize,
    /// Spatial convolutions per block.
    pub n_s: usize,
    /// Angular convolutions per block.
    pub n_a: usize,
    /// Channels contributed by every convolution output (shared growth rate
    /// of the spatial and angular dense streams).
    pub growth: usize,
    pub connect_spatial: bool,
    pub connect_angular: bool,
    pub connect_image: bool,
    pub bottleneck_kernel: BottleneckKernel,
    pub bottleneck_channels: usize,
    /// Activation applied to hidden layers; bottleneck and head stay linear.
    pub activation: Activation,
    /// Preset name this config was derived from ("custom" otherwise).
    pub preset: String,
}

impl NetworkConfig {
    /// Named preset. `tablefit` (and its alias `default`) uses a 3x3
    /// bottleneck with 32 channels, `text` a 1x1 bottleneck with 96.
    /// Both share n_cb=6, n_s=5, n_a=1, growth 32, all connections on.
    pub fn preset(name: &str, u0: usize, v0: usize, n_out: usize) -> Option<Self> {
        let (bottleneck_kernel, bottleneck_channels, preset) = match name {
            "tablefit" | "default" => (BottleneckKernel::K3x3, 32, "tablefit"),
            "text" => (BottleneckKernel::K1x1, 96, "text"),
            _ => return None,
        };
        Some(Self {
            u0,
            v0,
            n_out,
            n_cb: 6,
            n_s: 5,
            n_a: 1,
            growth: 32,
            connect_spatial: true,
            connect_angular: true,
            connect_image: true,
            bottleneck_kernel,
            bottleneck_channels,
            activation: Activation::Relu,
            preset: preset.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let positive = [
            ("u0", self.u0),
            ("v0", self.v0),
            ("n_out", self.n_out),
            ("n_cb", self.n_cb),
            ("n_s", self.n_s),
            ("n_a", self.n_a),
            ("growth", self.growth),
            ("bottleneck_channels", self.bottleneck_channels),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(NetError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.preset.contains('\n') || self.preset.contains('=') || self.preset.is_empty() {
            return Err(NetError::InvalidConfig(
                "preset name must be non-empty without '=' or newlines".to_string(),
            ));
        }
        Ok(())
    }

    /// Canonical serialized form: sorted `key=value` lines, newline
    /// terminated. Two configs are interchangeable exactly when their
    /// canonical texts are equal.
    pub fn canonical_text(&self) -> String {
        let activation = match self.activation {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        format!(
            "activation={}\nbottleneck_channels={}\nbottleneck_kernel={}\nconnect_angular={}\nconnect_image={}\nconnect_spatial={}\ngrowth={}\nn_a={}\nn_cb={}\nn_out={}\nn_s={}\npreset={}\nu0={}\nv0={}\n",
            activation,
            self.bottleneck_channels,
            self.bottleneck_kernel.name(),
            self.connect_angular,
            self.connect_image,
            self.connect_spatial,
            self.growth,
            self.n_a,
            self.n_cb,
            self.n_out,
            self.n_s,
            self.preset,
            self.u0,
            self.v0,
        )
    }

    /// Parse the canonical `key=value` form. Strict: every key must be
    /// present exactly once, unknown keys are rejected.
    pub fn from_canonical_text(text: &str) -> Result<Self, CodecError> {
        let mut fields: [(&str, Option<&str>); 14] = [
            ("activation", None),
            ("bottleneck_channels", None),
            ("bottleneck_kernel", None),
            ("connect_angular", None),
            ("connect_image", None),
            ("connect_spatial", None),
            ("growth", None),
            ("n_a", None),
            ("n_cb", None),
            ("n_out", None),
            ("n_s", None),
            ("preset", None),
            ("u0", None),
            ("v0", None),
        ];
        for line in text.lines() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CodecError::Parse(format!("malformed line '{line}'")))?;
            let slot = fields
                .iter_mut()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| CodecError::Parse(format!("unknown key '{key}'")))?;
            if slot.1.is_some() {
                return Err(CodecError::Parse(format!("duplicate key '{key}'")));
            }
            slot.1 = Some(value);
        }
        let get = |name: &str| -> Result<&str, CodecError> {
            fields
                .iter()
                .find(|(k, _)| *k == name)
                .and_then(|(_, v)| *v)
                .ok_or_else(|| CodecError::Parse(format!("missing key '{name}'")))
        };
        let parse_usize = |name: &str| -> Result<usize, CodecError> {
            get(name)?
                .parse::<usize>()
                .map_err(|_| CodecError::Parse(format!("{name} is not an unsigned integer")))
        };
        let parse_bool = |name: &str| -> Result<bool, CodecError> {
            match get(name)? {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(CodecError::Parse(format!("{name}={other} is not a bool"))),
            }
        };
        let activation = match get("activation")? {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            other => {
                return Err(CodecError::Parse(format!("unknown activation '{other}'",)))
            }
        };
        let bottleneck_kernel = BottleneckKernel::parse(get("bottleneck_kernel")?)
            .ok_or_else(|| CodecError::Parse("bottleneck_kernel must be 1x1 or 3x3".into()))?;
        let cfg = Self {
            u0: parse_usize("u0")?,
            v0: parse_usize("v0")?,
            n_out: parse_usize("n_out")?,
            n_cb: parse_usize("n_cb")?,
            n_s: parse_usize("n_s")?,
            n_a: parse_usize("n_a")?,
            growth: parse_usize("growth")?,
            connect_spatial: parse_bool("connect_spatial")?,
            connect_angular: parse_bool("connect_angular")?,
            connect_image: parse_bool("connect_image")?,
            bottleneck_kernel,
            bottleneck_channels: parse_usize("bottleneck_channels")?,
            activation,
            preset: get("preset")?.to_string(),
        };
        cfg.validate()
            .map_err(|e| CodecError::Parse(e.to_string()))?;
        Ok(cfg)
    }
}

/// Shape and placement of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: String,
    /// Angular kernel extents (1x1 for spatial layers).
    pub ka: (usize, usize),
    /// Spatial kernel extents (1x1 for angular layers).
    pub ks: (usize, usize),
    pub c_in: usize,
    pub c_out: usize,
    pub padding: Padding,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn param_count(&self) -> u64 {
        (self.ka.0 * self.ka.1 * self.ks.0 * self.ks.1 * self.c_in * self.c_out + self.c_out)
            as u64
    }

    /// Multiply-accumulates for one forward application on input extents
    /// `(u, v, w, h)`: kernel volume times channels times output positions.
    /// Zero padding counts every tap.
    pub fn macs(&self, u: usize, v: usize, w: usize, h: usize) -> u128 {
        let (ou, ov, ow, oh) = match self.padding {
            Padding::SameZero => (u, v, w, h),
            Padding::Valid => (
                u + 1 - self.ka.0,
                v + 1 - self.ka.1,
                w + 1 - self.ks.0,
                h + 1 - self.ks.1,
            ),
        };
        let kernel = (self.ka.0 * self.ka.1 * self.ks.0 * self.ks.1) as u128;
        kernel
            * self.c_in as u128
            * self.c_out as u128
            * (ou as u128 * ov as u128 * ow as u128 * oh as u128)
    }

    fn matches(&self, k: &ConvKernel<f32>) -> bool {
        self.ka == (k.ka_u, k.ka_v)
            && self.ks == (k.ks_w, k.ks_h)
            && self.c_in == k.c_in
            && self.c_out == k.c_out
    }
}

/// Reference to a step output (or the network input) inside a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Src {
    Input,
    Step(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Reshape { src: Src, to: Mode },
    Concat { srcs: Vec<Src> },
    Conv { src: Src, layer: usize },
}

/// Fully resolved topology: ordered layers plus the step program that
/// wires them together.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPlan {
    pub layers: Vec<LayerSpec>,
    pub steps: Vec<Step>,
    pub output: Src,
}

/// Derive layer shapes and wiring from a config.
pub fn build_plan(cfg: &NetworkConfig) -> Result<NetworkPlan, NetError> {
    cfg.validate()?;
    let g = cfg.growth;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut steps: Vec<Step> = Vec::new();

    let push = |steps: &mut Vec<Step>, step: Step| -> Src {
        steps.push(step);
        Src::Step(steps.len() - 1)
    };
    let add_layer = |layers: &mut Vec<LayerSpec>, spec: LayerSpec| -> usize {
        layers.push(spec);
        layers.len() - 1
    };

    let x_spatial = push(
        &mut steps,
        Step::Reshape {
            src: Src::Input,
            to: Mode::Spatial,
        },
    );
    let x_angular = cfg.connect_image.then(|| {
        push(
            &mut steps,
            Step::Reshape {
                src: Src::Input,
                to: Mode::Angular,
            },
        )
    });

    let mut prev_block_sp = x_spatial;
    let mut block_outs_an: Vec<Src> = Vec::new();
    let mut block_outs_sp: Vec<Src> = Vec::new();

    for i in 1..=cfg.n_cb {
        let mut conv_outs: Vec<Src> = Vec::new();
        for j in 1..=cfg.n_s {
            let (src, c_in) = if j == 1 {
                (prev_block_sp, if i == 1 { 1 } else { g })
            } else if cfg.connect_spatial {
                // all prior conv outputs in this block, newest first
                if j == 2 {
                    (conv_outs[0], g)
                } else {
                    let srcs: Vec<Src> = conv_outs.iter().rev().copied().collect();
                    (push(&mut steps, Step::Concat { srcs }), g * (j - 1))
                }
            } else {
                (*conv_outs.last().expect("j >= 2"), g)
            };
            let layer = add_layer(
                &mut layers,
                LayerSpec {
                    id: format!("block{i}.spatial{j}"),
                    ka: (1, 1),
                    ks: (3, 3),
                    c_in,
                    c_out: g,
                    padding: Padding::SameZero,
                    activation: cfg.activation,
                },
            );
            conv_outs.push(push(&mut steps, Step::Conv { src, layer }));
        }

        let (spatial_out, spatial_c) = if cfg.connect_spatial && cfg.n_s > 1 {
            let srcs: Vec<Src> = conv_outs.iter().rev().copied().collect();
            (push(&mut steps, Step::Concat { srcs }), g * cfg.n_s)
        } else {
            (*conv_outs.last().expect("n_s >= 1"), g)
        };
        let spatial_an = push(
            &mut steps,
            Step::Reshape {
                src: spatial_out,
                to: Mode::Angular,
            },
        );

        let mut parts = vec![spatial_an];
        let mut c_in = spatial_c;
        if cfg.connect_angular {
            parts.extend(block_outs_an.iter().rev().copied());
            c_in += g * (i - 1);
        }
        if let Some(x) = x_angular {
            parts.push(x);
            c_in += 1;
        }
        let angular_src = if parts.len() == 1 {
            parts[0]
        } else {
            push(&mut steps, Step::Concat { srcs: parts })
        };
        let layer = add_layer(
            &mut layers,
            LayerSpec {
                id: format!("block{i}.angular1"),
                ka: (3, 3),
                ks: (1, 1),
                c_in,
                c_out: g,
                padding: Padding::SameZero,
                activation: cfg.activation,
            },
        );
        let mut current = push(
            &mut steps,
            Step::Conv {
                src: angular_src,
                layer,
            },
        );
        for k in 2..=cfg.n_a {
            let layer = add_layer(
                &mut layers,
                LayerSpec {
                    id: format!("block{i}.angular{k}"),
                    ka: (3, 3),
                    ks: (1, 1),
                    c_in: g,
                    c_out: g,
                    padding: Padding::SameZero,
                    activation: cfg.activation,
                },
            );
            current = push(&mut steps, Step::Conv { src: current, layer });
        }
        block_outs_an.push(current);
        let current_sp = push(
            &mut steps,
            Step::Reshape {
                src: current,
                to: Mode::Spatial,
            },
        );
        block_outs_sp.push(current_sp);
        prev_block_sp = current_sp;
    }

    // Bottleneck consumes the angular-dense endpoint in spatial mode:
    // every block output newest first, or only the last block without
    // angular connections, with the raw input appended last.
    let mut parts: Vec<Src> = if cfg.connect_angular {
        block_outs_sp.iter().rev().copied().collect()
    } else {
        vec![*block_outs_sp.last().expect("n_cb >= 1")]
    };
    let mut c_in = if cfg.connect_angular {
        g * cfg.n_cb
    } else {
        g
    };
    if cfg.connect_image {
        parts.push(x_spatial);
        c_in += 1;
    }
    let bottleneck_src = if parts.len() == 1 {
        parts[0]
    } else {
        push(&mut steps, Step::Concat { srcs: parts })
    };
    let kb = cfg.bottleneck_kernel.extent();
    let layer = add_layer(
        &mut layers,
        LayerSpec {
            id: "bottleneck".to_string(),
            ka: (1, 1),
            ks: (kb, kb),
            c_in,
            c_out: cfg.bottleneck_channels,
            padding: Padding::SameZero,
            activation: Activation::Identity,
        },
    );
    let bottleneck = push(
        &mut steps,
        Step::Conv {
            src: bottleneck_src,
            layer,
        },
    );
    let bottleneck_an = push(
        &mut steps,
        Step::Reshape {
            src: bottleneck,
            to: Mode::Angular,
        },
    );
    let layer = add_layer(
        &mut layers,
        LayerSpec {
            id: "head".to_string(),
            ka: (cfg.u0, cfg.v0),
            ks: (1, 1),
            c_in: cfg.bottleneck_channels,
            c_out: cfg.n_out,
            padding: Padding::Valid,
            activation: Activation::Identity,
        },
    );
    let head = push(
        &mut steps,
        Step::Conv {
            src: bottleneck_an,
            layer,
        },
    );
    let output = push(
        &mut steps,
        Step::Reshape {
            src: head,
            to: Mode::Native4d,
        },
    );

    Ok(NetworkPlan {
        layers,
        steps,
        output,
    })
}

/// Ordered per-layer kernels and biases. Layer order and shapes are a pure
/// function of the config (see [`build_plan`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    layers: Vec<(String, ConvKernel<T>)>,
}

impl<T: Real> ModelState<T> {
    pub fn layers(&self) -> &[(String, ConvKernel<T>)] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [(String, ConvKernel<T>)] {
        &mut self.layers
    }

    pub fn from_layers(layers: Vec<(String, ConvKernel<T>)>) -> Self {
        Self { layers }
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|(_, k)| k.param_count()).sum()
    }

    /// Convert every weight and bias to another precision.
    pub fn convert<U: Real>(&self) -> ModelState<U> {
        ModelState {
            layers: self
                .layers
                .iter()
                .map(|(id, k)| {
                    (
                        id.clone(),
                        ConvKernel {
                            ka_u: k.ka_u,
                            ka_v: k.ka_v,
                            ks_w: k.ks_w,
                            ks_h: k.ks_h,
                            c_in: k.c_in,
                            c_out: k.c_out,
                            weights: k.weights.iter().map(|w| U::from_f64(w.into_f64())).collect(),
                            bias: k.bias.iter().map(|b| U::from_f64(b.into_f64())).collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Initialize kernels for a config: weights from a zero-mean normal with
/// standard deviation `sqrt(2 / fan_in)`, biases zero, drawn in layer order
/// from a ChaCha stream seeded with `seed`.
pub fn init_model<T: Real>(cfg: &NetworkConfig, seed: u64) -> Result<ModelState<T>, NetError> {
    let plan = build_plan(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(plan.layers.len());
    for spec in &plan.layers {
        let fan_in = spec.ka.0 * spec.ka.1 * spec.ks.0 * spec.ks.1 * spec.c_in;
        let sd = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0f64, sd).expect("sd is finite and positive");
        let n_weights = fan_in * spec.c_out;
        let weights: Vec<T> = (0..n_weights)
            .map(|_| T::from_f64(normal.sample(&mut rng)))
            .collect();
        let bias = vec![T::zero(); spec.c_out];
        let kernel = ConvKernel::new(
            spec.ka.0, spec.ka.1, spec.ks.0, spec.ks.1, spec.c_in, spec.c_out, weights, bias,
        )?;
        layers.push((spec.id.clone(), kernel));
    }
    Ok(ModelState { layers })
}

/// All-zero kernels for a config.
pub fn zero_model<T: Real>(cfg: &NetworkConfig) -> Result<ModelState<T>, NetError> {
    let plan = build_plan(cfg)?;
    let layers = plan
        .layers
        .iter()
        .map(|spec| {
            ConvKernel::zeros(
                spec.ka.0, spec.ka.1, spec.ks.0, spec.ks.1, spec.c_in, spec.c_out,
            )
            .map(|k| (spec.id.clone(), k))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelState { layers })
}

fn check_input<T: Real>(
    plan: &NetworkPlan,
    state: &ModelState<T>,
    x: &ModeTensor<T>,
    cfg_u0: usize,
    cfg_v0: usize,
) -> Result<(), NetError> {
    if state.layers.len() != plan.layers.len() {
        return Err(NetError::LayerCountMismatch {
            got: state.layers.len(),
            expected: plan.layers.len(),
        });
    }
    if x.u != cfg_u0 || x.v != cfg_v0 || x.c != 1 {
        return Err(NetError::InputShapeMismatch {
            u: x.u,
            v: x.v,
            c: x.c,
            eu: cfg_u0,
            ev: cfg_v0,
        });
    }
    let max_spatial = plan
        .layers
        .iter()
        .map(|l| l.ks.0.max(l.ks.1))
        .max()
        .unwrap_or(1);
    if x.w < max_spatial || x.h < max_spatial {
        return Err(NetError::SpatialTooSmall {
            w: x.w,
            h: x.h,
            kernel: max_spatial,
        });
    }
    Ok(())
}

/// Deterministic forward pass. Intermediates are freed as soon as no later
/// step needs them. When `macs` is given it accumulates the multiply
/// accumulate count of every executed convolution (zero-padded taps
/// included, matching [`count_macs`]).
pub fn forward_eval<T: Real>(
    cfg: &NetworkConfig,
    plan: &NetworkPlan,
    state: &ModelState<T>,
    x: &ModeTensor<T>,
    mut macs: Option<&mut u128>,
) -> Result<ModeTensor<T>, NetError> {
    check_input(plan, state, x, cfg.u0, cfg.v0)?;

    // last step that reads each step output; the plan output lives forever
    let mut last_use = vec![usize::MAX; plan.steps.len()];
    for i in (0..plan.steps.len()).rev() {
        let srcs: &[Src] = match &plan.steps[i] {
            Step::Reshape { src, .. } | Step::Conv { src, .. } => core::slice::from_ref(src),
            Step::Concat { srcs } => srcs,
        };
        for s in srcs {
            if let Src::Step(j) = s {
                if last_use[*j] == usize::MAX {
                    last_use[*j] = i;
                }
            }
        }
    }
    if let Src::Step(out) = plan.output {
        last_use[out] = usize::MAX;
    }

    fn fetch<'a, T>(
        x: &'a ModeTensor<T>,
        values: &'a [Option<ModeTensor<T>>],
        src: Src,
    ) -> &'a ModeTensor<T> {
        match src {
            Src::Input => x,
            Src::Step(i) => values[i].as_ref().expect("step computed before use"),
        }
    }

    let mut values: Vec<Option<ModeTensor<T>>> = vec![None; plan.steps.len()];
    for (i, step) in plan.steps.iter().enumerate() {
        let out = match step {
            Step::Reshape { src, to } => fetch(x, &values, *src).reshaped(*to),
            Step::Concat { srcs } => {
                let parts: Vec<&ModeTensor<T>> =
                    srcs.iter().map(|s| fetch(x, &values, *s)).collect();
                concat_channels(&parts)?
            }
            Step::Conv { src, layer } => {
                let spec = &plan.layers[*layer];
                let (id, kernel) = &state.layers[*layer];
                debug_assert_eq!(id, &spec.id);
                let input = fetch(x, &values, *src);
                if let Some(counter) = macs.as_deref_mut() {
                    *counter += spec.macs(input.u, input.v, input.w, input.h);
                }
                let mut convolved = conv2d(input, kernel, spec.padding)?;
                if spec.activation == Activation::Relu {
                    for v in convolved.data_mut() {
                        if *v <= T::zero() {
                            *v = T::zero();
                        }
                    }
                }
                convolved
            }
        };
        values[i] = Some(out);
        // free anything whose last reader was this step
        for (j, lu) in last_use.iter().enumerate().take(i + 1) {
            if *lu == i {
                values[j] = None;
            }
        }
    }

    match plan.output {
        Src::Input => Ok(x.clone()),
        Src::Step(i) => Ok(values[i].take().expect("output step computed")),
    }
}

/// Result of recording a forward pass on a tape.
pub struct TapedForward {
    /// Network output node.
    pub output: NodeId,
    /// Kernel leaf per layer, aligned with `ModelState::layers` order.
    pub kernels: Vec<NodeId>,
}

/// Record the forward pass on `tape` starting from the tensor leaf `x_id`.
/// Same wiring as [`forward_eval`]; gradients for every layer become
/// available through the returned kernel node ids.
pub fn forward_taped<T: Real>(
    cfg: &NetworkConfig,
    plan: &NetworkPlan,
    state: &ModelState<T>,
    tape: &mut Tape<T>,
    x_id: NodeId,
) -> Result<TapedForward, NetError> {
    {
        let x = tape.tensor(x_id)?;
        check_input(plan, state, x, cfg.u0, cfg.v0)?;
    }
    let kernels: Vec<NodeId> = state
        .layers
        .iter()
        .map(|(_, k)| tape.leaf_kernel(k.clone()))
        .collect();

    let mut node_of = vec![0usize; plan.steps.len()];
    let resolve = |node_of: &[NodeId], src: Src| -> NodeId {
        match src {
            Src::Input => x_id,
            Src::Step(i) => node_of[i],
        }
    };
    for (i, step) in plan.steps.iter().enumerate() {
        let node = match step {
            Step::Reshape { src, to } => tape.reshape(resolve(&node_of, *src), *to)?,
            Step::Concat { srcs } => {
                let ids: Vec<NodeId> = srcs.iter().map(|s| resolve(&node_of, *s)).collect();
                tape.concat(&ids)?
            }
            Step::Conv { src, layer } => {
                let spec = &plan.layers[*layer];
                let conv = tape.conv(resolve(&node_of, *src), kernels[*layer], spec.padding)?;
                tape.activation(conv, spec.activation)?
            }
        };
        node_of[i] = node;
    }
    let output = resolve(&node_of, plan.output);
    Ok(TapedForward { output, kernels })
}

/// Per-layer parameter counts and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLedger {
    pub per_layer: Vec<(String, u64)>,
    pub total: u64,
}

/// Parameter audit over the exact shapes of [`build_plan`].
pub fn count_params(cfg: &NetworkConfig) -> Result<ParamLedger, NetError> {
    let plan = build_plan(cfg)?;
    let per_layer: Vec<(String, u64)> = plan
        .layers
        .iter()
        .map(|l| (l.id.clone(), l.param_count()))
        .collect();
    let total = per_layer.iter().map(|(_, n)| n).sum();
    Ok(ParamLedger { per_layer, total })
}

/// Multiply-accumulate audit for a forward pass on spatial extents
/// `(w, h)`, with the separable-versus-full-4D comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MacReport {
    pub per_layer: Vec<(String, u128)>,
    /// Whole network, bottleneck and head included.
    pub total: u128,
    /// Correlation block layers only.
    pub block_total: u128,
    /// Reference cost of one hypothetical 3x3x3x3 4D convolution per block
    /// at `growth` input and output channels.
    pub full4d_block_total: u128,
    /// Idealized separable per-block cost at `growth` channels throughout:
    /// `9*(n_s + n_a)` taps against the 4D reference's 81.
    pub sas_ideal_block_total: u128,
    /// `sas_ideal_block_total / full4d_block_total` as a reduced fraction.
    pub sas_vs_4d_ratio: (u128, u128),
}

impl MacReport {
    pub fn ratio_f64(&self) -> f64 {
        self.sas_vs_4d_ratio.0 as f64 / self.sas_vs_4d_ratio.1 as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// MAC audit per layer: `kernel volume * c_in * c_out * output positions`
/// under zero padding. The full-4D reference models each correlation block
/// as a single dense 3x3x3x3 convolution at `growth` channels.
pub fn count_macs(cfg: &NetworkConfig, w: usize, h: usize) -> Result<MacReport, NetError> {
    let plan = build_plan(cfg)?;
    let per_layer: Vec<(String, u128)> = plan
        .layers
        .iter()
        .map(|l| (l.id.clone(), l.macs(cfg.u0, cfg.v0, w, h)))
        .collect();
    let total = per_layer.iter().map(|(_, n)| n).sum();
    let block_total = per_layer
        .iter()
        .filter(|(id, _)| id.starts_with("block"))
        .map(|(_, n)| n)
        .sum();
    let positions = (cfg.u0 * cfg.v0) as u128 * w as u128 * h as u128;
    let g2 = (cfg.growth * cfg.growth) as u128;
    let full4d_block_total = cfg.n_cb as u128 * 81 * g2 * positions;
    let sas_ideal_block_total =
        cfg.n_cb as u128 * 9 * (cfg.n_s + cfg.n_a) as u128 * g2 * positions;
    let d = gcd(sas_ideal_block_total, full4d_block_total);
    let sas_vs_4d_ratio = (sas_ideal_block_total / d, full4d_block_total / d);
    Ok(MacReport {
        per_layer,
        total,
        block_total,
        full4d_block_total,
        sas_ideal_block_total,
        sas_vs_4d_ratio,
    })
}

const CHECKPOINT_MAGIC: &[u8] = b"SADN1\n";

/// Serialize config and weights. Weights and biases are stored as IEEE 754
/// 32-bit little endian regardless of the in-memory precision.
pub fn encode_checkpoint<T: Real>(cfg: &NetworkConfig, state: &ModelState<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    codec::put_string(&mut out, &cfg.canonical_text());
    for (id, k) in state.layers() {
        codec::put_string(&mut out, id);
        for dim in [k.ka_u, k.ka_v, k.ks_w, k.ks_h, k.c_in, k.c_out] {
            codec::put_u32(&mut out, dim as u32);
        }
        codec::put_f32s(&mut out, k.weights.iter().map(|w| w.into_f32()));
        codec::put_f32s(&mut out, k.bias.iter().map(|b| b.into_f32()));
    }
    out
}

/// Decode a checkpoint produced by [`encode_checkpoint`]. Layer ids and
/// shapes are validated against the plan rebuilt from the embedded config.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkConfig, ModelState<f32>), CodecError> {
    let mut r = codec::Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let cfg_text = r.string()?;
    let cfg = NetworkConfig::from_canonical_text(&cfg_text)?;
    let plan = build_plan(&cfg).map_err(|e| CodecError::Parse(e.to_string()))?;
    let mut layers = Vec::with_capacity(plan.layers.len());
    for spec in &plan.layers {
        let id = r.string()?;
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let weights = r.f32_vec(dims[0] * dims[1] * dims[2] * dims[3] * dims[4] * dims[5])?;
        let bias = r.f32_vec(dims[5])?;
        let kernel = ConvKernel::new(
            dims[0], dims[1], dims[2], dims[3], dims[4], dims[5], weights, bias,
        )
        .map_err(|_| CodecError::LayerMismatch(id.clone()))?;
        if id != spec.id || !spec.matches(&kernel) {
            return Err(CodecError::LayerMismatch(id));
        }
        layers.push((id, kernel));
    }
    r.finish()?;
    Ok((cfg, ModelState { layers }))
}

/// Load a checkpoint that must match an already chosen config.
pub fn decode_checkpoint_expecting(
    bytes: &[u8],
    expected: &NetworkConfig,
) -> Result<ModelState<f32>, CodecError> {
    let (cfg, state) = decode_checkpoint(bytes)?;
    if cfg.canonical_text() != expected.canonical_text() {
        return Err(CodecError::ConfigMismatch);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tablefit(u0: usize, v0: usize, n_out: usize) -> NetworkConfig {
        NetworkConfig::preset("tablefit", u0, v0, n_out).unwrap()
    }

    #[test]
    fn head_kernel_matches_text_preset_shape() {
        let cfg = NetworkConfig::preset("text", 2, 2, 60).unwrap();
        let plan = build_plan(&cfg).unwrap();
        let head = plan.layers.last().unwrap();
        assert_eq!(head.id, "head");
        assert_eq!(
            (head.ka.0, head.ka.1, head.ks.0, head.c_in, head.c_out),
            (2, 2, 1, 96, 60)
        );
        assert_eq!(head.padding, Padding::Valid);
    }

    #[test]
    fn block3_angular_input_channels_tablefit() {
        let cfg = tablefit(2, 2, 60);
        let plan = build_plan(&cfg).unwrap();
        let layer = plan
            .layers
            .iter()
            .find(|l| l.id == "block3.angular1")
            .unwrap();
        // 32*5 spatial + 32*2 from blocks 1..2 + 1 raw image channel
        assert_eq!(layer.c_in, 225);
    }

    #[test]
    fn single_block_angular_input_has_no_block_stream() {
        let mut cfg = tablefit(2, 2, 60);
        cfg.n_cb = 1;
        let plan = build_plan(&cfg).unwrap();
        let layer = plan
            .layers
            .iter()
            .find(|l| l.id == "block1.angular1")
            .unwrap();
        assert_eq!(layer.c_in, 32 * 5 + 1);
    }

    #[test]
    fn single_conv_param_count() {
        let k = ConvKernel::<f64>::zeros(1, 1, 3, 3, 1, 1).unwrap();
        assert_eq!(k.param_count(), 10);
    }

    #[test]
    fn tiny_config_param_ledger_matches_hand_sum() {
        let cfg = NetworkConfig {
            u0: 2,
            v0: 2,
            n_out: 5,
            n_cb: 1,
            n_s: 2,
            n_a: 1,
            growth: 4,
            connect_spatial: true,
            connect_angular: true,
            connect_image: true,
            bottleneck_kernel: BottleneckKernel::K3x3,
            bottleneck_channels: 4,
            activation: Activation::Relu,
            preset: "custom".into(),
        };
        let ledger = count_params(&cfg).unwrap();
        let by_id: alloc::collections::BTreeMap<_, _> =
            ledger.per_layer.iter().cloned().collect();
        assert_eq!(by_id["block1.spatial1"], 40);
        assert_eq!(by_id["block1.spatial2"], 148);
        assert_eq!(by_id["block1.angular1"], 328);
        assert_eq!(by_id["bottleneck"], 184);
        assert_eq!(by_id["head"], 85);
        assert_eq!(ledger.total, 785);
    }

    #[test]
    fn ns_five_minus_four_param_difference() {
        let mut cfg5 = tablefit(2, 2, 60);
        cfg5.n_s = 5;
        let mut cfg4 = cfg5.clone();
        cfg4.n_s = 4;
        let d = count_params(&cfg5).unwrap().total - count_params(&cfg4).unwrap().total;
        assert_eq!(d, 276_672);
    }

    #[test]
    fn single_spatial_layer_mac_example() {
        let layer = LayerSpec {
            id: "x".into(),
            ka: (1, 1),
            ks: (3, 3),
            c_in: 32,
            c_out: 32,
            padding: Padding::SameZero,
            activation: Activation::Identity,
        };
        assert_eq!(layer.macs(2, 2, 64, 64), 150_994_944);
        // degenerate spatial extents still count angular positions
        assert_eq!(layer.macs(2, 2, 1, 1), 9 * 32 * 32 * 2 * 2);
    }

    #[test]
    fn sas_pair_vs_4d_ratio() {
        let mut cfg = tablefit(2, 2, 60);
        cfg.n_s = 1;
        cfg.n_a = 1;
        let report = count_macs(&cfg, 8, 8).unwrap();
        assert_eq!(report.sas_vs_4d_ratio, (2, 9));
    }

    #[test]
    fn degenerate_block_is_a_single_sas_pair() {
        let mut cfg = tablefit(2, 2, 60);
        cfg.n_s = 1;
        cfg.connect_spatial = false;
        cfg.connect_angular = false;
        cfg.connect_image = false;
        let plan = build_plan(&cfg).unwrap();
        // no concatenations anywhere: each block is spatial conv then
        // angular conv on the previous block's output
        assert!(plan
            .steps
            .iter()
            .all(|s| !matches!(s, Step::Concat { .. })));
        let per_block: Vec<_> = plan
            .layers
            .iter()
            .filter(|l| l.id.starts_with("block1."))
            .collect();
        assert_eq!(per_block.len(), 2);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = NetworkConfig {
            n_cb: 2,
            n_s: 2,
            growth: 3,
            bottleneck_channels: 4,
            ..tablefit(2, 2, 6)
        };
        let state: ModelState<f32> = init_model(&cfg, 7).unwrap();
        let bytes = encode_checkpoint(&cfg, &state);
        let (cfg2, state2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(cfg.canonical_text(), cfg2.canonical_text());
        for ((_, a), (_, b)) in state.layers().iter().zip(state2.layers()) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let cfg = NetworkConfig {
            n_cb: 1,
            n_s: 1,
            growth: 2,
            bottleneck_channels: 2,
            ..tablefit(2, 2, 4)
        };
        let state: ModelState<f32> = zero_model(&cfg).unwrap();
        let mut bytes = encode_checkpoint(&cfg, &state);
        bytes[0] = b'X';
        assert_eq!(decode_checkpoint(&bytes).unwrap_err(), CodecError::BadMagic);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let cfg = NetworkConfig {
            n_cb: 1,
            n_s: 1,
            growth: 2,
            bottleneck_channels: 2,
            ..tablefit(2, 2, 4)
        };
        let state: ModelState<f32> = zero_model(&cfg).unwrap();
        let bytes = encode_checkpoint(&cfg, &state);
        let cut = &bytes[..bytes.len() - 3];
        assert_eq!(decode_checkpoint(cut).unwrap_err(), CodecError::Truncated);
    }

    #[test]
    fn preset_mismatch_on_expected_load() {
        let cfg = tablefit(2, 2, 60);
        let state: ModelState<f32> = zero_model(&cfg).unwrap();
        let bytes = encode_checkpoint(&cfg, &state);
        let text = NetworkConfig::preset("text", 2, 2, 60).unwrap();
        assert_eq!(
            decode_checkpoint_expecting(&bytes, &text).unwrap_err(),
            CodecError::ConfigMismatch
        );
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = NetworkConfig::preset("text", 3, 3, 72).unwrap();
        let text = cfg.canonical_text();
        let parsed = NetworkConfig::from_canonical_text(&text).unwrap();
        assert_eq!(parsed.canonical_text(), text);
    }
}
