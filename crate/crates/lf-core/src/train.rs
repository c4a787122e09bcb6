//! Patch-based training: MSE loss, Adam, joint spatio-angular
//! augmentation, the deterministic patch sampler, and the training stepper.
//!
//! Determinism contract: sampling at iteration `i` draws from a ChaCha
//! stream derived only from `(seed, i)`, and gradient accumulation reduces
//! in fixed sample order, so identical seeds produce bit-identical loss
//! trajectories and a run resumed from a checkpoint continues exactly where
//! the uninterrupted run would have been.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{self, CodecError};
use crate::data::{
    dihedral_dims, dihedral_map, extract_sparse, stack_planes, ColorSpace, DataError, LightField,
    ViewPattern,
};
use crate::net::{forward_taped, init_model, NetError, NetworkConfig, NetworkPlan, ModelState};
use crate::net::build_plan;
use crate::tape::{mse_value, Tape, TapeError};
pub use crate::tape::Reduction;
use crate::tensor::{ModeTensor, Real, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },
    #[error("non-finite gradient in layer '{layer}'")]
    NonFiniteGradient { layer: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("scene {scene} is {w}x{h}, smaller than the {patch} px patch")]
    SceneTooSmall {
        scene: usize,
        w: usize,
        h: usize,
        patch: usize,
    },
    #[error("scene {scene} does not match the pattern grid")]
    SceneGridMismatch { scene: usize },
    #[error("scene {scene} must be luminance only for training")]
    SceneNotLuma { scene: usize },
    #[error("augmentation element must be in 0..8, got {0}")]
    BadAugmentElement(u8),
    #[error("rotating augmentation elements need square angular and spatial extents")]
    NonSquareRotation,
    #[error("loss operands must have identical shape")]
    ShapeMismatch,
    #[error("gradient set does not match the model layout")]
    GradLayoutMismatch,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Square spatial patch edge in pixels.
    pub patch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub loss_reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            patch_size: 128,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 0,
            seed: 0,
            checkpoint_every: 1000,
            loss_reduction: Reduction::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 1 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patch_size < 1 {
            return Err(TrainError::InvalidConfig("patch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be > 0".into(),
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(TrainError::InvalidConfig(format!("{name} must be in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(TrainError::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(TrainError::InvalidConfig(
                "checkpoint_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Squared-error loss over equally shaped stacks.
pub fn mse_loss<T: Real>(
    pred: &ModeTensor<T>,
    target: &ModeTensor<T>,
    reduction: Reduction,
) -> Result<T, TrainError> {
    if pred.u != target.u
        || pred.v != target.v
        || pred.w != target.w
        || pred.h != target.h
        || pred.c != target.c
    {
        return Err(TrainError::ShapeMismatch);
    }
    Ok(mse_value(pred.data(), target.data(), reduction))
}

/// Per-layer gradient, shaped like the layer's kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients for every layer, in model layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub layers: Vec<KernelGrad<T>>,
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(state: &ModelState<T>) -> Self {
        Self {
            layers: state
                .layers()
                .iter()
                .map(|(_, k)| KernelGrad {
                    weights: vec![T::zero(); k.weights.len()],
                    bias: vec![T::zero(); k.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), TrainError> {
        if self.layers.len() != other.layers.len() {
            return Err(TrainError::GradLayoutMismatch);
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.len() != b.weights.len() || a.bias.len() != b.bias.len() {
                return Err(TrainError::GradLayoutMismatch);
            }
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x = *x + *y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + *y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for layer in &mut self.layers {
            for x in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *x = *x * factor;
            }
        }
    }
}

/// First and second moment estimates per layer plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub layers: Vec<Moments<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m_weights: Vec<T>,
    pub v_weights: Vec<T>,
    pub m_bias: Vec<T>,
    pub v_bias: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros_like(state: &ModelState<T>) -> Self {
        Self {
            t: 0,
            layers: state
                .layers()
                .iter()
                .map(|(_, k)| Moments {
                    m_weights: vec![T::zero(); k.weights.len()],
                    v_weights: vec![T::zero(); k.weights.len()],
                    m_bias: vec![T::zero(); k.bias.len()],
                    v_bias: vec![T::zero(); k.bias.len()],
                })
                .collect(),
        }
    }

    pub fn convert<U: Real>(&self) -> AdamState<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.into_f64())).collect();
        AdamState {
            t: self.t,
            layers: self
                .layers
                .iter()
                .map(|m| Moments {
                    m_weights: conv(&m.m_weights),
                    v_weights: conv(&m.v_weights),
                    m_bias: conv(&m.m_bias),
                    v_bias: conv(&m.v_bias),
                })
                .collect(),
        }
    }
}

/// Adam step sizes and decay rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// One bias-corrected Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
/// Rejects non-finite gradients before touching any state.
pub fn adam_step<T: Real>(
    state: &mut ModelState<T>,
    grads: &ModelGrads<T>,
    moments: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<(), TrainError> {
    if grads.layers.len() != state.layers().len() || moments.layers.len() != grads.layers.len() {
        return Err(TrainError::GradLayoutMismatch);
    }
    for ((id, _), g) in state.layers().iter().zip(&grads.layers) {
        let finite = g.weights.iter().chain(&g.bias).all(|x| x.is_finite());
        if !finite {
            return Err(TrainError::NonFiniteGradient { layer: id.clone() });
        }
    }

    moments.t += 1;
    let t = moments.t as i32;
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one = T::one();
    let lr = T::from_f64(hyper.learning_rate);
    let eps = T::from_f64(hyper.epsilon);
    let bc1 = T::from_f64(1.0 - hyper.beta1.powi(t));
    let bc2 = T::from_f64(1.0 - hyper.beta2.powi(t));

    for ((layer, grad), mom) in state
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut moments.layers)
    {
        let kernel = &mut layer.1;
        let update = |theta: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        update(
            &mut kernel.weights,
            &grad.weights,
            &mut mom.m_weights,
            &mut mom.v_weights,
        );
        update(&mut kernel.bias, &grad.bias, &mut mom.m_bias, &mut mom.v_bias);
    }
    Ok(())
}

/// Apply dihedral element `g` (0..8) jointly to the angular and spatial
/// grids: the angular row axis transforms with the spatial y axis and the
/// angular column axis with the spatial x axis. Elements with a 90 or 270
/// degree rotation need square extents in both domains.
pub fn augment(lf: &LightField, g: u8) -> Result<LightField, TrainError> {
    if g >= 8 {
        return Err(TrainError::BadAugmentElement(g));
    }
    if g & 1 != 0 && (lf.u != lf.v || lf.w != lf.h) {
        return Err(TrainError::NonSquareRotation);
    }
    if g == 0 {
        return Ok(lf.clone());
    }
    let (nu, nv) = dihedral_dims(g, (lf.u, lf.v));
    let (nh, nw) = dihedral_dims(g, (lf.h, lf.w));
    let mut out = LightField::zeros(nu, nv, nw, nh, lf.colorspace);
    for r in 0..lf.u {
        for c in 0..lf.v {
            let (r2, c2) = dihedral_map(g, (r, c), (lf.u, lf.v));
            for y in 0..lf.h {
                for x in 0..lf.w {
                    let (y2, x2) = dihedral_map(g, (y, x), (lf.h, lf.w));
                    for ch in 0..lf.c {
                        out.set(r2, c2, x2, y2, ch, lf.get(r, c, x, y, ch));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Where a training sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub scene: usize,
    pub offset: (usize, usize),
    pub augmentation: u8,
}

/// One training sample: sparse luminance input plus the target view stack.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    /// `(u0, v0, p, p, 1)` input tensor.
    pub input: ModeTensor<T>,
    /// `(1, 1, p, p, n_out)` target stack in pattern output order.
    pub target: ModeTensor<T>,
    pub provenance: Provenance,
}

/// Draw one mini batch. Scene, spatial offset and augmentation element are
/// sampled uniformly from a generator derived only from `(seed, iteration)`;
/// repeated calls with the same arguments return identical batches.
pub fn sample_batch<T: Real>(
    dataset: &[LightField],
    pattern: &ViewPattern,
    cfg: &TrainConfig,
    iteration: u64,
) -> Result<Vec<TrainSample<T>>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, scene) in dataset.iter().enumerate() {
        if scene.colorspace != ColorSpace::YOnly {
            return Err(TrainError::SceneNotLuma { scene: i });
        }
        if scene.u != pattern.rows || scene.v != pattern.cols {
            return Err(TrainError::SceneGridMismatch { scene: i });
        }
        if scene.w < cfg.patch_size || scene.h < cfg.patch_size {
            return Err(TrainError::SceneTooSmall {
                scene: i,
                w: scene.w,
                h: scene.h,
                patch: cfg.patch_size,
            });
        }
    }

    // stream 0 is reserved for weight initialization
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(iteration.wrapping_add(1));

    let p = cfg.patch_size;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let scene_ix = rng.random_range(0..dataset.len());
        let scene = &dataset[scene_ix];
        let ox = rng.random_range(0..=scene.w - p);
        let oy = rng.random_range(0..=scene.h - p);
        let g = rng.random_range(0..8u8);

        let patch = scene.crop_spatial(ox, oy, p, p)?;
        let augmented = augment(&patch, g)?;
        let (input_lf, targets) = extract_sparse(&augmented, pattern)?;
        let input = input_lf.to_tensor::<T>();
        let target = stack_planes::<T>(&targets)?;
        batch.push(TrainSample {
            input,
            target,
            provenance: Provenance {
                scene: scene_ix,
                offset: (ox, oy),
                augmentation: g,
            },
        });
    }
    Ok(batch)
}

/// Loss and parameter gradients for a single sample.
pub fn sample_gradients<T: Real>(
    cfg: &NetworkConfig,
    plan: &NetworkPlan,
    state: &ModelState<T>,
    sample: &TrainSample<T>,
    reduction: Reduction,
) -> Result<(T, ModelGrads<T>), TrainError> {
    let mut tape = Tape::new();
    let x = tape.leaf_tensor(sample.input.clone());
    let fwd = forward_taped(cfg, plan, state, &mut tape, x)?;
    let target = tape.leaf_tensor(sample.target.clone());
    let loss_id = tape.mse_loss(fwd.output, target, reduction)?;
    let loss = tape.scalar(loss_id)?;
    let grads = tape.backward(loss_id)?;

    let mut layers = Vec::with_capacity(fwd.kernels.len());
    for (i, kid) in fwd.kernels.iter().enumerate() {
        match grads.kernel(*kid) {
            Some(k) => layers.push(KernelGrad {
                weights: k.weights.clone(),
                bias: k.bias.clone(),
            }),
            None => {
                let kernel = &state.layers()[i].1;
                layers.push(KernelGrad {
                    weights: vec![T::zero(); kernel.weights.len()],
                    bias: vec![T::zero(); kernel.bias.len()],
                });
            }
        }
    }
    Ok((loss, ModelGrads { layers }))
}

/// Training stepper: owns model and optimizer state, one Adam update per
/// iteration over a freshly sampled batch.
pub struct Trainer<T: Real> {
    net_cfg: NetworkConfig,
    plan: NetworkPlan,
    train_cfg: TrainConfig,
    pattern: ViewPattern,
    state: ModelState<T>,
    adam: AdamState<T>,
}

impl<T: Real> Trainer<T> {
    /// Fresh model initialized from the training seed.
    pub fn new(
        net_cfg: NetworkConfig,
        train_cfg: TrainConfig,
        pattern: ViewPattern,
    ) -> Result<Self, TrainError> {
        train_cfg.validate()?;
        let plan = build_plan(&net_cfg)?;
        let state = init_model(&net_cfg, train_cfg.seed)?;
        let adam = AdamState::zeros_like(&state);
        Ok(Self {
            net_cfg,
            plan,
            train_cfg,
            pattern,
            state,
            adam,
        })
    }

    /// Resume from existing model and optimizer state.
    pub fn from_parts(
        net_cfg: NetworkConfig,
        train_cfg: TrainConfig,
        pattern: ViewPattern,
        state: ModelState<T>,
        adam: AdamState<T>,
    ) -> Result<Self, TrainError> {
        train_cfg.validate()?;
        let plan = build_plan(&net_cfg)?;
        if state.layers().len() != plan.layers.len()
            || adam.layers.len() != plan.layers.len()
        {
            return Err(TrainError::GradLayoutMismatch);
        }
        Ok(Self {
            net_cfg,
            plan,
            train_cfg,
            pattern,
            state,
            adam,
        })
    }

    pub fn net_cfg(&self) -> &NetworkConfig {
        &self.net_cfg
    }

    pub fn plan(&self) -> &NetworkPlan {
        &self.plan
    }

    pub fn train_cfg(&self) -> &TrainConfig {
        &self.train_cfg
    }

    pub fn pattern(&self) -> &ViewPattern {
        &self.pattern
    }

    pub fn state(&self) -> &ModelState<T> {
        &self.state
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    /// Completed optimizer steps (equals the next iteration to run).
    pub fn iteration(&self) -> u64 {
        self.adam.t
    }

    pub fn sample(
        &self,
        dataset: &[LightField],
        iteration: u64,
    ) -> Result<Vec<TrainSample<T>>, TrainError> {
        sample_batch(dataset, &self.pattern, &self.train_cfg, iteration)
    }

    /// Per-sample loss and gradients; safe to call from multiple threads
    /// against the same trainer.
    pub fn sample_gradients(
        &self,
        sample: &TrainSample<T>,
    ) -> Result<(T, ModelGrads<T>), TrainError> {
        sample_gradients(
            &self.net_cfg,
            &self.plan,
            &self.state,
            sample,
            self.train_cfg.loss_reduction,
        )
    }

    /// Average per-sample results in the given (fixed) order and apply one
    /// Adam update. Returns the batch loss.
    pub fn apply_gradients(
        &mut self,
        iteration: u64,
        results: Vec<(T, ModelGrads<T>)>,
    ) -> Result<T, TrainError> {
        let batch = results.len().max(1);
        let mut loss_acc = 0.0f64;
        let mut total = ModelGrads::zeros_like(&self.state);
        for (loss, grads) in &results {
            loss_acc += loss.into_f64();
            total.add_assign(grads)?;
        }
        let loss = loss_acc / batch as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration });
        }
        total.scale(T::from_f64(1.0 / batch as f64));
        adam_step(
            &mut self.state,
            &total,
            &mut self.adam,
            &AdamHyper::from(&self.train_cfg),
        )?;
        Ok(T::from_f64(loss))
    }

    /// Sequential sample-forward-backward-update cycle for one iteration.
    pub fn step(&mut self, dataset: &[LightField], iteration: u64) -> Result<T, TrainError> {
        let batch = self.sample(dataset, iteration)?;
        let results = batch
            .iter()
            .map(|s| self.sample_gradients(s))
            .collect::<Result<Vec<_>, _>>()?;
        self.apply_gradients(iteration, results)
    }
}

pub(crate) const MOMENTS_MAGIC: &[u8] = b"SADM1\n";

/// Serialize optimizer moments in the same container format as checkpoints
/// (magic `SADM1\n`, then the config text, the step counter, and per layer
/// the id, six kernel dims, and the four 32-bit moment arrays).
pub fn encode_moments<T: Real>(
    cfg: &NetworkConfig,
    state: &ModelState<T>,
    adam: &AdamState<T>,
) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MOMENTS_MAGIC);
    codec::put_string(&mut out, &cfg.canonical_text());
    codec::put_u64(&mut out, adam.t);
    for ((id, k), m) in state.layers().iter().zip(&adam.layers) {
        codec::put_string(&mut out, id);
        for dim in [k.ka_u, k.ka_v, k.ks_w, k.ks_h, k.c_in, k.c_out] {
            codec::put_u32(&mut out, dim as u32);
        }
        codec::put_f32s(&mut out, m.m_weights.iter().map(|x| x.into_f32()));
        codec::put_f32s(&mut out, m.m_bias.iter().map(|x| x.into_f32()));
        codec::put_f32s(&mut out, m.v_weights.iter().map(|x| x.into_f32()));
        codec::put_f32s(&mut out, m.v_bias.iter().map(|x| x.into_f32()));
    }
    out
}

/// Decode an optimizer sidecar, validating the embedded config against the
/// expected one.
pub fn decode_moments(
    bytes: &[u8],
    expected: &NetworkConfig,
) -> Result<AdamState<f32>, CodecError> {
    let mut r = codec::Reader::new(bytes);
    r.magic(MOMENTS_MAGIC)?;
    let cfg_text = r.string()?;
    let cfg = NetworkConfig::from_canonical_text(&cfg_text)?;
    if cfg.canonical_text() != expected.canonical_text() {
        return Err(CodecError::ConfigMismatch);
    }
    let t = r.u64()?;
    let plan = build_plan(&cfg).map_err(|e| CodecError::Parse(e.to_string()))?;
    let mut layers = Vec::with_capacity(plan.layers.len());
    for spec in &plan.layers {
        let id = r.string()?;
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        if id != spec.id
            || dims != [spec.ka.0, spec.ka.1, spec.ks.0, spec.ks.1, spec.c_in, spec.c_out]
        {
            return Err(CodecError::LayerMismatch(id));
        }
        let n_w = dims[0] * dims[1] * dims[2] * dims[3] * dims[4] * dims[5];
        let n_b = dims[5];
        layers.push(Moments {
            m_weights: r.f32_vec(n_w)?,
            m_bias: r.f32_vec(n_b)?,
            v_weights: r.f32_vec(n_w)?,
            v_bias: r.f32_vec(n_b)?,
        });
    }
    r.finish()?;
    Ok(AdamState { t, layers })
}
