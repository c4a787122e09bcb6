//! Reverse-mode differentiation by operation recording.
//!
//! Forward computations push one node per primitive (conv, concat, reshape,
//! relu, loss, sum) onto a [`Tape`]; every node keeps its output value, so
//! [`Tape::backward`] can walk the record in reverse and accumulate
//! vector-Jacobian products for all leaves. Replaying a tape forward
//! reproduces the recorded outputs bit for bit, which
//! [`Tape::replay_matches`] verifies.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{
    activation, concat_channels, conv2d, conv2d_backward, relu_backward, slice_channels,
    Activation, ConvKernel, Mode, ModeTensor, Padding, Real, TensorError,
};

/// Handle to a recorded value.
pub type NodeId = usize;

/// How a squared-error loss is reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Divide the summed squared error by the element count.
    Mean,
    /// Plain sum of squared errors.
    Sum,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TapeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("node {0} does not hold a tensor")]
    NotATensor(NodeId),
    #[error("node {0} does not hold a kernel")]
    NotAKernel(NodeId),
    #[error("gradient check requires a scalar-valued function")]
    NotAScalar,
    #[error("loss operands must have identical shape")]
    LossShapeMismatch,
}

/// A recorded value: a mode tensor, a convolution kernel, or a scalar.
#[derive(Debug, Clone)]
pub enum Value<T> {
    Tensor(ModeTensor<T>),
    Kernel(ConvKernel<T>),
    Scalar(T),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv {
        x: NodeId,
        k: NodeId,
        padding: Padding,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Reshape {
        x: NodeId,
        from: Mode,
    },
    Relu {
        x: NodeId,
    },
    MseLoss {
        pred: NodeId,
        target: NodeId,
        reduction: Reduction,
    },
    Sum {
        x: NodeId,
    },
}

struct Node<T> {
    value: Value<T>,
    op: Op,
}

/// Linear record of primitive operations. Single writer: one recording per
/// tape, replay and backward take `&self`.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<T>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf_tensor(&mut self, t: ModeTensor<T>) -> NodeId {
        self.push(Value::Tensor(t), Op::Leaf)
    }

    pub fn leaf_kernel(&mut self, k: ConvKernel<T>) -> NodeId {
        self.push(Value::Kernel(k), Op::Leaf)
    }

    pub fn tensor(&self, id: NodeId) -> Result<&ModeTensor<T>, TapeError> {
        match &self.nodes[id].value {
            Value::Tensor(t) => Ok(t),
            _ => Err(TapeError::NotATensor(id)),
        }
    }

    pub fn kernel(&self, id: NodeId) -> Result<&ConvKernel<T>, TapeError> {
        match &self.nodes[id].value {
            Value::Kernel(k) => Ok(k),
            _ => Err(TapeError::NotAKernel(id)),
        }
    }

    pub fn scalar(&self, id: NodeId) -> Result<T, TapeError> {
        match &self.nodes[id].value {
            Value::Scalar(s) => Ok(*s),
            _ => Err(TapeError::NotAScalar),
        }
    }

    pub fn conv(&mut self, x: NodeId, k: NodeId, padding: Padding) -> Result<NodeId, TapeError> {
        let out = conv2d(self.tensor(x)?, self.kernel(k)?, padding)?;
        Ok(self.push(Value::Tensor(out), Op::Conv { x, k, padding }))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TapeError> {
        let tensors: Vec<&ModeTensor<T>> = parts
            .iter()
            .map(|&id| self.tensor(id))
            .collect::<Result<_, _>>()?;
        let out = concat_channels(&tensors)?;
        Ok(self.push(
            Value::Tensor(out),
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: NodeId, target: Mode) -> Result<NodeId, TapeError> {
        let t = self.tensor(x)?;
        let from = t.mode;
        let out = t.reshaped(target);
        Ok(self.push(Value::Tensor(out), Op::Reshape { x, from }))
    }

    /// Record an activation. Identity records nothing and returns `x`.
    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId, TapeError> {
        match kind {
            Activation::Identity => {
                self.tensor(x)?;
                Ok(x)
            }
            Activation::Relu => {
                let out = activation(self.tensor(x)?, Activation::Relu);
                Ok(self.push(Value::Tensor(out), Op::Relu { x }))
            }
        }
    }

    /// Squared-error loss between two equally shaped tensors.
    pub fn mse_loss(
        &mut self,
        pred: NodeId,
        target: NodeId,
        reduction: Reduction,
    ) -> Result<NodeId, TapeError> {
        let p = self.tensor(pred)?;
        let t = self.tensor(target)?;
        if p.u != t.u || p.v != t.v || p.w != t.w || p.h != t.h || p.c != t.c {
            return Err(TapeError::LossShapeMismatch);
        }
        let loss = mse_value(p.data(), t.data(), reduction);
        Ok(self.push(
            Value::Scalar(loss),
            Op::MseLoss {
                pred,
                target,
                reduction,
            },
        ))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        let t = self.tensor(x)?;
        let mut acc = T::zero();
        for v in t.data() {
            acc = acc + *v;
        }
        Ok(self.push(Value::Scalar(acc), Op::Sum { x }))
    }

    /// Vector-Jacobian products of the scalar node `root` with respect to
    /// every node on the tape.
    pub fn backward(&self, root: NodeId) -> Result<Gradients<T>, TapeError> {
        match &self.nodes[root].value {
            Value::Scalar(_) => {}
            _ => return Err(TapeError::NotAScalar),
        }
        let mut adj: Vec<Option<Value<T>>> = vec![None; self.nodes.len()];
        adj[root] = Some(Value::Scalar(T::one()));

        for id in (0..=root).rev() {
            let Some(up) = adj[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Leaf => {
                    adj[id] = Some(up);
                    continue;
                }
                Op::Conv { x, k, padding } => {
                    let upstream = as_tensor(&up);
                    let input = self.tensor(*x)?;
                    let kernel = self.kernel(*k)?;
                    let (dx, dw, db) = conv2d_backward(input, kernel, *padding, upstream);
                    add_tensor(&mut adj[*x], dx);
                    add_kernel(&mut adj[*k], kernel, dw, db);
                }
                Op::Concat { parts } => {
                    let upstream = as_tensor(&up);
                    let mut offset = 0;
                    for &pid in parts {
                        let c = self.tensor(pid)?.c;
                        let slice = slice_channels(upstream, offset, offset + c)?;
                        add_tensor(&mut adj[pid], slice);
                        offset += c;
                    }
                }
                Op::Reshape { x, from } => {
                    let upstream = as_tensor(&up);
                    add_tensor(&mut adj[*x], upstream.reshaped(*from));
                }
                Op::Relu { x } => {
                    let upstream = as_tensor(&up);
                    let input = self.tensor(*x)?;
                    let mut dx = ModeTensor::zeros(input.u, input.v, input.w, input.h, input.c)
                        .reshape_mode(input.mode);
                    relu_backward(input.data(), upstream.data(), dx.data_mut());
                    add_tensor(&mut adj[*x], dx);
                }
                Op::MseLoss {
                    pred,
                    target,
                    reduction,
                } => {
                    let g = as_scalar(&up);
                    let p = self.tensor(*pred)?;
                    let t = self.tensor(*target)?;
                    let scale = match reduction {
                        Reduction::Mean => {
                            g * (T::one() + T::one()) / T::from_f64(p.len() as f64)
                        }
                        Reduction::Sum => g * (T::one() + T::one()),
                    };
                    let mut dp = p.clone();
                    for (d, tv) in dp.data_mut().iter_mut().zip(t.data()) {
                        *d = (*d - *tv) * scale;
                    }
                    let mut dt = dp.clone();
                    for d in dt.data_mut().iter_mut() {
                        *d = T::zero() - *d;
                    }
                    add_tensor(&mut adj[*pred], dp);
                    add_tensor(&mut adj[*target], dt);
                }
                Op::Sum { x } => {
                    let g = as_scalar(&up);
                    let t = self.tensor(*x)?;
                    let mut dx = t.clone();
                    for d in dx.data_mut().iter_mut() {
                        *d = g;
                    }
                    add_tensor(&mut adj[*x], dx);
                }
            }
        }
        Ok(Gradients { adj })
    }

    /// Re-execute every recorded op from its recorded inputs and compare
    /// with the stored outputs. True only on exact (bitwise) agreement.
    pub fn replay_matches(&self) -> Result<bool, TapeError> {
        for node in &self.nodes {
            let recomputed = match &node.op {
                Op::Leaf => continue,
                Op::Conv { x, k, padding } => {
                    Value::Tensor(conv2d(self.tensor(*x)?, self.kernel(*k)?, *padding)?)
                }
                Op::Concat { parts } => {
                    let tensors: Vec<&ModeTensor<T>> = parts
                        .iter()
                        .map(|&id| self.tensor(id))
                        .collect::<Result<_, _>>()?;
                    Value::Tensor(concat_channels(&tensors)?)
                }
                Op::Reshape { x, .. } => {
                    let out = match &node.value {
                        Value::Tensor(t) => self.tensor(*x)?.reshaped(t.mode),
                        _ => return Err(TapeError::NotATensor(*x)),
                    };
                    Value::Tensor(out)
                }
                Op::Relu { x } => {
                    Value::Tensor(activation(self.tensor(*x)?, Activation::Relu))
                }
                Op::MseLoss {
                    pred,
                    target,
                    reduction,
                } => Value::Scalar(mse_value(
                    self.tensor(*pred)?.data(),
                    self.tensor(*target)?.data(),
                    *reduction,
                )),
                Op::Sum { x } => {
                    let mut acc = T::zero();
                    for v in self.tensor(*x)?.data() {
                        acc = acc + *v;
                    }
                    Value::Scalar(acc)
                }
            };
            let same = match (&recomputed, &node.value) {
                (Value::Tensor(a), Value::Tensor(b)) => a == b,
                (Value::Scalar(a), Value::Scalar(b)) => a == b,
                _ => false,
            };
            if !same {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub(crate) fn mse_value<T: Real>(pred: &[T], target: &[T], reduction: Reduction) -> T {
    let mut acc = T::zero();
    for (p, t) in pred.iter().zip(target) {
        let d = *p - *t;
        acc = acc + d * d;
    }
    match reduction {
        Reduction::Mean => acc / T::from_f64(pred.len() as f64),
        Reduction::Sum => acc,
    }
}

fn as_tensor<T: Real>(v: &Value<T>) -> &ModeTensor<T> {
    match v {
        Value::Tensor(t) => t,
        _ => unreachable!("adjoint type mismatch"),
    }
}

fn as_scalar<T: Real>(v: &Value<T>) -> T {
    match v {
        Value::Scalar(s) => *s,
        _ => unreachable!("adjoint type mismatch"),
    }
}

fn add_tensor<T: Real>(slot: &mut Option<Value<T>>, delta: ModeTensor<T>) {
    match slot {
        None => *slot = Some(Value::Tensor(delta)),
        Some(Value::Tensor(acc)) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a = *a + *d;
            }
        }
        Some(_) => unreachable!("adjoint type mismatch"),
    }
}

fn add_kernel<T: Real>(
    slot: &mut Option<Value<T>>,
    kernel: &ConvKernel<T>,
    dw: Vec<T>,
    db: Vec<T>,
) {
    match slot {
        None => {
            let grad = ConvKernel {
                ka_u: kernel.ka_u,
                ka_v: kernel.ka_v,
                ks_w: kernel.ks_w,
                ks_h: kernel.ks_h,
                c_in: kernel.c_in,
                c_out: kernel.c_out,
                weights: dw,
                bias: db,
            };
            *slot = Some(Value::Kernel(grad));
        }
        Some(Value::Kernel(acc)) => {
            for (a, d) in acc.weights.iter_mut().zip(&dw) {
                *a = *a + *d;
            }
            for (a, d) in acc.bias.iter_mut().zip(&db) {
                *a = *a + *d;
            }
        }
        Some(_) => unreachable!("adjoint type mismatch"),
    }
}

/// Accumulated adjoints from [`Tape::backward`], indexed by node.
pub struct Gradients<T> {
    adj: Vec<Option<Value<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the root with respect to a tensor node. `None` when the
    /// node does not influence the root.
    pub fn tensor(&self, id: NodeId) -> Option<&ModeTensor<T>> {
        match self.adj.get(id)? {
            Some(Value::Tensor(t)) => Some(t),
            _ => None,
        }
    }

    /// Gradient with respect to a kernel node, carried in a kernel-shaped
    /// container (weights hold d/dW, bias holds d/db).
    pub fn kernel(&self, id: NodeId) -> Option<&ConvKernel<T>> {
        match self.adj.get(id)? {
            Some(Value::Kernel(k)) => Some(k),
            _ => None,
        }
    }
}

/// Compare tape adjoints against central finite differences, coordinate by
/// coordinate, for a recorded scalar function of `x`. Returns the worst
/// relative error `|a - n| / max(|a|, |n|, 1e-6)`. 64-bit only.
pub fn grad_check<F>(build: F, x: &ModeTensor<f64>, eps: f64) -> Result<f64, TapeError>
where
    F: Fn(&mut Tape<f64>, NodeId) -> Result<NodeId, TapeError>,
{
    let mut tape = Tape::new();
    let xid = tape.leaf_tensor(x.clone());
    let root = build(&mut tape, xid)?;
    tape.scalar(root).map_err(|_| TapeError::NotAScalar)?;
    let grads = tape.backward(root)?;
    let zero_grad = ModeTensor::zeros(x.u, x.v, x.w, x.h, x.c);
    let analytic = grads.tensor(xid).unwrap_or(&zero_grad).clone();

    let eval = |probe: &ModeTensor<f64>| -> Result<f64, TapeError> {
        let mut t = Tape::new();
        let id = t.leaf_tensor(probe.clone());
        let out = build(&mut t, id)?;
        t.scalar(out)
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let f_plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let f_minus = eval(&probe)?;
        probe.data_mut()[i] = orig;

        let numeric = (f_plus - f_minus) / (2.0 * eps);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        let rel = (a - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}
