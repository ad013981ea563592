//! Reverse-mode autodiff over the kernels in [`ops`](super::ops).
//!
//! A [`Tape`] records every forward result in creation order. Inputs of a
//! node always precede it, so [`Tape::backward`] is a single reverse sweep.
//! Gradients land in each node's tensor gradient buffer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ops, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        stride: usize,
        pad: usize,
    },
    Depthwise {
        input: Var,
        weight: Var,
        stride: usize,
        pad: usize,
    },
    ChannelBias {
        input: Var,
        bias: Var,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    InstanceNorm {
        input: Var,
        inv_std: Vec<T>,
    },
    LayerNorm {
        input: Var,
        inv_std: Vec<T>,
    },
    Relu {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Fc {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Reshape {
        input: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Stack {
        parts: Vec<Var>,
    },
    Slice {
        input: Var,
        offset: usize,
    },
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    L2 {
        pred: Var,
        target: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    SumScalars {
        parts: Vec<Var>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient (parameters, inputs under test).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient (data, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last [`backward`](Self::backward), if any.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].value.take_grad()
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = ops::conv2d(self.value(input), self.value(weight), stride, pad)?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                stride,
                pad,
            },
            &[input, weight],
        ))
    }

    pub fn depthwise_conv2d(
        &mut self,
        input: Var,
        weight: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let out = ops::depthwise_conv2d(self.value(input), self.value(weight), stride, pad)?;
        Ok(self.push(
            out,
            Op::Depthwise {
                input,
                weight,
                stride,
                pad,
            },
            &[input, weight],
        ))
    }

    pub fn pointwise_conv2d(&mut self, input: Var, weight: Var) -> Result<Var> {
        let out = ops::pointwise_conv2d(self.value(input), self.value(weight))?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                stride: 1,
                pad: 0,
            },
            &[input, weight],
        ))
    }

    pub fn add_channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let out = ops::add_channel_bias(self.value(input), self.value(bias))?;
        Ok(self.push(out, Op::ChannelBias { input, bias }, &[input, bias]))
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (out, argmax) = ops::maxpool2d(self.value(input), window, stride)?;
        Ok(self.push(out, Op::MaxPool { input, argmax }, &[input]))
    }

    pub fn instance_norm(&mut self, input: Var, eps: T) -> Result<Var> {
        let (out, inv_std) = ops::instance_norm(self.value(input), eps)?;
        Ok(self.push(out, Op::InstanceNorm { input, inv_std }, &[input]))
    }

    pub fn layer_norm(&mut self, input: Var, eps: T) -> Result<Var> {
        let (out, inv_std) = ops::layer_norm(self.value(input), eps)?;
        Ok(self.push(out, Op::LayerNorm { input, inv_std }, &[input]))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = ops::relu(self.value(input));
        self.push(out, Op::Relu { input }, &[input])
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let out = ops::sigmoid(self.value(input));
        self.push(out, Op::Sigmoid { input }, &[input])
    }

    pub fn fully_connected(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::fully_connected(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(
            out,
            Op::Fc {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dims() != y.dims() {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                x.dims(),
                y.dims()
            )));
        }
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| p + q)
            .collect();
        let out = Tensor::new(x.dims(), data)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn reshape(&mut self, input: Var, dims: &[usize]) -> Result<Var> {
        let out = self.value(input).clone().reshape(dims)?;
        Ok(self.push(out, Op::Reshape { input }, &[input]))
    }

    /// Concatenates `N x D_i` matrices along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).dims2("concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pn, d) = self.value(p).dims2("concat")?;
            if pn != n {
                return Err(Error::shape(format!(
                    "concat: row counts differ ({n} vs {pn})"
                )));
            }
            widths.push(d);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for row in 0..n {
            for (&p, &d) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[row * d..(row + 1) * d]);
            }
        }
        let out = Tensor::new(&[n, total], data)?;
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
            parts,
        ))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let dims = self.value(parts[0]).dims().to_vec();
        let mut data = Vec::with_capacity(parts.len() * self.value(parts[0]).len());
        for &p in parts {
            let v = self.value(p);
            if v.dims() != dims.as_slice() {
                return Err(Error::shape(format!("stack: {:?} vs {:?}", dims, v.dims())));
            }
            data.extend_from_slice(v.data());
        }
        let mut out_dims = vec![parts.len()];
        out_dims.extend_from_slice(&dims);
        let out = Tensor::new(&out_dims, data)?;
        Ok(self.push(
            out,
            Op::Stack {
                parts: parts.to_vec(),
            },
            parts,
        ))
    }

    /// Index `i` along the leading axis.
    pub fn select(&mut self, input: Var, i: usize) -> Result<Var> {
        let v = self.value(input);
        let lead = v.dims()[0];
        if i >= lead {
            return Err(Error::shape(format!(
                "select: index {i} out of {:?}",
                v.dims()
            )));
        }
        let inner: usize = v.dims()[1..].iter().product();
        let dims = v.dims()[1..].to_vec();
        let out = Tensor::new(&dims, v.data()[i * inner..(i + 1) * inner].to_vec())?;
        Ok(self.push(
            out,
            Op::Slice {
                input,
                offset: i * inner,
            },
            &[input],
        ))
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = ops::l2_loss(self.value(pred), self.value(target))?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::L2 { pred, target },
            &[pred, target],
        ))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let out = self.value(input).map(|v| v * factor);
        self.push(out, Op::Scale { input, factor }, &[input])
    }

    /// Sum of single-element tensors.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let mut total = T::zero();
        for &p in parts {
            let v = self.value(p);
            if v.len() != 1 {
                return Err(Error::shape(format!(
                    "sum_scalars: operand {:?} is not a scalar",
                    v.dims()
                )));
            }
            total += v.data()[0];
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::SumScalars {
                parts: parts.to_vec(),
            },
            parts,
        ))
    }

    /// Back-propagates from the scalar `loss` (seed gradient 1). Gradients
    /// from a previous call are cleared first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).dims()
            )));
        }
        for node in &mut self.nodes {
            node.value.set_grad(None);
        }
        self.nodes[loss.0].value.grad_mut()[0] = T::one();
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = node.value.grad() else { continue };
            let grad = Tensor::new(node.value.dims(), g.to_vec())?;
            propagate(before, &node.op, &node.value, &grad)?;
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(nodes: &mut [Node<T>], v: Var, g: &[T]) {
    let node = &mut nodes[v.0];
    if !node.requires_grad {
        return;
    }
    for (d, &s) in node.value.grad_mut().iter_mut().zip(g) {
        *d += s;
    }
}

fn propagate<T: Scalar>(
    nodes: &mut [Node<T>],
    op: &Op<T>,
    out: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<()> {
    match op {
        Op::Leaf => {}
        Op::Conv2d {
            input,
            weight,
            stride,
            pad,
        } => {
            let (gi, gw) = ops::conv2d_backward(
                &nodes[input.0].value,
                &nodes[weight.0].value,
                *stride,
                *pad,
                grad,
            )?;
            accumulate(nodes, *input, gi.data());
            accumulate(nodes, *weight, gw.data());
        }
        Op::Depthwise {
            input,
            weight,
            stride,
            pad,
        } => {
            let (gi, gw) = ops::depthwise_conv2d_backward(
                &nodes[input.0].value,
                &nodes[weight.0].value,
                *stride,
                *pad,
                grad,
            )?;
            accumulate(nodes, *input, gi.data());
            accumulate(nodes, *weight, gw.data());
        }
        Op::ChannelBias { input, bias } => {
            let gb = ops::add_channel_bias_backward(grad.dims(), grad);
            accumulate(nodes, *input, grad.data());
            accumulate(nodes, *bias, gb.data());
        }
        Op::MaxPool { input, argmax } => {
            let dims = nodes[input.0].value.dims().to_vec();
            let gi = ops::maxpool2d_backward(&dims, argmax, grad);
            accumulate(nodes, *input, gi.data());
        }
        Op::InstanceNorm { input, inv_std } => {
            let gi = ops::instance_norm_backward(out, inv_std, grad);
            accumulate(nodes, *input, gi.data());
        }
        Op::LayerNorm { input, inv_std } => {
            let gi = ops::layer_norm_backward(out, inv_std, grad);
            accumulate(nodes, *input, gi.data());
        }
        Op::Relu { input } => {
            let gi = ops::relu_backward(&nodes[input.0].value, grad);
            accumulate(nodes, *input, gi.data());
        }
        Op::Sigmoid { input } => {
            let gi = ops::sigmoid_backward(out, grad);
            accumulate(nodes, *input, gi.data());
        }
        Op::Fc {
            input,
            weight,
            bias,
        } => {
            let (gi, gw, gb) =
                ops::fully_connected_backward(&nodes[input.0].value, &nodes[weight.0].value, grad)?;
            accumulate(nodes, *input, gi.data());
            accumulate(nodes, *weight, gw.data());
            accumulate(nodes, *bias, gb.data());
        }
        Op::Add { a, b } => {
            accumulate(nodes, *a, grad.data());
            accumulate(nodes, *b, grad.data());
        }
        Op::Reshape { input } => accumulate(nodes, *input, grad.data()),
        Op::Concat { parts } => {
            let n = grad.dims()[0];
            let total = grad.dims()[1];
            let mut col = 0;
            for &p in parts {
                let d = nodes[p.0].value.dims()[1];
                let mut g = Vec::with_capacity(n * d);
                for row in 0..n {
                    g.extend_from_slice(&grad.data()[row * total + col..row * total + col + d]);
                }
                accumulate(nodes, p, &g);
                col += d;
            }
        }
        Op::Stack { parts } => {
            let inner = grad.len() / parts.len();
            for (i, &p) in parts.iter().enumerate() {
                accumulate(nodes, p, &grad.data()[i * inner..(i + 1) * inner]);
            }
        }
        Op::Slice { input, offset } => {
            let node = &mut nodes[input.0];
            if node.requires_grad {
                let dst = &mut node.value.grad_mut()[*offset..*offset + grad.len()];
                for (d, &s) in dst.iter_mut().zip(grad.data()) {
                    *d += s;
                }
            }
        }
        Op::SoftmaxCe {
            logits,
            labels,
            probs,
        } => {
            let dims = nodes[logits.0].value.dims().to_vec();
            let gi = ops::softmax_cross_entropy_backward(&dims, probs, labels, grad.data()[0]);
            accumulate(nodes, *logits, gi.data());
        }
        Op::L2 { pred, target } => {
            let gp =
                ops::l2_loss_backward(&nodes[pred.0].value, &nodes[target.0].value, grad.data()[0]);
            accumulate(nodes, *pred, gp.data());
            let neg: Vec<T> = gp.data().iter().map(|&v| -v).collect();
            accumulate(nodes, *target, &neg);
        }
        Op::Scale { input, factor } => {
            let g: Vec<T> = grad.data().iter().map(|&v| v * *factor).collect();
            accumulate(nodes, *input, &g);
        }
        Op::SumScalars { parts } => {
            for &p in parts {
                accumulate(nodes, p, grad.data());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(&[1, 2], &[1.0, 2.0]).unwrap());
        let y = tape.constant(Tensor::from_f64(&[1, 2], &[0.0, 0.0]).unwrap());
        let l = tape.l2_loss(x, y).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0]);
        assert!(tape.grad(y).is_none());
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(&[1], &[3.0]).unwrap());
        let s = tape.add(x, x).unwrap();
        let l = tape.sum_scalars(&[s]).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0]);
    }
}
