use std::cell::{Ref, RefCell};
use std::fmt;

use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    ScalarMul { scalar: usize, x: usize },
    Scale { x: usize, factor: f64 },
    Relu(usize),
    Softplus(usize),
    Mean(usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        geom: ConvGeom,
    },
    Charbonnier { pred: usize, target: usize, eps: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations in evaluation order so they can be replayed backwards.
///
/// Nodes are appended only after their inputs exist, so the node list is
/// always in topological order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf. Gradients are tracked iff `tensor.requires_grad()`.
    pub fn leaf(&self, tensor: &Tensor) -> Var<'_> {
        let needs_grad = tensor.requires_grad();
        self.push(tensor.detached(), Op::Leaf, needs_grad)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&self, tensor: Tensor) -> Var<'_> {
        self.push(tensor.detached(), Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    /// Runs reverse-mode differentiation from a one-element `loss`.
    ///
    /// Each node is visited once, newest first. Gradients from fan-out are
    /// summed. Only leaves that require gradients appear in the result.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        self.check_owner(loss)?;
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.id].needs_grad {
            grads[loss.id] = Some(vec![1.0]);
        }

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            propagate(&nodes, &mut grads, node, &g);
        }

        let leaves = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.filter(|_| matches!(nodes[i].op, Op::Leaf) && nodes[i].needs_grad))
            .collect();
        Ok(Gradients { grads: leaves })
    }

    fn check_owner(&self, v: Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("variable belongs to a different tape".into()))
        }
    }
}

fn accumulate(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    id: usize,
    f: impl FnOnce(&mut [f64]),
) {
    if !nodes[id].needs_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]);
    f(slot);
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, a, |ga| add_into(ga, g, 1.0));
            accumulate(nodes, grads, b, |gb| add_into(gb, g, 1.0));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, a, |ga| add_into(ga, g, 1.0));
            accumulate(nodes, grads, b, |gb| add_into(gb, g, -1.0));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (nodes[a].value.data(), nodes[b].value.data());
            accumulate(nodes, grads, a, |ga| {
                ga.iter_mut().zip(g).zip(vb).for_each(|((d, g), y)| *d += g * y)
            });
            accumulate(nodes, grads, b, |gb| {
                gb.iter_mut().zip(g).zip(va).for_each(|((d, g), x)| *d += g * x)
            });
        }
        Op::ScalarMul { scalar, x } => {
            let s = nodes[scalar].value.data()[0];
            let vx = nodes[x].value.data();
            accumulate(nodes, grads, scalar, |gs| {
                gs[0] += g.iter().zip(vx).map(|(g, x)| g * x).sum::<f64>()
            });
            accumulate(nodes, grads, x, |gx| add_into(gx, g, s));
        }
        Op::Scale { x, factor } => accumulate(nodes, grads, x, |gx| add_into(gx, g, factor)),
        Op::Relu(x) => {
            let vx = nodes[x].value.data();
            accumulate(nodes, grads, x, |gx| {
                gx.iter_mut().zip(g).zip(vx).for_each(|((d, g), x)| {
                    if *x > 0.0 {
                        *d += g
                    }
                })
            });
        }
        Op::Softplus(x) => {
            let vx = nodes[x].value.data();
            accumulate(nodes, grads, x, |gx| {
                gx.iter_mut()
                    .zip(g)
                    .zip(vx)
                    .for_each(|((d, g), x)| *d += g * kernels::sigmoid(*x))
            });
        }
        Op::Mean(x) => {
            let n = nodes[x].value.numel() as f64;
            accumulate(nodes, grads, x, |gx| gx.iter_mut().for_each(|d| *d += g[0] / n));
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            geom,
        } => {
            if nodes[input].needs_grad {
                let gi = kernels::conv2d_grad_input(g, nodes[weight].value.data(), &geom);
                accumulate(nodes, grads, input, |d| add_into(d, &gi, 1.0));
            }
            if nodes[weight].needs_grad {
                let gw = kernels::conv2d_grad_weight(g, nodes[input].value.data(), &geom);
                accumulate(nodes, grads, weight, |d| add_into(d, &gw, 1.0));
            }
            if nodes[bias].needs_grad {
                let gb = kernels::conv2d_grad_bias(g, &geom);
                accumulate(nodes, grads, bias, |d| add_into(d, &gb, 1.0));
            }
        }
        Op::Charbonnier { pred, target, eps } => {
            let (vp, vt) = (nodes[pred].value.data(), nodes[target].value.data());
            let scale = g[0] / vp.len() as f64;
            let eps2 = eps * eps;
            let local: Vec<f64> = vp
                .iter()
                .zip(vt)
                .map(|(p, t)| {
                    let d = p - t;
                    scale * d / (d * d + eps2).sqrt()
                })
                .collect();
            accumulate(nodes, grads, pred, |gp| add_into(gp, &local, 1.0));
            accumulate(nodes, grads, target, |gt| add_into(gt, &local, -1.0));
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    if factor == 1.0 {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    } else {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += factor * s);
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf, if it was reached.
    pub fn wrt(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `var` into `tensor.grad`. Unreached leaves contribute zeros.
    pub fn accumulate_into(&self, var: Var<'_>, tensor: &mut Tensor) -> Result<()> {
        match self.wrt(var) {
            Some(g) => tensor.accumulate_grad(g),
            None => tensor.accumulate_grad(&vec![0.0; tensor.numel()]),
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the recorded value. Do not hold it across tape operations.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_tape(&self, other: Var<'_>) -> Result<()> {
        self.tape.check_owner(other)
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &str,
        make: fn(usize, usize) -> Op,
        f: fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let out = {
            let (a, b) = (self.value(), other.value());
            kernels::same_shape(name, &a, &b)?;
            kernels::zip_map(&a, &b, f)
        };
        let ng = self.tape.needs_grad(&[self.id, other.id]);
        Ok(self.tape.push(out, make(self.id, other.id), ng))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub, |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul, |a, b| a * b)
    }

    /// `self` must hold exactly one element; it multiplies every element of `x`.
    pub fn scalar_mul(self, x: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(x)?;
        let out = {
            let s = self.value().item()?;
            kernels::map(&x.value(), |v| s * v)
        };
        let ng = self.tape.needs_grad(&[self.id, x.id]);
        Ok(self.tape.push(
            out,
            Op::ScalarMul {
                scalar: self.id,
                x: x.id,
            },
            ng,
        ))
    }

    /// Multiplication by a constant.
    pub fn scale(self, factor: f64) -> Var<'t> {
        let out = kernels::map(&self.value(), |v| factor * v);
        let ng = self.tape.needs_grad(&[self.id]);
        self.tape.push(out, Op::Scale { x: self.id, factor }, ng)
    }

    pub fn relu(self) -> Var<'t> {
        let out = kernels::map(&self.value(), kernels::relu);
        let ng = self.tape.needs_grad(&[self.id]);
        self.tape.push(out, Op::Relu(self.id), ng)
    }

    pub fn softplus(self) -> Var<'t> {
        let out = kernels::map(&self.value(), kernels::softplus);
        let ng = self.tape.needs_grad(&[self.id]);
        self.tape.push(out, Op::Softplus(self.id), ng)
    }

    /// Mean over all elements, as a rank-0 tensor.
    pub fn mean(self) -> Result<Var<'t>> {
        let out = {
            let v = self.value();
            if v.numel() == 0 {
                return Err(Error::Shape("mean of an empty tensor".into()));
            }
            Tensor::scalar(v.data().iter().sum::<f64>() / v.numel() as f64)
        };
        let ng = self.tape.needs_grad(&[self.id]);
        Ok(self.tape.push(out, Op::Mean(self.id), ng))
    }

    pub fn conv2d(self, weight: Var<'t>, bias: Var<'t>, padding: usize) -> Result<Var<'t>> {
        self.same_tape(weight)?;
        self.same_tape(bias)?;
        let (out, geom) = {
            let (x, w, b) = (self.value(), weight.value(), bias.value());
            let geom = ConvGeom::infer(&x, &w, &b, padding)?;
            let data = kernels::conv2d_forward(x.data(), w.data(), b.data(), &geom);
            (Tensor::new(geom.output_shape(), data)?, geom)
        };
        let ng = self.tape.needs_grad(&[self.id, weight.id, bias.id]);
        Ok(self.tape.push(
            out,
            Op::Conv2d {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
                geom,
            },
            ng,
        ))
    }

    /// Mean Charbonnier penalty `sqrt((self - target)^2 + eps^2)`.
    pub fn charbonnier(self, target: Var<'t>, eps: f64) -> Result<Var<'t>> {
        self.same_tape(target)?;
        check_eps(eps)?;
        let out = {
            let (p, t) = (self.value(), target.value());
            kernels::same_shape("charbonnier", &p, &t)?;
            Tensor::scalar(kernels::charbonnier_mean(p.data(), t.data(), eps))
        };
        let ng = self.tape.needs_grad(&[self.id, target.id]);
        Ok(self.tape.push(
            out,
            Op::Charbonnier {
                pred: self.id,
                target: target.id,
                eps,
            },
            ng,
        ))
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "charbonnier epsilon must be positive, got {eps}"
        )))
    }
}
