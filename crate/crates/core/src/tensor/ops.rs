use super::kernels::{self, ConvGeom};
use super::{Tape, Tensor, Var};
use crate::error::Result;

/// The operations model code needs, abstracted over where they run.
///
/// [`Tape`] records every step for differentiation; [`Eager`] computes plain
/// tensors and drops intermediates as soon as they go out of scope. Both call
/// the same kernels, so their forward values agree bit for bit.
pub trait Ops {
    type Value<'a>: Clone
    where
        Self: 'a;

    /// Binds a parameter tensor (tracked for gradients when it requires them).
    fn param<'a>(&'a self, tensor: &Tensor) -> Self::Value<'a>;
    fn constant<'a>(&'a self, tensor: Tensor) -> Self::Value<'a>;
    fn conv2d<'a>(
        &'a self,
        x: &Self::Value<'a>,
        weight: &Self::Value<'a>,
        bias: &Self::Value<'a>,
        padding: usize,
    ) -> Result<Self::Value<'a>>;
    fn add<'a>(&'a self, a: &Self::Value<'a>, b: &Self::Value<'a>) -> Result<Self::Value<'a>>;
    fn sub<'a>(&'a self, a: &Self::Value<'a>, b: &Self::Value<'a>) -> Result<Self::Value<'a>>;
    fn scalar_mul<'a>(&'a self, s: &Self::Value<'a>, x: &Self::Value<'a>) -> Result<Self::Value<'a>>;
    fn relu<'a>(&'a self, x: &Self::Value<'a>) -> Self::Value<'a>;
    fn softplus<'a>(&'a self, x: &Self::Value<'a>) -> Self::Value<'a>;
    fn shape<'a>(&'a self, x: &Self::Value<'a>) -> Vec<usize>;
    fn to_tensor<'a>(&'a self, x: &Self::Value<'a>) -> Tensor;
}

impl Ops for Tape {
    type Value<'a> = Var<'a>;

    fn param<'a>(&'a self, tensor: &Tensor) -> Var<'a> {
        self.leaf(tensor)
    }

    fn constant<'a>(&'a self, tensor: Tensor) -> Var<'a> {
        Tape::constant(self, tensor)
    }

    fn conv2d<'a>(&'a self, x: &Var<'a>, w: &Var<'a>, b: &Var<'a>, padding: usize) -> Result<Var<'a>> {
        x.conv2d(*w, *b, padding)
    }

    fn add<'a>(&'a self, a: &Var<'a>, b: &Var<'a>) -> Result<Var<'a>> {
        a.add(*b)
    }

    fn sub<'a>(&'a self, a: &Var<'a>, b: &Var<'a>) -> Result<Var<'a>> {
        a.sub(*b)
    }

    fn scalar_mul<'a>(&'a self, s: &Var<'a>, x: &Var<'a>) -> Result<Var<'a>> {
        s.scalar_mul(*x)
    }

    fn relu<'a>(&'a self, x: &Var<'a>) -> Var<'a> {
        x.relu()
    }

    fn softplus<'a>(&'a self, x: &Var<'a>) -> Var<'a> {
        x.softplus()
    }

    fn shape<'a>(&'a self, x: &Var<'a>) -> Vec<usize> {
        x.shape()
    }

    fn to_tensor<'a>(&'a self, x: &Var<'a>) -> Tensor {
        x.to_tensor()
    }
}

/// Tape-free evaluation on owned tensors.
#[derive(Debug, Clone, Copy, Default)]
pub struct Eager;

impl Ops for Eager {
    type Value<'a> = Tensor;

    fn param<'a>(&'a self, tensor: &Tensor) -> Tensor {
        tensor.detached()
    }

    fn constant<'a>(&'a self, tensor: Tensor) -> Tensor {
        tensor
    }

    fn conv2d<'a>(&'a self, x: &Tensor, w: &Tensor, b: &Tensor, padding: usize) -> Result<Tensor> {
        let geom = ConvGeom::infer(x, w, b, padding)?;
        let data = kernels::conv2d_forward(x.data(), w.data(), b.data(), &geom);
        Tensor::new(geom.output_shape(), data)
    }

    fn add<'a>(&'a self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::same_shape("add", a, b)?;
        Ok(kernels::zip_map(a, b, |x, y| x + y))
    }

    fn sub<'a>(&'a self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::same_shape("sub", a, b)?;
        Ok(kernels::zip_map(a, b, |x, y| x - y))
    }

    fn scalar_mul<'a>(&'a self, s: &Tensor, x: &Tensor) -> Result<Tensor> {
        let s = s.item()?;
        Ok(kernels::map(x, |v| s * v))
    }

    fn relu<'a>(&'a self, x: &Tensor) -> Tensor {
        kernels::map(x, kernels::relu)
    }

    fn softplus<'a>(&'a self, x: &Tensor) -> Tensor {
        kernels::map(x, kernels::softplus)
    }

    fn shape<'a>(&'a self, x: &Tensor) -> Vec<usize> {
        x.shape().to_vec()
    }

    fn to_tensor<'a>(&'a self, x: &Tensor) -> Tensor {
        x.clone()
    }
}

/// Mean Charbonnier penalty on plain tensors.
pub fn charbonnier(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    super::tape::check_eps(eps)?;
    kernels::same_shape("charbonnier", pred, target)?;
    Ok(kernels::charbonnier_mean(pred.data(), target.data(), eps))
}
