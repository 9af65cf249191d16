//! Raw numeric kernels shared by the tape and the eager path.
//!
//! Convolutions are same-size, stride 1, zero padded by `k / 2`, and use the
//! cross-correlation convention (the kernel is not flipped).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvGeom {
    pub fn infer(input: &Tensor, weight: &Tensor, bias: &Tensor, padding: usize) -> Result<Self> {
        let [batch, cin, height, width] = input.dims4()?;
        let [cout, wcin, kh, kw] = weight.dims4()?;
        if wcin != cin {
            return Err(Error::Shape(format!(
                "conv2d weight expects {wcin} input channels, input has {cin}"
            )));
        }
        if kh != kw {
            return Err(Error::Shape(format!("conv2d kernel must be square, got {kh}x{kw}")));
        }
        if kh % 2 == 0 {
            return Err(Error::InvalidArgument(format!("conv2d kernel size must be odd, got {kh}")));
        }
        if padding != kh / 2 {
            return Err(Error::InvalidArgument(format!(
                "conv2d padding must be {} for a {kh}x{kh} kernel, got {padding}",
                kh / 2
            )));
        }
        if bias.numel() != cout || bias.shape().len() != 1 {
            return Err(Error::Shape(format!(
                "conv2d bias must have shape [{cout}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            batch,
            cin,
            cout,
            height,
            width,
            kernel: kh,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.cout, self.height, self.width]
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Valid `[start, end)` range of output rows (or columns) for a kernel tap
    /// offset `delta` so that `pos + delta` stays inside `[0, extent)`.
    fn tap_range(delta: isize, extent: usize) -> (usize, usize) {
        let start = (-delta).max(0) as usize;
        let end = (extent as isize - delta).clamp(0, extent as isize) as usize;
        (start.min(end), end)
    }
}

pub(crate) fn conv2d_forward(input: &[f64], weight: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (hw, k, w) = (g.plane(), g.kernel, g.width);
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; g.batch * g.cout * hw];
    for b in 0..g.batch {
        for co in 0..g.cout {
            let out_plane = &mut out[(b * g.cout + co) * hw..][..hw];
            out_plane.fill(bias[co]);
            for ci in 0..g.cin {
                let in_plane = &input[(b * g.cin + ci) * hw..][..hw];
                let taps = &weight[(co * g.cin + ci) * k * k..][..k * k];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let (y0, y1) = ConvGeom::tap_range(dy, g.height);
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x0, x1) = ConvGeom::tap_range(dx, w);
                        if x0 == x1 {
                            continue;
                        }
                        let tap = taps[ky * k + kx];
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let ix0 = (x0 as isize + dx) as usize;
                            let orow = &mut out_plane[y * w + x0..y * w + x1];
                            let irow = &in_plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                            for (o, i) in orow.iter_mut().zip(irow) {
                                *o += tap * i;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_grad_input(grad_out: &[f64], weight: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (hw, k, w) = (g.plane(), g.kernel, g.width);
    let pad = (k / 2) as isize;
    let mut grad_in = vec![0.0; g.batch * g.cin * hw];
    for b in 0..g.batch {
        for ci in 0..g.cin {
            let gin_plane = &mut grad_in[(b * g.cin + ci) * hw..][..hw];
            for co in 0..g.cout {
                let gout_plane = &grad_out[(b * g.cout + co) * hw..][..hw];
                let taps = &weight[(co * g.cin + ci) * k * k..][..k * k];
                for ky in 0..k {
                    // input row iy receives from output row iy - dy
                    let dy = pad - ky as isize;
                    let (y0, y1) = ConvGeom::tap_range(dy, g.height);
                    for kx in 0..k {
                        let dx = pad - kx as isize;
                        let (x0, x1) = ConvGeom::tap_range(dx, w);
                        if x0 == x1 {
                            continue;
                        }
                        let tap = taps[ky * k + kx];
                        for y in y0..y1 {
                            let oy = (y as isize + dy) as usize;
                            let ox0 = (x0 as isize + dx) as usize;
                            let grow = &mut gin_plane[y * w + x0..y * w + x1];
                            let orow = &gout_plane[oy * w + ox0..oy * w + ox0 + (x1 - x0)];
                            for (gi, go) in grow.iter_mut().zip(orow) {
                                *gi += tap * go;
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

pub(crate) fn conv2d_grad_weight(grad_out: &[f64], input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (hw, k, w) = (g.plane(), g.kernel, g.width);
    let pad = (k / 2) as isize;
    let mut grad_w = vec![0.0; g.cout * g.cin * k * k];
    for co in 0..g.cout {
        for ci in 0..g.cin {
            let taps = &mut grad_w[(co * g.cin + ci) * k * k..][..k * k];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = ConvGeom::tap_range(dy, g.height);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = ConvGeom::tap_range(dx, w);
                    if x0 == x1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for b in 0..g.batch {
                        let gout_plane = &grad_out[(b * g.cout + co) * hw..][..hw];
                        let in_plane = &input[(b * g.cin + ci) * hw..][..hw];
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let ix0 = (x0 as isize + dx) as usize;
                            let orow = &gout_plane[y * w + x0..y * w + x1];
                            let irow = &in_plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                            acc += orow.iter().zip(irow).map(|(o, i)| o * i).sum::<f64>();
                        }
                    }
                    taps[ky * k + kx] = acc;
                }
            }
        }
    }
    grad_w
}

pub(crate) fn conv2d_grad_bias(grad_out: &[f64], g: &ConvGeom) -> Vec<f64> {
    let hw = g.plane();
    (0..g.cout)
        .map(|co| {
            (0..g.batch)
                .map(|b| grad_out[(b * g.cout + co) * hw..][..hw].iter().sum::<f64>())
                .sum()
        })
        .collect()
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub(crate) fn charbonnier_mean(pred: &[f64], target: &[f64], eps: f64) -> f64 {
    let eps2 = eps * eps;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            (d * d + eps2).sqrt()
        })
        .sum();
    sum / pred.len() as f64
}

pub(crate) fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub(crate) fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("operands share a shape")
}

pub(crate) fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = a.data().iter().map(|x| f(*x)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}
