use super::gemm::{gemm, Operand};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial extent of every convolution kernel (3×3, no padding, stride 1).
pub const KERNEL_SIZE: usize = 3;

const TAPS: usize = KERNEL_SIZE * KERNEL_SIZE;

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

struct ConvDims {
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
}

impl ConvDims {
    fn out_height(&self) -> usize {
        self.height - KERNEL_SIZE + 1
    }

    fn out_width(&self) -> usize {
        self.width - KERNEL_SIZE + 1
    }

    fn patch_len(&self) -> usize {
        self.channels * TAPS
    }

    fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

fn check_dims(input: &Tensor, weight: &Tensor) -> Result<ConvDims> {
    let &[channels, height, width] = input.shape() else {
        return Err(Error::shape("conv2d", format!("input must be [C,H,W], got {:?}", input.shape())));
    };
    let &[out_channels, in_channels, kh, kw] = weight.shape() else {
        return Err(Error::shape(
            "conv2d",
            format!("weight must be [C_out,C_in,3,3], got {:?}", weight.shape()),
        ));
    };
    if kh != KERNEL_SIZE || kw != KERNEL_SIZE {
        return Err(Error::shape("conv2d", format!("kernel spatial dims {kh}x{kw}, expected 3x3")));
    }
    if in_channels != channels {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {channels} != weight C_in {in_channels}"),
        ));
    }
    if height < KERNEL_SIZE {
        return Err(Error::shape("conv2d", format!("input height {height} < 3")));
    }
    if width < KERNEL_SIZE {
        return Err(Error::shape("conv2d", format!("input width {width} < 3")));
    }
    Ok(ConvDims { channels, height, width, out_channels })
}

/// Unfolds `input` into a `[C·9, H'·W']` patch matrix.
fn im2col(input: &[f64], dims: &ConvDims) -> Vec<f64> {
    let (oh, ow) = (dims.out_height(), dims.out_width());
    let positions = dims.positions();
    let mut col = vec![0.0; dims.patch_len() * positions];
    for c in 0..dims.channels {
        let plane = &input[c * dims.height * dims.width..(c + 1) * dims.height * dims.width];
        for dy in 0..KERNEL_SIZE {
            for dx in 0..KERNEL_SIZE {
                let row = c * TAPS + dy * KERNEL_SIZE + dx;
                let dst = &mut col[row * positions..(row + 1) * positions];
                for y in 0..oh {
                    let src = &plane[(y + dy) * dims.width + dx..(y + dy) * dims.width + dx + ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
    col
}

/// Folds a patch-matrix gradient back onto the input grid, summing overlaps.
fn col2im(col: &[f64], dims: &ConvDims) -> Vec<f64> {
    let (oh, ow) = (dims.out_height(), dims.out_width());
    let positions = dims.positions();
    let mut out = vec![0.0; dims.channels * dims.height * dims.width];
    for c in 0..dims.channels {
        let plane = &mut out[c * dims.height * dims.width..(c + 1) * dims.height * dims.width];
        for dy in 0..KERNEL_SIZE {
            for dx in 0..KERNEL_SIZE {
                let row = c * TAPS + dy * KERNEL_SIZE + dx;
                let src = &col[row * positions..(row + 1) * positions];
                for y in 0..oh {
                    let dst = &mut plane[(y + dy) * dims.width + dx..(y + dy) * dims.width + dx + ow];
                    for (d, s) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// Valid 3×3 cross-correlation: `out[k,y,x] = bias[k] + Σ input[c,y+dy,x+dx]·weight[k,c,dy,dx]`.
pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let dims = check_dims(input, weight)?;
    if bias.shape() != [dims.out_channels] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?}, expected [{}]", bias.shape(), dims.out_channels),
        ));
    }
    let positions = dims.positions();
    let col = im2col(input.data(), &dims);
    let mut out = vec![0.0; dims.out_channels * positions];
    for (k, row) in out.chunks_exact_mut(positions).enumerate() {
        row.fill(bias.data()[k]);
    }
    gemm(
        dims.out_channels,
        dims.patch_len(),
        positions,
        Operand::rows(weight.data(), dims.patch_len()),
        Operand::rows(&col, positions),
        1.0,
        &mut out,
    );
    Tensor::from_vec(&[dims.out_channels, dims.out_height(), dims.out_width()], out)
}

pub fn conv2d_backward(grad_out: &Tensor, cached_input: &Tensor, weight: &Tensor) -> Result<ConvGrads> {
    let dims = check_dims(cached_input, weight)?;
    let expected = [dims.out_channels, dims.out_height(), dims.out_width()];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad_out shape {:?}, expected {expected:?}", grad_out.shape()),
        ));
    }
    let positions = dims.positions();
    let patch = dims.patch_len();
    let col = im2col(cached_input.data(), &dims);

    let grad_bias: Vec<f64> = grad_out.data().chunks_exact(positions).map(|row| row.iter().sum()).collect();

    let mut grad_weight = vec![0.0; dims.out_channels * patch];
    gemm(
        dims.out_channels,
        positions,
        patch,
        Operand::rows(grad_out.data(), positions),
        Operand::transposed(&col, positions),
        0.0,
        &mut grad_weight,
    );

    let mut grad_col = vec![0.0; patch * positions];
    gemm(
        patch,
        dims.out_channels,
        positions,
        Operand::transposed(weight.data(), patch),
        Operand::rows(grad_out.data(), positions),
        0.0,
        &mut grad_col,
    );
    let grad_input = col2im(&grad_col, &dims);

    Ok(ConvGrads {
        input: Tensor::from_vec(cached_input.shape(), grad_input)?,
        weight: Tensor::from_vec(weight.shape(), grad_weight)?,
        bias: Tensor::from_vec(&[dims.out_channels], grad_bias)?,
    })
}
