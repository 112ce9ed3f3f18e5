use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-overlapping 2×2 max pooling with stride 2. A trailing odd row or
/// column is dropped. Returns the pooled map and, per output cell, the flat
/// index of the winning input element (first in row-major order on ties).
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let &[channels, height, width] = input.shape() else {
        return Err(Error::shape("maxpool2x2", format!("input must be [C,H,W], got {:?}", input.shape())));
    };
    if height < 2 || width < 2 {
        return Err(Error::shape("maxpool2x2", format!("spatial dims {height}x{width} below 2x2")));
    }
    let (oh, ow) = (height / 2, width / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(channels * oh * ow);
    let mut argmax = Vec::with_capacity(channels * oh * ow);
    for c in 0..channels {
        let base = c * height * width;
        for y in 0..oh {
            for x in 0..ow {
                let top = base + 2 * y * width + 2 * x;
                let mut best = top;
                for idx in [top + 1, top + width, top + width + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(&[channels, oh, ow], out)?, argmax))
}

/// Routes each output gradient to the input element recorded in `argmax`.
pub fn maxpool2x2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool2x2_backward",
            format!("{} gradients for {} pooled cells", grad_out.len(), argmax.len()),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let dst = grad.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        let slot = dst
            .get_mut(idx)
            .ok_or_else(|| Error::shape("maxpool2x2_backward", format!("argmax {idx} outside input")))?;
        *slot += g;
    }
    Ok(grad)
}
