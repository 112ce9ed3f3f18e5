use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weight: &Tensor) -> Result<(usize, usize)> {
    let &[d_out, d_in] = weight.shape() else {
        return Err(Error::shape("linear", format!("weight must be [D_out,D_in], got {:?}", weight.shape())));
    };
    if input.shape() != [d_in] {
        return Err(Error::shape(
            "linear",
            format!("input shape {:?} does not match D_in = {d_in}", input.shape()),
        ));
    }
    Ok((d_out, d_in))
}

/// `weight · input + bias`.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (d_out, d_in) = check(input, weight)?;
    if bias.shape() != [d_out] {
        return Err(Error::shape("linear", format!("bias shape {:?}, expected [{d_out}]", bias.shape())));
    }
    let x = input.data();
    let out = weight
        .data()
        .chunks_exact(d_in)
        .zip(bias.data())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::vector(out))
}

pub fn linear_backward(grad_out: &Tensor, cached_input: &Tensor, weight: &Tensor) -> Result<LinearGrads> {
    let (d_out, d_in) = check(cached_input, weight)?;
    if grad_out.shape() != [d_out] {
        return Err(Error::shape(
            "linear_backward",
            format!("grad_out shape {:?}, expected [{d_out}]", grad_out.shape()),
        ));
    }
    let x = cached_input.data();
    let mut grad_input = vec![0.0; d_in];
    let mut grad_weight = Vec::with_capacity(d_out * d_in);
    for (row, &g) in weight.data().chunks_exact(d_in).zip(grad_out.data()) {
        grad_weight.extend(x.iter().map(|v| g * v));
        for (gi, w) in grad_input.iter_mut().zip(row) {
            *gi += g * w;
        }
    }
    Ok(LinearGrads {
        input: Tensor::vector(grad_input),
        weight: Tensor::from_vec(&[d_out, d_in], grad_weight)?,
        bias: grad_out.clone(),
    })
}
