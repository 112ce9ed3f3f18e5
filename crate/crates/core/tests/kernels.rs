use cnndistill_core::gradcheck::{check_conv, check_linear, check_pool, check_relu, check_softmax_ce, CheckSummary};
use cnndistill_core::kernels::{
    conv2d_forward, cross_entropy_loss, linear_forward, maxpool2x2_backward, maxpool2x2_forward, relu_backward,
    relu_forward, softmax,
};
use cnndistill_core::tensor::argmax;
use cnndistill_core::{Result, Tensor};
use proptest::prelude::*;

/// Direct cross-correlation, written independently of the im2col path.
fn naive_conv(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let c_out = weight.shape()[0];
    let at = |c: usize, y: usize, x: usize| input.data()[(c * h + y) * w + x];
    let wt = |k: usize, c: usize, dy: usize, dx: usize| weight.data()[((k * c_in + c) * 3 + dy) * 3 + dx];
    let mut out = Vec::new();
    for k in 0..c_out {
        for y in 0..h - 2 {
            for x in 0..w - 2 {
                let mut acc = bias.data()[k];
                for c in 0..c_in {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += at(c, y + dy, x + dx) * wt(k, c, dy, dx);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn conv_case() -> impl Strategy<Value = (Tensor, Tensor, Tensor)> {
    (1usize..4, 3usize..9, 3usize..9, 1usize..5).prop_flat_map(|(c_in, h, w, c_out)| {
        (values(c_in * h * w), values(c_out * c_in * 9), values(c_out)).prop_map(move |(x, k, b)| {
            (
                Tensor::from_vec(&[c_in, h, w], x).unwrap(),
                Tensor::from_vec(&[c_out, c_in, 3, 3], k).unwrap(),
                Tensor::vector(b),
            )
        })
    })
}

proptest! {
    #[test]
    fn conv_matches_naive_loops((x, k, b) in conv_case()) {
        let out = conv2d_forward(&x, &k, &b).unwrap();
        let expected = naive_conv(&x, &k, &b);
        prop_assert_eq!(out.shape(), &[k.shape()[0], x.shape()[1] - 2, x.shape()[2] - 2][..]);
        for (a, e) in out.data().iter().zip(&expected) {
            prop_assert!((a - e).abs() <= 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn kernels_are_pure((x, k, b) in conv_case()) {
        let a = conv2d_forward(&x, &k, &b).unwrap();
        let again = conv2d_forward(&x, &k, &b).unwrap();
        prop_assert!(a.data().iter().zip(again.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn softmax_normalized_and_shift_invariant(z in prop::collection::vec(-50.0f64..50.0, 2..12), c in -100.0f64..100.0) {
        let p = softmax(&z).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softmax(&shifted).unwrap();
        prop_assert_eq!(argmax(&p), argmax(&z));
        prop_assert_eq!(argmax(&q), argmax(&z));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_non_negative(z in prop::collection::vec(-30.0f64..30.0, 2..8), pick in any::<prop::sample::Index>()) {
        let class = pick.index(z.len());
        let (loss, grad) = cross_entropy_loss(&softmax(&z).unwrap(), class).unwrap();
        prop_assert!(loss.value() >= 0.0);
        prop_assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }
}

fn run_checks(check: fn(u64) -> Result<CheckSummary>, seeds: std::ops::Range<u64>) -> CheckSummary {
    seeds.map(|s| check(s).unwrap()).fold(CheckSummary::default(), CheckSummary::merge)
}

#[test]
fn finite_differences_conv() {
    let s = run_checks(check_conv, 0..100);
    assert!(s.max_rel_error < 1e-6, "{s:?}");
}

#[test]
fn finite_differences_relu() {
    let s = run_checks(check_relu, 0..100);
    assert!(s.max_rel_error < 1e-6, "{s:?}");
}

#[test]
fn finite_differences_pool() {
    let s = run_checks(check_pool, 0..100);
    assert!(s.max_rel_error < 1e-6, "{s:?}");
}

#[test]
fn finite_differences_linear() {
    let s = run_checks(check_linear, 0..100);
    assert!(s.max_rel_error < 1e-6, "{s:?}");
}

#[test]
fn finite_differences_softmax_cross_entropy() {
    let s = run_checks(check_softmax_ce, 0..100);
    assert!(s.max_rel_error < 1e-6, "{s:?}");
}

#[test]
fn spec_examples() {
    let x = Tensor::filled(&[1, 3, 3], 1.0);
    let k = Tensor::filled(&[1, 1, 3, 3], 1.0);
    assert_eq!(conv2d_forward(&x, &k, &Tensor::vector(vec![0.0])).unwrap().data(), &[9.0]);

    let r = relu_forward(&Tensor::vector(vec![-1.0, 0.0, 2.0]));
    assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
    let g = relu_backward(&Tensor::vector(vec![1.0; 3]), &Tensor::vector(vec![-1.0, 0.0, 2.0])).unwrap();
    assert_eq!(g.data(), &[0.0, 0.0, 1.0]);

    let (p, idx) = maxpool2x2_forward(&Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    assert_eq!((p.data(), idx.as_slice()), (&[4.0][..], &[3][..]));
    let (p, _) = maxpool2x2_forward(&Tensor::zeros(&[1, 5, 5])).unwrap();
    assert_eq!(p.shape(), &[1, 2, 2]);
    let back = maxpool2x2_backward(&Tensor::filled(&[1, 1, 1], 2.0), &idx, &[1, 2, 2]).unwrap();
    assert_eq!(back.data(), &[0.0, 0.0, 0.0, 2.0]);

    let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let v = Tensor::vector(vec![3.0, -4.0]);
    assert_eq!(linear_forward(&v, &eye, &Tensor::zeros(&[2])).unwrap().data(), v.data());
    let bias = Tensor::vector(vec![0.5, 1.5]);
    assert_eq!(linear_forward(&Tensor::zeros(&[2]), &eye, &bias).unwrap().data(), bias.data());

    for c in [-7.0, 0.0, 123.0] {
        let p = softmax(&[c, c + 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }
    let p = softmax(&[1000.0, 0.0]).unwrap();
    assert!(p[0] == 1.0 && p[1] >= 0.0 && p[1] < 1e-300);
    let (loss, _) = cross_entropy_loss(&[0.25; 4], 2).unwrap();
    assert!((loss.value() - 4f64.ln()).abs() < 1e-15);
    assert_eq!(cross_entropy_loss(&[0.0, 1.0], 1).unwrap().0.value(), 0.0);
}

#[test]
fn kernel_errors() {
    let err = conv2d_forward(&Tensor::zeros(&[1, 2, 5]), &Tensor::zeros(&[1, 1, 3, 3]), &Tensor::zeros(&[1])).unwrap_err();
    assert!(err.to_string().contains("height"), "{err}");
    assert!(maxpool2x2_forward(&Tensor::zeros(&[1, 1, 4])).is_err());
    assert!(softmax(&[f64::NAN, 0.0]).is_err());
    assert!(softmax(&[1.0]).is_err());
    assert!(cross_entropy_loss(&[0.5, 0.5], 2).is_err());
    assert!(linear_forward(&Tensor::zeros(&[3]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2])).is_err());
}
