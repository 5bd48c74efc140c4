//! Finite-difference verification of every backward pass, per layer and end
//! to end on three network shapes.

mod common;

use arcnn::arch::parse_arch;
use arcnn::layers::{
    conv_backward, conv_forward, deconv_backward, deconv_forward, prelu_backward, prelu_forward,
    ConvParams, PReluParams,
};
use arcnn::net::Network;
use arcnn::train::mse_loss;
use common::*;

fn conv_params(rng: &mut rand_chacha::ChaCha8Rng, oc: usize, ic: usize, f: usize, s: usize, p: usize) -> ConvParams<f64> {
    ConvParams::conv(oc, ic, f, s, p, rand_vec(rng, oc * ic * f * f), rand_vec(rng, oc)).unwrap()
}

fn deconv_params(rng: &mut rand_chacha::ChaCha8Rng, oc: usize, ic: usize, f: usize, s: usize, p: usize) -> ConvParams<f64> {
    ConvParams::deconv(oc, ic, f, s, p, rand_vec(rng, oc * ic * f * f), rand_vec(rng, oc)).unwrap()
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut rng = seeded(101);
    let input = rand_tensor(&mut rng, 1, 2, 8, 8);
    let p = conv_params(&mut rng, 3, 2, 3, 1, 1);
    let grad_out = rand_tensor(&mut rng, 1, 3, 8, 8);
    let (gi, gw, gb) = conv_backward(&input, &p, &grad_out).unwrap();

    check_gradient("conv/input", input.data(), gi.data(), |k, v| {
        let mut x = input.clone();
        x.data_mut()[k] = v;
        conv_forward(&x, &p).unwrap().dot(&grad_out)
    });
    check_gradient("conv/weights", &p.weights, &gw, |k, v| {
        let mut q = p.clone();
        q.weights[k] = v;
        conv_forward(&input, &q).unwrap().dot(&grad_out)
    });
    check_gradient("conv/biases", &p.biases, &gb, |k, v| {
        let mut q = p.clone();
        q.biases[k] = v;
        conv_forward(&input, &q).unwrap().dot(&grad_out)
    });
}

#[test]
fn strided_conv_backward_matches_finite_differences() {
    let mut rng = seeded(102);
    let input = rand_tensor(&mut rng, 2, 2, 9, 9);
    let p = conv_params(&mut rng, 2, 2, 3, 2, 1);
    let grad_out = rand_tensor(&mut rng, 2, 2, 5, 5);
    let (gi, gw, gb) = conv_backward(&input, &p, &grad_out).unwrap();

    check_gradient("sconv/input", input.data(), gi.data(), |k, v| {
        let mut x = input.clone();
        x.data_mut()[k] = v;
        conv_forward(&x, &p).unwrap().dot(&grad_out)
    });
    check_gradient("sconv/weights", &p.weights, &gw, |k, v| {
        let mut q = p.clone();
        q.weights[k] = v;
        conv_forward(&input, &q).unwrap().dot(&grad_out)
    });
    check_gradient("sconv/biases", &p.biases, &gb, |k, v| {
        let mut q = p.clone();
        q.biases[k] = v;
        conv_forward(&input, &q).unwrap().dot(&grad_out)
    });
}

#[test]
fn deconv_backward_matches_finite_differences() {
    for (seed, stride) in [(103u64, 1usize), (104, 2)] {
        let mut rng = seeded(seed);
        let input = rand_tensor(&mut rng, 1, 3, 6, 6);
        let p = deconv_params(&mut rng, 2, 3, 5, stride, 2);
        let (oh, ow) = p.deconv_output_size(6, 6).unwrap();
        let grad_out = rand_tensor(&mut rng, 1, 2, oh, ow);
        let (gi, gw, gb) = deconv_backward(&input, &p, &grad_out).unwrap();

        check_gradient("deconv/input", input.data(), gi.data(), |k, v| {
            let mut x = input.clone();
            x.data_mut()[k] = v;
            deconv_forward(&x, &p).unwrap().dot(&grad_out)
        });
        check_gradient("deconv/weights", &p.weights, &gw, |k, v| {
            let mut q = p.clone();
            q.weights[k] = v;
            deconv_forward(&input, &q).unwrap().dot(&grad_out)
        });
        check_gradient("deconv/biases", &p.biases, &gb, |k, v| {
            let mut q = p.clone();
            q.biases[k] = v;
            deconv_forward(&input, &q).unwrap().dot(&grad_out)
        });
    }
}

#[test]
fn deconv_input_grad_is_conv_with_same_weights() {
    let mut rng = seeded(105);
    let input = rand_tensor(&mut rng, 2, 3, 7, 7);
    let p = deconv_params(&mut rng, 2, 3, 3, 2, 1);
    let (oh, ow) = p.deconv_output_size(7, 7).unwrap();
    let grad_out = rand_tensor(&mut rng, 2, 2, oh, ow);
    let (gi, _, _) = deconv_backward(&input, &p, &grad_out).unwrap();

    // The same flat weight array read with conv layout (out=in_channels).
    let as_conv = ConvParams::conv(
        p.in_channels,
        p.out_channels,
        p.filter,
        p.stride,
        p.pad,
        p.weights.clone(),
        vec![0.0; p.in_channels],
    )
    .unwrap();
    let direct = conv_forward(&grad_out, &as_conv).unwrap();
    assert_eq!(gi.shape(), direct.shape());
    for (a, b) in gi.data().iter().zip(direct.data()) {
        assert!(rel_err(*a, *b) < 1e-9);
    }
}

#[test]
fn prelu_backward_matches_finite_differences() {
    let mut rng = seeded(106);
    let input = rand_tensor_off_zero(&mut rng, 2, 3, 5, 5);
    let p = PReluParams::new(rand_vec(&mut rng, 3));
    let grad_out = rand_tensor(&mut rng, 2, 3, 5, 5);
    let (gi, gs) = prelu_backward(&input, &p, &grad_out).unwrap();

    check_gradient("prelu/input", input.data(), gi.data(), |k, v| {
        let mut x = input.clone();
        x.data_mut()[k] = v;
        prelu_forward(&x, &p).unwrap().dot(&grad_out)
    });
    check_gradient("prelu/slopes", &p.slopes, &gs, |k, v| {
        let mut q = p.clone();
        q.slopes[k] = v;
        prelu_forward(&input, &q).unwrap().dot(&grad_out)
    });
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let mut rng = seeded(107);
    let pred = rand_tensor(&mut rng, 3, 1, 4, 4);
    let target = rand_tensor(&mut rng, 3, 1, 4, 4);
    let (_, grad) = mse_loss(&pred, &target).unwrap();
    check_gradient("mse/pred", pred.data(), grad.data(), |k, v| {
        let mut x = pred.clone();
        x.data_mut()[k] = v;
        mse_loss(&x, &target).unwrap().0
    });
}

/// Full-network gradient check: every weight, bias, and slope of a network
/// built from the notation, against central differences of
/// `<grad_out, infer(input)>`.
fn net_gradcheck(notation: &str, seed: u64, in_h: usize, in_w: usize) {
    let spec = parse_arch(notation).unwrap();
    let mut rng = seeded(seed);
    let mut net = Network::<f64>::zeros(&spec).unwrap();
    for layer in net.layers_mut() {
        for w in &mut layer.weights {
            *w = rng.random_range(-0.5..0.5);
        }
        for b in &mut layer.biases {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    for p in net.prelus_mut() {
        for s in &mut p.slopes {
            *s = rng.random_range(0.05..0.45);
        }
    }
    let input = rand_tensor_off_zero(&mut rng, 1, 1, in_h, in_w);
    let (out, cache) = net.forward(&input).unwrap();
    let grad_out = rand_tensor(&mut rng, out.n(), out.c(), out.h(), out.w());
    let grads = net.backward(&cache, &grad_out).unwrap();

    let scalar = |net: &Network<f64>| net.infer(&input).unwrap().dot(&grad_out);
    for i in 0..net.num_layers() {
        let params = net.layers()[i].weights.clone();
        check_gradient(&format!("{notation}/w{i}"), &params, &grads.weights[i], |k, v| {
            let mut n2 = net.clone();
            n2.layers_mut()[i].weights[k] = v;
            scalar(&n2)
        });
        let params = net.layers()[i].biases.clone();
        check_gradient(&format!("{notation}/b{i}"), &params, &grads.biases[i], |k, v| {
            let mut n2 = net.clone();
            n2.layers_mut()[i].biases[k] = v;
            scalar(&n2)
        });
        if i + 1 < net.num_layers() {
            let params = net.prelus()[i].slopes.clone();
            check_gradient(&format!("{notation}/a{i}"), &params, &grads.slopes[i], |k, v| {
                let mut n2 = net.clone();
                n2.prelus_mut()[i].slopes[k] = v;
                scalar(&n2)
            });
        }
    }
    // Input gradient as well.
    check_gradient(&format!("{notation}/input"), input.data(), grads.input.data(), |k, v| {
        let mut x = input.clone();
        x.data_mut()[k] = v;
        net.infer(&x).unwrap().dot(&grad_out)
    });
}

use rand::Rng;

#[test]
fn three_layer_net_gradcheck() {
    net_gradcheck("8(5)-4(3)-1(3)", 201, 10, 10);
}

#[test]
fn four_layer_net_gradcheck() {
    net_gradcheck("8(5)-4(1)-4(3)-1(3)", 202, 10, 10);
}

#[test]
fn strided_hourglass_net_gradcheck() {
    net_gradcheck("8(5)-4(1)-4(3)-4(1)-1[5]-s2", 203, 12, 12);
}

#[test]
fn tiny_deconv_net_gradcheck() {
    net_gradcheck("4(3)-2(1)-1[3]-s2", 204, 9, 9);
}
