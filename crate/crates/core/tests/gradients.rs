//! Floating-point gradients against central finite differences, and the
//! forward pass against an independent dense implementation.

mod common;

use memtrain_core::devices::{DeviceSpec, LinearDeviceSpec};
use memtrain_core::numerics::{RandomStream, RealMatrix};
use memtrain_core::trainer::{HardwareConfig, Network, NetworkConfig, UpdateScheme};

fn network(sizes: &[usize], bias: bool, seed: u64) -> Network {
    let cfg = NetworkConfig {
        layer_sizes: sizes.to_vec(),
        learning_rate: 0.1,
        epochs: 1,
        seed,
        bias_enabled: bias,
        update_scheme: UpdateScheme::FloatingPoint,
    };
    let dev = DeviceSpec::Linear(LinearDeviceSpec::new(4, 0.0).unwrap());
    let mut net = Network::build(cfg, dev, HardwareConfig::default()).unwrap();
    // Continuous weights exercise the chain rule better than {-1, 0, 1}.
    let mut s = RandomStream::new(seed, 99);
    for layer in net.layers_mut() {
        layer.with_synapses_mut(|syn| {
            if let memtrain_core::crossbar::Synapses::Ideal(w) = syn {
                for v in w.as_mut_slice() {
                    *v = s.normal_unchecked(0.0, 0.5);
                }
            }
        });
    }
    net
}

fn loss(net: &Network, x: &[f64], t: &[f64]) -> f64 {
    let mut s = RandomStream::new(0, 0);
    let out = net.forward_pass(x, &mut s).unwrap().output;
    0.5 * out.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn perturbed(net: &Network, layer: usize, idx: usize, h: f64) -> Network {
    let mut n = net.clone();
    n.layers_mut()[layer].with_synapses_mut(|syn| {
        if let memtrain_core::crossbar::Synapses::Ideal(w) = syn {
            w.as_mut_slice()[idx] += h;
        }
    });
    n
}

fn check_gradients(sizes: &[usize], bias: bool, seed: u64) {
    let net = network(sizes, bias, seed);
    let mut s = RandomStream::new(seed, 7);
    let x: Vec<f64> = (0..sizes[0]).map(|_| s.uniform()).collect();
    let mut t = vec![0.0; *sizes.last().unwrap()];
    let hot = seed as usize % t.len();
    t[hot] = 1.0;
    let grads = net.gradients(&x, &t).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (l, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let fd = (loss(&perturbed(&net, l, idx, h), &x, &t)
                - loss(&perturbed(&net, l, idx, -h), &x, &t))
                / (2.0 * h);
            let an = g.as_slice()[idx];
            let scale = fd.abs().max(an.abs());
            if scale < 1e-9 {
                continue;
            }
            worst = worst.max((fd - an).abs() / scale);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gradients_match_finite_differences() {
    check_gradients(&[8, 6, 4], false, 1);
    check_gradients(&[5, 7, 3], true, 2);
    check_gradients(&[6, 5, 4, 3], false, 3);
}

/// Plain dense sigmoid MLP written without any crate machinery.
fn reference_forward(weights: &[RealMatrix], x: &[f64], bias: bool) -> Vec<f64> {
    let mut a = x.to_vec();
    for w in weights {
        if bias {
            a.push(1.0);
        }
        let mut z = vec![0.0; w.rows()];
        for (j, zj) in z.iter_mut().enumerate() {
            for (i, ai) in a.iter().enumerate() {
                *zj += w.get(j, i) * ai;
            }
        }
        a = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
    }
    a
}

#[test]
fn forward_matches_reference_mlp() {
    let (train, _) = common::fixture();
    for bias in [false, true] {
        let net = network(&[784, 250, 10], bias, 11);
        let weights: Vec<RealMatrix> = net.layers().iter().map(|l| l.weights().clone()).collect();
        let mut s = RandomStream::new(0, 0);
        for k in 0..20 {
            let x = train.image(k);
            let got = net.forward_pass(&x, &mut s).unwrap().output;
            let want = reference_forward(&weights, &x, bias);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }
}
