use nica::numerics::{mlp_gradients, Activation, Mlp, Tensor};
use nica::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_tensor(rows: usize, cols: usize, r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

fn random_net(seed: u64, d_in: usize, hidden: &[usize], d_out: usize, act: Activation, out: Activation) -> Mlp {
    let mut r = rng::stream(seed);
    let mut net = Mlp::random(d_in, hidden, d_out, act, out, &mut r).unwrap();
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += 0.1 * r.random::<f64>() - 0.05;
        }
    }
    net
}

fn half_sum_squares(m: &Mlp, x: &Tensor) -> f64 {
    0.5 * m.forward(x).unwrap().data().iter().map(|v| v * v).sum::<f64>()
}

fn arch() -> impl Strategy<Value = (usize, Vec<usize>, usize)> {
    (1usize..=4, prop::collection::vec(1usize..=16, 0..=2), 1usize..=3)
}

fn smooth_activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Tanh),
        (0.05f64..0.9).prop_map(|slope| Activation::LeakySoft { slope })
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprop_matches_central_differences((d_in, hidden, d_out) in arch(), act in smooth_activation(), seed in any::<u64>()) {
        const H: f64 = 1e-6;
        let net = random_net(seed, d_in, &hidden, d_out, act, Activation::Identity);
        let x = normal_tensor(4, d_in, &mut rng::stream(seed ^ 1));
        let (value, grads) = mlp_gradients(&net, &x, |tape, out| {
            let sq = tape.mul(out, out)?;
            let s = tape.sum(sq);
            Ok(tape.scale(s, 0.5))
        })
        .unwrap();
        prop_assert!((value - half_sum_squares(&net, &x)).abs() <= 1e-12 * value.abs().max(1.0));
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.data().len() {
                let mut plus = net.clone();
                plus.params_mut()[pi].data_mut()[j] += H;
                let mut minus = net.clone();
                minus.params_mut()[pi].data_mut()[j] -= H;
                let fd = (half_sum_squares(&plus, &x) - half_sum_squares(&minus, &x)) / (2.0 * H);
                let a = g.data()[j];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
                prop_assert!(rel <= 1e-5, "param {pi}[{j}]: analytic {a}, numeric {fd}");
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic((d_in, hidden, d_out) in arch(), seed in any::<u64>()) {
        let net = random_net(seed, d_in, &hidden, d_out, Activation::leaky_relu(), Activation::Identity);
        let x = normal_tensor(7, d_in, &mut rng::stream(seed ^ 2));
        let a = net.forward(&x).unwrap();
        let b = net.clone().forward(&x).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn identity_activations_reduce_to_matrix_products((d_in, hidden, d_out) in arch(), seed in any::<u64>()) {
        let net = random_net(seed, d_in, &hidden, d_out, Activation::Identity, Activation::Identity);
        let x = normal_tensor(5, d_in, &mut rng::stream(seed ^ 3));
        let mut expected: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
        for l in net.layers() {
            expected = expected
                .iter()
                .map(|row| {
                    (0..l.weight.cols())
                        .map(|k| l.bias.get(0, k) + row.iter().enumerate().map(|(j, v)| v * l.weight.get(j, k)).sum::<f64>())
                        .collect()
                })
                .collect();
        }
        let got = net.forward(&x).unwrap();
        for (i, row) in expected.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                prop_assert!((got.get(i, k) - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn weight_json_round_trip_is_exact((d_in, hidden, d_out) in arch(), seed in any::<u64>()) {
        let net = random_net(seed, d_in, &hidden, d_out, Activation::leaky_relu(), Activation::Abs);
        prop_assert_eq!(Mlp::from_json(&net.to_json().unwrap()).unwrap(), net);
    }
}
