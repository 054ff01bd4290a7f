use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssada_core::nn::{Activation, GrlGate, Network, Tape, Tensor};

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
enum Loss {
    CrossEntropy,
    Soft,
    Entropy,
    Linear,
    TanhMean,
}

struct Case {
    net: Network<f64>,
    x: Tensor<f64>,
    loss: Loss,
    targets: Vec<usize>,
    weights: Vec<f64>,
    soft: Tensor<f64>,
    temp: f64,
    coef: Tensor<f64>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(2..=4)];
    for _ in 0..depth {
        dims.push(rng.random_range(2..=5));
    }
    let acts: Vec<Activation> = (0..depth)
        .map(|i| {
            let choices = if i + 1 == depth {
                [Activation::Identity, Activation::Tanh, Activation::Softmax, Activation::Relu]
            } else {
                [Activation::Relu, Activation::Tanh, Activation::Identity, Activation::Relu]
            };
            choices[rng.random_range(0..4)]
        })
        .collect();
    let mut net = Network::init(&dims, &acts, rng).unwrap();
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let n = rng.random_range(1..=4);
    let k = *dims.last().unwrap();
    let x = Tensor::matrix(n, dims[0], (0..n * dims[0]).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let loss = [Loss::CrossEntropy, Loss::Soft, Loss::Entropy, Loss::Linear, Loss::TanhMean][rng.random_range(0..5)];
    let soft_rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Case {
        targets: (0..n).map(|_| rng.random_range(0..k)).collect(),
        weights: (0..n).map(|_| rng.random_range(0.2..2.0)).collect(),
        soft: Tensor::from_rows(&soft_rows).unwrap(),
        temp: rng.random_range(0.5..2.0),
        coef: Tensor::matrix(n, k, (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        net,
        x,
        loss,
    }
}

/// Smallest |pre-activation| feeding a ReLU; finite differences are
/// meaningless near the kink.
fn relu_margin(net: &Network<f64>, x: &Tensor<f64>) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for l in net.layers() {
        let z = h.matmul(&l.weights).unwrap().add_row(&l.bias).unwrap();
        if l.activation == Activation::Relu {
            margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
        h = Network::new(vec![l.clone()]).unwrap().forward(&h).unwrap();
    }
    margin
}

fn loss_value(case: &Case, net: &Network<f64>) -> f64 {
    let tape = Tape::new();
    let z = net.bind(&tape, false).forward(tape.constant(case.x.clone())).unwrap();
    record_loss(case, z).item()
}

fn record_loss<'t>(case: &Case, z: ssada_core::nn::Var<'t, f64>) -> ssada_core::nn::Var<'t, f64> {
    match case.loss {
        Loss::CrossEntropy => z.cross_entropy(&case.targets, &case.weights).unwrap(),
        Loss::Soft => z.soft_cross_entropy(&case.soft, case.temp, 1e-12).unwrap(),
        Loss::Entropy => z.mean_entropy(),
        Loss::Linear => z.mul(z.tape().constant(case.coef.clone())).unwrap().sum(),
        Loss::TanhMean => z.tanh().mean(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 50 {
        let case = random_case(&mut rng);
        if relu_margin(&case.net, &case.x) < 1e-3 {
            continue;
        }
        let tape = Tape::new();
        let bound = case.net.bind(&tape, true);
        let z = bound.forward(tape.constant(case.x.clone())).unwrap();
        let loss = record_loss(&case, z);
        let grads = bound.grads(&tape.backward(loss).unwrap()).flatten();

        let mut numeric = Vec::with_capacity(grads.len());
        let n_params = case.net.params().count();
        for p in 0..n_params {
            let len = case.net.params().nth(p).unwrap().len();
            for i in 0..len {
                let mut plus = case.net.clone();
                plus.params_mut().nth(p).unwrap().data_mut()[i] += H;
                let mut minus = case.net.clone();
                minus.params_mut().nth(p).unwrap().data_mut()[i] -= H;
                numeric.push((loss_value(&case, &plus) - loss_value(&case, &minus)) / (2.0 * H));
            }
        }
        assert_eq!(numeric.len(), grads.len());
        for (j, (a, n)) in grads.iter().zip(&numeric).enumerate() {
            let e = rel_err(*a, *n);
            worst = worst.max(e);
            assert!(e < TOL, "net {checked} ({:?}) param {j}: analytic {a} numeric {n}", case.loss);
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    println!("50 networks, worst relative error {worst:.2e}, {elapsed:?}");
    assert!(elapsed.as_secs_f64() < 30.0);
}

#[test]
fn reversal_gate_negates_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for lambda in [0.0, 0.5, 1.0] {
        let gate = GrlGate::new(lambda).unwrap();
        let up: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let upstream = Tensor::matrix(3, 4, up.clone()).unwrap();
        let back = gate.backward(&upstream);
        for (b, u) in back.data().iter().zip(&up) {
            assert_eq!(b.to_bits(), (-(lambda * u)).to_bits());
        }

        // Same through a tape: d/dx sum(c * grl(x)) = -lambda * c.
        let tape = Tape::new();
        let x = tape.param(Tensor::matrix(3, 4, vec![0.7; 12]).unwrap());
        let c = tape.constant(upstream.clone());
        let loss = gate.apply(x).mul(c).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        for (b, u) in g.get(x).unwrap().data().iter().zip(&up) {
            assert_eq!(b.to_bits(), (-(lambda * u)).to_bits());
        }
    }
}

#[test]
fn f32_forward_tracks_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::<f64>::mlp(&[3, 6, 2], Activation::Tanh, Activation::Softmax, &mut rng).unwrap();
    let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, 1.2, 0.0, -0.7]).unwrap();
    let hi = net.forward(&x).unwrap();
    let lo = net.cast::<f32>().forward(&x.cast()).unwrap();
    for (a, b) in hi.data().iter().zip(lo.data()) {
        assert!((a - *b as f64).abs() < 1e-6);
    }
}
