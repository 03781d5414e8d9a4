use gridrl_core::neural::DenseNetwork;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar loss `sum(c .* f(x))` evaluated without the tape.
fn loss(net: &DenseNetwork, x: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    net.predict(x).unwrap().component_mul(c).sum()
}

/// Smallest |pre-activation| across hidden layers, recomputed by hand.
fn min_hidden_margin(net: &DenseNetwork, x: &DMatrix<f64>) -> f64 {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    let last = net.weights.len() - 1;
    for l in 0..=last {
        let mut z = &net.weights[l] * &a;
        for mut col in z.column_iter_mut() {
            col += &net.biases[l];
        }
        if l < last {
            margin = margin.min(z.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
            z.apply(|v| *v = v.max(0.0));
        }
        a = z;
    }
    margin
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite differences over every parameter and every input.
pub fn check_gradients(dims: &[usize], seed: u64) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = DenseNetwork::random(dims, &mut rng);
    let batch = 3;
    // resample inputs until no ReLU sits within a few h of its kink
    let x = loop {
        let x = DMatrix::from_fn(dims[0], batch, |_, _| rng.random_range(-1.0..1.0));
        if min_hidden_margin(&net, &x) > 1e-3 {
            break x;
        }
    };
    let c = DMatrix::from_fn(net.output_dim(), batch, |_, _| rng.random_range(-1.0..1.0));

    let (_, tape) = net.forward_batch(&x).unwrap();
    let (grads, input_grad) = net.backward(&tape, &c).unwrap();

    let flat = net.flatten();
    let mut analytic = Vec::new();
    for (w, b) in grads.weights.iter().zip(&grads.biases) {
        for r in 0..w.nrows() {
            analytic.extend(w.row(r).iter());
        }
        analytic.extend(b.iter());
    }
    assert_eq!(analytic.len(), flat.len());

    let mut worst = 0.0_f64;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let fp = loss(&DenseNetwork::from_flat(dims, &plus).unwrap(), &x, &c);
        let fm = loss(&DenseNetwork::from_flat(dims, &minus).unwrap(), &x, &c);
        worst = worst.max(rel_err(analytic[i], (fp - fm) / (2.0 * h)));
    }
    for r in 0..x.nrows() {
        for col in 0..x.ncols() {
            let mut xp = x.clone();
            xp[(r, col)] += h;
            let mut xm = x.clone();
            xm[(r, col)] -= h;
            let numeric = (loss(&net, &xp, &c) - loss(&net, &xm, &c)) / (2.0 * h);
            worst = worst.max(rel_err(input_grad[(r, col)], numeric));
        }
    }
    worst
}
