//! Numerical helpers shared by the integration tests. Deliberately separate
//! from the library so oracles do not reuse the code under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retail_forecast::mlp::{self, MlpConfig, Network};
use retail_forecast::tweedie::{self, TweedieParams};
use retail_forecast::Loss;

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 relative.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `log(sum(exp(v)))`, summed from the largest term down.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut scaled: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    scaled.sort_by(|a, b| a.total_cmp(b));
    max + scaled.iter().sum::<f64>().ln()
}

/// Composite 5-point Gauss-Legendre rule over `panels` equal panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * h;
            X.iter().zip(&W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Density by truncated convolution: sum over n = 1..=200 of
/// Pois(n; lambda) * GammaPdf(y; shape n*alpha, scale gamma).
/// Returns the log density and the log ratio of the last term to the largest.
pub fn convolution_log_density(y: f64, mu: f64, phi: f64, rho: f64) -> (f64, f64) {
    let lambda = mu.powf(2.0 - rho) / (phi * (2.0 - rho));
    let alpha = (2.0 - rho) / (rho - 1.0);
    let gamma = phi * (rho - 1.0) * mu.powf(rho - 1.0);
    let terms: Vec<f64> = (1..=200)
        .map(|n| {
            let n = n as f64;
            let log_pois = -lambda + n * lambda.ln() - ln_gamma(n + 1.0);
            let shape = n * alpha;
            let log_gamma_pdf = (shape - 1.0) * y.ln() - y / gamma - shape * gamma.ln() - ln_gamma(shape);
            log_pois + log_gamma_pdf
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (log_sum_exp(&terms), terms[terms.len() - 1] - max)
}

/// Integral of the continuous part after substituting `y = u^4`, which
/// tames the `y^(alpha - 1)` behaviour at the origin.
pub fn total_mass(mu: f64, phi: f64, rho: f64) -> f64 {
    let p = TweedieParams::new(mu, phi, rho).unwrap();
    let sd = p.variance().sqrt();
    let upper = (mu + 60.0 * sd + 20.0).powf(0.25);
    let integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let y = u.powi(4);
        4.0 * u.powi(3) * tweedie::log_density(y, &p).unwrap().exp()
    };
    let continuous = gauss_legendre(integrand, 0.0, upper, 4000);
    continuous + tweedie::prob_zero(p)
}

/// Best `(feature, threshold, gain)` over every midpoint of every feature,
/// squared loss at the mean; ties go to the lowest feature, then the lowest
/// threshold.
pub fn brute_force_split(x: &[Vec<f64>], z: &[f64], l2: f64) -> Option<(usize, f64, f64)> {
    let base = z.iter().sum::<f64>() / z.len() as f64;
    let g: Vec<f64> = z.iter().map(|t| base - t).collect();
    let total_g: f64 = g.iter().sum();
    let total_h = z.len() as f64;
    let score = |g: f64, h: f64| g * g / (h + l2);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (row, gi) in x.iter().zip(&g) {
                if row[f] <= thr {
                    gl += gi;
                    hl += 1.0;
                }
            }
            let (gr, hr) = (total_g - gl, total_h - hl);
            if hl < 1.0 || hr < 1.0 {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(total_g, total_h));
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

pub fn batch_loss(net: &Network, x: &[&[f64]], z: &[f64]) -> f64 {
    x.iter()
        .zip(z)
        .map(|(row, &t)| net.loss.value(t, mlp::forward(net, row).unwrap()))
        .sum::<f64>()
        / x.len() as f64
}

/// Small random net with nonzero biases, so ReLU units sit away from kinks.
pub fn random_net(loss: Loss, seed: u64) -> (Network, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let z: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..3.0)).collect();
    let cfg = MlpConfig { hidden_sizes: [6, 5], loss, seed, ..Default::default() };
    let mut net = mlp::init_network(&x, &z, &cfg).unwrap();
    for layer in &mut net.layers {
        for b in &mut layer.bias {
            *b += rng.random_range(-0.5..0.5);
        }
    }
    (net, x, z)
}

/// Largest relative gap between backprop and central differences (step
/// 1e-5) over every parameter of four random nets on 5-row batches.
/// Gradients below 1e-4 in magnitude are compared absolutely.
pub fn worst_gradient_error(loss: Loss) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..4 {
        let (net, x, z) = random_net(loss, seed);
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let (value, grads) = mlp::loss_and_gradients(&net, &rows, &z);
        assert!((value - batch_loss(&net, &rows, &z)).abs() < 1e-12);
        let step = 1e-5;
        for (l, layer) in net.layers.iter().enumerate() {
            let params = layer.weights.len() + layer.bias.len();
            for p in 0..params {
                let bump = |delta: f64| {
                    let mut n = net.clone();
                    let target = &mut n.layers[l];
                    if p < target.weights.len() {
                        target.weights[p] += delta;
                    } else {
                        target.bias[p - target.weights.len()] += delta;
                    }
                    batch_loss(&n, &rows, &z)
                };
                let fd = (bump(step) - bump(-step)) / (2.0 * step);
                let analytic = if p < layer.weights.len() {
                    grads.layers[l].weights[p]
                } else {
                    grads.layers[l].bias[p - layer.weights.len()]
                };
                worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4));
            }
        }
    }
    worst
}
