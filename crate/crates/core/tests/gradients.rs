mod common;

use common::{random_graph, random_params};
use gcnx_core::graph::AttributedGraph;
use gcnx_core::model::{backward, backward_from_scores, cross_entropy, forward, scores_from_layer, ModelParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINK_MARGIN: f64 = 1e-4;
const TOLERANCE: f64 = 1e-5;

fn step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = (analytic - numeric).mapv(|v| v * v).sum().sqrt();
    let scale = analytic.mapv(|v| v * v).sum().sqrt().max(numeric.mapv(|v| v * v).sum().sqrt());
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

fn near_kink(g: &AttributedGraph, p: &ModelParams) -> bool {
    let trace = forward(g, p).unwrap();
    trace
        .layers
        .iter()
        .any(|l| l.pre_activation.iter().any(|z| z.abs() < KINK_MARGIN))
}

/// Score of `class` and class-weighted loss for `label`.
fn objectives(g: &AttributedGraph, p: &ModelParams, class: usize, label: usize, weight: f64) -> (f64, f64) {
    let trace = forward(g, p).unwrap();
    (trace.scores[class], cross_entropy(&trace, label, weight).0)
}

fn central<F: Fn(f64) -> (f64, f64)>(x: f64, eval: F) -> (f64, f64) {
    let h = step(x);
    let (sp, lp) = eval(x + h);
    let (sm, lm) = eval(x - h);
    ((sp - sm) / (2.0 * h), (lp - lm) / (2.0 * h))
}

struct Numeric {
    layers_score: Vec<Array2<f64>>,
    layers_loss: Vec<Array2<f64>>,
    classifier_score: Array2<f64>,
    classifier_loss: Array2<f64>,
    input_score: Array2<f64>,
    input_loss: Array2<f64>,
}

fn numeric_gradients(g: &AttributedGraph, p: &ModelParams, class: usize, label: usize, weight: f64) -> Numeric {
    let mut layers_score = Vec::new();
    let mut layers_loss = Vec::new();
    for l in 0..p.n_layers() {
        let w = &p.layer_weights()[l];
        let mut ds = Array2::zeros(w.raw_dim());
        let mut dl = Array2::zeros(w.raw_dim());
        for idx in ndarray::indices(w.raw_dim()) {
            let (s, lo) = central(w[idx], |x| {
                let mut ws = p.layer_weights().to_vec();
                ws[l][idx] = x;
                objectives(g, &ModelParams::new(ws, p.classifier().clone()).unwrap(), class, label, weight)
            });
            ds[idx] = s;
            dl[idx] = lo;
        }
        layers_score.push(ds);
        layers_loss.push(dl);
    }
    let wc = p.classifier();
    let mut classifier_score = Array2::zeros(wc.raw_dim());
    let mut classifier_loss = Array2::zeros(wc.raw_dim());
    for idx in ndarray::indices(wc.raw_dim()) {
        let (s, lo) = central(wc[idx], |x| {
            let mut c = wc.clone();
            c[idx] = x;
            objectives(g, &ModelParams::new(p.layer_weights().to_vec(), c).unwrap(), class, label, weight)
        });
        classifier_score[idx] = s;
        classifier_loss[idx] = lo;
    }
    let xs = g.node_features();
    let mut input_score = Array2::zeros(xs.raw_dim());
    let mut input_loss = Array2::zeros(xs.raw_dim());
    for idx in ndarray::indices(xs.raw_dim()) {
        let (s, lo) = central(xs[idx], |x| {
            let mut f = xs.clone();
            f[idx] = x;
            objectives(&g.with_features(f).unwrap(), p, class, label, weight)
        });
        input_score[idx] = s;
        input_loss[idx] = lo;
    }
    Numeric {
        layers_score,
        layers_loss,
        classifier_score,
        classifier_loss,
        input_score,
        input_loss,
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 50 {
        let n = rng.gen_range(3..=12);
        let d_in = rng.gen_range(2..=6);
        let widths: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(2..=7)).collect();
        let g = random_graph(&mut rng, n, d_in, 0.35, -1.0, 1.0);
        let p = random_params(&mut rng, d_in, &widths, 2);
        if near_kink(&g, &p) {
            continue;
        }
        let class = rng.gen_range(0..2);
        let label = rng.gen_range(0..2);
        let weight = rng.gen_range(0.5..2.0);

        let trace = forward(&g, &p).unwrap();
        let score_grads = backward(&trace, &g, &p, class).unwrap();
        let (_, dscores) = cross_entropy(&trace, label, weight);
        let loss_grads = backward_from_scores(&trace, &g, &p, &dscores).unwrap();
        let numeric = numeric_gradients(&g, &p, class, label, weight);

        for l in 0..p.n_layers() {
            let e = relative_error(&score_grads.layer_weights[l], &numeric.layers_score[l]);
            assert!(e < TOLERANCE, "dy/dW^{} relative error {e}", l + 1);
            let e = relative_error(&loss_grads.layer_weights[l], &numeric.layers_loss[l]);
            assert!(e < TOLERANCE, "dJ/dW^{} relative error {e}", l + 1);
        }
        let e = relative_error(&score_grads.classifier, &numeric.classifier_score);
        assert!(e < TOLERANCE, "dy/dWc relative error {e}");
        let e = relative_error(&loss_grads.classifier, &numeric.classifier_loss);
        assert!(e < TOLERANCE, "dJ/dWc relative error {e}");
        let e = relative_error(&score_grads.input, &numeric.input_score);
        assert!(e < TOLERANCE, "dy/dX relative error {e}");
        let e = relative_error(&loss_grads.input, &numeric.input_loss);
        assert!(e < TOLERANCE, "dJ/dX relative error {e}");
        checked += 1;
    }
}

#[test]
fn activation_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    while checked < 30 {
        let n = rng.gen_range(3..=10);
        let g = random_graph(&mut rng, n, 4, 0.4, -1.0, 1.0);
        let p = random_params(&mut rng, 4, &[5, 6, 4], 2);
        if near_kink(&g, &p) {
            continue;
        }
        let trace = forward(&g, &p).unwrap();
        let class = checked % 2;
        let grads = backward(&trace, &g, &p, class).unwrap();
        for l in 1..=p.n_layers() {
            let f = trace.activation(l);
            let mut numeric = Array2::zeros(f.raw_dim());
            for idx in ndarray::indices(f.raw_dim()) {
                let h = step(f[idx]);
                let mut up = f.clone();
                up[idx] += h;
                let mut down = f.clone();
                down[idx] -= h;
                let sp = scores_from_layer(&g, &p, l, &up).unwrap()[class];
                let sm = scores_from_layer(&g, &p, l, &down).unwrap()[class];
                numeric[idx] = (sp - sm) / (2.0 * h);
            }
            let e = relative_error(grads.activation(l), &numeric);
            assert!(e < TOLERANCE, "dy/dF^{l} relative error {e}");
        }
        checked += 1;
    }
}
