//! Spectral GCN with global average pooling and a linear class-score head.
//!
//! Layer `l` computes `F^l = ReLU(V F^{l-1} W^l)` with `F^0 = X`. The pooled
//! embedding is `e_k = mean_n F^L[n, k]` and the class scores are
//! `y = e · W_c`. Softmax is applied only for probabilities and the loss;
//! explainers work on the raw scores `y`.
//!
//! Matrices are stored node-major: `F^l` is `N × d_l`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layer_weights: Vec<Array2<f64>>,
    classifier: Array2<f64>,
}

impl ModelParams {
    pub fn new(layer_weights: Vec<Array2<f64>>, classifier: Array2<f64>) -> Result<Self> {
        if layer_weights.is_empty() {
            return Err(Error::Config("model needs at least one graph convolution".into()));
        }
        for (l, pair) in layer_weights.windows(2).enumerate() {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Config(format!(
                    "layer {} outputs width {} but layer {} expects {}",
                    l + 1,
                    pair[0].ncols(),
                    l + 2,
                    pair[1].nrows()
                )));
            }
        }
        let last = layer_weights.last().unwrap().ncols();
        if classifier.nrows() != last {
            return Err(Error::Config(format!(
                "classifier has {} rows, final layer width is {last}",
                classifier.nrows()
            )));
        }
        Ok(ModelParams {
            layer_weights,
            classifier,
        })
    }

    /// Glorot-uniform initialization, `U(±√(6/(fan_in+fan_out)))`.
    pub fn glorot<R: Rng>(input_dim: usize, layer_sizes: &[usize], n_classes: usize, rng: &mut R) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(layer_sizes);
        let mut sample = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
        };
        let layer_weights = dims.windows(2).map(|d| sample(d[0], d[1])).collect();
        let classifier = sample(*dims.last().unwrap(), n_classes);
        ModelParams::new(layer_weights, classifier)
    }

    pub fn layer_weights(&self) -> &[Array2<f64>] {
        &self.layer_weights
    }

    pub fn classifier(&self) -> &Array2<f64> {
        &self.classifier
    }

    pub fn input_dim(&self) -> usize {
        self.layer_weights[0].nrows()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layer_weights.iter().map(|w| w.ncols()).collect()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_weights.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.ncols()
    }

    /// Same weights with the classifier negated (used by contrastive excitation backprop).
    pub fn with_negated_classifier(&self) -> Self {
        ModelParams {
            layer_weights: self.layer_weights.clone(),
            classifier: -&self.classifier,
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut t: Vec<&Array2<f64>> = self.layer_weights.iter().collect();
        t.push(&self.classifier);
        t
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut t: Vec<&mut Array2<f64>> = self.layer_weights.iter_mut().collect();
        t.push(&mut self.classifier);
        t
    }
}

/// Intermediates of one graph convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `F^{l-1}`
    pub input: Array2<f64>,
    /// `V F^{l-1}`
    pub propagated: Array2<f64>,
    /// `V F^{l-1} W^l`
    pub pre_activation: Array2<f64>,
    /// `F^l`
    pub activation: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// GAP vector `e`.
    pub pooled: Array1<f64>,
    /// Class scores before the softmax.
    pub scores: Array1<f64>,
    pub probabilities: Array1<f64>,
}

impl ForwardTrace {
    pub fn n_nodes(&self) -> usize {
        self.layers[0].input.nrows()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// `F^l` for `l` in `0..=L`.
    pub fn activation(&self, l: usize) -> &Array2<f64> {
        if l == 0 {
            &self.layers[0].input
        } else {
            &self.layers[l - 1].activation
        }
    }

    pub fn final_activation(&self) -> &Array2<f64> {
        &self.layers.last().unwrap().activation
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.scores)
    }
}

pub(crate) fn argmax(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = scores.mapv(|v| (v - max).exp());
    let total = exp.sum();
    exp / total
}

fn gap(f: &Array2<f64>) -> Array1<f64> {
    f.sum_axis(Axis(0)) / f.nrows() as f64
}

pub fn forward(g: &AttributedGraph, p: &ModelParams) -> Result<ForwardTrace> {
    if g.feature_dim() != p.input_dim() {
        return Err(Error::Config(format!(
            "graph has {} input features, model expects {}",
            g.feature_dim(),
            p.input_dim()
        )));
    }
    if g.n_nodes() == 0 {
        return Err(Error::Config("empty graph".into()));
    }
    let v = g.norm_propagation();
    let mut layers = Vec::with_capacity(p.n_layers());
    let mut current = g.node_features().clone();
    for w in p.layer_weights() {
        let propagated = v.dot(&current);
        let pre_activation = propagated.dot(w);
        let activation = relu(&pre_activation);
        layers.push(LayerTrace {
            input: current,
            propagated,
            pre_activation,
            activation: activation.clone(),
        });
        current = activation;
    }
    let pooled = gap(&current);
    let scores = pooled.dot(p.classifier());
    let probabilities = softmax(&scores);
    Ok(ForwardTrace {
        layers,
        pooled,
        scores,
        probabilities,
    })
}

/// Re-runs the network from a given `F^l` (`l` in `0..=L`) to the class scores.
pub fn scores_from_layer(g: &AttributedGraph, p: &ModelParams, l: usize, activation: &Array2<f64>) -> Result<Array1<f64>> {
    if l > p.n_layers() {
        return Err(Error::Config(format!("layer {l} out of range 0..={}", p.n_layers())));
    }
    let v = g.norm_propagation();
    let mut current = activation.clone();
    for w in &p.layer_weights()[l..] {
        current = relu(&v.dot(&current).dot(w));
    }
    Ok(gap(&current).dot(p.classifier()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `∂/∂W^l`, one per graph convolution.
    pub layer_weights: Vec<Array2<f64>>,
    pub classifier: Array2<f64>,
    /// `∂/∂X`
    pub input: Array2<f64>,
    /// `∂/∂F^l` for `l = 1..=L` (index `l - 1`).
    pub activations: Vec<Array2<f64>>,
}

impl Gradients {
    /// `∂/∂F^l` for `l` in `0..=L`.
    pub fn activation(&self, l: usize) -> &Array2<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.activations[l - 1]
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut t: Vec<&Array2<f64>> = self.layer_weights.iter().collect();
        t.push(&self.classifier);
        t
    }
}

fn check_trace(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams) -> Result<()> {
    if trace.n_layers() != p.n_layers() {
        return Err(Error::Consistency(format!(
            "trace has {} layers, model has {}",
            trace.n_layers(),
            p.n_layers()
        )));
    }
    if trace.n_nodes() != g.n_nodes() {
        return Err(Error::Consistency(format!(
            "trace covers {} nodes, graph has {}",
            trace.n_nodes(),
            g.n_nodes()
        )));
    }
    for (l, (layer, w)) in trace.layers.iter().zip(p.layer_weights()).enumerate() {
        if layer.input.ncols() != w.nrows() || layer.activation.ncols() != w.ncols() {
            return Err(Error::Consistency(format!("layer {} shape does not match weights", l + 1)));
        }
    }
    if trace.scores.len() != p.n_classes() {
        return Err(Error::Consistency("score width does not match classifier".into()));
    }
    Ok(())
}

/// Gradients of the scalar class score `y^c`.
pub fn backward(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, target_class: usize) -> Result<Gradients> {
    if target_class >= p.n_classes() {
        return Err(Error::Config(format!(
            "class {target_class} out of range for {} classes",
            p.n_classes()
        )));
    }
    let mut seed = Array1::zeros(p.n_classes());
    seed[target_class] = 1.0;
    backward_from_scores(trace, g, p, &seed)
}

/// Reverse pass seeded with `∂(objective)/∂y`.
pub fn backward_from_scores(
    trace: &ForwardTrace,
    g: &AttributedGraph,
    p: &ModelParams,
    score_grad: &Array1<f64>,
) -> Result<Gradients> {
    check_trace(trace, g, p)?;
    if score_grad.len() != p.n_classes() {
        return Err(Error::Consistency("score gradient width does not match classifier".into()));
    }
    let n = trace.n_nodes();
    let v = g.norm_propagation();

    // y = e W_c
    let classifier_grad = outer(&trace.pooled, score_grad);
    let pooled_grad = p.classifier().dot(score_grad);
    // e = mean_n F^L
    let mut activation_grad = Array2::from_shape_fn((n, pooled_grad.len()), |(_, k)| pooled_grad[k] / n as f64);

    let n_layers = p.n_layers();
    let mut layer_grads = vec![Array2::zeros((0, 0)); n_layers];
    let mut activation_grads = vec![Array2::zeros((0, 0)); n_layers];
    for l in (0..n_layers).rev() {
        let layer = &trace.layers[l];
        activation_grads[l] = activation_grad.clone();
        let mut pre_grad = activation_grad;
        pre_grad.zip_mut_with(&layer.pre_activation, |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        layer_grads[l] = layer.propagated.t().dot(&pre_grad);
        let propagated_grad = pre_grad.dot(&p.layer_weights()[l].t());
        activation_grad = v.t().dot(&propagated_grad);
    }

    Ok(Gradients {
        layer_weights: layer_grads,
        classifier: classifier_grad,
        input: activation_grad,
        activations: activation_grads,
    })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Weighted softmax cross-entropy and its gradient with respect to the scores.
pub fn cross_entropy(trace: &ForwardTrace, label: usize, weight: f64) -> (f64, Array1<f64>) {
    let p = &trace.probabilities;
    let loss = -weight * p[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = p * weight;
    grad[label] -= weight;
    (loss, grad)
}

/// Zeroes the feature rows of masked nodes. Adjacency and `V` are untouched.
pub fn occlude(g: &AttributedGraph, mask: &[bool]) -> Result<AttributedGraph> {
    if mask.len() != g.n_nodes() {
        return Err(Error::Structure(format!(
            "mask of length {} for {} nodes",
            mask.len(),
            g.n_nodes()
        )));
    }
    let mut x = g.node_features().clone();
    for (mut row, &m) in x.axis_iter_mut(Axis(0)).zip(mask) {
        if m {
            row.fill(0.0);
        }
    }
    g.with_features(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Element, ElementLabel};
    use ndarray::array;

    fn graph(x: Array2<f64>, edges: &[(usize, usize)]) -> AttributedGraph {
        let n = x.nrows();
        let mut adj = Array2::zeros((n, n));
        for &(i, j) in edges {
            adj[[i, j]] = 1;
            adj[[j, i]] = 1;
        }
        AttributedGraph::new(x, adj, vec![ElementLabel::new(Element::C); n]).unwrap()
    }

    #[test]
    fn zero_features_give_uniform_softmax() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let p = ModelParams::glorot(3, &[4, 4], 2, &mut rng).unwrap();
        let g = graph(Array2::zeros((1, 3)), &[]);
        let t = forward(&g, &p).unwrap();
        assert!(t.layers.iter().all(|l| l.activation.iter().all(|&v| v == 0.0)));
        assert!(t.pooled.iter().all(|&v| v == 0.0));
        assert!(t.scores.iter().all(|&v| v == 0.0));
        assert_eq!(t.probabilities, array![0.5, 0.5]);
    }

    #[test]
    fn identity_layer_on_single_node_is_relu() {
        let p = ModelParams::new(vec![Array2::eye(3)], Array2::ones((3, 2))).unwrap();
        let g = graph(array![[1.0, -2.0, 0.5]], &[]);
        let t = forward(&g, &p).unwrap();
        assert_eq!(t.final_activation(), &array![[1.0, 0.0, 0.5]]);
    }

    #[test]
    fn symmetric_pair_has_equal_rows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        use rand::SeedableRng;
        let p = ModelParams::glorot(2, &[5, 5, 5], 2, &mut rng).unwrap();
        let g = graph(array![[0.3, 0.7], [0.3, 0.7]], &[(0, 1)]);
        let t = forward(&g, &p).unwrap();
        for l in 0..=3 {
            let f = t.activation(l);
            assert_eq!(f.row(0), f.row(1));
        }
        assert!((t.probabilities.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_is_mean_of_final_layer() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let p = ModelParams::glorot(2, &[4, 6], 2, &mut rng).unwrap();
        let g = graph(array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], &[(0, 1), (1, 2)]);
        let t = forward(&g, &p).unwrap();
        let f = t.final_activation();
        for k in 0..6 {
            let mean = f.column(k).sum() / 3.0;
            assert_eq!(mean, t.pooled[k]);
        }
    }

    #[test]
    fn single_node_linear_regime_gradient() {
        // y^c = w^c · ReLU(x W) for N = 1, so dy/dx = W w^c when x W > 0.
        let w = array![[1.0, 0.5], [0.25, 2.0], [0.5, 0.5]];
        let wc = array![[1.0, -1.0], [3.0, 0.5]];
        let p = ModelParams::new(vec![w.clone()], wc.clone()).unwrap();
        let g = graph(array![[1.0, 2.0, 0.5]], &[]);
        let t = forward(&g, &p).unwrap();
        assert!(t.layers[0].pre_activation.iter().all(|&z| z > 0.0));
        for c in 0..2 {
            let grads = backward(&t, &g, &p, c).unwrap();
            let expected = w.dot(&wc.column(c));
            for j in 0..3 {
                assert!((grads.input[[0, j]] - expected[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_input_gradient() {
        let p = ModelParams::new(vec![Array2::zeros((2, 3)), Array2::zeros((3, 2))], Array2::zeros((2, 2))).unwrap();
        let g = graph(array![[1.0, 2.0], [3.0, 4.0]], &[(0, 1)]);
        let t = forward(&g, &p).unwrap();
        let grads = backward(&t, &g, &p, 1).unwrap();
        assert!(grads.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_trace_is_rejected() {
        let p = ModelParams::new(vec![Array2::eye(2)], Array2::ones((2, 2))).unwrap();
        let g1 = graph(array![[1.0, 2.0]], &[]);
        let g2 = graph(array![[1.0, 2.0], [0.0, 1.0]], &[(0, 1)]);
        let t = forward(&g1, &p).unwrap();
        assert!(matches!(backward(&t, &g2, &p, 0), Err(Error::Consistency(_))));
        assert!(matches!(backward(&t, &g1, &p, 5), Err(Error::Config(_))));
        let wrong = graph(array![[1.0, 2.0, 3.0]], &[]);
        assert!(matches!(forward(&wrong, &p), Err(Error::Config(_))));
    }

    #[test]
    fn shape_chain_is_validated() {
        assert!(ModelParams::new(vec![Array2::zeros((2, 3)), Array2::zeros((4, 2))], Array2::zeros((2, 2))).is_err());
        assert!(ModelParams::new(vec![Array2::zeros((2, 3))], Array2::zeros((2, 2))).is_err());
    }

    #[test]
    fn occlusion_zeroes_rows_only() {
        let m = crate::smiles::parse_smiles("CCO").unwrap();
        let g = &m.graph;
        assert_eq!(&occlude(g, &[false; 3]).unwrap(), g);
        let o = occlude(g, &[false, true, false]).unwrap();
        assert!(o.node_features().row(1).iter().all(|&v| v == 0.0));
        assert_eq!(o.node_features().row(0), g.node_features().row(0));
        assert_eq!(o.norm_propagation(), g.norm_propagation());

        let all = occlude(g, &[true; 3]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        use rand::SeedableRng;
        let p = ModelParams::glorot(g.feature_dim(), &[4], 2, &mut rng).unwrap();
        let t = forward(&all, &p).unwrap();
        assert_eq!(t.probabilities, array![0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let t = ForwardTrace {
            layers: vec![],
            pooled: array![],
            scores: array![0.2, -0.4],
            probabilities: softmax(&array![0.2, -0.4]),
        };
        let (loss, grad) = cross_entropy(&t, 1, 2.0);
        assert!(loss > 0.0);
        assert!(grad.sum().abs() < 1e-15);
    }
}
