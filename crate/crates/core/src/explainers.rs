//! Class-specific per-atom heatmaps computed from a [`ForwardTrace`].
//!
//! All maps are derived from the raw class score `y^c` (before the softmax):
//!
//! * gradient saliency: `‖ReLU(∂y^c/∂X_n)‖₂`
//! * CAM: `ReLU(Σ_k w^c_k F^L[n, k])`
//! * Grad-CAM at layer `l`: `ReLU(Σ_k α_k F^l[n, k])` with
//!   `α_k = mean_n ∂y^c/∂F^l[n, k]`; the layer average is Grad-CAM-Avg
//! * excitation backprop: a top-down probability split through the
//!   classifier, GAP, neighbourhood averaging and per-node perceptron, read
//!   out as the feature-averaged input probability; c-EB subtracts the map
//!   obtained with negated classifier weights.
//!
//! Grad-CAM at the final layer equals CAM scaled by `1/N` (the GAP factor
//! inside `α`), so the two coincide exactly once a molecule's pair of maps
//! is normalized with [`normalize_pair`].

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{backward, ForwardTrace, Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Gradient,
    Cam,
    /// `None` selects the final graph convolution.
    GradCam { layer: Option<usize> },
    GradCamAvg,
    Eb,
    Ceb,
}

impl Method {
    /// The five methods reported side by side (Grad-CAM at the final layer stands in for CAM).
    pub const STANDARD: [Method; 5] = [
        Method::Gradient,
        Method::GradCam { layer: None },
        Method::GradCamAvg,
        Method::Eb,
        Method::Ceb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gradient => "gradient",
            Method::Cam => "cam",
            Method::GradCam { .. } => "grad-cam",
            Method::GradCamAvg => "grad-cam-avg",
            Method::Eb => "eb",
            Method::Ceb => "c-eb",
        }
    }

    pub fn layer(&self) -> Option<usize> {
        match self {
            Method::GradCam { layer } => *layer,
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::GradCam { layer: Some(l) } => write!(f, "grad-cam@{l}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(layer) = lower.strip_prefix("grad-cam@").or_else(|| lower.strip_prefix("gradcam@")) {
            let layer = layer
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad Grad-CAM layer in '{s}'")))?;
            return Ok(Method::GradCam { layer: Some(layer) });
        }
        match lower.as_str() {
            "gradient" | "grad" => Ok(Method::Gradient),
            "cam" => Ok(Method::Cam),
            "grad-cam" | "gradcam" => Ok(Method::GradCam { layer: None }),
            "grad-cam-avg" | "gradcam-avg" | "gradcamavg" => Ok(Method::GradCamAvg),
            "eb" => Ok(Method::Eb),
            "c-eb" | "ceb" => Ok(Method::Ceb),
            _ => Err(Error::Config(format!("unknown explanation method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub method: Method,
    pub class_id: usize,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Heatmap {
    fn new(method: Method, class_id: usize, values: Vec<f64>) -> Self {
        Heatmap {
            method,
            class_id,
            values,
            normalized: false,
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Anything that maps a trace to per-node relevance for one class.
pub trait Explainer: Sync {
    fn label(&self) -> String;
    fn heat(&self, trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<Vec<f64>>;
}

impl Explainer for Method {
    fn label(&self) -> String {
        self.to_string()
    }

    fn heat(&self, trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<Vec<f64>> {
        explain(*self, trace, g, p, class).map(|h| h.values)
    }
}

fn check_class(p: &ModelParams, class: usize) -> Result<()> {
    if class >= p.n_classes() {
        return Err(Error::Config(format!("class {class} out of range for {} classes", p.n_classes())));
    }
    Ok(())
}

pub fn gradient_saliency(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<Heatmap> {
    let grads = backward(trace, g, p, class)?;
    Ok(gradient_from(&grads, class))
}

fn gradient_from(grads: &Gradients, class: usize) -> Heatmap {
    let values = grads
        .input
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|&d| d.max(0.0).powi(2)).sum::<f64>().sqrt())
        .collect();
    Heatmap::new(Method::Gradient, class, values)
}

pub fn cam(trace: &ForwardTrace, p: &ModelParams, class: usize) -> Result<Heatmap> {
    check_class(p, class)?;
    if trace.final_activation().ncols() != p.classifier().nrows() {
        return Err(Error::Consistency("trace width does not match classifier".into()));
    }
    let values = trace
        .final_activation()
        .dot(&p.classifier().column(class))
        .mapv(|v| v.max(0.0))
        .to_vec();
    Ok(Heatmap::new(Method::Cam, class, values))
}

fn grad_cam_from(trace: &ForwardTrace, grads: &Gradients, layer: usize, class: usize) -> Heatmap {
    let dfeat = grads.activation(layer);
    let alpha: Array1<f64> = dfeat.mean_axis(Axis(0)).expect("nonempty graph");
    let values = trace.activation(layer).dot(&alpha).mapv(|v| v.max(0.0)).to_vec();
    Heatmap::new(Method::GradCam { layer: Some(layer) }, class, values)
}

/// Grad-CAM at graph convolution `layer` (1-based, `1..=L`).
pub fn grad_cam(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize, layer: usize) -> Result<Heatmap> {
    if layer == 0 || layer > p.n_layers() {
        return Err(Error::Config(format!("Grad-CAM layer {layer} outside 1..={}", p.n_layers())));
    }
    let grads = backward(trace, g, p, class)?;
    Ok(grad_cam_from(trace, &grads, layer, class))
}

pub fn grad_cam_avg(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<Heatmap> {
    let grads = backward(trace, g, p, class)?;
    let n_layers = p.n_layers();
    let mut values = vec![0.0; trace.n_nodes()];
    for layer in 1..=n_layers {
        let map = grad_cam_from(trace, &grads, layer, class);
        for (acc, v) in values.iter_mut().zip(map.values) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v /= n_layers as f64;
    }
    Ok(Heatmap::new(Method::GradCamAvg, class, values))
}

/// Probability mass at every level of one excitation-backprop pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationTrace {
    /// `p(e_k)`
    pub pooled: Array1<f64>,
    /// `p(F^l)` for `l = 0..=L`, node-major.
    pub activations: Vec<Array2<f64>>,
    /// `p(V F^{l-1})` for `l = 1..=L` (index `l - 1`).
    pub propagated: Vec<Array2<f64>>,
}

impl ExcitationTrace {
    /// Total mass per level, top-down: pooled, `F^L`, then `VF^{l-1}`, `F^{l-1}` for each layer.
    pub fn masses(&self) -> Vec<f64> {
        let mut out = vec![self.pooled.sum(), self.activations.last().unwrap().sum()];
        for l in (0..self.propagated.len()).rev() {
            out.push(self.propagated[l].sum());
            out.push(self.activations[l].sum());
        }
        out
    }
}

/// `numerator / denominator`, with `0/0` (or any zero denominator) mapped to 0.
fn split(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

/// Runs the top-down probability split for `class`, starting from `p(class) = 1`.
pub fn excitation_trace(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<ExcitationTrace> {
    check_class(p, class)?;
    if trace.n_layers() != p.n_layers() || trace.n_nodes() != g.n_nodes() {
        return Err(Error::Consistency("trace does not match graph/model".into()));
    }
    let n_layers = p.n_layers();
    let v = g.norm_propagation();

    // Classifier: p(e_k) = e_k ReLU(w^c_k) / Σ_k' e_k' ReLU(w^c_k').
    let excitatory_w: Array1<f64> = p.classifier().column(class).mapv(|w| w.max(0.0));
    let contributions = &trace.pooled * &excitatory_w;
    let total = contributions.sum();
    let pooled_mass = contributions.mapv(|c| split(c, total));

    // GAP: p(F^L_{n,k}) = F^L_{n,k} / (N e_k) · p(e_k).
    let final_act = trace.final_activation();
    let column_sums = final_act.sum_axis(Axis(0));
    let mut mass = Array2::from_shape_fn(final_act.raw_dim(), |(n, k)| {
        final_act[[n, k]] * split(pooled_mass[k], column_sums[k])
    });

    let mut activations = vec![Array2::zeros((0, 0)); n_layers + 1];
    let mut propagated = vec![Array2::zeros((0, 0)); n_layers];
    activations[n_layers] = mass.clone();

    for l in (0..n_layers).rev() {
        let layer = &trace.layers[l];
        // Perceptron: p(H_{n,k}) = Σ_k' H_{n,k} ReLU(W_{k,k'}) / Σ_k H_{n,k} ReLU(W_{k,k'}) · p(F_{n,k'}).
        let excitatory = p.layer_weights()[l].mapv(|w| w.max(0.0));
        let denom = layer.propagated.dot(&excitatory);
        let mut ratio = mass;
        ratio.zip_mut_with(&denom, |m, &d| *m = split(*m, d));
        let hidden_mass = &layer.propagated * &ratio.dot(&excitatory.t());

        // Averaging: p(F_{n,k}) = Σ_m V_{m,n} F_{n,k} / (Σ_n' V_{m,n'} F_{n',k}) · p(H_{m,k}).
        let mut ratio = hidden_mass.clone();
        ratio.zip_mut_with(&layer.propagated, |m, &d| *m = split(*m, d));
        mass = &layer.input * &v.t().dot(&ratio);

        propagated[l] = hidden_mass;
        activations[l] = mass.clone();
    }

    Ok(ExcitationTrace {
        pooled: pooled_mass,
        activations,
        propagated,
    })
}

fn eb_values(trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<Vec<f64>> {
    let et = excitation_trace(trace, g, p, class)?;
    let input_mass = &et.activations[0];
    let d_in = input_mass.ncols() as f64;
    Ok(input_mass.sum_axis(Axis(1)).mapv(|s| s / d_in).to_vec())
}

/// Relative size below which `EB(w) − EB(−w)` counts as zero.
pub const CEB_TIE_TOLERANCE: f64 = 1e-12;

/// Excitation backprop; with `contrastive`, the positive part of
/// `EB(w) − EB(−w)` renormalized to unit sum.
pub fn excitation_bp(
    trace: &ForwardTrace,
    g: &AttributedGraph,
    p: &ModelParams,
    class: usize,
    contrastive: bool,
) -> Result<Heatmap> {
    let target = eb_values(trace, g, p, class)?;
    if !contrastive {
        return Ok(Heatmap::new(Method::Eb, class, target));
    }
    let dual = eb_values(trace, g, &p.with_negated_classifier(), class)?;
    // Both maps carry at most unit mass; differences at rounding level are
    // treated as ties, otherwise renormalization would blow noise up to O(1).
    let noise = CEB_TIE_TOLERANCE * (target.iter().sum::<f64>() + dual.iter().sum::<f64>());
    let mut values: Vec<f64> = target
        .iter()
        .zip(&dual)
        .map(|(a, b)| if a - b > noise { a - b } else { 0.0 })
        .collect();
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        for v in &mut values {
            *v /= total;
        }
    }
    Ok(Heatmap::new(Method::Ceb, class, values))
}

pub fn explain(method: Method, trace: &ForwardTrace, g: &AttributedGraph, p: &ModelParams, class: usize) -> Result<Heatmap> {
    match method {
        Method::Gradient => gradient_saliency(trace, g, p, class),
        Method::Cam => cam(trace, p, class),
        Method::GradCam { layer } => grad_cam(trace, g, p, class, layer.unwrap_or(p.n_layers())),
        Method::GradCamAvg => grad_cam_avg(trace, g, p, class),
        Method::Eb => excitation_bp(trace, g, p, class, false),
        Method::Ceb => excitation_bp(trace, g, p, class, true),
    }
}

/// Divides both maps by their joint sum. A zero (or non-finite) joint sum
/// leaves both untouched with `normalized = false`.
pub fn normalize_pair(first: &Heatmap, second: &Heatmap) -> (Heatmap, Heatmap) {
    let total = first.sum() + second.sum();
    if total == 0.0 || !total.is_finite() {
        let mut a = first.clone();
        let mut b = second.clone();
        a.normalized = false;
        b.normalized = false;
        return (a, b);
    }
    let scale = |h: &Heatmap| Heatmap {
        method: h.method,
        class_id: h.class_id,
        values: h.values.iter().map(|v| v / total).collect(),
        normalized: true,
    };
    (scale(first), scale(second))
}

/// Class-0 and class-1 maps for one molecule, jointly normalized.
pub fn explain_pair(
    explainer: &dyn Explainer,
    trace: &ForwardTrace,
    g: &AttributedGraph,
    p: &ModelParams,
) -> Result<[Vec<f64>; 2]> {
    let a = explainer.heat(trace, g, p, 0)?;
    let b = explainer.heat(trace, g, p, 1)?;
    Ok(normalize_values(a, b))
}

pub(crate) fn normalize_values(mut a: Vec<f64>, mut b: Vec<f64>) -> [Vec<f64>; 2] {
    let total: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
    if total != 0.0 && total.is_finite() {
        a.iter_mut().chain(b.iter_mut()).for_each(|v| *v /= total);
    }
    [a, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Element, ElementLabel};
    use crate::model::forward;
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
    fn method_names_round_trip() {
        for m in [
            Method::Gradient,
            Method::Cam,
            Method::GradCam { layer: None },
            Method::GradCam { layer: Some(2) },
            Method::GradCamAvg,
            Method::Eb,
            Method::Ceb,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("lime".parse::<Method>().is_err());
    }

    #[test]
    fn zero_weight_model_gives_zero_maps() {
        let p = ModelParams::new(vec![Array2::zeros((2, 3))], Array2::zeros((3, 2))).unwrap();
        let g = graph(array![[1.0, 2.0], [3.0, 1.0]], &[(0, 1)]);
        let t = forward(&g, &p).unwrap();
        for m in [Method::Gradient, Method::Cam, Method::GradCam { layer: None }, Method::Eb, Method::Ceb] {
            let h = explain(m, &t, &g, &p, 0).unwrap();
            assert!(h.values.iter().all(|&v| v == 0.0), "{m}");
        }
    }

    #[test]
    fn single_node_gradient_is_norm_of_clamped_product() {
        let w = array![[1.0, 0.5], [0.25, 2.0], [0.5, 0.5]];
        let wc = array![[1.0, -1.0], [-3.0, 0.5]];
        let p = ModelParams::new(vec![w.clone()], wc.clone()).unwrap();
        let g = graph(array![[1.0, 2.0, 0.5]], &[]);
        let t = forward(&g, &p).unwrap();
        for c in 0..2 {
            let expected = w.dot(&wc.column(c)).mapv(|v| v.max(0.0)).mapv(|v| v * v).sum().sqrt();
            let h = gradient_saliency(&t, &g, &p, c).unwrap();
            assert!((h.values[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn cam_with_unit_single_feature() {
        let p = ModelParams::new(vec![array![[1.0], [-1.0]]], array![[1.0, -1.0]]).unwrap();
        let g = graph(array![[2.0, 0.5], [0.0, 1.0]], &[]);
        let t = forward(&g, &p).unwrap();
        let h = cam(&t, &p, 0).unwrap();
        assert_eq!(h.values, t.final_activation().column(0).to_vec());
    }

    #[test]
    fn cam_average_reconstructs_score() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::glorot(3, &[4, 5], 2, &mut rng).unwrap();
        let g = graph(array![[1.0, 0.0, 0.5], [0.2, 1.0, 0.0], [0.0, 0.3, 1.0]], &[(0, 1), (1, 2)]);
        let t = forward(&g, &p).unwrap();
        for c in 0..2 {
            let raw = t.final_activation().dot(&p.classifier().column(c));
            assert!((raw.sum() / 3.0 - t.scores[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_path_excitation_is_one() {
        let p = ModelParams::new(vec![array![[2.0]]], array![[1.5, -1.0]]).unwrap();
        let g = graph(array![[0.7]], &[]);
        let t = forward(&g, &p).unwrap();
        let h = excitation_bp(&t, &g, &p, 0, false).unwrap();
        assert_eq!(h.values, vec![1.0]);
        // negative-only path transmits nothing
        let h = excitation_bp(&t, &g, &p, 1, false).unwrap();
        assert_eq!(h.values, vec![0.0]);
    }

    #[test]
    fn normalize_pair_examples() {
        let a = Heatmap::new(Method::Cam, 1, vec![2.0, 0.0]);
        let b = Heatmap::new(Method::Cam, 0, vec![1.0, 1.0]);
        let (x, y) = normalize_pair(&a, &b);
        assert_eq!(x.values, vec![0.5, 0.0]);
        assert_eq!(y.values, vec![0.25, 0.25]);
        assert!(x.normalized && y.normalized);

        let z = Heatmap::new(Method::Cam, 0, vec![0.0, 0.0]);
        let (x, y) = normalize_pair(&z, &z);
        assert_eq!(x.values, z.values);
        assert!(!x.normalized && !y.normalized);
    }

    #[test]
    fn grad_cam_layer_out_of_range() {
        let p = ModelParams::new(vec![Array2::eye(2)], Array2::ones((2, 2))).unwrap();
        let g = graph(array![[1.0, 2.0]], &[]);
        let t = forward(&g, &p).unwrap();
        assert!(grad_cam(&t, &g, &p, 0, 0).is_err());
        assert!(grad_cam(&t, &g, &p, 0, 2).is_err());
        assert!(grad_cam(&t, &g, &p, 0, 1).is_ok());
    }

    #[test]
    fn single_layer_average_equals_grad_cam() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let p = ModelParams::glorot(2, &[6], 2, &mut rng).unwrap();
        let g = graph(array![[1.0, 0.2], [0.4, 1.0]], &[(0, 1)]);
        let t = forward(&g, &p).unwrap();
        for c in 0..2 {
            assert_eq!(
                grad_cam_avg(&t, &g, &p, c).unwrap().values,
                grad_cam(&t, &g, &p, c, 1).unwrap().values
            );
        }
    }
}
