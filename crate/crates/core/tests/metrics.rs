mod common;

use common::graph_from_edges;
use gcnx_core::explainers::{Explainer, Method};
use gcnx_core::graph::AttributedGraph;
use gcnx_core::metrics::{fidelity, metric_suite, Thresholds};
use gcnx_core::model::{forward, occlude, ForwardTrace, ModelParams};
use gcnx_core::Result;
use ndarray::{array, Array2};

struct Null;

impl Explainer for Null {
    fn label(&self) -> String {
        "null".into()
    }

    fn heat(&self, _: &ForwardTrace, g: &AttributedGraph, _: &ModelParams, _: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; g.n_nodes()])
    }
}

/// One identity convolution and an identity classifier: feature k votes for class k.
fn identity_model() -> ModelParams {
    ModelParams::new(vec![Array2::eye(2)], Array2::eye(2)).unwrap()
}

fn fixture() -> (AttributedGraph, AttributedGraph) {
    // class 0: a strong class-0 atom next to a weaker, disconnected class-1 atom
    let negative = graph_from_edges(array![[2.0, 0.0], [0.0, 1.0]], &[]);
    let positive = graph_from_edges(array![[0.0, 1.0]], &[]);
    (negative, positive)
}

#[test]
fn occlusion_flipping_every_prediction_gives_unit_fidelity() {
    let p = identity_model();
    let (negative, positive) = fixture();
    let data = [(&negative, 0), (&positive, 1)];
    assert_eq!(forward(&negative, &p).unwrap().predicted_class(), 0);
    assert_eq!(forward(&positive, &p).unwrap().predicted_class(), 1);
    // the CAM of the predicted class marks node 0 of each graph
    let flipped_neg = occlude(&negative, &[true, false]).unwrap();
    let flipped_pos = occlude(&positive, &[true]).unwrap();
    assert_eq!(forward(&flipped_neg, &p).unwrap().predicted_class(), 1);
    assert_eq!(forward(&flipped_pos, &p).unwrap().predicted_class(), 0);

    assert_eq!(fidelity(&p, &data, &Method::Cam, 0.01).unwrap(), 1.0);
    assert_eq!(fidelity(&p, &data, &Null, 0.01).unwrap(), 0.0);
}

#[test]
fn suite_reports_every_method() {
    let p = identity_model();
    let (negative, positive) = fixture();
    let data = [(&negative, 0), (&positive, 1)];
    let explainers: Vec<&dyn Explainer> = vec![&Method::Cam, &Method::Gradient, &Null];
    let reports = metric_suite(&p, &data, &explainers, Thresholds::default()).unwrap();
    assert_eq!(reports.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(), vec!["cam", "gradient", "null"]);
    let null = &reports[2];
    assert_eq!((null.fidelity, null.sparsity_mean, null.n_degenerate), (0.0, 100.0, 2));
    // CAM marks node 0 for class 0 and node 1 for class 1 on the negative graph
    let cam = &reports[0];
    assert_eq!(cam.contrastivity_mean, 100.0);
    assert_eq!(cam.sparsity_mean, 0.0);
    assert!(metric_suite(&p, &[], &explainers, Thresholds::default()).is_err());
}

#[test]
fn duplicated_molecule_keeps_the_mean() {
    let p = identity_model();
    let (negative, _) = fixture();
    let once = metric_suite(&p, &[(&negative, 0)], &[&Method::Cam], Thresholds::default()).unwrap();
    let twice = metric_suite(&p, &[(&negative, 0), (&negative, 0)], &[&Method::Cam], Thresholds::default()).unwrap();
    assert_eq!(once[0].contrastivity_mean, twice[0].contrastivity_mean);
    assert_eq!(once[0].sparsity_mean, twice[0].sparsity_mean);
    assert_eq!(twice[0].sparsity_std, 0.0);
}
