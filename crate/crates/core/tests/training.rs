mod common;

use common::graph_from_edges;
use gcnx_core::checkpoint::Checkpoint;
use gcnx_core::datasets::{split, synth_motif_set, SplitSpec};
use gcnx_core::smiles::FeaturizationScheme;
use gcnx_core::train::{evaluate, train, TrainConfig};
use ndarray::array;

fn toy_config() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        learning_rate: 0.01,
        layer_sizes: vec![8, 8],
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_pair_is_fit() {
    let a = graph_from_edges(array![[1.0, 0.0], [1.0, 0.2]], &[(0, 1)]);
    let b = graph_from_edges(array![[0.0, 1.0], [0.1, 1.0]], &[(0, 1)]);
    let data = [(&a, 0), (&b, 1)];
    let outcome = train(&data, None, &toy_config()).unwrap();
    let first_below = outcome.log.iter().position(|e| e.train_loss < 1e-2);
    assert!(first_below.is_some(), "final loss {}", outcome.log.last().unwrap().train_loss);
    assert_eq!(evaluate(&outcome.params, &data).unwrap().accuracy, 1.0);
}

#[test]
fn single_class_is_rejected() {
    let a = graph_from_edges(array![[1.0, 0.0]], &[]);
    assert!(train(&[(&a, 1), (&a, 1)], None, &toy_config()).is_err());
    assert!(train(&[], None, &toy_config()).is_err());
}

#[test]
fn same_seed_same_parameters() {
    let set = synth_motif_set(60, "NO", 1).unwrap();
    let [tr, va, _] = split(&set, &SplitSpec { seed: 1, ..SplitSpec::default() }).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        layer_sizes: vec![8, 8],
        seed: 9,
        ..TrainConfig::default()
    };
    let (tr, va) = (tr.examples(), va.examples());
    let first = train(&tr, Some(&va), &cfg).unwrap();
    let second = train(&tr, Some(&va), &cfg).unwrap();
    assert_eq!(first.params, second.params);
    assert_eq!(first.log, second.log);
    let scheme = FeaturizationScheme::default();
    let a = Checkpoint::new(&first.params, scheme.clone(), cfg.clone()).to_json().unwrap();
    let b = Checkpoint::new(&second.params, scheme, cfg.clone()).to_json().unwrap();
    assert_eq!(a, b);
    let other = train(&tr, Some(&va), &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(first.params, other.params);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let set = synth_motif_set(40, "NO", 2).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        layer_sizes: vec![6],
        ..TrainConfig::default()
    };
    let data = set.examples();
    let outcome = train(&data, None, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::new(&outcome.params, FeaturizationScheme::default(), cfg).save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap().params().unwrap();
    assert_eq!(restored, outcome.params);
    assert_eq!(
        evaluate(&restored, &data).unwrap().accuracy,
        evaluate(&outcome.params, &data).unwrap().accuracy
    );
}
