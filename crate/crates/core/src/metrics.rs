//! Explanation quality: fidelity (accuracy drop under occlusion),
//! contrastivity (normalized Hamming distance between the two classes'
//! binarized maps) and sparsity (fraction of nodes left unmarked).
//!
//! Contrastivity and sparsity are percentages in `[0, 100]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{explain_pair, Explainer};
use crate::model::{forward, occlude, ModelParams};
use crate::train::Example;

/// Default cut-off on normalized saliency for occlusion and binarization.
pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub bits: Vec<bool>,
}

impl BinaryMask {
    /// Marks nodes whose (normalized) saliency is strictly above `threshold`.
    pub fn from_values(values: &[f64], threshold: f64) -> Self {
        BinaryMask {
            bits: values.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contrastivity {
    pub percent: f64,
    /// Neither mask marks any node; `percent` is then 0.
    pub degenerate: bool,
}

/// `100 · d_H(m0, m1) / |m0 ∨ m1|`.
pub fn contrastivity(m0: &BinaryMask, m1: &BinaryMask) -> Result<Contrastivity> {
    if m0.len() != m1.len() {
        return Err(Error::Structure(format!(
            "mask lengths differ ({} vs {})",
            m0.len(),
            m1.len()
        )));
    }
    let (mut hamming, mut union) = (0usize, 0usize);
    for (&a, &b) in m0.bits.iter().zip(&m1.bits) {
        if a != b {
            hamming += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(Contrastivity {
            percent: 0.0,
            degenerate: true,
        });
    }
    Ok(Contrastivity {
        percent: 100.0 * hamming as f64 / union as f64,
        degenerate: false,
    })
}

/// `100 · (1 − |m0 ∨ m1| / n_nodes)`.
pub fn sparsity(m0: &BinaryMask, m1: &BinaryMask, n_nodes: usize) -> Result<f64> {
    if n_nodes == 0 || m0.len() != n_nodes || m1.len() != n_nodes {
        return Err(Error::Structure(format!(
            "masks of length {}/{} for {n_nodes} nodes",
            m0.len(),
            m1.len()
        )));
    }
    let union = m0.bits.iter().zip(&m1.bits).filter(|(&a, &b)| a || b).count();
    Ok(100.0 * (1.0 - union as f64 / n_nodes as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Occlusion cut-off for fidelity.
    pub fidelity: f64,
    /// Binarization cut-off for contrastivity and sparsity.
    pub binarize: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            fidelity: DEFAULT_THRESHOLD,
            binarize: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub fidelity: f64,
    pub contrastivity_mean: f64,
    pub contrastivity_std: f64,
    pub sparsity_mean: f64,
    pub sparsity_std: f64,
    pub n_molecules: usize,
    /// Molecules whose two masks were both empty; excluded from the contrastivity mean.
    pub n_degenerate: usize,
}

struct MoleculeScore {
    label: usize,
    correct: bool,
    correct_after_occlusion: bool,
    contrastivity: Contrastivity,
    sparsity: f64,
}

fn score_molecule(
    params: &ModelParams,
    example: &Example<'_>,
    explainer: &dyn Explainer,
    thresholds: Thresholds,
) -> Result<MoleculeScore> {
    let (g, label) = *example;
    let trace = forward(g, params)?;
    let predicted = trace.predicted_class();
    let [neg, pos] = explain_pair(explainer, &trace, g, params)?;

    let occlusion = BinaryMask::from_values(if predicted == 1 { &pos } else { &neg }, thresholds.fidelity);
    let occluded = occlude(g, &occlusion.bits)?;
    let predicted_after = forward(&occluded, params)?.predicted_class();

    let m0 = BinaryMask::from_values(&pos, thresholds.binarize);
    let m1 = BinaryMask::from_values(&neg, thresholds.binarize);
    Ok(MoleculeScore {
        label,
        correct: predicted == label,
        correct_after_occlusion: predicted_after == label,
        contrastivity: contrastivity(&m0, &m1)?,
        sparsity: sparsity(&m0, &m1, g.n_nodes())?,
    })
}

fn score_all(
    params: &ModelParams,
    data: &[Example<'_>],
    explainer: &dyn Explainer,
    thresholds: Thresholds,
) -> Result<Vec<MoleculeScore>> {
    if data.is_empty() {
        return Err(Error::Data("metrics need a nonempty dataset".into()));
    }
    data.par_iter()
        .map(|ex| score_molecule(params, ex, explainer, thresholds))
        .collect()
}

/// Per-class accuracy drops, averaged over the classes present.
fn macro_fidelity(scores: &[MoleculeScore]) -> f64 {
    let n_classes = scores.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut drops = Vec::new();
    for class in 0..n_classes {
        let members: Vec<&MoleculeScore> = scores.iter().filter(|s| s.label == class).collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let before = members.iter().filter(|s| s.correct).count() as f64 / n;
        let after = members.iter().filter(|s| s.correct_after_occlusion).count() as f64 / n;
        drops.push(before - after);
    }
    drops.iter().sum::<f64>() / drops.len() as f64
}

/// Accuracy before minus accuracy after zeroing every node whose normalized
/// saliency for the predicted class exceeds `threshold`, macro-averaged over
/// the true classes.
pub fn fidelity(params: &ModelParams, data: &[Example<'_>], explainer: &dyn Explainer, threshold: f64) -> Result<f64> {
    let thresholds = Thresholds {
        fidelity: threshold,
        binarize: threshold,
    };
    Ok(macro_fidelity(&score_all(params, data, explainer, thresholds)?))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn metric_suite(
    params: &ModelParams,
    data: &[Example<'_>],
    explainers: &[&dyn Explainer],
    thresholds: Thresholds,
) -> Result<Vec<MetricReport>> {
    explainers
        .iter()
        .map(|explainer| {
            let scores = score_all(params, data, *explainer, thresholds)?;
            let contrast: Vec<f64> = scores
                .iter()
                .filter(|s| !s.contrastivity.degenerate)
                .map(|s| s.contrastivity.percent)
                .collect();
            let sparse: Vec<f64> = scores.iter().map(|s| s.sparsity).collect();
            let (contrastivity_mean, contrastivity_std) = mean_std(&contrast);
            let (sparsity_mean, sparsity_std) = mean_std(&sparse);
            Ok(MetricReport {
                method: explainer.label(),
                fidelity: macro_fidelity(&scores),
                contrastivity_mean,
                contrastivity_std,
                sparsity_mean,
                sparsity_std,
                n_molecules: scores.len(),
                n_degenerate: scores.len() - contrast.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask {
            bits: bits.iter().map(|&b| b == 1).collect(),
        }
    }

    #[test]
    fn contrastivity_examples() {
        let a = mask(&[1, 0, 1]);
        assert_eq!(contrastivity(&a, &a).unwrap().percent, 0.0);
        assert_eq!(contrastivity(&mask(&[1, 1, 0]), &mask(&[0, 0, 1])).unwrap().percent, 100.0);
        let c = contrastivity(&a, &mask(&[0, 1, 1])).unwrap();
        assert!((c.percent - 200.0 / 3.0).abs() < 1e-12);
        let empty = contrastivity(&mask(&[0, 0]), &mask(&[0, 0])).unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.percent, 0.0);
        assert!(contrastivity(&mask(&[0]), &mask(&[0, 1])).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let z = mask(&[0; 10]);
        assert_eq!(sparsity(&z, &z, 10).unwrap(), 100.0);
        assert_eq!(sparsity(&mask(&[1; 10]), &z, 10).unwrap(), 0.0);
        let a = mask(&[1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        let b = mask(&[0, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert!((sparsity(&a, &b, 10).unwrap() - 70.0).abs() < 1e-12);
        assert!(sparsity(&z, &z, 0).is_err());
    }

    #[test]
    fn strict_threshold() {
        let m = BinaryMask::from_values(&[0.01, 0.0100001, 0.0], 0.01);
        assert_eq!(m.bits, vec![false, true, false]);
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
