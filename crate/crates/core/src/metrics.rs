//! Evaluation metrics (accuracy, ranked AUC, F1), redundancy statistics,
//! redundancy-shift splits, and similarity-heatmap export.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::bag_io::{FeatureBag, Manifest};
use crate::model::{Model, ModelParams};
use crate::pipeline;
use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// One evaluated bag.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub bag_id: String,
    pub probability: f64,
    pub label: u8,
}

/// Metrics over one manifest. `auc` is `None` when only one class is
/// present (undefined rather than a silent number).
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub f1: f64,
    pub threshold: f64,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let auc = match self.auc {
            Some(v) => format!("{:.6}", v),
            None => "undefined".to_string(),
        };
        format!(
            "bags={} threshold={} accuracy={:.6} auc={} f1={:.6}",
            self.predictions.len(),
            self.threshold,
            self.accuracy,
            auc,
            self.f1
        )
    }

    /// Per-bag predictions as `bag_id,probability,label` rows.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("bag_id,probability,label\n");
        for p in &self.predictions {
            out.push_str(&format!("{},{:.6},{}\n", p.bag_id, p.probability, p.label));
        }
        out
    }
}

/// Evaluate a trained model on every bag of a manifest. Bags are scored
/// in parallel with read-only parameter snapshots; results keep manifest
/// order. Deterministic: evaluation streams depend only on bag position.
pub fn evaluate(
    params: &ModelParams<f32>,
    manifest: &Manifest,
    threshold: f64,
) -> Result<EvalReport> {
    let bags = manifest.load_bags()?;
    if bags.is_empty() {
        return Err(Error::InvalidData(
            "manifest is empty: nothing to evaluate".into(),
        ));
    }
    Ok(evaluate_bags(&params.model, &bags, threshold))
}

/// Evaluate on already-loaded bags.
pub fn evaluate_bags(model: &Model<f32>, bags: &[FeatureBag], threshold: f64) -> EvalReport {
    let predictions: Vec<Prediction> = bags
        .par_iter()
        .enumerate()
        .map(|(i, bag)| {
            let mut rng = stream(0, StreamKind::BagEval, i as u64, 0);
            let probability = pipeline::predict(model, &bag.features, &mut rng);
            Prediction {
                bag_id: bag.bag_id.clone(),
                probability,
                label: bag.label,
            }
        })
        .collect();
    report_from_predictions(predictions, threshold)
}

pub fn report_from_predictions(predictions: Vec<Prediction>, threshold: f64) -> EvalReport {
    let scores: Vec<f64> = predictions.iter().map(|p| p.probability).collect();
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let predicted: Vec<u8> = scores
        .iter()
        .map(|&s| if s >= threshold { 1 } else { 0 })
        .collect();
    EvalReport {
        accuracy: accuracy(&predicted, &labels),
        auc: auc(&scores, &labels),
        f1: f1(&predicted, &labels),
        threshold,
        predictions,
    }
}

/// Fraction of correct hard predictions.
pub fn accuracy(predicted: &[u8], labels: &[u8]) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len() as f64
}

/// Rank-based AUC (Mann-Whitney statistic, ties credited 0.5 through
/// average ranks). `None` when only one class is present.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg_rank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// F1 of the positive class as `2TP / (2TP + FP + FN)`; an empty
/// denominator (no positives anywhere) maps to 0.
pub fn f1(predicted: &[u8], labels: &[u8]) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Fraction of unordered instance pairs whose cosine similarity strictly
/// exceeds `threshold`. `None` for bags with fewer than two instances.
/// Zero-norm instances never exceed any positive threshold.
pub fn redundancy_ratio(features: &Tensor<f32>, threshold: f64) -> Option<f64> {
    let s = features.rows;
    if s < 2 {
        return None;
    }
    let above = count_redundant_pairs(features, threshold);
    let pairs = s * (s - 1) / 2;
    Some(above as f64 / pairs as f64)
}

fn count_redundant_pairs(features: &Tensor<f32>, threshold: f64) -> usize {
    let s = features.rows;
    let d = features.cols;
    let mut unit: Vec<Option<Vec<f64>>> = Vec::with_capacity(s);
    for i in 0..s {
        let row: Vec<f64> = features.row(i).iter().map(|&v| v as f64).collect();
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            unit.push(None);
        } else {
            unit.push(Some(row.iter().map(|v| v / norm).collect()));
        }
    }
    let mut above = 0usize;
    for i in 0..s {
        for j in i + 1..s {
            if let (Some(a), Some(b)) = (&unit[i], &unit[j]) {
                let cos: f64 = (0..d).map(|k| a[k] * b[k]).sum();
                if cos > threshold {
                    above += 1;
                }
            }
        }
    }
    above
}

/// Mean per-bag redundancy ratio (bags with fewer than two instances are
/// skipped).
pub fn mean_redundancy(bags: &[FeatureBag], threshold: f64) -> Option<f64> {
    let ratios: Vec<f64> = bags
        .iter()
        .filter_map(|b| redundancy_ratio(&b.features, threshold))
        .collect();
    if ratios.is_empty() {
        None
    } else {
        Some(ratios.iter().sum::<f64>() / ratios.len() as f64)
    }
}

/// Pooled variant: total redundant pairs over total pairs across the
/// dataset.
pub fn pooled_redundancy(bags: &[FeatureBag], threshold: f64) -> Option<f64> {
    let mut above = 0usize;
    let mut pairs = 0usize;
    for bag in bags {
        let s = bag.instances();
        if s < 2 {
            continue;
        }
        above += count_redundant_pairs(&bag.features, threshold);
        pairs += s * (s - 1) / 2;
    }
    if pairs == 0 {
        None
    } else {
        Some(above as f64 / pairs as f64)
    }
}

/// Rank bags by redundancy ratio and emit the top and bottom `quantile`
/// fractions as new manifests (floor-sized, disjoint, ties broken by
/// bag id). Bags without a defined ratio rank as 0.
pub fn redundancy_split(
    manifest: &Manifest,
    threshold: f64,
    quantile: f64,
) -> Result<(Manifest, Manifest)> {
    if !(0.0 < quantile && quantile <= 0.5) {
        return Err(Error::InvalidConfig(format!(
            "quantile must be in (0, 0.5], got {}",
            quantile
        )));
    }
    let bags = manifest.load_bags()?;
    let n = bags.len();
    let k = (quantile * n as f64).floor() as usize;
    if k == 0 || 2 * k > n {
        return Err(Error::InvalidData(format!(
            "too few bags for a {} split: have {}, need at least {}",
            quantile,
            n,
            (1.0 / quantile).ceil() as usize
        )));
    }
    let mut ranked: Vec<(usize, f64)> = bags
        .iter()
        .enumerate()
        .map(|(i, b)| (i, redundancy_ratio(&b.features, threshold).unwrap_or(0.0)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite ratios")
            .then_with(|| bags[a.0].bag_id.cmp(&bags[b.0].bag_id))
    });
    let pct = (quantile * 100.0).round() as usize;
    let pick = |slots: &[(usize, f64)]| -> Vec<crate::bag_io::ManifestEntry> {
        slots
            .iter()
            .map(|&(i, _)| manifest.entries[i].clone())
            .collect()
    };
    let top = Manifest {
        split_name: format!("{}_t{}", manifest.split_name, pct),
        base_dir: manifest.base_dir.clone(),
        entries: pick(&ranked[..k]),
    };
    let bottom = Manifest {
        split_name: format!("{}_b{}", manifest.split_name, pct),
        base_dir: manifest.base_dir.clone(),
        entries: pick(&ranked[n - k..]),
    };
    Ok((top, bottom))
}

/// Write the full cosine-similarity matrix of the given rows as CSV with
/// six decimal places. Zero-norm rows are reported as a data error
/// (cosine similarity is undefined for them).
pub fn similarity_heatmap(features: &Tensor<f32>, out_path: &Path) -> Result<()> {
    for r in 0..features.rows {
        if features.row(r).iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidData(format!(
                "cannot compute cosine similarities: instance {} has zero norm",
                r
            )));
        }
    }
    let sim = crate::graph::cosine_similarity_values(features);
    let mut out = String::new();
    for r in 0..sim.rows {
        let cells: Vec<String> = sim.row(r).iter().map(|v| format!("{:.6}", v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(out_path, out).map_err(|e| Error::io(out_path, e))
}
