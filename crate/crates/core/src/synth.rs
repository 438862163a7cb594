//! Synthetic feature bags with controllable redundancy.
//!
//! A dataset draws `n_concepts` concept means (random directions scaled
//! to norm 10). Each bag samples instances as `concept mean + N(0, σ²I)`;
//! positive bags contain at least one instance of the signal concept,
//! negative bags contain none (enforced by construction). A
//! `redundancy` fraction of instances are near-duplicates: copies of an
//! earlier base instance plus noise of scale `0.01 × mean feature norm`,
//! which keeps duplicate pairs above cosine 0.995 in expectation while
//! unrelated pairs stay far below.

use std::path::Path;

use rand::Rng;

use crate::bag_io::{self, FeatureBag, Manifest, ManifestEntry};
use crate::rng::{normal, stream, StreamKind};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_bags: usize,
    pub instances_per_bag: usize,
    pub dim: usize,
    /// Fraction of instances that are near-duplicates of earlier ones.
    pub redundancy: f64,
    pub n_concepts: usize,
    /// Concept whose presence defines label 1.
    pub signal_concept: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_bags: 20,
            instances_per_bag: 16,
            dim: 16,
            redundancy: 0.0,
            n_concepts: 4,
            signal_concept: 0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_bags == 0 {
            return fail("n_bags must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return fail(format!(
                "redundancy must be in [0, 1], got {}",
                self.redundancy
            ));
        }
        if self.n_concepts < 2 {
            return fail(format!("n_concepts must be >= 2, got {}", self.n_concepts));
        }
        if self.instances_per_bag < self.n_concepts {
            return fail(format!(
                "instances_per_bag ({}) must be >= n_concepts ({})",
                self.instances_per_bag, self.n_concepts
            ));
        }
        if self.signal_concept >= self.n_concepts {
            return fail(format!(
                "signal_concept ({}) out of range for {} concepts",
                self.signal_concept, self.n_concepts
            ));
        }
        if self.dim == 0 {
            return fail("dim must be >= 1".into());
        }
        if self.noise_sigma.is_nan() || self.noise_sigma <= 0.0 {
            return fail(format!("noise_sigma must be > 0, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// Concept means for one dataset: rows drawn from a unit Gaussian and
/// rescaled to norm 10, so cosine structure between concepts is
/// meaningful and clusters are recoverable.
pub fn concept_means(cfg: &SynthConfig) -> Tensor<f64> {
    let mut rng = stream(cfg.seed, StreamKind::SynthDataset, 0, 0);
    let mut data = Vec::with_capacity(cfg.n_concepts * cfg.dim);
    for _ in 0..cfg.n_concepts {
        let mut row: Vec<f64> = (0..cfg.dim).map(|_| normal(&mut rng)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in row.iter_mut() {
            *v *= 10.0 / norm;
        }
        data.extend_from_slice(&row);
    }
    Tensor::new(cfg.n_concepts, cfg.dim, data)
}

/// Generate one bag. Positive bags place their first base instance on
/// the signal concept; negative bags draw only non-signal concepts and
/// resample any instance that lands within `3*noise_sigma` of the signal
/// mean, so the label is recoverable by construction.
pub fn generate_bag(
    cfg: &SynthConfig,
    concepts: &Tensor<f64>,
    label: u8,
    bag_id: String,
    rng: &mut impl Rng,
) -> FeatureBag {
    let s = cfg.instances_per_bag;
    let d = cfg.dim;
    let n_dup = ((cfg.redundancy * s as f64).floor() as usize).min(s - 1);
    let n_base = s - n_dup;
    let signal_row: Vec<f64> = concepts.row(cfg.signal_concept).to_vec();
    let min_dist = 3.0 * cfg.noise_sigma;

    let non_signal: Vec<usize> = (0..cfg.n_concepts)
        .filter(|&c| c != cfg.signal_concept)
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..n_base {
        let concept = if label == 1 && i == 0 {
            cfg.signal_concept
        } else {
            non_signal[rng.gen_range(0..non_signal.len())]
        };
        let keep_away = label == 0;
        let row = sample_instance(
            concepts.row(concept),
            cfg.noise_sigma,
            keep_away,
            &signal_row,
            min_dist,
            rng,
        );
        rows.push(row);
    }

    // duplicate scale follows the bag's base feature magnitude
    let mean_norm: f64 = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n_base as f64;
    let dup_sigma = 0.01 * mean_norm;

    for _ in 0..n_dup {
        let anchor = rng.gen_range(0..n_base);
        let keep_away = label == 0;
        let row = sample_instance(
            &rows[anchor],
            dup_sigma,
            keep_away,
            &signal_row,
            min_dist,
            rng,
        );
        rows.push(row);
    }

    let data: Vec<f32> = rows.into_iter().flatten().map(|v| v as f32).collect();
    FeatureBag {
        bag_id,
        label,
        features: Tensor::new(s, d, data),
    }
}

fn sample_instance(
    center: &[f64],
    sigma: f64,
    keep_away_from_signal: bool,
    signal: &[f64],
    min_dist: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    for _ in 0..100 {
        let row: Vec<f64> = center.iter().map(|&m| m + sigma * normal(rng)).collect();
        if !keep_away_from_signal {
            return row;
        }
        let dist: f64 = row
            .iter()
            .zip(signal)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > min_dist {
            return row;
        }
    }
    // concepts are ~14 apart at norm 10, so resampling essentially never
    // exhausts; fall back to the center itself
    center.to_vec()
}

/// Generate a dataset on disk: MILB bag files plus `manifest.csv` in
/// `out_dir`. The positive count is `round(pos_fraction * n_bags)`;
/// label order is a seeded shuffle. Regeneration with the same seed is
/// byte-identical.
pub fn generate_dataset(cfg: &SynthConfig, pos_fraction: f64, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&pos_fraction) {
        return Err(Error::InvalidConfig(format!(
            "pos_fraction must be in [0, 1], got {}",
            pos_fraction
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let concepts = concept_means(cfg);
    let n_pos = (pos_fraction * cfg.n_bags as f64).round() as usize;
    let mut labels = vec![1u8; n_pos];
    labels.resize(cfg.n_bags, 0u8);
    let mut label_rng = stream(cfg.seed, StreamKind::SynthDataset, 1, 0);
    for i in (1..labels.len()).rev() {
        let j = label_rng.gen_range(0..=i);
        labels.swap(i, j);
    }

    let mut entries = Vec::with_capacity(cfg.n_bags);
    for (i, &label) in labels.iter().enumerate() {
        let bag_id = format!("bag_{:04}", i);
        let file = format!("{}.milb", bag_id);
        let mut rng = stream(cfg.seed, StreamKind::SynthBag, i as u64, 0);
        let bag = generate_bag(cfg, &concepts, label, bag_id.clone(), &mut rng);
        bag_io::write_bag(&bag.features, &out_dir.join(&file))?;
        entries.push(ManifestEntry {
            bag_id,
            label,
            path: file,
        });
    }
    let manifest_path = out_dir.join("manifest.csv");
    bag_io::write_manifest(&manifest_path, &entries)?;
    Ok(Manifest {
        split_name: "manifest".into(),
        base_dir: out_dir.to_path_buf(),
        entries,
    })
}
