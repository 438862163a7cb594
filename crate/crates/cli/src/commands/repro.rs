//! Scripted desk-scale reproductions, runnable as `micromil repro`.
//!
//! Every script generates its own synthetic data, exercises the same
//! code paths as the corresponding CLI subcommands, and checks its
//! outputs. The suite exits non-zero if any script fails.

use std::fs;
use std::path::{Path, PathBuf};

use micromil::bag_io::{self, Manifest, ManifestEntry};
use micromil::train;
use micromil::{metrics, synth, ClusterMode, EdgeMethod, RieSelect, SynthConfig, TrainConfig};

use crate::cli::ReproArgs;
use crate::CliError;

pub fn run(args: ReproArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {}", args.out_dir.display(), e)))?;
    println!("config: out_dir = {}", args.out_dir.display());

    type Script = Box<dyn Fn(&Path) -> Result<(), String>>;
    let scripts: Vec<(&str, Script)> = vec![
        ("pipeline", Box::new(script_pipeline)),
        ("edge-ablation", Box::new(script_edge_ablation)),
        ("rie-ablation", Box::new(script_rie_ablation)),
        ("redundancy-shift", Box::new(script_redundancy_shift)),
        ("heatmaps", Box::new(script_heatmaps)),
    ];

    let mut failed = 0usize;
    for (name, script) in scripts {
        match script(&args.out_dir) {
            Ok(()) => println!("repro: {}: PASS", name),
            Err(msg) => {
                failed += 1;
                println!("repro: {}: FAIL ({})", name, msg);
            }
        }
    }
    if failed == 0 {
        println!("repro: all scripts passed");
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{} reproduction script(s) failed",
            failed
        )))
    }
}

fn small_config() -> TrainConfig {
    TrainConfig {
        clusters: 8,
        hidden: 32,
        epochs: 12,
        seed: 5,
        ..TrainConfig::default()
    }
}

/// Split a manifest 70/30 by position (labels are already shuffled in
/// generated manifests) and write both parts next to it.
fn split_train_test(manifest: &Manifest, dir: &Path) -> Result<(Manifest, Manifest), String> {
    let mut train_entries = Vec::new();
    let mut test_entries = Vec::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        if i % 10 < 7 {
            train_entries.push(e.clone());
        } else {
            test_entries.push(e.clone());
        }
    }
    let train_path = dir.join("train.csv");
    let test_path = dir.join("test.csv");
    bag_io::write_manifest(&train_path, &train_entries).map_err(|e| e.to_string())?;
    bag_io::write_manifest(&test_path, &test_entries).map_err(|e| e.to_string())?;
    Ok((
        bag_io::read_manifest(&train_path).map_err(|e| e.to_string())?,
        bag_io::read_manifest(&test_path).map_err(|e| e.to_string())?,
    ))
}

fn pipeline_data(out: &Path) -> Result<(Manifest, Manifest), String> {
    let dir = out.join("pipeline_data");
    let cfg = SynthConfig {
        n_bags: 60,
        instances_per_bag: 24,
        dim: 16,
        redundancy: 0.6,
        n_concepts: 6,
        signal_concept: 0,
        noise_sigma: 1.0,
        seed: 11,
    };
    let manifest = synth::generate_dataset(&cfg, 0.5, &dir).map_err(|e| e.to_string())?;
    split_train_test(&manifest, &dir)
}

fn script_pipeline(out: &Path) -> Result<(), String> {
    let (train_m, test_m) = pipeline_data(out)?;
    let config = small_config();
    let (params, history) = train::train(&config, &train_m).map_err(|e| e.to_string())?;
    if history.len() != config.epochs {
        return Err(format!(
            "expected {} history rows, got {}",
            config.epochs,
            history.len()
        ));
    }
    let model_path = out.join("pipeline_model.bin");
    params.save(&model_path).map_err(|e| e.to_string())?;
    if !model_path.exists() {
        return Err("model file missing".into());
    }
    let report = metrics::evaluate(&params, &test_m, 0.5).map_err(|e| e.to_string())?;
    let auc = report.auc.ok_or("AUC undefined on the held-out split")?;
    println!("repro[pipeline]: test {}", report.summary());
    if auc < 0.75 {
        return Err(format!("held-out AUC {:.4} below 0.75", auc));
    }
    Ok(())
}

fn run_cell(
    config: &TrainConfig,
    train_m: &Manifest,
    test_m: &Manifest,
) -> Result<(f64, Option<f64>, f64), String> {
    let (params, _) = train::train(config, train_m).map_err(|e| e.to_string())?;
    let report = metrics::evaluate(&params, test_m, 0.5).map_err(|e| e.to_string())?;
    Ok((report.accuracy, report.auc, report.f1))
}

fn script_edge_ablation(out: &Path) -> Result<(), String> {
    let (train_m, test_m) = pipeline_data(out)?;
    let methods = [
        EdgeMethod::None,
        EdgeMethod::Random,
        EdgeMethod::Reverse,
        EdgeMethod::Cosine,
    ];
    let mut config = small_config();
    config.epochs = 8;
    let mut table = String::from("edge_method,acc,auc,f1\n");
    for method in methods {
        config.edge_method = method;
        let (acc, auc, f1) = run_cell(&config, &train_m, &test_m)?;
        let auc = auc
            .map(|v| format!("{:.6}", v))
            .unwrap_or_else(|| "undefined".into());
        table.push_str(&format!("{},{:.6},{},{:.6}\n", method, acc, auc, f1));
    }
    let path = out.join("edge_ablation.csv");
    fs::write(&path, &table).map_err(|e| e.to_string())?;
    let rows = table.lines().count() - 1;
    if rows != 4 {
        return Err(format!("expected 4 table rows, got {}", rows));
    }
    println!("repro[edge-ablation]:\n{}", table.trim_end());
    Ok(())
}

fn script_rie_ablation(out: &Path) -> Result<(), String> {
    let (train_m, test_m) = pipeline_data(out)?;
    let clusterings = [ClusterMode::Kmeans, ClusterMode::Dce];
    let selections = [
        RieSelect::Random,
        RieSelect::Mean,
        RieSelect::Centroid,
        RieSelect::Gumbel,
    ];
    let mut config = small_config();
    config.epochs = 6;
    let mut table = String::from("rie_cluster,rie_select,acc,auc,f1\n");
    for clustering in clusterings {
        for selection in selections {
            config.cluster_mode = clustering;
            config.rie_select = selection;
            let (acc, auc, f1) = run_cell(&config, &train_m, &test_m)?;
            let auc = auc
                .map(|v| format!("{:.6}", v))
                .unwrap_or_else(|| "undefined".into());
            table.push_str(&format!(
                "{},{},{:.6},{},{:.6}\n",
                clustering, selection, acc, auc, f1
            ));
        }
    }
    let path = out.join("rie_ablation.csv");
    fs::write(&path, &table).map_err(|e| e.to_string())?;
    let rows = table.lines().count() - 1;
    if rows != 8 {
        return Err(format!("expected 8 table rows, got {}", rows));
    }
    println!("repro[rie-ablation]:\n{}", table.trim_end());
    Ok(())
}

/// Two sub-datasets of opposite redundancy merged into one manifest, so
/// ranking by redundancy ratio recovers them as the top/bottom splits.
fn shift_data(out: &Path) -> Result<Manifest, String> {
    let dir = out.join("shift_data");
    let mut base = SynthConfig {
        n_bags: 100,
        instances_per_bag: 20,
        dim: 16,
        redundancy: 0.85,
        n_concepts: 5,
        signal_concept: 0,
        noise_sigma: 1.0,
        seed: 21,
    };
    let high = synth::generate_dataset(&base, 0.5, &dir.join("high")).map_err(|e| e.to_string())?;
    base.redundancy = 0.05;
    base.seed = 22;
    let low = synth::generate_dataset(&base, 0.5, &dir.join("low")).map_err(|e| e.to_string())?;
    let mut entries = Vec::new();
    for e in &high.entries {
        entries.push(ManifestEntry {
            bag_id: format!("hi_{}", e.bag_id),
            label: e.label,
            path: format!("high/{}", e.path),
        });
    }
    for e in &low.entries {
        entries.push(ManifestEntry {
            bag_id: format!("lo_{}", e.bag_id),
            label: e.label,
            path: format!("low/{}", e.path),
        });
    }
    let path = dir.join("merged.csv");
    bag_io::write_manifest(&path, &entries).map_err(|e| e.to_string())?;
    bag_io::read_manifest(&path).map_err(|e| e.to_string())
}

fn script_redundancy_shift(out: &Path) -> Result<(), String> {
    let merged = shift_data(out)?;
    let (top, bottom) =
        metrics::redundancy_split(&merged, 0.995, 0.1).map_err(|e| e.to_string())?;
    if top.len() != 20 || bottom.len() != 20 {
        return Err(format!(
            "expected 20-bag splits, got {} and {}",
            top.len(),
            bottom.len()
        ));
    }
    // the top split must come from the high-redundancy sub-dataset
    let top_high = top
        .entries
        .iter()
        .filter(|e| e.bag_id.starts_with("hi_"))
        .count();
    if top_high != top.len() {
        return Err(format!(
            "top split contains {} low-redundancy bags",
            top.len() - top_high
        ));
    }

    let mut config = small_config();
    config.epochs = 8;
    // (train split, eval split): the third row is the matched-redundancy
    // in-domain control
    let flows: [(&str, &Manifest, &Manifest); 3] = [
        ("T10->B10", &top, &bottom),
        ("B10->T10", &bottom, &top),
        ("T10->T10", &top, &top),
    ];
    let mut table = String::from("flow,acc,auc,f1\n");
    for (name, train_m, eval_m) in flows {
        let (acc, auc, f1) = run_cell(&config, train_m, eval_m)?;
        let auc = auc.ok_or_else(|| format!("AUC undefined for flow {}", name))?;
        table.push_str(&format!("{},{:.6},{:.6},{:.6}\n", name, acc, auc, f1));
    }
    let path = out.join("redundancy_shift.csv");
    fs::write(&path, &table).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = table.lines().skip(1).collect();
    if rows.len() != 3
        || !rows[0].starts_with("T10->B10")
        || !rows[1].starts_with("B10->T10")
        || !rows[2].starts_with("T10->T10")
    {
        return Err("redundancy-shift table rows missing or misordered".into());
    }
    println!("repro[redundancy-shift]:\n{}", table.trim_end());
    Ok(())
}

fn parse_heatmap(path: &PathBuf) -> Result<Vec<Vec<f64>>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.parse::<f64>()).collect();
        rows.push(row.map_err(|e| format!("{}: {}", path.display(), e))?);
    }
    Ok(rows)
}

fn script_heatmaps(out: &Path) -> Result<(), String> {
    let dir = out.join("heatmap_data");
    let cfg = SynthConfig {
        n_bags: 12,
        instances_per_bag: 16,
        dim: 16,
        redundancy: 0.8,
        n_concepts: 4,
        signal_concept: 0,
        noise_sigma: 1.0,
        seed: 3,
    };
    let manifest = synth::generate_dataset(&cfg, 0.5, &dir).map_err(|e| e.to_string())?;
    let mut config = small_config();
    config.clusters = 6;
    config.epochs = 4;
    let (params, _) = train::train(&config, &manifest).map_err(|e| e.to_string())?;

    let bags = manifest.load_bags().map_err(|e| e.to_string())?;
    let heat_dir = out.join("heatmaps");
    fs::create_dir_all(&heat_dir).map_err(|e| e.to_string())?;
    for (i, bag) in bags.iter().take(2).enumerate() {
        let raw = heat_dir.join(format!("{}_raw.csv", bag.bag_id));
        metrics::similarity_heatmap(&bag.features, &raw).map_err(|e| e.to_string())?;
        let reps = match &params.model {
            micromil::Model::MicroMil(p) => {
                let mut rng =
                    micromil::rng::stream(0, micromil::rng::StreamKind::BagEval, i as u64, 0);
                micromil::pipeline::forward_micromil(
                    p,
                    &bag.features,
                    None,
                    micromil::pipeline::ForwardOptions::eval(),
                    &mut rng,
                )
                .reps
            }
            _ => return Err("expected the full model".into()),
        };
        let reps_path = heat_dir.join(format!("{}_reps.csv", bag.bag_id));
        metrics::similarity_heatmap(&reps, &reps_path).map_err(|e| e.to_string())?;

        let raw_m = parse_heatmap(&raw)?;
        let reps_m = parse_heatmap(&reps_path)?;
        for m in [&raw_m, &reps_m] {
            let n = m.len();
            for row in m.iter() {
                if row.len() != n {
                    return Err(format!("{}: heatmap is not square", bag.bag_id));
                }
            }
            for r in 0..n {
                for c in 0..n {
                    if (m[r][c] - m[c][r]).abs() > 1e-5 {
                        return Err(format!("{}: heatmap not symmetric", bag.bag_id));
                    }
                    if !(-1.0 - 1e-6..=1.0 + 1e-6).contains(&m[r][c]) {
                        return Err(format!("{}: cosine out of range", bag.bag_id));
                    }
                }
            }
        }
        // representative selection collapses the redundant instances
        if reps_m.len() >= raw_m.len() {
            return Err("representative heatmap should be smaller than the raw heatmap".into());
        }
    }
    println!(
        "repro[heatmaps]: wrote raw and representative heatmaps to {}",
        heat_dir.display()
    );
    Ok(())
}
