//! Subcommand handlers.

mod repro;

use std::fs;
use std::path::Path;

use micromil::bag_io::{self, Manifest};
use micromil::model::Model;
use micromil::pipeline::{self, ForwardOptions};
use micromil::rng::{stream, StreamKind};
use micromil::train::{self, EpochStats};
use micromil::{metrics, synth, ClusterMode, EdgeMethod, ModelParams, RieSelect, SynthConfig};

use crate::cli::{
    AblateArgs, AnalyzeArgs, Cli, Command, EvalArgs, GradcheckArgs, ModeFlags, SplitArgs,
    SynthArgs, TrainArgs,
};
use crate::config_file::{self, log_config};
use crate::CliError;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Split(args) => cmd_split(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Repro(args) => repro::run(args),
    }
}

fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    Ok(bag_io::read_manifest(path)?)
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n_bags: args.bags,
        instances_per_bag: args.images_per_bag,
        dim: args.dim,
        redundancy: args.redundancy,
        n_concepts: args.concepts,
        signal_concept: args.signal_concept,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
    };
    // validation happens before anything is written
    cfg.validate()?;
    println!("config: bags = {}", cfg.n_bags);
    println!("config: images_per_bag = {}", cfg.instances_per_bag);
    println!("config: dim = {}", cfg.dim);
    println!("config: redundancy = {}", cfg.redundancy);
    println!("config: concepts = {}", cfg.n_concepts);
    println!("config: signal_concept = {}", cfg.signal_concept);
    println!("config: noise_sigma = {}", cfg.noise_sigma);
    println!("config: pos_fraction = {}", args.pos_fraction);
    println!("config: seed = {}", cfg.seed);
    println!("config: out_dir = {}", args.out_dir.display());
    let manifest = synth::generate_dataset(&cfg, args.pos_fraction, &args.out_dir)?;
    println!(
        "wrote {} bags and manifest.csv to {}",
        manifest.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn print_history(history: &[EpochStats]) {
    println!("epoch,loss,acc");
    for h in history {
        println!("{},{:.6},{:.4}", h.epoch, h.loss, h.acc);
    }
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,acc\n");
    for h in history {
        out.push_str(&format!("{},{:.6},{:.4}\n", h.epoch, h.loss, h.acc));
    }
    out
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let config = config_file::resolve(&args.flags, &args.modes)?;
    log_config(&config);
    println!("config: manifest = {}", args.manifest.display());
    println!("config: model_out = {}", args.model_out.display());
    println!("config: baseline = {}", args.baseline);
    let manifest = read_manifest(&args.manifest)?;
    let (params, history) = if args.baseline {
        train::train_mean_pool(&config, &manifest)?
    } else {
        train::train(&config, &manifest)?
    };
    print_history(&history);
    params.save(&args.model_out)?;
    println!("model written to {}", args.model_out.display());
    if let Some(path) = &args.history_out {
        fs::write(path, history_csv(&history))
            .map_err(|e| CliError::Data(format!("cannot write {}: {}", path.display(), e)))?;
        println!("history written to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    println!("config: model = {}", args.model.display());
    println!("config: manifest = {}", args.manifest.display());
    println!("config: threshold = {}", args.threshold);
    let params = ModelParams::load(&args.model)?;
    let manifest = read_manifest(&args.manifest)?;
    let report = metrics::evaluate(&params, &manifest, args.threshold)?;
    println!("{}", report.summary());
    if let Some(path) = &args.report_out {
        fs::write(path, report.predictions_csv())
            .map_err(|e| CliError::Data(format!("cannot write {}: {}", path.display(), e)))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    println!("config: manifest = {}", args.manifest.display());
    println!("config: threshold = {}", args.threshold);
    println!("config: pooled = {}", args.pooled);
    let manifest = read_manifest(&args.manifest)?;
    let bags = manifest.load_bags()?;
    println!("bag_id,redundancy_ratio");
    for bag in &bags {
        match metrics::redundancy_ratio(&bag.features, args.threshold) {
            Some(r) => println!("{},{:.6}", bag.bag_id, r),
            None => println!("{},undefined", bag.bag_id),
        }
    }
    match metrics::mean_redundancy(&bags, args.threshold) {
        Some(m) => println!("mean,{:.6}", m),
        None => println!("mean,undefined"),
    }
    if args.pooled {
        match metrics::pooled_redundancy(&bags, args.threshold) {
            Some(p) => println!("pooled,{:.6}", p),
            None => println!("pooled,undefined"),
        }
    }

    if let Some(dir) = &args.heatmap_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {}", dir.display(), e)))?;
        let model = match &args.model {
            Some(path) => Some(ModelParams::load(path)?),
            None => None,
        };
        let limit = args.heatmap_limit.unwrap_or(bags.len());
        for (i, bag) in bags.iter().take(limit).enumerate() {
            let raw_path = dir.join(format!("{}_raw.csv", bag.bag_id));
            metrics::similarity_heatmap(&bag.features, &raw_path)?;
            if let Some(params) = &model {
                let reps_path = dir.join(format!("{}_reps.csv", bag.bag_id));
                let reps = representatives(params, bag, i)?;
                metrics::similarity_heatmap(&reps, &reps_path)?;
            }
        }
        println!("heatmaps written to {}", dir.display());
    }
    Ok(())
}

fn representatives(
    params: &ModelParams<f32>,
    bag: &micromil::FeatureBag,
    index: usize,
) -> Result<micromil::Tensor<f32>, CliError> {
    match &params.model {
        Model::MicroMil(p) => {
            let mut rng = stream(0, StreamKind::BagEval, index as u64, 0);
            let fwd = pipeline::forward_micromil(
                p,
                &bag.features,
                None,
                ForwardOptions::eval(),
                &mut rng,
            );
            Ok(fwd.reps)
        }
        Model::MeanPool(_) => Err(CliError::Usage(
            "the mean-pool baseline selects no representatives; pass a full model".into(),
        )),
    }
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    println!("config: manifest = {}", args.manifest.display());
    println!("config: threshold = {}", args.threshold);
    println!("config: quantile = {}", args.quantile);
    let manifest = read_manifest(&args.manifest)?;
    let (top, bottom) = metrics::redundancy_split(&manifest, args.threshold, args.quantile)?;
    let dir = args.manifest.parent().unwrap_or_else(|| Path::new("."));
    for part in [&top, &bottom] {
        let path = dir.join(format!("{}.csv", part.split_name));
        bag_io::write_manifest(&path, &part.entries)?;
        println!("wrote {} ({} bags)", path.display(), part.len());
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = String>>(
    raw: &str,
    what: &str,
) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for token in raw.split(',') {
        let token = token.trim();
        if token.is_empty() {
            return Err(CliError::Usage(format!(
                "empty {} entry in `{}`",
                what, raw
            )));
        }
        out.push(token.parse::<T>().map_err(CliError::Usage)?);
    }
    Ok(out)
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let base = config_file::resolve(&args.flags, &ModeFlags::default())?;
    let edges: Vec<EdgeMethod> = parse_list(&args.edge_method, "edge method")?;
    let clusterings: Vec<ClusterMode> = parse_list(&args.rie_cluster, "clustering arm")?;
    let selections: Vec<RieSelect> = parse_list(&args.rie_select, "selection mode")?;
    log_config(&base);
    println!("config: manifest = {}", args.manifest.display());
    match &args.test_manifest {
        Some(p) => println!("config: test_manifest = {}", p.display()),
        None => println!("config: test_manifest = (training manifest)"),
    }
    println!(
        "config: grid = {} x {} x {}",
        args.edge_method, args.rie_cluster, args.rie_select
    );

    let train_manifest = read_manifest(&args.manifest)?;
    let eval_manifest = match &args.test_manifest {
        Some(p) => read_manifest(p)?,
        None => train_manifest.clone(),
    };

    let mut table = String::from("edge_method,rie_cluster,rie_select,acc,auc,f1\n");
    println!("edge_method,rie_cluster,rie_select,acc,auc,f1");
    for &edge in &edges {
        for &clustering in &clusterings {
            for &selection in &selections {
                let mut config = base.clone();
                config.edge_method = edge;
                config.cluster_mode = clustering;
                config.rie_select = selection;
                let (params, _) = train::train(&config, &train_manifest)?;
                let report = metrics::evaluate(&params, &eval_manifest, args.threshold)?;
                let auc = match report.auc {
                    Some(v) => format!("{:.6}", v),
                    None => "undefined".into(),
                };
                let row = format!(
                    "{},{},{},{:.6},{},{:.6}",
                    edge, clustering, selection, report.accuracy, auc, report.f1
                );
                println!("{}", row);
                table.push_str(&row);
                table.push('\n');
            }
        }
    }
    if let Some(path) = &args.table_out {
        fs::write(path, table)
            .map_err(|e| CliError::Data(format!("cannot write {}: {}", path.display(), e)))?;
        println!("table written to {}", path.display());
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let config =
        config_file::resolve_with_base(train::gradcheck_config(), &args.flags, &args.modes)?;
    log_config(&config);
    println!("config: fd_eps = {:e}", args.fd_eps);
    println!("config: tolerance = {:e}", args.tolerance);
    let bag = train::canonical_gradcheck_bag();
    let err = train::gradient_check(&config, &bag, args.fd_eps);
    println!("max_relative_error,{:e}", err);
    if err < args.tolerance {
        println!("gradcheck: PASS (bound {:e})", args.tolerance);
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "gradient check failed: max relative error {:e} exceeds {:e}",
            err, args.tolerance
        )))
    }
}
