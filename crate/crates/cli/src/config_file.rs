//! Resolve a `TrainConfig` from defaults, an optional `key=value` config
//! file, and explicit flags — in that precedence order (flags win).

use std::path::Path;

use micromil::{ClusterMode, EdgeMethod, RieSelect, TrainConfig};

use crate::cli::{ModeFlags, TrainFlags};
use crate::CliError;

pub fn resolve(flags: &TrainFlags, modes: &ModeFlags) -> Result<TrainConfig, CliError> {
    resolve_with_base(TrainConfig::default(), flags, modes)
}

/// Like [`resolve`] but starting from a caller-provided base (gradcheck
/// uses its own smaller defaults).
pub fn resolve_with_base(
    base: TrainConfig,
    flags: &TrainFlags,
    modes: &ModeFlags,
) -> Result<TrainConfig, CliError> {
    let mut config = base;
    if let Some(path) = &flags.config {
        apply_config_file(&mut config, path)?;
    }
    apply_flags(&mut config, flags, modes)?;
    config.validate().map_err(CliError::from)?;
    Ok(config)
}

fn apply_config_file(config: &mut TrainConfig, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config file {}: {}", path.display(), e))
    })?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key=value, found `{}`",
                path.display(),
                idx + 1,
                line
            ))
        })?;
        apply_pair(config, key.trim(), value.trim())
            .map_err(|msg| CliError::Usage(format!("{}:{}: {}", path.display(), idx + 1, msg)))?;
    }
    Ok(())
}

fn apply_pair(config: &mut TrainConfig, key: &str, value: &str) -> Result<(), String> {
    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
        value
            .parse()
            .map_err(|_| format!("cannot parse `{}` for key `{}`", value, key))
    }
    match key {
        "clusters" => config.clusters = parse(key, value)?,
        "hidden" => config.hidden = parse(key, value)?,
        "layers" => config.layers = parse(key, value)?,
        "lr" => config.lr = parse(key, value)?,
        "dropout" => config.dropout = parse(key, value)?,
        "epochs" => config.epochs = parse(key, value)?,
        "tau" => config.tau = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        "warmup_dce_iters" => config.warmup_dce_iters = parse(key, value)?,
        "beta1" => config.beta1 = parse(key, value)?,
        "beta2" => config.beta2 = parse(key, value)?,
        "eps" => config.eps = parse(key, value)?,
        "edge_method" => config.edge_method = value.parse::<EdgeMethod>()?,
        "rie_select" => config.rie_select = value.parse::<RieSelect>()?,
        "rie_cluster" => config.cluster_mode = value.parse::<ClusterMode>()?,
        other => return Err(format!("unknown config key `{}`", other)),
    }
    Ok(())
}

fn apply_flags(
    config: &mut TrainConfig,
    flags: &TrainFlags,
    modes: &ModeFlags,
) -> Result<(), CliError> {
    if let Some(v) = flags.clusters {
        config.clusters = v;
    }
    if let Some(v) = flags.hidden {
        config.hidden = v;
    }
    if let Some(v) = flags.layers {
        config.layers = v;
    }
    if let Some(v) = flags.lr {
        config.lr = v;
    }
    if let Some(v) = flags.dropout {
        config.dropout = v;
    }
    if let Some(v) = flags.epochs {
        config.epochs = v;
    }
    if let Some(v) = flags.tau {
        config.tau = v;
    }
    if let Some(v) = flags.seed {
        config.seed = v;
    }
    if let Some(v) = flags.warmup_dce_iters {
        config.warmup_dce_iters = v;
    }
    if let Some(v) = flags.beta1 {
        config.beta1 = v;
    }
    if let Some(v) = flags.beta2 {
        config.beta2 = v;
    }
    if let Some(v) = flags.eps {
        config.eps = v;
    }
    if let Some(v) = &modes.edge_method {
        config.edge_method = v.parse::<EdgeMethod>().map_err(CliError::Usage)?;
    }
    if let Some(v) = &modes.rie_select {
        config.rie_select = v.parse::<RieSelect>().map_err(CliError::Usage)?;
    }
    if let Some(v) = &modes.rie_cluster {
        config.cluster_mode = v.parse::<ClusterMode>().map_err(CliError::Usage)?;
    }
    Ok(())
}

/// The fully resolved configuration, one `config: key = value` line per
/// field, sufficient to reproduce the run.
pub fn log_config(config: &TrainConfig) {
    println!("config: clusters = {}", config.clusters);
    println!("config: hidden = {}", config.hidden);
    println!("config: layers = {}", config.layers);
    println!("config: lr = {}", config.lr);
    println!("config: dropout = {}", config.dropout);
    println!("config: epochs = {}", config.epochs);
    println!("config: tau = {}", config.tau);
    println!("config: seed = {}", config.seed);
    println!("config: edge_method = {}", config.edge_method);
    println!("config: rie_select = {}", config.rie_select);
    println!("config: rie_cluster = {}", config.cluster_mode);
    println!("config: warmup_dce_iters = {}", config.warmup_dce_iters);
    println!("config: beta1 = {}", config.beta1);
    println!("config: beta2 = {}", config.beta2);
    println!("config: eps = {}", config.eps);
}
