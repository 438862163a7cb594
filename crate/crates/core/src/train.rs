//! End-to-end training: one Adam step per bag, a k-means++/alternating
//! warm-up for the centroids, the mean-pool baseline sharing the same
//! loop, and a finite-difference gradient-check harness.

use rand::Rng;

use crate::bag_io::{FeatureBag, Manifest};
use crate::dce::{self, ClusterState};
use crate::gnn::GnnParams;
use crate::graph::EdgeMethod;
use crate::model::{ClusterMode, MeanPoolParams, MicroMilParams, Model, ModelParams};
use crate::pipeline::{self, ExecMode, ForwardOptions};
use crate::real::Real;
use crate::rie::{RieSelect, StMode};
use crate::rng::{stream, StreamKind};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Hyperparameters and run controls. Defaults follow the reference
/// operating point: 36 clusters (16 suits datasets with few images per
/// bag), hidden width 128, two graph layers, dropout 0.5, Adam at 1e-3.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub clusters: usize,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub tau: f64,
    pub seed: u64,
    pub edge_method: EdgeMethod,
    pub rie_select: RieSelect,
    pub cluster_mode: ClusterMode,
    pub warmup_dce_iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clusters: 36,
            hidden: 128,
            layers: 2,
            lr: 1e-3,
            dropout: 0.5,
            epochs: 50,
            tau: 1.0,
            seed: 0,
            edge_method: EdgeMethod::Cosine,
            rie_select: RieSelect::Gumbel,
            cluster_mode: ClusterMode::Dce,
            warmup_dce_iters: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Reject values a run cannot proceed with. `lr = 0` stays legal
    /// (it makes every update a no-op, which the tests rely on).
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.clusters == 0 {
            return fail("clusters must be >= 1".into());
        }
        if self.hidden == 0 || self.layers == 0 {
            return fail("hidden and layers must be >= 1".into());
        }
        if self.lr.is_nan() || self.lr < 0.0 {
            return fail(format!("lr must be >= 0, got {}", self.lr));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return fail(format!("tau must be > 0, got {}", self.tau));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must be in [0, 1)".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail(format!("eps must be > 0, got {}", self.eps));
        }
        Ok(())
    }
}

/// Mean training loss and accuracy of one epoch (accuracy is measured on
/// the noisy training-pass predictions at threshold 0.5).
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
}

/// Train the full MicroMIL model on the bags of a manifest.
pub fn train(
    config: &TrainConfig,
    manifest: &Manifest,
) -> Result<(ModelParams<f32>, Vec<EpochStats>)> {
    config.validate()?;
    let bags = manifest.load_bags()?;
    train_on_bags(config, &bags)
}

/// Train on already-loaded bags (the manifest-free entry point used by
/// tests and the ablation driver).
pub fn train_on_bags(
    config: &TrainConfig,
    bags: &[FeatureBag],
) -> Result<(ModelParams<f32>, Vec<EpochStats>)> {
    if bags.is_empty() {
        return Err(Error::InvalidData(
            "manifest is empty: nothing to train on".into(),
        ));
    }
    let d = bags[0].dim();
    let model = init_micromil_model(config, bags, d);
    let mut params = ModelParams::new(Model::MicroMil(model));
    let history = run_epochs(config, bags, &mut params);
    Ok((params, history))
}

/// Train the mean-pool baseline with the same loop and update rule.
pub fn train_mean_pool(
    config: &TrainConfig,
    manifest: &Manifest,
) -> Result<(ModelParams<f32>, Vec<EpochStats>)> {
    config.validate()?;
    let bags = manifest.load_bags()?;
    train_mean_pool_on_bags(config, &bags)
}

pub fn train_mean_pool_on_bags(
    config: &TrainConfig,
    bags: &[FeatureBag],
) -> Result<(ModelParams<f32>, Vec<EpochStats>)> {
    if bags.is_empty() {
        return Err(Error::InvalidData(
            "manifest is empty: nothing to train on".into(),
        ));
    }
    let d = bags[0].dim();
    let mut rng = stream(config.seed, StreamKind::Init, 0, 0);
    let limit = (6.0 / (d + 1) as f64).sqrt();
    let w = Tensor::param(
        d,
        1,
        (0..d)
            .map(|_| rng.gen_range(-limit..limit) as f32)
            .collect(),
    );
    let b = Tensor::param(1, 1, vec![0.0]);
    let mut params = ModelParams::new(Model::MeanPool(MeanPoolParams { w, b }));
    let history = run_epochs(config, bags, &mut params);
    Ok((params, history))
}

/// Pool every instance row of the training bags, subsampled to at most
/// `cap` rows (seeded), for centroid initialization.
fn pooled_features(bags: &[FeatureBag], cap: usize, seed: u64) -> Tensor<f32> {
    let d = bags[0].dim();
    let total: usize = bags.iter().map(|b| b.instances()).sum();
    let mut indices: Vec<(usize, usize)> = Vec::with_capacity(total);
    for (bi, bag) in bags.iter().enumerate() {
        for r in 0..bag.instances() {
            indices.push((bi, r));
        }
    }
    if indices.len() > cap {
        let mut rng = stream(seed, StreamKind::Warmup, 1, 0);
        fisher_yates(&mut indices, &mut rng);
        indices.truncate(cap);
    }
    let mut data = Vec::with_capacity(indices.len() * d);
    for (bi, r) in indices {
        data.extend_from_slice(bags[bi].features.row(r));
    }
    Tensor::new(data.len() / d, d, data)
}

fn init_micromil_model(config: &TrainConfig, bags: &[FeatureBag], d: usize) -> MicroMilParams<f32> {
    let pooled = pooled_features(bags, 4096, config.seed);
    let c_init = config.clusters.min(pooled.rows);
    let mut centroids = dce::init_centroids(&pooled, c_init, config.seed);
    if c_init < config.clusters {
        // degenerate datasets with fewer pooled instances than clusters:
        // pad deterministically with offset copies
        let mut data = centroids.data.clone();
        for i in c_init..config.clusters {
            let src = i % c_init;
            for j in 0..d {
                data.push(centroids.get(src, j) + 1e-3 * (i - c_init + 1) as f32);
            }
        }
        centroids = Tensor::new(config.clusters, d, data);
    }
    if config.cluster_mode == ClusterMode::Dce && config.warmup_dce_iters > 0 {
        let state = ClusterState::new(&pooled, centroids);
        centroids =
            dce::refine_alternating(&pooled, state, config.warmup_dce_iters, 1e-4).centroids;
    }
    centroids.requires_grad = config.cluster_mode == ClusterMode::Dce;

    let mut rng = stream(config.seed, StreamKind::Init, 0, 0);
    let limit = (6.0 / (d + 1) as f64).sqrt();
    let score_w = Tensor::param(
        d,
        1,
        (0..d)
            .map(|_| rng.gen_range(-limit..limit) as f32)
            .collect(),
    );
    let gnn = GnnParams::init(d, config.hidden, config.layers, &mut rng);

    MicroMilParams {
        clusters: config.clusters,
        cluster_mode: config.cluster_mode,
        rie_select: config.rie_select,
        edge_method: config.edge_method,
        tau: config.tau,
        dropout: config.dropout,
        centroids,
        score_w,
        gnn,
    }
}

fn fisher_yates<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

fn run_epochs(
    config: &TrainConfig,
    bags: &[FeatureBag],
    params: &mut ModelParams<f32>,
) -> Vec<EpochStats> {
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..bags.len()).collect();
        let mut shuffle_rng = stream(config.seed, StreamKind::Shuffle, epoch as u64, 0);
        fisher_yates(&mut order, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for &bi in &order {
            let bag = &bags[bi];
            let mut rng = stream(config.seed, StreamKind::BagStep, bi as u64, epoch as u64);
            let (loss, prob, grads) = forward_backward(params, bag, &mut rng);
            adam_step(params, &grads, config);
            loss_sum += loss;
            let predicted = if prob >= 0.5 { 1 } else { 0 };
            if predicted == bag.label {
                correct += 1;
            }
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / bags.len() as f64,
            acc: correct as f64 / bags.len() as f64,
        });
    }
    history
}

/// One training forward/backward; returns (loss, probability, gradients
/// in canonical tensor order).
fn forward_backward(
    params: &ModelParams<f32>,
    bag: &FeatureBag,
    rng: &mut impl Rng,
) -> (f64, f64, Vec<Tensor<f32>>) {
    match &params.model {
        Model::MicroMil(p) => {
            let mut fwd = pipeline::forward_micromil(
                p,
                &bag.features,
                Some(bag.label),
                ForwardOptions::train(),
                rng,
            );
            let loss_id = fwd.loss.expect("loss requested");
            fwd.tape.backward(loss_id);
            let grads = harvest_micromil_grads(&fwd, p);
            (fwd.tape.data(loss_id)[0] as f64, fwd.probability(), grads)
        }
        Model::MeanPool(p) => {
            let mut fwd = pipeline::forward_mean_pool(p, &bag.features, Some(bag.label));
            let loss_id = fwd.loss.expect("loss requested");
            fwd.tape.backward(loss_id);
            let gw = Tensor::new(p.w.rows, p.w.cols, fwd.tape.grad(fwd.w).to_vec());
            let gb = Tensor::new(1, 1, fwd.tape.grad(fwd.b).to_vec());
            let loss = fwd.tape.data(loss_id)[0] as f64;
            let prob = fwd.tape.data(fwd.prob)[0] as f64;
            (loss, prob, vec![gw, gb])
        }
    }
}

fn harvest_micromil_grads<R: Real>(
    fwd: &pipeline::MicroMilForward<R>,
    p: &MicroMilParams<R>,
) -> Vec<Tensor<R>> {
    let d = p.centroids.cols;
    let mut centroid_grad = Tensor::zeros(p.centroids.rows, d);
    if let Some(cid) = fwd.ids.centroids {
        let g = fwd.tape.grad(cid);
        for (slot, &cluster) in fwd.kept_clusters.iter().enumerate() {
            for j in 0..d {
                let v = g[slot * d + j];
                centroid_grad.data[cluster * d + j] = v;
            }
        }
    }
    let mut grads = vec![
        centroid_grad,
        Tensor::new(p.score_w.rows, 1, fwd.tape.grad(fwd.ids.score_w).to_vec()),
    ];
    for (i, w) in p.gnn.layer_weights.iter().enumerate() {
        grads.push(Tensor::new(
            w.rows,
            w.cols,
            fwd.tape.grad(fwd.ids.layers[i]).to_vec(),
        ));
    }
    grads.push(Tensor::new(
        p.gnn.classifier_w.rows,
        1,
        fwd.tape.grad(fwd.ids.classifier_w).to_vec(),
    ));
    grads.push(Tensor::new(
        1,
        1,
        fwd.tape.grad(fwd.ids.classifier_b).to_vec(),
    ));
    grads
}

/// Standard Adam with bias correction; one shared step counter.
pub fn adam_step<R: Real>(params: &mut ModelParams<R>, grads: &[Tensor<R>], config: &TrainConfig) {
    assert_eq!(
        grads.len(),
        params.tensor_count(),
        "gradient count mismatch"
    );
    params.adam.step += 1;
    let t = params.adam.step;
    let lr = R::from_f64(config.lr);
    let b1 = R::from_f64(config.beta1);
    let b2 = R::from_f64(config.beta2);
    let eps = R::from_f64(config.eps);
    let bc1 = R::from_f64(1.0 - config.beta1.powi(t as i32));
    let bc2 = R::from_f64(1.0 - config.beta2.powi(t as i32));
    let one = R::one();
    for i in 0..grads.len() {
        let g = &grads[i];
        // moments first, then the parameter write
        for k in 0..g.data.len() {
            let gv = g.data[k];
            let m = b1 * params.adam.m[i].data[k] + (one - b1) * gv;
            let v = b2 * params.adam.v[i].data[k] + (one - b2) * gv * gv;
            params.adam.m[i].data[k] = m;
            params.adam.v[i].data[k] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let update = lr * m_hat / (v_hat.sqrt() + eps);
            params.tensor_mut(i).data[k] -= update;
        }
    }
}

// ── gradient checking ───────────────────────────────────────────────

/// The small fixed bag the gradient check runs on: 6 instances of
/// dimension 4, label 1, values chosen away from selection boundaries
/// and ReLU kinks.
pub fn canonical_gradcheck_bag() -> FeatureBag {
    let data = vec![
        0.91, -0.33, 0.58, 0.12, //
        0.74, 0.41, -0.62, 0.37, //
        -0.45, 0.88, 0.21, -0.73, //
        0.16, -0.57, 0.94, 0.49, //
        -0.81, 0.27, -0.18, 0.66, //
        0.35, 0.63, -0.49, -0.28,
    ];
    FeatureBag {
        bag_id: "gradcheck".into(),
        label: 1,
        features: Tensor::new(6, 4, data),
    }
}

/// Configuration the gradient check defaults to: 2 clusters, a narrow
/// 2-layer head, no dropout.
pub fn gradcheck_config() -> TrainConfig {
    TrainConfig {
        clusters: 2,
        hidden: 8,
        layers: 2,
        dropout: 0.0,
        epochs: 0,
        seed: 0,
        ..TrainConfig::default()
    }
}

fn gradcheck_params(config: &TrainConfig, features: &Tensor<f64>) -> ModelParams<f64> {
    let c_eff = config.clusters.min(features.rows);
    let mut centroids = dce::init_centroids(features, c_eff, config.seed);
    centroids.requires_grad = config.cluster_mode == ClusterMode::Dce;
    let mut rng = stream(config.seed, StreamKind::Init, 0, 0);
    let d = features.cols;
    let limit = (6.0 / (d + 1) as f64).sqrt();
    let score_w = Tensor::param(d, 1, (0..d).map(|_| rng.gen_range(-limit..limit)).collect());
    let gnn = GnnParams::init(d, config.hidden, config.layers, &mut rng);
    let model = Model::MicroMil(MicroMilParams {
        clusters: c_eff,
        cluster_mode: config.cluster_mode,
        rie_select: config.rie_select,
        edge_method: config.edge_method,
        tau: config.tau,
        dropout: 0.0,
        centroids,
        score_w,
        gnn,
    });
    ModelParams::new(model)
}

fn gradcheck_loss(params: &ModelParams<f64>, features: &Tensor<f64>, label: u8, st: StMode) -> f64 {
    let p = match &params.model {
        Model::MicroMil(p) => p,
        _ => unreachable!("gradient check runs the full model"),
    };
    let mut rng = stream(0, StreamKind::BagEval, 0, 0);
    let opts = ForwardOptions {
        mode: ExecMode::Eval,
        st,
    };
    let fwd = pipeline::forward_micromil(p, features, Some(label), opts, &mut rng);
    fwd.loss_value().expect("loss requested")
}

/// Compare analytic gradients against central finite differences for
/// every scalar parameter, in f64, with Gumbel noise zeroed and dropout
/// off. The discrete selections are replaced by their softmax
/// relaxations for this check (the hard forward is piecewise constant,
/// so finite differences can only certify the relaxed path, which is
/// exactly the gradient the straight-through estimator uses).
/// Returns the maximum relative error.
pub fn gradient_check(config: &TrainConfig, bag: &FeatureBag, eps: f64) -> f64 {
    let features = bag.features.cast::<f64>();
    let mut params = gradcheck_params(config, &features);

    // analytic pass on the relaxed forward
    let analytic: Vec<Tensor<f64>> = {
        let p = match &params.model {
            Model::MicroMil(p) => p,
            _ => unreachable!(),
        };
        let mut rng = stream(0, StreamKind::BagEval, 0, 0);
        let opts = ForwardOptions {
            mode: ExecMode::Eval,
            st: StMode::Relaxed,
        };
        let mut fwd = pipeline::forward_micromil(p, &features, Some(bag.label), opts, &mut rng);
        let loss_id = fwd.loss.expect("loss requested");
        fwd.tape.backward(loss_id);
        harvest_micromil_grads(&fwd, p)
    };

    let mut max_rel: f64 = 0.0;
    for i in 0..params.tensor_count() {
        for k in 0..analytic[i].data.len() {
            let original = params.tensor_mut(i).data[k];
            params.tensor_mut(i).data[k] = original + eps;
            let up = gradcheck_loss(&params, &features, bag.label, StMode::Relaxed);
            params.tensor_mut(i).data[k] = original - eps;
            let down = gradcheck_loss(&params, &features, bag.label, StMode::Relaxed);
            params.tensor_mut(i).data[k] = original;
            let fd = (up - down) / (2.0 * eps);
            let a = analytic[i].data[k];
            let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}

/// Negative control: with the selection detached from the tape, the
/// centroid and scoring gradients must vanish identically.
pub fn detached_selection_grads(config: &TrainConfig, bag: &FeatureBag) -> (Vec<f64>, Vec<f64>) {
    let features = bag.features.cast::<f64>();
    let params = gradcheck_params(config, &features);
    let p = match &params.model {
        Model::MicroMil(p) => p,
        _ => unreachable!(),
    };
    let mut rng = stream(0, StreamKind::BagEval, 0, 0);
    let opts = ForwardOptions {
        mode: ExecMode::Eval,
        st: StMode::Detached,
    };
    let mut fwd = pipeline::forward_micromil(p, &features, Some(bag.label), opts, &mut rng);
    let loss_id = fwd.loss.expect("loss requested");
    fwd.tape.backward(loss_id);
    let grads = harvest_micromil_grads(&fwd, p);
    (grads[0].data.clone(), grads[1].data.clone())
}
