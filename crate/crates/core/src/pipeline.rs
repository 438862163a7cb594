//! Per-bag forward pass: cluster assignment → representative selection →
//! similarity graph → graph network → bag probability, all recorded on
//! one tape so a single backward sweep yields every parameter gradient.

use rand::Rng;

use crate::bag_io::FeatureBag;
use crate::dce;
use crate::gnn::{self, Activation};
use crate::graph;
use crate::model::{ClusterMode, MeanPoolParams, MicroMilParams, Model};
use crate::real::Real;
use crate::rie::{self, NoiseMode, StMode};
use crate::tensor::{Tape, Tensor, TensorId};

/// Train applies sampled Gumbel noise and dropout; Eval zeroes the noise
/// and skips dropout (the random ablation modes still draw their uniform
/// picks from the provided stream, which evaluation derives
/// deterministically per bag).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions {
    pub mode: ExecMode,
    pub st: StMode,
}

impl ForwardOptions {
    pub fn train() -> Self {
        ForwardOptions {
            mode: ExecMode::Train,
            st: StMode::Hard,
        }
    }

    pub fn eval() -> Self {
        ForwardOptions {
            mode: ExecMode::Eval,
            st: StMode::Hard,
        }
    }
}

/// Tape handles of the parameter leaves, for gradient harvesting.
pub struct MicroMilTapeIds {
    /// Absent in frozen-centroid (kmeans) mode.
    pub centroids: Option<TensorId>,
    pub score_w: TensorId,
    pub layers: Vec<TensorId>,
    pub classifier_w: TensorId,
    pub classifier_b: TensorId,
}

/// One recorded forward pass over a bag.
pub struct MicroMilForward<R: Real> {
    pub tape: Tape<R>,
    pub prob: TensorId,
    pub loss: Option<TensorId>,
    pub ids: MicroMilTapeIds,
    /// Centroid rows (indices into the full C×d matrix) that
    /// participated for this bag.
    pub kept_clusters: Vec<usize>,
    /// Instance index selected per kept cluster (when the mode makes a
    /// discrete choice).
    pub chosen: Option<Vec<usize>>,
    /// Value snapshots for analysis and tests.
    pub reps: Tensor<R>,
    pub sim: Tensor<R>,
    pub edge_select: Tensor<R>,
    pub adj_norm: Tensor<R>,
}

impl<R: Real> MicroMilForward<R> {
    pub fn probability(&self) -> f64 {
        self.tape.data(self.prob)[0].as_f64()
    }

    pub fn loss_value(&self) -> Option<f64> {
        self.loss.map(|l| self.tape.data(l)[0].as_f64())
    }
}

/// Run the full MicroMIL forward pass for one bag.
///
/// For a bag with fewer instances than clusters only the first
/// `min(C, S)` centroids participate; in kmeans mode, clusters that
/// receive no instance under hard nearest-centroid assignment are
/// dropped for the bag as well.
pub fn forward_micromil<R: Real>(
    params: &MicroMilParams<R>,
    features: &Tensor<R>,
    label: Option<u8>,
    opts: ForwardOptions,
    rng: &mut impl Rng,
) -> MicroMilForward<R> {
    let s = features.rows;
    let d = features.cols;
    assert_eq!(
        d, params.centroids.cols,
        "bag dimension {} does not match model dimension {}",
        d, params.centroids.cols
    );
    let c_eff = dce::effective_clusters(params.clusters, s);

    let mut tape: Tape<R> = Tape::new();
    let f = tape.constant(s, d, features.data.clone());

    // participating centroid rows and the assignment matrix
    let (kept_clusters, cent_id, z) = match params.cluster_mode {
        ClusterMode::Dce => {
            let kept: Vec<usize> = (0..c_eff).collect();
            let mut slice = Tensor::new(c_eff, d, params.centroids.data[..c_eff * d].to_vec());
            slice.requires_grad = params.centroids.requires_grad;
            let cent = tape.leaf(slice);
            let z = dce::soft_assign(&mut tape, f, cent);
            (kept, Some(cent), z)
        }
        ClusterMode::Kmeans => {
            // hard nearest-centroid assignment over the first c_eff
            // centroids; empty clusters are dropped for this bag
            let head = Tensor::new(c_eff, d, params.centroids.data[..c_eff * d].to_vec());
            let mut assign = vec![0usize; s];
            let mut counts = vec![0usize; c_eff];
            for i in 0..s {
                let c = dce::nearest_centroid(features, i, &head);
                assign[i] = c;
                counts[c] += 1;
            }
            let kept: Vec<usize> = (0..c_eff).filter(|&c| counts[c] > 0).collect();
            let mut z = Tensor::zeros(s, kept.len());
            for i in 0..s {
                let col = kept
                    .iter()
                    .position(|&c| c == assign[i])
                    .expect("assigned cluster kept");
                z.set(i, col, R::one());
            }
            let z_id = tape.constant(s, kept.len(), z.data);
            (kept, None, z_id)
        }
    };

    // centroid values for the nearest-instance selection mode
    let kept_centroids = {
        let mut data = Vec::with_capacity(kept_clusters.len() * d);
        for &c in &kept_clusters {
            data.extend_from_slice(&params.centroids.data[c * d..(c + 1) * d]);
        }
        Tensor::new(kept_clusters.len(), d, data)
    };

    let w = tape.leaf(params.score_w.clone());
    let scores = rie::score_features(&mut tape, f, z, w);

    let noise = match opts.mode {
        ExecMode::Train => NoiseMode::Sampled,
        ExecMode::Eval => NoiseMode::Zero,
    };
    let inputs = rie::SelectInputs {
        features: f,
        z,
        scores,
        centroids: &kept_centroids,
    };
    let selection = rie::select_representatives(
        &mut tape,
        inputs,
        params.rie_select,
        params.tau,
        noise,
        opts.st,
        rng,
    );

    let sim = graph::cosine_similarity(&mut tape, selection.reps);
    let edges = graph::select_edges(
        &mut tape,
        sim,
        params.edge_method,
        params.tau,
        noise,
        opts.st,
        rng,
    );
    let adj = graph::normalize_adjacency(&mut tape, edges);

    let mut layer_ids = Vec::with_capacity(params.gnn.layer_weights.len());
    let mut h = selection.reps;
    for lw in &params.gnn.layer_weights {
        let w_id = tape.leaf(lw.clone());
        layer_ids.push(w_id);
        h = gnn::gcn_layer(&mut tape, h, adj, w_id, Activation::Relu);
        if opts.mode == ExecMode::Train && params.dropout > 0.0 {
            let (hr, hc) = tape.shape(h);
            let keep = 1.0 - params.dropout;
            let inv = R::from_f64(1.0 / keep);
            let mask: Vec<R> = (0..hr * hc)
                .map(|_| {
                    if rng.gen::<f64>() < keep {
                        inv
                    } else {
                        R::zero()
                    }
                })
                .collect();
            let mask_id = tape.constant(hr, hc, mask);
            h = tape.mul(h, mask_id);
        }
    }

    let pooled = tape.mean_rows(h);
    let cls_w = tape.leaf(params.gnn.classifier_w.clone());
    let cls_b = tape.leaf(params.gnn.classifier_b.clone());
    let prob = gnn::classify(&mut tape, pooled, cls_w, cls_b);
    let loss = label.map(|y| gnn::bce_loss(&mut tape, prob, y));

    let reps_values = tape.value(selection.reps).clone();
    let sim_values = tape.value(sim).clone();
    let edge_values = tape.value(edges).clone();
    let adj_values = tape.value(adj).clone();

    MicroMilForward {
        tape,
        prob,
        loss,
        ids: MicroMilTapeIds {
            centroids: cent_id,
            score_w: w,
            layers: layer_ids,
            classifier_w: cls_w,
            classifier_b: cls_b,
        },
        kept_clusters,
        chosen: selection.chosen,
        reps: reps_values,
        sim: sim_values,
        edge_select: edge_values,
        adj_norm: adj_values,
    }
}

/// Forward pass of the mean-pool baseline.
pub struct MeanPoolForward<R: Real> {
    pub tape: Tape<R>,
    pub prob: TensorId,
    pub loss: Option<TensorId>,
    pub w: TensorId,
    pub b: TensorId,
}

pub fn forward_mean_pool<R: Real>(
    params: &MeanPoolParams<R>,
    features: &Tensor<R>,
    label: Option<u8>,
) -> MeanPoolForward<R> {
    let mut tape: Tape<R> = Tape::new();
    let f = tape.constant(features.rows, features.cols, features.data.clone());
    let pooled = tape.mean_rows(f);
    let w = tape.leaf(params.w.clone());
    let b = tape.leaf(params.b.clone());
    let prob = gnn::classify(&mut tape, pooled, w, b);
    let loss = label.map(|y| gnn::bce_loss(&mut tape, prob, y));
    MeanPoolForward {
        tape,
        prob,
        loss,
        w,
        b,
    }
}

/// Deterministic evaluation probability for one bag.
pub fn predict<R: Real>(model: &Model<R>, features: &Tensor<R>, eval_rng: &mut impl Rng) -> f64 {
    match model {
        Model::MicroMil(p) => {
            let fwd = forward_micromil(p, features, None, ForwardOptions::eval(), eval_rng);
            fwd.probability()
        }
        Model::MeanPool(p) => {
            let fwd = forward_mean_pool(p, features, None);
            fwd.tape.data(fwd.prob)[0].as_f64()
        }
    }
}

/// Convenience for f32 bags feeding an R-typed model.
pub fn bag_features<R: Real>(bag: &FeatureBag) -> Tensor<R> {
    bag.features.cast::<R>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GnnParams;
    use crate::graph::EdgeMethod;
    use crate::rie::RieSelect;
    use crate::rng::{stream, StreamKind};

    fn tiny_model(seed: u64) -> MicroMilParams<f64> {
        let mut rng = stream(seed, StreamKind::Init, 0, 0);
        let d = 3;
        let gnn = GnnParams::init(d, 4, 2, &mut rng);
        let mut centroids = Tensor::param(2, d, vec![0.4, -0.2, 0.9, -0.7, 0.5, 0.1]);
        centroids.requires_grad = true;
        let score_w = {
            let mut t = Tensor::param(d, 1, vec![0.3, -0.4, 0.6]);
            t.requires_grad = true;
            t
        };
        MicroMilParams {
            clusters: 2,
            cluster_mode: ClusterMode::Dce,
            rie_select: RieSelect::Gumbel,
            edge_method: EdgeMethod::Cosine,
            tau: 1.0,
            dropout: 0.0,
            centroids,
            score_w,
            gnn,
        }
    }

    fn tiny_bag() -> Tensor<f64> {
        Tensor::new(
            4,
            3,
            vec![
                0.9, 0.1, -0.3, 0.8, 0.2, -0.1, -0.5, 0.7, 0.4, -0.6, 0.9, 0.2,
            ],
        )
    }

    #[test]
    fn eval_forward_is_deterministic_and_in_range() {
        let model = tiny_model(1);
        let bag = tiny_bag();
        let run = || {
            let mut rng = stream(2, StreamKind::BagEval, 0, 0);
            forward_micromil(&model, &bag, None, ForwardOptions::eval(), &mut rng).probability()
        };
        let p1 = run();
        let p2 = run();
        assert_eq!(p1.to_bits(), p2.to_bits());
        assert!(p1 > 0.0 && p1 < 1.0);
    }

    #[test]
    fn permuting_instances_leaves_eval_output_unchanged() {
        let model = tiny_model(3);
        let bag = tiny_bag();
        let perm_rows = [2usize, 0, 3, 1];
        let mut permuted = Tensor::zeros(4, 3);
        for (new_r, &old_r) in perm_rows.iter().enumerate() {
            for c in 0..3 {
                permuted.set(new_r, c, bag.get(old_r, c));
            }
        }
        let mut rng1 = stream(0, StreamKind::BagEval, 0, 0);
        let mut rng2 = stream(0, StreamKind::BagEval, 0, 0);
        let p1 =
            forward_micromil(&model, &bag, None, ForwardOptions::eval(), &mut rng1).probability();
        let p2 = forward_micromil(&model, &permuted, None, ForwardOptions::eval(), &mut rng2)
            .probability();
        assert!((p1 - p2).abs() < 1e-6, "{} vs {}", p1, p2);
    }

    #[test]
    fn small_bag_truncates_clusters() {
        let mut model = tiny_model(4);
        model.clusters = 8;
        let mut centroids = Tensor::zeros(8, 3);
        for i in 0..8 {
            for j in 0..3 {
                centroids.set(i, j, (i * 3 + j) as f64 * 0.1 - 1.0);
            }
        }
        centroids.requires_grad = true;
        model.centroids = centroids;
        let bag = tiny_bag(); // S = 4 < C = 8
        let mut rng = stream(5, StreamKind::BagEval, 0, 0);
        let fwd = forward_micromil(&model, &bag, None, ForwardOptions::eval(), &mut rng);
        assert_eq!(fwd.kept_clusters, vec![0, 1, 2, 3]);
        assert_eq!(fwd.reps.rows, 4);
    }

    #[test]
    fn kmeans_mode_freezes_centroids_and_drops_empty_clusters() {
        let mut model = tiny_model(6);
        model.cluster_mode = ClusterMode::Kmeans;
        // centroid 1 is far from every instance: it stays empty
        model.centroids = Tensor::new(2, 3, vec![0.0, 0.0, 0.0, 100.0, 100.0, 100.0]);
        let bag = tiny_bag();
        let mut rng = stream(7, StreamKind::BagEval, 0, 0);
        let fwd = forward_micromil(&model, &bag, Some(1), ForwardOptions::eval(), &mut rng);
        assert_eq!(fwd.kept_clusters, vec![0]);
        assert!(fwd.ids.centroids.is_none());
    }

    #[test]
    fn train_forward_with_label_produces_finite_loss_and_grads() {
        let model = tiny_model(3);
        let bag = tiny_bag();
        let mut rng = stream(9, StreamKind::BagStep, 0, 0);
        let mut fwd = forward_micromil(&model, &bag, Some(1), ForwardOptions::train(), &mut rng);
        let loss = fwd.loss.unwrap();
        assert!(fwd.tape.data(loss)[0].is_finite());
        fwd.tape.backward(loss);
        let wg = fwd.tape.grad(fwd.ids.score_w);
        assert!(wg.iter().any(|&v| v != 0.0), "score grads {:?}", wg);
        let cg = fwd.tape.grad(fwd.ids.centroids.unwrap());
        assert!(cg.iter().any(|&v| v != 0.0), "centroid grads {:?}", cg);
    }

    #[test]
    fn mean_pool_forward_matches_hand_computation() {
        let params = MeanPoolParams {
            w: Tensor::param(2, 1, vec![1.0, -1.0]),
            b: Tensor::param(1, 1, vec![0.5]),
        };
        let features = Tensor::new(2, 2, vec![1.0, 0.0, 3.0, 2.0]);
        // mean = (2, 1), logit = 2 - 1 + 0.5 = 1.5
        let fwd = forward_mean_pool(&params, &features, Some(1));
        let want = 1.0 / (1.0 + (-1.5f64).exp());
        assert!((fwd.tape.data(fwd.prob)[0] - want).abs() < 1e-12);
    }
}
