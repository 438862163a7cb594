//! Graph-convolution head: L stacked layers of `act(Â·H·W)` over the
//! normalized adjacency, mean pooling across nodes, and a linear
//! classifier squashed through a sigmoid, trained with binary
//! cross-entropy.

use rand::Rng;

use crate::real::Real;
use crate::tensor::{Tape, Tensor, TensorId};

/// Learnable head parameters. Layer 0 maps d→h, later layers h→h, the
/// classifier maps h→1 with a bias.
#[derive(Clone, Debug)]
pub struct GnnParams<R: Real> {
    pub layer_weights: Vec<Tensor<R>>,
    pub classifier_w: Tensor<R>,
    pub classifier_b: Tensor<R>,
    pub hidden: usize,
    pub layers: usize,
}

impl<R: Real> GnnParams<R> {
    /// Glorot-uniform initialization of all layer and classifier weights.
    pub fn init(input_dim: usize, hidden: usize, layers: usize, rng: &mut impl Rng) -> Self {
        assert!(layers >= 1, "GnnParams: need at least one layer");
        assert!(
            hidden >= 1 && input_dim >= 1,
            "GnnParams: dims must be >= 1"
        );
        let mut layer_weights = Vec::with_capacity(layers);
        let mut fan_in = input_dim;
        for _ in 0..layers {
            layer_weights.push(glorot(fan_in, hidden, rng));
            fan_in = hidden;
        }
        let classifier_w = glorot(hidden, 1, rng);
        let classifier_b = Tensor::param(1, 1, vec![R::zero()]);
        GnnParams {
            layer_weights,
            classifier_w,
            classifier_b,
            hidden,
            layers,
        }
    }
}

fn glorot<R: Real>(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<R> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| R::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::param(rows, cols, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One graph-convolution layer: `act(adj · h · w)`.
pub fn gcn_layer<R: Real>(
    tape: &mut Tape<R>,
    h: TensorId,
    adj: TensorId,
    w: TensorId,
    activation: Activation,
) -> TensorId {
    let mixed = tape.matmul(adj, h);
    let projected = tape.matmul(mixed, w);
    match activation {
        Activation::Relu => tape.relu(projected),
        Activation::Identity => projected,
    }
}

/// Linear head over pooled node embeddings: `sigmoid(pooled·w + b)`.
pub fn classify<R: Real>(
    tape: &mut Tape<R>,
    pooled: TensorId,
    w: TensorId,
    b: TensorId,
) -> TensorId {
    let proj = tape.matmul(pooled, w);
    let logit = tape.add(proj, b);
    tape.sigmoid(logit)
}

/// Binary cross-entropy of a 1×1 probability against a {0,1} label, with
/// the probability clamped to [1e-7, 1-1e-7] so 32-bit saturation never
/// reaches log(0).
pub fn bce_loss<R: Real>(tape: &mut Tape<R>, prob: TensorId, label: u8) -> TensorId {
    assert!(label <= 1, "bce_loss: label must be 0 or 1, got {}", label);
    let (r, c) = tape.shape(prob);
    assert!(
        r == 1 && c == 1,
        "bce_loss: probability must be 1x1, got {}x{}",
        r,
        c
    );
    let eps = R::from_f64(1e-7);
    let clamped = tape.clamp(prob, eps, R::one() - eps);
    let inner = if label == 1 {
        clamped
    } else {
        let one = tape.constant(1, 1, vec![R::one()]);
        tape.sub(one, clamped)
    };
    let lp = tape.log(inner);
    tape.neg(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};

    #[test]
    fn gcn_layer_identity_passthrough() {
        let mut tape: Tape<f64> = Tape::new();
        let h = tape.constant(2, 2, vec![1.0, -2.0, 3.0, 4.0]);
        let adj = tape.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let w = tape.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let out = gcn_layer(&mut tape, h, adj, w, Activation::Identity);
        assert_eq!(tape.data(out), &[1.0, -2.0, 3.0, 4.0]);
    }

    #[test]
    fn gcn_layer_symmetric_mixing_of_identical_rows() {
        let mut tape: Tape<f64> = Tape::new();
        let h = tape.constant(2, 2, vec![1.0, 2.0, 1.0, 2.0]);
        let adj = tape.constant(2, 2, vec![0.5, 0.5, 0.5, 0.5]);
        let w = tape.constant(2, 1, vec![1.0, -1.0]);
        let out = gcn_layer(&mut tape, h, adj, w, Activation::Identity);
        assert_eq!(tape.data(out)[0], tape.data(out)[1]);
    }

    #[test]
    fn gcn_layer_hand_case() {
        // adj all 0.5, H = [[1,2],[3,4]], W = [[0.5],[-1]]
        // adj·H = [[2,3],[2,3]], (adj·H)·W = [[-2],[-2]], relu -> 0
        let mut tape: Tape<f64> = Tape::new();
        let h = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let adj = tape.constant(2, 2, vec![0.5, 0.5, 0.5, 0.5]);
        let w = tape.constant(2, 1, vec![0.5, -1.0]);
        let lin = gcn_layer(&mut tape, h, adj, w, Activation::Identity);
        assert_eq!(tape.data(lin), &[-2.0, -2.0]);
        let mut tape2: Tape<f64> = Tape::new();
        let h = tape2.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let adj = tape2.constant(2, 2, vec![0.5, 0.5, 0.5, 0.5]);
        let w = tape2.constant(2, 1, vec![0.5, -1.0]);
        let act = gcn_layer(&mut tape2, h, adj, w, Activation::Relu);
        assert_eq!(tape2.data(act), &[0.0, 0.0]);
    }

    #[test]
    fn zero_classifier_outputs_half() {
        let mut tape: Tape<f64> = Tape::new();
        let pooled = tape.constant(1, 3, vec![0.7, -1.2, 0.4]);
        let w = tape.constant(3, 1, vec![0.0, 0.0, 0.0]);
        let b = tape.constant(1, 1, vec![0.0]);
        let p = classify(&mut tape, pooled, w, b);
        assert_eq!(tape.data(p), &[0.5]);
    }

    #[test]
    fn bce_perfect_prediction_approaches_zero() {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.constant(1, 1, vec![1.0 - 1e-9]);
        let loss = bce_loss(&mut tape, p, 1);
        assert!(tape.data(loss)[0] < 1e-6);
    }

    #[test]
    fn bce_half_is_ln_two_for_both_labels() {
        for label in [0u8, 1u8] {
            let mut tape: Tape<f64> = Tape::new();
            let p = tape.constant(1, 1, vec![0.5]);
            let loss = bce_loss(&mut tape, p, label);
            assert!((tape.data(loss)[0] - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_clamps_saturated_probabilities() {
        let mut tape: Tape<f64> = Tape::new();
        let p = tape.constant(1, 1, vec![1.0]);
        let loss = bce_loss(&mut tape, p, 0);
        assert!(tape.data(loss)[0].is_finite());
    }

    #[test]
    fn init_shapes_chain() {
        let mut rng = stream(3, StreamKind::Init, 0, 0);
        let params: GnnParams<f32> = GnnParams::init(8, 16, 3, &mut rng);
        assert_eq!(params.layer_weights.len(), 3);
        assert_eq!(params.layer_weights[0].shape(), (8, 16));
        assert_eq!(params.layer_weights[1].shape(), (16, 16));
        assert_eq!(params.layer_weights[2].shape(), (16, 16));
        assert_eq!(params.classifier_w.shape(), (16, 1));
        assert_eq!(params.classifier_b.shape(), (1, 1));
    }
}
