//! Per-bag graph construction over the representative features.
//!
//! Nodes are the selected representatives; each node links to one
//! neighbor chosen by a hard Gumbel draw over its cosine similarities
//! (ablations: reverse similarity, uniformly random, or no edges at
//! all). The selected edge matrix is symmetrized and normalized as
//! `D^-1/2 (A+I) D^-1/2`, with self-loops keeping isolated nodes alive.

use rand::Rng;

use crate::real::Real;
use crate::rie::{NoiseMode, StMode};
use crate::rng::gumbel;
use crate::tensor::{Tape, Tensor, TensorId};

/// Edge construction strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMethod {
    Cosine,
    Reverse,
    Random,
    None,
}

impl std::fmt::Display for EdgeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EdgeMethod::Cosine => "cosine",
            EdgeMethod::Reverse => "reverse",
            EdgeMethod::Random => "random",
            EdgeMethod::None => "none",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for EdgeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(EdgeMethod::Cosine),
            "reverse" => Ok(EdgeMethod::Reverse),
            "random" => Ok(EdgeMethod::Random),
            "none" => Ok(EdgeMethod::None),
            other => Err(format!(
                "unknown edge method `{}` (expected cosine|reverse|random|none)",
                other
            )),
        }
    }
}

/// Value-level per-bag graph, for analysis paths and tests.
#[derive(Clone, Debug)]
pub struct BagGraph<R: Real> {
    pub node_features: Tensor<R>,
    pub sim: Tensor<R>,
    pub edge_select: Tensor<R>,
    pub adj_norm: Tensor<R>,
}

/// Tape-level graph construction result.
pub struct GraphIds {
    pub sim: TensorId,
    pub edge_select: TensorId,
    pub adj_norm: TensorId,
}

/// Cosine similarity of every pair of representative rows, on the tape.
/// Panics if any row has zero norm.
pub fn cosine_similarity<R: Real>(tape: &mut Tape<R>, reps: TensorId) -> TensorId {
    let (n, d) = tape.shape(reps);
    {
        let v = tape.value(reps);
        for i in 0..n {
            let norm_sq: f64 = v.row(i).iter().map(|x| x.as_f64() * x.as_f64()).sum();
            assert!(
                norm_sq > 0.0,
                "cosine_similarity: node {} has zero-norm features",
                i
            );
        }
    }
    let sq = tape.mul(reps, reps);
    let ones_d = tape.constant(d, 1, vec![R::one(); d]);
    let norm_sq = tape.matmul(sq, ones_d); // n×1
    let inv_norm = tape.rsqrt(norm_sq);
    let ones_row = tape.constant(1, d, vec![R::one(); d]);
    let inv_b = tape.matmul(inv_norm, ones_row); // n×d
    let unit = tape.mul(reps, inv_b);
    let unit_t = tape.transpose(unit);
    tape.matmul(unit, unit_t)
}

/// Off-tape cosine similarity matrix.
pub fn cosine_similarity_values<R: Real>(reps: &Tensor<R>) -> Tensor<R> {
    let mut tape: Tape<R> = Tape::new();
    let id = tape.leaf(reps.clone());
    let sim = cosine_similarity(&mut tape, id);
    tape.value(sim).clone()
}

/// Select edges on the tape. For `cosine`/`reverse` each node draws one
/// neighbor by hard Gumbel over its (possibly negated) similarities and
/// gradients flow through the straight-through softmax; `random` draws a
/// uniform neighbor with no gradient path; `none` yields no edges. The
/// directed picks are symmetrized (an edge exists if either endpoint
/// chose it).
pub fn select_edges<R: Real>(
    tape: &mut Tape<R>,
    sim: TensorId,
    method: EdgeMethod,
    tau: f64,
    noise: NoiseMode,
    st: StMode,
    rng: &mut impl Rng,
) -> TensorId {
    let (n, m) = tape.shape(sim);
    assert!(
        n == m,
        "select_edges: similarity matrix must be square, got {}x{}",
        n,
        m
    );
    if n == 1 || method == EdgeMethod::None {
        return tape.constant(n, n, vec![R::zero(); n * n]);
    }
    match method {
        EdgeMethod::Cosine | EdgeMethod::Reverse => {
            assert!(
                tau > 0.0,
                "select_edges: temperature must be > 0, got {}",
                tau
            );
            let base = if method == EdgeMethod::Reverse {
                tape.neg(sim)
            } else {
                sim
            };
            // mask self-similarity so no node can pick itself
            let mut mask = vec![R::zero(); n * n];
            for i in 0..n {
                mask[i * n + i] = R::from_f64(-1e9);
            }
            let mask_id = tape.constant(n, n, mask);
            let masked = tape.add(base, mask_id);
            let mut noise_data = vec![R::zero(); n * n];
            if let NoiseMode::Sampled = noise {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            noise_data[i * n + j] = R::from_f64(gumbel(rng));
                        }
                    }
                }
            }
            let noise_id = tape.constant(n, n, noise_data);
            let noisy = tape.add(masked, noise_id);
            let hard = row_argmax_one_hot(tape.value(noisy));
            let picks = match st {
                StMode::Detached => tape.constant(n, n, hard.data.clone()),
                StMode::Hard | StMode::Relaxed => {
                    let scaled = tape.scale(noisy, R::from_f64(1.0 / tau));
                    let soft = tape.row_softmax(scaled);
                    if st == StMode::Relaxed {
                        soft
                    } else {
                        tape.straight_through(soft, hard.data.clone())
                    }
                }
            };
            symmetrize_or(tape, picks)
        }
        EdgeMethod::Random => {
            let mut hard = Tensor::zeros(n, n);
            for i in 0..n {
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                hard.set(i, j, R::one());
            }
            let picks = tape.constant(n, n, hard.data);
            symmetrize_or(tape, picks)
        }
        EdgeMethod::None => unreachable!(),
    }
}

/// Elementwise OR of a binary matrix with its transpose, kept
/// differentiable: `A + Aᵀ - A∘Aᵀ` is exactly {0,1}-valued when the
/// inputs are.
fn symmetrize_or<R: Real>(tape: &mut Tape<R>, picks: TensorId) -> TensorId {
    let t = tape.transpose(picks);
    let sum = tape.add(picks, t);
    let prod = tape.mul(picks, t);
    tape.sub(sum, prod)
}

/// Normalized adjacency with self-loops on the tape:
/// `D^-1/2 (A+I) D^-1/2` where `D` is the degree matrix of `A+I`.
pub fn normalize_adjacency<R: Real>(tape: &mut Tape<R>, edge_select: TensorId) -> TensorId {
    let (n, m) = tape.shape(edge_select);
    assert!(
        n == m,
        "normalize_adjacency: matrix must be square, got {}x{}",
        n,
        m
    );
    let mut eye = vec![R::zero(); n * n];
    for i in 0..n {
        eye[i * n + i] = R::one();
    }
    let eye_id = tape.constant(n, n, eye);
    let a_loop = tape.add(edge_select, eye_id);
    let ones = tape.constant(n, 1, vec![R::one(); n]);
    let deg = tape.matmul(a_loop, ones); // n×1, always >= 1
    let dn = tape.rsqrt(deg);
    let dn_t = tape.transpose(dn);
    let outer = tape.matmul(dn, dn_t);
    tape.mul(a_loop, outer)
}

/// Build a value-level graph with the same code paths as training.
pub fn build_graph_values<R: Real>(
    reps: &Tensor<R>,
    method: EdgeMethod,
    tau: f64,
    noise: NoiseMode,
    rng: &mut impl Rng,
) -> BagGraph<R> {
    let mut tape: Tape<R> = Tape::new();
    let reps_id = tape.leaf(reps.clone());
    let sim = cosine_similarity(&mut tape, reps_id);
    let edges = select_edges(&mut tape, sim, method, tau, noise, StMode::Hard, rng);
    let adj = normalize_adjacency(&mut tape, edges);
    BagGraph {
        node_features: reps.clone(),
        sim: tape.value(sim).clone(),
        edge_select: tape.value(edges).clone(),
        adj_norm: tape.value(adj).clone(),
    }
}

/// One-hot per row at the row's argmax (lowest index on ties).
pub fn row_argmax_one_hot<R: Real>(m: &Tensor<R>) -> Tensor<R> {
    let (rows, cols) = m.shape();
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..rows {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for c in 0..cols {
            let v = m.get(r, c).as_f64();
            if v > best_val {
                best_val = v;
                best = c;
            }
        }
        out.set(r, best, R::one());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};

    fn rng() -> rand_chacha::ChaCha8Rng {
        stream(5, StreamKind::BagStep, 0, 0)
    }

    #[test]
    fn cosine_of_identical_rows_is_one() {
        let reps = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let sim: Tensor<f64> = cosine_similarity_values(&reps);
        assert!((sim.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((sim.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_rows_is_zero() {
        let reps = Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let sim: Tensor<f64> = cosine_similarity_values(&reps);
        assert!(sim.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn cosine_hand_case() {
        let reps = Tensor::new(2, 2, vec![1.0, 1.0, 1.0, 0.0]);
        let sim: Tensor<f64> = cosine_similarity_values(&reps);
        assert!((sim.get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "node 1 has zero-norm features")]
    fn cosine_rejects_zero_norm_rows() {
        let reps = Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]);
        cosine_similarity_values::<f64>(&reps);
    }

    #[test]
    fn cosine_is_scale_invariant() {
        use rand::Rng as _;
        let mut r = rng();
        let data: Vec<f64> = (0..12).map(|_| r.gen_range(-2.0..2.0) + 0.1).collect();
        let reps = Tensor::new(3, 4, data.clone());
        let scaled = Tensor::new(
            3,
            4,
            data.iter()
                .enumerate()
                .map(|(i, v)| if i < 4 { v * 7.5 } else { *v })
                .collect(),
        );
        let a: Tensor<f64> = cosine_similarity_values(&reps);
        let b = cosine_similarity_values(&scaled);
        for i in 0..9 {
            assert!((a.data[i] - b.data[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_node_graph_has_no_edges_for_all_methods() {
        let reps = Tensor::new(1, 2, vec![1.0, 2.0]);
        for method in [
            EdgeMethod::Cosine,
            EdgeMethod::Reverse,
            EdgeMethod::Random,
            EdgeMethod::None,
        ] {
            let mut r = rng();
            let g: BagGraph<f64> =
                build_graph_values(&reps, method, 1.0, NoiseMode::Sampled, &mut r);
            assert_eq!(g.edge_select.data, vec![0.0]);
            assert_eq!(g.adj_norm.data, vec![1.0]);
        }
    }

    #[test]
    fn cosine_zero_noise_links_most_similar_pair() {
        // node 0 is nearly parallel to node 1, nearly orthogonal to node 2
        let reps = Tensor::new(3, 2, vec![1.0, 0.05, 1.0, 0.1, 0.05, 1.0]);
        let mut r = rng();
        let g: BagGraph<f64> =
            build_graph_values(&reps, EdgeMethod::Cosine, 1.0, NoiseMode::Zero, &mut r);
        assert_eq!(g.edge_select.get(0, 1), 1.0);
        assert_eq!(g.edge_select.get(1, 0), 1.0);
    }

    #[test]
    fn reverse_zero_noise_links_least_similar_pair() {
        let reps = Tensor::new(3, 2, vec![1.0, 0.05, 1.0, 0.1, 0.05, 1.0]);
        let mut r = rng();
        let g: BagGraph<f64> =
            build_graph_values(&reps, EdgeMethod::Reverse, 1.0, NoiseMode::Zero, &mut r);
        // node 0's least similar neighbor is node 2
        assert_eq!(g.edge_select.get(0, 2), 1.0);
        assert_eq!(g.edge_select.get(2, 0), 1.0);
        assert_eq!(g.edge_select.get(0, 1), 0.0);
    }

    #[test]
    fn none_method_normalizes_to_identity() {
        let reps = Tensor::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let mut r = rng();
        let g: BagGraph<f64> =
            build_graph_values(&reps, EdgeMethod::None, 1.0, NoiseMode::Zero, &mut r);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(g.adj_norm.get(i, j), want);
            }
        }
    }

    #[test]
    fn two_node_single_edge_normalizes_to_halves() {
        let mut tape: Tape<f64> = Tape::new();
        let edges = tape.constant(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let adj = normalize_adjacency(&mut tape, edges);
        for &v in tape.data(adj) {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn four_cycle_rows_sum_to_one() {
        // regular graph: every degree equal, so rows of the normalized
        // adjacency sum to exactly 1
        let mut tape: Tape<f64> = Tape::new();
        let mut a = Tensor::zeros(4, 4);
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        let edges = tape.constant(4, 4, a.data);
        let adj = normalize_adjacency(&mut tape, edges);
        let out = tape.value(adj);
        for r in 0..4 {
            let sum: f64 = out.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {} sums to {}", r, sum);
        }
    }

    #[test]
    fn normalized_adjacency_matches_brute_force() {
        use rand::Rng as _;
        let mut r = rng();
        for n in 2..6 {
            // random symmetric zero-diagonal binary matrix
            let mut a = Tensor::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    if r.gen_bool(0.5) {
                        a.set(i, j, 1.0);
                        a.set(j, i, 1.0);
                    }
                }
            }
            let mut tape: Tape<f64> = Tape::new();
            let edges = tape.constant(n, n, a.data.clone());
            let adj = normalize_adjacency(&mut tape, edges);
            let got = tape.value(adj).clone();
            // brute-force recomputation
            let mut deg = vec![0.0f64; n];
            for i in 0..n {
                deg[i] = 1.0 + a.row(i).iter().sum::<f64>();
            }
            for i in 0..n {
                for j in 0..n {
                    let aij = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
                    let want = aij / (deg[i].sqrt() * deg[j].sqrt());
                    assert!((got.get(i, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric_with_spectral_radius_at_most_one() {
        use rand::Rng as _;
        let mut r = rng();
        for trial in 0..20 {
            let n = 2 + (trial % 4);
            let data: Vec<f64> = (0..n * 3).map(|_| r.gen_range(-1.0..1.0) + 0.1).collect();
            let reps = Tensor::new(n, 3, data);
            let g = build_graph_values(&reps, EdgeMethod::Cosine, 1.0, NoiseMode::Sampled, &mut r);
            for i in 0..n {
                for j in 0..n {
                    assert!((g.adj_norm.get(i, j) - g.adj_norm.get(j, i)).abs() < 1e-12);
                }
            }
            // power iteration for the dominant eigenvalue
            let mut v = vec![1.0f64; n];
            for _ in 0..300 {
                let mut next = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        next[i] += g.adj_norm.get(i, j) * v[j];
                    }
                }
                let norm: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in next.iter_mut() {
                    *x /= norm;
                }
                v = next;
            }
            let mut av = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    av[i] += g.adj_norm.get(i, j) * v[j];
                }
            }
            let lambda: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!(lambda <= 1.0 + 1e-6, "spectral radius {}", lambda);
        }
    }

    #[test]
    fn edge_selection_prefers_highest_similarity_neighbor() {
        use rand::Rng as _;
        let mut r = rng();
        for _ in 0..50 {
            let n = r.gen_range(2..7);
            let data: Vec<f64> = (0..n * 4).map(|_| r.gen_range(-1.0..1.0) + 0.05).collect();
            let reps = Tensor::new(n, 4, data);
            let sim: Tensor<f64> = cosine_similarity_values(&reps);
            let mut rr = rng();
            let g = build_graph_values(&reps, EdgeMethod::Cosine, 1.0, NoiseMode::Zero, &mut rr);
            for i in 0..n {
                // brute-force argmax over j != i
                let mut best = usize::MAX;
                let mut best_val = f64::NEG_INFINITY;
                for j in 0..n {
                    if j != i && sim.get(i, j) > best_val {
                        best_val = sim.get(i, j);
                        best = j;
                    }
                }
                assert_eq!(
                    g.edge_select.get(i, best),
                    1.0,
                    "node {} should link to {}",
                    i,
                    best
                );
            }
        }
    }

    #[test]
    fn random_edges_are_symmetric_and_off_diagonal() {
        let reps = Tensor::new(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.5]);
        let mut r = rng();
        let g: BagGraph<f64> =
            build_graph_values(&reps, EdgeMethod::Random, 1.0, NoiseMode::Sampled, &mut r);
        for i in 0..4 {
            assert_eq!(g.edge_select.get(i, i), 0.0);
            let row_sum: f64 = g.edge_select.row(i).iter().sum();
            assert!(row_sum >= 1.0, "each node keeps at least its own pick");
            for j in 0..4 {
                assert_eq!(g.edge_select.get(i, j), g.edge_select.get(j, i));
            }
        }
    }

    #[test]
    fn edge_gradients_flow_back_to_representatives() {
        let mut tape: Tape<f64> = Tape::new();
        let reps = tape.leaf(Tensor::param(3, 2, vec![1.0, 0.1, 0.9, 0.2, 0.1, 1.0]));
        let sim = cosine_similarity(&mut tape, reps);
        let mut r = rng();
        let edges = select_edges(
            &mut tape,
            sim,
            EdgeMethod::Cosine,
            1.0,
            NoiseMode::Zero,
            StMode::Hard,
            &mut r,
        );
        let adj = normalize_adjacency(&mut tape, edges);
        let pooled = tape.mean_rows(adj);
        let loss = tape.sum(pooled);
        tape.backward(loss);
        assert!(tape.grad(reps).iter().any(|&v| v != 0.0));
    }
}
